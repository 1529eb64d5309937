#pragma once

#include "icl/fields.hpp"
#include "icl/numerics.hpp"
#include "icl/risk.hpp"
#include "icl/transformer.hpp"
#include "icl/tasks.hpp"

#include <functional>
#include <vector>

namespace icl {

// Orthonormal Dirichlet sine basis φ_k(x) = √2 sin(kπx) on [0, 1].
struct SineBasis {
    int modes = 1;
};

struct Quadrature {
    std::vector<double> x, w;
};

Quadrature composite_gauss_legendre(int panels, int points = 4);
int default_panels(int modes);

struct BasisTable {
    Mat phi;   // points × modes
    Mat dphi;
};
BasisTable sine_table(const std::vector<double>& x, int modes);

Vec grf_mode_variances(const GrfSpec& spec, int modes);
Vec sample_grf(const GrfSpec& spec, int modes, Rng& rng);

Mat assemble_stiffness(const std::function<double(double)>& a, const std::function<double(double)>& v,
                       const SineBasis& basis, int panels = 0);
Mat assemble_stiffness(const FieldSample& a, const FieldSample& v, const SineBasis& basis, int panels = 0);

Vec encode(const std::function<double(double)>& f, const SineBasis& basis, int panels = 0);
Vec encode(const Vec& coeffs, const SineBasis& basis);

class Decoded {
public:
    explicit Decoded(Vec coeffs) : c_(std::move(coeffs)) {}
    double operator()(double x) const;
    double derivative(double x) const;
    const Vec& coeffs() const { return c_; }

private:
    Vec c_;
};
Decoded decode(const Vec& x);

Vec h1_weights(int modes);  // 1 + k²π²
double h1_norm_sq(const Vec& x);

Mat reference_stiffness(const EllipticTask& task, int ref_modes);
Vec reference_solution(const EllipticTask& task, const Vec& f, int ref_modes);

TaskDistribution pde_task_distribution(const PdeFamily& family);

// max over random coefficient vectors of h1_norm_sq(x) / |x|², the H¹/L² equivalence constant.
double h1_l2_ratio_diagnostic(int modes, int trials, Rng& rng);

// Squared H¹ error of decoded predictions against reference-resolution solutions,
// in the same limit + bracket / m form as the L² risk. Tasks are sampled once.
class H1Evaluator {
public:
    // source_variances holds the covariance diagonal of f over ref_modes modes.
    H1Evaluator(const PdeFamily& family, const Vec& source_variances, int ref_modes, int task_samples, Rng& rng);

    int dim() const { return d_; }
    int ref_modes() const { return ref_modes_; }
    const SpdMatrix& cov() const { return cov_; }
    const TaskMoments& moments() const { return moments_; }

    RiskTerms terms(const Theta& theta) const;
    double truth() const { return truth_; }  // E‖u_ref‖²_{H¹}
    double discretization_gap() const;      // relative, at θ = (I, Σ⁻¹)

private:
    struct Node {
        Mat w;      // learner-resolution inverse
        Mat g;      // top d×d block of Σ_f R H
        double t3;  // Tr(H R Σ_f R)
    };
    int d_ = 0;
    int ref_modes_ = 0;
    SpdMatrix cov_;
    Vec hd_;
    std::vector<Node> nodes_;
    TaskMoments moments_;
    double truth_ = 0.0;
};

}  // namespace icl
