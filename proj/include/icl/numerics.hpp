#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace icl {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Counter-based generator (Philox4x32-10). A (seed, stream) pair fully
// determines the sequence, and child() derives independent substreams so
// parallel work can be keyed by index instead of by scheduling order.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

    Rng child(std::uint64_t id) const;
    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    std::uint64_t next_u64();
    double uniform();                     // [0, 1)
    double uniform(double lo, double hi);
    double normal();
    std::size_t index(std::size_t n);     // uniform in [0, n)

private:
    void refill();

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    std::uint32_t block_[4] = {0, 0, 0, 0};
    int used_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t hash_label(const std::string& s);

class SpdMatrix {
public:
    SpdMatrix() = default;
    explicit SpdMatrix(const Mat& m);

    static SpdMatrix identity(int d);

    int dim() const { return static_cast<int>(m_.rows()); }
    const Mat& matrix() const { return m_; }
    const Mat& inverse() const { return inv_; }
    const Mat& chol() const { return l_; }  // lower factor, m = L Lᵀ
    const Vec& eigenvalues() const { return evals_; }
    const Mat& eigenvectors() const { return evecs_; }
    double trace() const { return m_.trace(); }
    double op_norm() const { return evals_.maxCoeff(); }
    double inv_op_norm() const { return 1.0 / evals_.minCoeff(); }

private:
    Mat m_, inv_, l_, evecs_;
    Vec evals_;
};

struct EigSym {
    Vec values;  // ascending
    Mat vectors;
};

Vec gaussian_vector(Rng& rng, const SpdMatrix& cov);
Mat gaussian_matrix(int rows, int cols, Rng& rng);
Mat haar_orthogonal(Rng& rng, int d);
Mat empirical_covariance(const Mat& xs);  // columns are samples, (1/n) Σ x xᵀ
Mat empirical_covariance(const std::vector<Vec>& xs);
double spectral_norm(const Mat& m);
EigSym eig_sym(const Mat& m);
Mat solve_spd(const SpdMatrix& a, const Mat& b);
Mat nullspace(const Mat& m, double tol = 1e-9);
bool is_symmetric(const Mat& m, double rel_tol = 1e-12);

double pairwise_sum(std::span<const double> xs);

struct MeanEstimate {
    double mean = 0.0;
    double std_error = 0.0;
};
MeanEstimate mean_and_error(std::span<const double> xs);

struct GaussLegendre {
    std::vector<double> nodes;    // on [-1, 1]
    std::vector<double> weights;
};
GaussLegendre gauss_legendre(int n);

// Expectation of f(c) for c ~ U[lo, hi] with a 64-node rule.
double uniform_expectation(double lo, double hi, const std::function<double(double)>& f);

// Worker pool size: ICL_THREADS if set, otherwise hardware concurrency.
int worker_count();

// Runs fn(i) for i in [0, count). Nested calls run serially.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace icl
