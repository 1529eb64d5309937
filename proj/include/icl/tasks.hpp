#pragma once

#include "icl/fields.hpp"
#include "icl/numerics.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace icl {

// A = U diag(λ) Uᵀ with λ_i ~ U[lo, hi]; U is fresh Haar per draw unless fixed.
struct RotatedDiagonal {
    double lo = 1.0, hi = 2.0;
    std::optional<Mat> basis;
};

struct ConstantMultiple {
    double lo = 1.0, hi = 2.0;
};

struct Atomic {
    std::vector<Mat> atoms;
};

struct PdeStiffness {
    PdeFamily family;
};

using TaskKind = std::variant<RotatedDiagonal, ConstantMultiple, Atomic, PdeStiffness>;

class TaskDistribution {
public:
    static TaskDistribution rotated_diagonal(int d, double lo, double hi);
    static TaskDistribution rotated_diagonal(int d, double lo, double hi, const Mat& basis);
    static TaskDistribution constant_multiple(int d, double lo, double hi);
    static TaskDistribution atomic(std::vector<Mat> atoms);
    static TaskDistribution pde(const PdeFamily& family);

    int dim() const { return dim_; }
    const TaskKind& kind() const { return kind_; }
    double inv_bound() const { return inv_bound_; }   // c_A
    double norm_bound() const { return norm_bound_; } // C_A
    bool symmetric() const;
    std::string label() const;

private:
    TaskDistribution(int d, TaskKind kind);
    void certify();

    int dim_ = 0;
    TaskKind kind_;
    double inv_bound_ = 0.0;
    double norm_bound_ = 0.0;
};

Mat sample_task(const TaskDistribution& dist, Rng& rng);

class CovariateDistribution {
public:
    explicit CovariateDistribution(SpdMatrix cov, std::string label = "custom");
    static CovariateDistribution identity(int d);
    static CovariateDistribution equal_correlated(int d, double rho);
    static CovariateDistribution diagonal(const Vec& variances, std::string label = "diagonal");

    int dim() const { return cov_.dim(); }
    const SpdMatrix& cov() const { return cov_; }
    const std::string& label() const { return label_; }

private:
    SpdMatrix cov_;
    std::string label_;
};

SpdMatrix equal_correlated_cov(int d, double rho);

struct Prompt {
    Mat xs;  // d × n, columns are covariates
    Mat ys;  // d × n, ys = A⁻¹ xs
    Vec query;
    Vec target;
    Mat task;

    int dim() const { return static_cast<int>(xs.rows()); }
    int length() const { return static_cast<int>(xs.cols()); }
};

// Sufficient statistics of a prompt for the reduced model.
struct Episode {
    Mat c;  // (1/n) Σ y xᵀ
    Vec query;
    Vec target;
};

Prompt sample_prompt(const TaskDistribution& task_dist, const CovariateDistribution& cov_dist, int n, Rng& rng);
Episode sample_episode(const TaskDistribution& task_dist, const CovariateDistribution& cov_dist, int n, Rng& rng);
Episode summarize(const Prompt& prompt);

Mat embed(const Prompt& prompt);

}  // namespace icl
