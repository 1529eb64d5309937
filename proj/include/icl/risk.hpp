#pragma once

#include "icl/numerics.hpp"
#include "icl/tasks.hpp"
#include "icl/transformer.hpp"

#include <json.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace icl {

struct RiskContext {
    TaskDistribution task_dist;
    CovariateDistribution cov_dist;
    int n = 1;
};

enum class RiskMethod { Empirical, MonteCarlo, ClosedForm, Limiting };
std::string to_string(RiskMethod m);

struct RiskReport {
    double value = 0.0;
    double std_error = 0.0;
    RiskMethod method = RiskMethod::ClosedForm;
    long long episodes = 0;
    std::optional<double> event_frequency;  // truncated estimators only
};
nlohmann::json to_json(const RiskReport& r);

struct TruncationEvent {
    double t = 1.0;
    double query_bound = 0.0;  // √Tr(Σ) + t
    double cov_bound = 0.0;    // ‖Σ‖_op (1 + t + √(d/n))
};
TruncationEvent truncation_event(const SpdMatrix& cov, int n, double t);

double trace_sigma(const SpdMatrix& cov, const Mat& k);
Mat expected_cov_product(const SpdMatrix& cov, const Mat& k, int n);

// Second moments of W = A⁻¹ under the task law: apply(C) = E[W C Wᵀ],
// apply_adjoint(X) = E[Wᵀ X W], b() = E[Wᵀ W].
class TaskMoments {
public:
    static TaskMoments from_distribution(const TaskDistribution& dist, int task_samples, Rng& rng);
    static TaskMoments from_tasks(const std::vector<Mat>& tasks, bool exact = false);

    int dim() const { return dim_; }
    bool exact() const { return exact_; }
    std::size_t node_count() const { return inv_.size(); }
    TaskMoments node(std::size_t i) const;

    Mat apply(const Mat& c) const;
    Mat apply_adjoint(const Mat& x) const;
    const Mat& b() const { return b_; }
    const Mat& b_std_error() const { return b_se_; }

private:
    enum class Kind { Nodes, Isotropic, FixedBasis, Scalar };
    Kind kind_ = Kind::Nodes;
    int dim_ = 0;
    bool exact_ = true;
    std::vector<Mat> inv_;
    double m1_ = 0.0, m2_ = 0.0;  // E[1/λ], E[1/λ²]
    Mat basis_;
    Mat b_, b_se_;
};

// R_n(θ) = limit + bracket / n.
struct RiskTerms {
    double limit = 0.0;
    double bracket = 0.0;
    double at(double n) const { return limit + bracket / n; }
};
RiskTerms risk_terms(const Theta& theta, const SpdMatrix& cov, const TaskMoments& moments);

struct Gradient {
    Mat p, q;
    double norm() const { return std::sqrt(p.squaredNorm() + q.squaredNorm()); }
};

Gradient closed_form_gradient(const Theta& theta, const SpdMatrix& cov, const TaskMoments& moments, double n);

// E Tr(A⁻¹ Σ A⁻ᵀ) = E‖A⁻¹x‖².
double truth_norm_sq(const SpdMatrix& cov, const TaskMoments& moments);

// Column-stacked episode summaries for fast batch evaluation.
struct EpisodeBatch {
    int d = 0;
    Mat cs;       // d × (d N), block i is C_i
    Mat queries;  // d × N
    Mat targets;  // d × N

    std::size_t size() const { return static_cast<std::size_t>(queries.cols()); }
    static EpisodeBatch from(const std::vector<Episode>& eps);
    static EpisodeBatch from(const std::vector<Prompt>& prompts);
    EpisodeBatch subset(const std::vector<std::size_t>& idx) const;
};

RiskReport empirical_risk(const Theta& theta, const EpisodeBatch& batch);
RiskReport empirical_risk(const Theta& theta, const std::vector<Prompt>& prompts);
Gradient risk_gradient(const Theta& theta, const EpisodeBatch& batch);
Gradient risk_gradient(const Theta& theta, const std::vector<Prompt>& prompts);

RiskReport population_risk_closed_form(const Theta& theta, const RiskContext& ctx, int task_samples, Rng& rng);
RiskReport population_risk_closed_form(const Theta& theta, const SpdMatrix& cov, const TaskMoments& moments, double n);
RiskReport limiting_risk(const Theta& theta, const RiskContext& ctx, int task_samples, Rng& rng);
RiskReport limiting_risk(const Theta& theta, const SpdMatrix& cov, const TaskMoments& moments);
RiskReport monte_carlo_risk(const Theta& theta, const RiskContext& ctx, long long episodes, Rng& rng);
RiskReport truncated_monte_carlo_risk(const Theta& theta, const RiskContext& ctx, double t, long long episodes, Rng& rng);

struct OptimalQ {
    Mat q;
    Mat b;
    double q_tolerance = 0.0;  // propagated from the error in B
};
OptimalQ optimal_Q(const RiskContext& ctx, int task_samples, Rng& rng);
OptimalQ optimal_Q(const SpdMatrix& cov, const TaskMoments& moments, double n);

}  // namespace icl
