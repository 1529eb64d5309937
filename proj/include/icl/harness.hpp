#pragma once

#include "icl/pde.hpp"
#include "icl/risk.hpp"
#include "icl/tasks.hpp"
#include "icl/training.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace icl {

enum class Axis { n, m, N };
std::string to_string(Axis a);
Axis axis_from_string(const std::string& s);

enum class Metric { L2, H1 };

double shifted_relative_error(double test_error, double floor, double truth_norm_sq);

struct SlopeFit {
    double slope = 0.0;
    double std_error = 0.0;
    int points = 0;
};
// OLS on (log x, log y); the first point is discarded, as are non-positive errors.
SlopeFit fit_slope(const std::vector<std::pair<double, double>>& points);
// Same fit restricted to the last `count` points.
SlopeFit fit_tail_slope(const std::vector<std::pair<double, double>>& points, int count = 5);

// Distribution specs as they appear in config files.
TaskDistribution task_from_json(const nlohmann::json& j, int d);
CovariateDistribution covariate_from_json(const nlohmann::json& j, int d);
Vec source_variances_from_json(const nlohmann::json& j, int modes);
PdeFamily pde_family_from_json(const nlohmann::json& j, int d);

struct EvalSpec {
    std::string label;
    nlohmann::json task;
    nlohmann::json covariate;
};

struct ExperimentConfig {
    std::string name;
    std::string kind = "sweep";
    int d = 5;
    Axis axis = Axis::m;
    std::vector<int> grid;
    int n = 100;
    int m = 0;  // 0 means m = n
    int N = 1000;
    nlohmann::json train_task;
    nlohmann::json train_covariate;
    std::vector<EvalSpec> evaluations;
    nlohmann::json init;
    double budget = 10.0;
    double step = 1.0;
    int max_iterations = 50000;
    double grad_tol = 1e-8;
    int batch = 0;
    std::vector<std::uint64_t> seeds;
    int task_samples = 500;
    Metric metric = Metric::L2;
    int ref_modes = 0;  // 0 means 4 d
    std::string output_dir;

    int eval_length(int n_value) const { return m > 0 ? m : n_value; }
    int resolved_ref_modes() const { return ref_modes > 0 ? ref_modes : 4 * d; }
    nlohmann::json resolved() const;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

// Resolves an init spec for dimension d; random centers draw from rng.
InitSpec init_from_json(const nlohmann::json& j, const SpdMatrix& cov, Rng& rng);

// Evaluation of a trained model on one distribution, in either metric.
class Evaluator {
public:
    static Evaluator l2(const TaskDistribution& task, const CovariateDistribution& cov, int task_samples, Rng& rng);
    static Evaluator h1(const PdeFamily& family, const Vec& source_variances, int ref_modes, int task_samples, Rng& rng);

    RiskTerms terms(const Theta& theta) const;
    double truth() const;
    const SpdMatrix& cov() const;
    const TaskMoments& moments() const;

private:
    std::optional<SpdMatrix> cov_;
    std::optional<TaskMoments> moments_;
    std::optional<H1Evaluator> h1_;
    double truth_ = 0.0;
};

// m-sweeps: limiting risk of the trained model. n- and N-sweeps: risk at prompt
// length m of the reference (I, Q_m).
double estimate_floor(Axis axis, const Theta& theta_hat, const Evaluator& in_domain, double m);

struct ResultRow {
    std::string experiment;
    Axis axis = Axis::m;
    double value = 0.0;
    std::uint64_t seed = 0;
    double raw_error = 0.0;
    double floor = 0.0;
    double shifted_error = 0.0;
};

struct SweepPoint {
    double value = 0.0;
    double mean_shifted = 0.0;
    double std_shifted = 0.0;
    double mean_raw = 0.0;
    double mean_floor = 0.0;
};

struct SweepResult {
    std::string experiment;
    std::string label;
    Axis axis = Axis::m;
    std::vector<SweepPoint> points;
    bool fitted = false;
    double slope = 0.0;
    double slope_std_error = 0.0;
    double tail_slope = 0.0;
    double tail_slope_std_error = 0.0;
};

struct TrainedModel {
    double value = 0.0;
    std::uint64_t seed = 0;
    TrainResult result;
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<ResultRow> rows;
    std::vector<SweepResult> curves;  // one per evaluation, same order
    std::vector<TrainedModel> models;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);
// Runs and writes results.csv, config.json, summary.json, plot.svg and thetas/.
ExperimentResult run_and_write(const ExperimentConfig& cfg);

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows);
std::string results_csv(const std::vector<ResultRow>& rows);
nlohmann::json to_json(const SweepResult& r);

}  // namespace icl
