#pragma once

#include "icl/risk.hpp"
#include "icl/transformer.hpp"

#include <functional>
#include <ostream>
#include <vector>

namespace icl {

struct InitSpec {
    enum class Kind { Gaussian, Near };
    Kind kind = Kind::Gaussian;
    double scale = 0.0;  // gaussian entry scale; 0 selects 0.1/√d
    Mat p0, q0;
    double noise = 0.0;

    static InitSpec gaussian(double scale = 0.0);
    static InitSpec near(Mat p0, Mat q0, double noise);
};

struct TrainConfig {
    int N = 1000;
    int n = 100;
    double budget = 10.0;
    double step = 1.0;
    int max_iterations = 50000;
    double grad_tol = 1e-8;
    InitSpec init;
    int batch = 0;  // 0 means full batch
};

struct TraceRecord {
    int iteration = 0;
    double risk = 0.0;
    double grad_norm = 0.0;
    double p_norm = 0.0;
    double q_norm = 0.0;
};

struct TrainTrace {
    std::vector<TraceRecord> records;
    void write_csv(std::ostream& os) const;
};

struct TrainResult {
    Theta theta;
    TrainTrace trace;
    bool converged = false;
    int iterations = 0;
};

struct StepResult {
    Theta theta;
    double step = 0.0;
    double risk = 0.0;
};

StepResult backtracking_step(const Theta& theta, const Gradient& grad, const std::function<double(const Theta&)>& risk_fn,
                             double step);
StepResult backtracking_step(const Theta& theta, const Gradient& grad, const std::function<double(const Theta&)>& risk_fn,
                             double step, double current_risk);

EpisodeBatch sample_training_set(const RiskContext& ctx, int count, Rng& rng);

Theta initial_theta(const TrainConfig& cfg, int d, Rng& rng);

// Trains on a fixed batch; init_rng drives initialization and minibatch draws.
TrainResult train_on(const TrainConfig& cfg, const EpisodeBatch& data, const SpdMatrix& cov, Rng& init_rng);

// Samples N prompts of length n from ctx once, then trains.
TrainResult train(const TrainConfig& cfg, const RiskContext& ctx, Rng& rng);

}  // namespace icl
