#include "icl/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace icl {

namespace {

double inner(const Gradient& g, const Theta& a, const Theta& b) {
    return g.p.cwiseProduct(a.p - b.p).sum() + g.q.cwiseProduct(a.q - b.q).sum();
}

}  // namespace

InitSpec InitSpec::gaussian(double scale) {
    InitSpec s;
    s.kind = Kind::Gaussian;
    s.scale = scale;
    return s;
}

InitSpec InitSpec::near(Mat p0, Mat q0, double noise) {
    InitSpec s;
    s.kind = Kind::Near;
    s.p0 = std::move(p0);
    s.q0 = std::move(q0);
    s.noise = noise;
    return s;
}

void TrainTrace::write_csv(std::ostream& os) const {
    os << "iteration,risk,grad_norm,p_norm,q_norm\n";
    char buf[160];
    for (const TraceRecord& r : records) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", r.iteration, r.risk, r.grad_norm, r.p_norm, r.q_norm);
        os << buf;
    }
}

StepResult backtracking_step(const Theta& theta, const Gradient& grad, const std::function<double(const Theta&)>& risk_fn,
                             double step) {
    return backtracking_step(theta, grad, risk_fn, step, risk_fn(theta));
}

StepResult backtracking_step(const Theta& theta, const Gradient& grad, const std::function<double(const Theta&)>& risk_fn,
                             double step, double current_risk) {
    if (!(step > 0.0)) throw Error("step size must be positive");
    if (grad.p.squaredNorm() + grad.q.squaredNorm() == 0.0) return {theta, 0.0, current_risk};
    constexpr double c = 1e-4;
    const double fp_floor = 64.0 * std::numeric_limits<double>::epsilon() * std::abs(current_risk);
    double eta = step;
    for (int halvings = 0; halvings <= 40; ++halvings) {
        Theta trial = theta;
        trial.p -= eta * grad.p;
        trial.q -= eta * grad.q;
        trial = project_to_budget(trial);
        double decrease = c * inner(grad, theta, trial);
        double f = risk_fn(trial);
        if (std::isfinite(f) && (f <= current_risk - decrease || (decrease <= fp_floor && f <= current_risk)))
            return {trial, eta, f};
        eta *= 0.5;
    }
    throw Error("no descent direction");
}

EpisodeBatch sample_training_set(const RiskContext& ctx, int count, Rng& rng) {
    if (count < 1) throw Error("training set size must be positive");
    std::vector<Episode> eps(static_cast<std::size_t>(count));
    parallel_for(eps.size(), [&](std::size_t i) {
        Rng r = rng.child(i);
        eps[i] = sample_episode(ctx.task_dist, ctx.cov_dist, ctx.n, r);
    });
    return EpisodeBatch::from(eps);
}

Theta initial_theta(const TrainConfig& cfg, int d, Rng& rng) {
    Theta t;
    t.budget = cfg.budget;
    if (cfg.init.kind == InitSpec::Kind::Gaussian) {
        double scale = cfg.init.scale > 0.0 ? cfg.init.scale : 0.1 / std::sqrt(static_cast<double>(d));
        t.p = scale * gaussian_matrix(d, d, rng);
        t.q = scale * gaussian_matrix(d, d, rng);
    } else {
        if (cfg.init.p0.rows() != d || cfg.init.q0.rows() != d) throw Error("initial parameters have wrong shape");
        t.p = cfg.init.p0 + cfg.init.noise * gaussian_matrix(d, d, rng);
        t.q = cfg.init.q0 + cfg.init.noise * gaussian_matrix(d, d, rng);
    }
    return project_to_budget(t);
}

TrainResult train_on(const TrainConfig& cfg, const EpisodeBatch& data, const SpdMatrix& cov, Rng& init_rng) {
    if (!(cfg.step > 0.0)) throw Error("step size must be positive");
    if (cfg.max_iterations < 0) throw Error("iteration count must be non-negative");
    if (cfg.budget < std::max(1.0, cov.inv_op_norm()) * (1.0 - 1e-12))
        throw Error("budget must be at least max(1, |inverse covariance|)");
    const int d = data.d;
    Rng init = init_rng.child(0);
    Rng batches = init_rng.child(1);
    TrainResult res;
    res.theta = initial_theta(cfg, d, init);

    const bool full = cfg.batch <= 0 || static_cast<std::size_t>(cfg.batch) >= data.size();
    auto full_risk = [&](const Theta& t) { return empirical_risk(t, data).value; };

    double risk = full_risk(res.theta);
    const double initial = risk;
    double last_step = cfg.step;
    for (int it = 0;; ++it) {
        EpisodeBatch mb;
        const EpisodeBatch* cur = &data;
        if (!full) {
            Rng r = batches.child(static_cast<std::uint64_t>(it));
            std::vector<std::size_t> idx(static_cast<std::size_t>(cfg.batch));
            for (auto& i : idx) i = r.index(data.size());
            mb = data.subset(idx);
            cur = &mb;
            risk = empirical_risk(res.theta, *cur).value;
        }
        Gradient g = risk_gradient(res.theta, *cur);
        const double gn = g.norm();
        res.trace.records.push_back({it, risk, gn, spectral_norm(res.theta.p), spectral_norm(res.theta.q)});
        if (gn <= cfg.grad_tol) {
            res.converged = true;
            res.iterations = it;
            break;
        }
        if (it >= cfg.max_iterations) {
            res.iterations = it;
            break;
        }
        auto fn = [&](const Theta& t) { return empirical_risk(t, *cur).value; };
        StepResult s = backtracking_step(res.theta, g, fn, std::min(cfg.step, 2.0 * last_step), risk);
        res.theta = s.theta;
        risk = s.risk;
        if (s.step > 0.0) last_step = s.step;
        if (!std::isfinite(risk) || risk > 1e6 * std::max(initial, 1e-300)) throw Error("step size too large");
    }
    if (!full) res.trace.records.back().risk = full_risk(res.theta);
    return res;
}

TrainResult train(const TrainConfig& cfg, const RiskContext& ctx, Rng& rng) {
    if (cfg.N < 1) throw Error("training set size must be positive");
    RiskContext train_ctx = ctx;
    train_ctx.n = cfg.n;
    Rng data_rng = rng.child(0);
    EpisodeBatch data = sample_training_set(train_ctx, cfg.N, data_rng);
    Rng init_rng = rng.child(1);
    return train_on(cfg, data, ctx.cov_dist.cov(), init_rng);
}

}  // namespace icl
