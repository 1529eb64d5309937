#include "icl/risk.hpp"

#include <algorithm>
#include <cmath>

namespace icl {

namespace {

double trace_product(const Mat& a, const Mat& b) { return a.cwiseProduct(b.transpose()).sum(); }

double episode_loss(const Theta& theta, const Episode& e) { return (predict(theta, e) - e.target).squaredNorm(); }

struct BatchForward {
    Mat v;  // C_i Q x_i
    Mat r;  // residuals
};

BatchForward batch_forward(const Theta& theta, const EpisodeBatch& batch) {
    const int d = batch.d;
    const auto n = static_cast<Eigen::Index>(batch.size());
    if (n == 0) throw Error("empty prompt list");
    if (theta.dim() != d) throw Error("parameter and episode dimensions differ");
    Mat qx = theta.q * batch.queries;
    BatchForward f;
    f.v.resize(d, n);
    for (Eigen::Index i = 0; i < n; ++i) f.v.col(i).noalias() = batch.cs.middleCols(i * d, d) * qx.col(i);
    f.r = theta.p * f.v - batch.targets;
    return f;
}

RiskReport sampled_risk(const std::vector<double>& losses, RiskMethod method) {
    MeanEstimate est = mean_and_error(losses);
    RiskReport r;
    r.value = est.mean;
    r.std_error = est.std_error;
    r.method = method;
    r.episodes = static_cast<long long>(losses.size());
    return r;
}

Mat inverse_of(const Mat& a) {
    Eigen::PartialPivLU<Mat> lu(a);
    return lu.inverse();
}

}  // namespace

std::string to_string(RiskMethod m) {
    switch (m) {
        case RiskMethod::Empirical: return "empirical";
        case RiskMethod::MonteCarlo: return "monte_carlo";
        case RiskMethod::ClosedForm: return "closed_form";
        case RiskMethod::Limiting: return "limiting";
    }
    return "unknown";
}

nlohmann::json to_json(const RiskReport& r) {
    nlohmann::json j{{"value", r.value}, {"std_error", r.std_error}, {"method", to_string(r.method)}, {"episodes", r.episodes}};
    if (r.event_frequency) j["event_frequency"] = *r.event_frequency;
    return j;
}

TruncationEvent truncation_event(const SpdMatrix& cov, int n, double t) {
    if (!(t > 0.0)) throw Error("truncation level must be positive");
    if (n < 1) throw Error("prompt length must be positive");
    TruncationEvent e;
    e.t = t;
    e.query_bound = std::sqrt(cov.trace()) + t;
    e.cov_bound = cov.op_norm() * (1.0 + t + std::sqrt(static_cast<double>(cov.dim()) / n));
    return e;
}

double trace_sigma(const SpdMatrix& cov, const Mat& k) {
    Mat ks = 0.5 * (k + k.transpose());
    double s = 0.0;
    for (int l = 0; l < cov.dim(); ++l) {
        const auto phi = cov.eigenvectors().col(l);
        s += cov.eigenvalues()(l) * phi.dot(ks * phi);
    }
    return s;
}

Mat expected_cov_product(const SpdMatrix& cov, const Mat& k, int n) {
    if (n < 1) throw Error("prompt length must be positive");
    const Mat& s = cov.matrix();
    return s * k * s + (s * k.transpose() * s + trace_product(s, k) * s) / static_cast<double>(n);
}

TaskMoments TaskMoments::from_tasks(const std::vector<Mat>& tasks, bool exact) {
    if (tasks.empty()) throw Error("empty task sample");
    TaskMoments m;
    m.kind_ = Kind::Nodes;
    m.dim_ = static_cast<int>(tasks.front().rows());
    m.exact_ = exact;
    m.inv_.reserve(tasks.size());
    for (const Mat& a : tasks) m.inv_.push_back(inverse_of(a));
    const double k = static_cast<double>(tasks.size());
    Mat sum = Mat::Zero(m.dim_, m.dim_), sq = Mat::Zero(m.dim_, m.dim_);
    for (const Mat& w : m.inv_) {
        Mat wtw = w.transpose() * w;
        sum += wtw;
        sq += wtw.cwiseProduct(wtw);
    }
    m.b_ = sum / k;
    m.b_se_ = Mat::Zero(m.dim_, m.dim_);
    if (!exact && tasks.size() > 1) {
        Mat var = (sq / k - m.b_.cwiseProduct(m.b_)).cwiseMax(0.0) * (k / (k - 1.0));
        m.b_se_ = (var / k).cwiseSqrt();
    }
    return m;
}

TaskMoments TaskMoments::from_distribution(const TaskDistribution& dist, int task_samples, Rng& rng) {
    const int d = dist.dim();
    auto finish = [d](TaskMoments m) {
        m.dim_ = d;
        m.exact_ = true;
        m.b_ = m.apply_adjoint(Mat::Identity(d, d));
        m.b_se_ = Mat::Zero(d, d);
        return m;
    };
    if (const auto* rd = std::get_if<RotatedDiagonal>(&dist.kind())) {
        TaskMoments m;
        m.m1_ = uniform_expectation(rd->lo, rd->hi, [](double l) { return 1.0 / l; });
        m.m2_ = uniform_expectation(rd->lo, rd->hi, [](double l) { return 1.0 / (l * l); });
        if (rd->basis) {
            m.kind_ = Kind::FixedBasis;
            m.basis_ = *rd->basis;
        } else {
            m.kind_ = Kind::Isotropic;
        }
        return finish(std::move(m));
    }
    if (const auto* cm = std::get_if<ConstantMultiple>(&dist.kind())) {
        TaskMoments m;
        m.kind_ = Kind::Scalar;
        m.m1_ = uniform_expectation(cm->lo, cm->hi, [](double c) { return 1.0 / c; });
        m.m2_ = uniform_expectation(cm->lo, cm->hi, [](double c) { return 1.0 / (c * c); });
        return finish(std::move(m));
    }
    if (const auto* at = std::get_if<Atomic>(&dist.kind())) return from_tasks(at->atoms, true);
    if (task_samples < 1) throw Error("task sample count must be positive");
    std::vector<Mat> tasks(static_cast<std::size_t>(task_samples));
    parallel_for(tasks.size(), [&](std::size_t i) {
        Rng r = rng.child(i);
        tasks[i] = sample_task(dist, r);
    });
    return from_tasks(tasks, false);
}

TaskMoments TaskMoments::node(std::size_t i) const {
    if (kind_ != Kind::Nodes) return *this;
    TaskMoments m;
    m.kind_ = Kind::Nodes;
    m.dim_ = dim_;
    m.exact_ = true;
    m.inv_ = {inv_.at(i)};
    m.b_ = inv_[i].transpose() * inv_[i];
    m.b_se_ = Mat::Zero(dim_, dim_);
    return m;
}

Mat TaskMoments::apply(const Mat& c) const {
    switch (kind_) {
        case Kind::Nodes: {
            Mat s = Mat::Zero(dim_, dim_);
            for (const Mat& w : inv_) s.noalias() += w * c * w.transpose();
            return s / static_cast<double>(inv_.size());
        }
        case Kind::Isotropic: {
            // E[W_ij W_kl] = α δ_ij δ_kl + β (δ_ik δ_jl + δ_il δ_jk) for orthogonally invariant symmetric W
            const double beta = (m2_ - m1_ * m1_) / (dim_ + 2.0);
            const double alpha = m2_ - beta * (dim_ + 1.0);
            return alpha * c + beta * (c.transpose() + c.trace() * Mat::Identity(dim_, dim_));
        }
        case Kind::FixedBasis: {
            Mat cp = basis_.transpose() * c * basis_;
            Mat e = cp * (m1_ * m1_);
            e.diagonal() = cp.diagonal() * m2_;
            return basis_ * e * basis_.transpose();
        }
        case Kind::Scalar:
            return m2_ * c;
    }
    return c;
}

Mat TaskMoments::apply_adjoint(const Mat& x) const {
    if (kind_ != Kind::Nodes) return apply(x);
    Mat s = Mat::Zero(dim_, dim_);
    for (const Mat& w : inv_) s.noalias() += w.transpose() * x * w;
    return s / static_cast<double>(inv_.size());
}

RiskTerms risk_terms(const Theta& theta, const SpdMatrix& cov, const TaskMoments& moments) {
    const Mat& s = cov.matrix();
    const Mat& p = theta.p;
    const Mat& q = theta.q;
    Mat k = q * s * q.transpose();
    Mat ptp = p.transpose() * p;
    Mat m1 = moments.apply(s * k * s);
    Mat m2 = moments.apply(s * q * s);
    Mat m3 = moments.apply(s);
    double a = trace_product(ptp, m1);
    RiskTerms t;
    t.limit = a - 2.0 * trace_product(p, m2) + m3.trace();
    t.bracket = a + trace_product(s, k) * trace_product(ptp, m3);
    return t;
}

Gradient closed_form_gradient(const Theta& theta, const SpdMatrix& cov, const TaskMoments& moments, double n) {
    const Mat& s = cov.matrix();
    const Mat& p = theta.p;
    const Mat& q = theta.q;
    const double alpha = 1.0 + 1.0 / n;
    Mat k = q * s * q.transpose();
    Mat ptp = p.transpose() * p;
    Mat m1 = moments.apply(s * k * s);
    Mat m2 = moments.apply(s * q * s);
    Mat m3 = moments.apply(s);
    Gradient g;
    g.p = 2.0 * alpha * p * m1 - 2.0 * m2.transpose() + (2.0 / n) * trace_product(s, k) * p * m3;
    g.q = 2.0 * alpha * s * moments.apply_adjoint(ptp) * s * q * s - 2.0 * s * moments.apply_adjoint(p.transpose()) * s +
          (2.0 / n) * trace_product(ptp, m3) * s * q * s;
    return g;
}

double truth_norm_sq(const SpdMatrix& cov, const TaskMoments& moments) { return moments.apply(cov.matrix()).trace(); }

EpisodeBatch EpisodeBatch::from(const std::vector<Episode>& eps) {
    if (eps.empty()) throw Error("empty prompt list");
    EpisodeBatch b;
    b.d = static_cast<int>(eps.front().query.size());
    const auto n = static_cast<Eigen::Index>(eps.size());
    b.cs.resize(b.d, b.d * n);
    b.queries.resize(b.d, n);
    b.targets.resize(b.d, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Episode& e = eps[static_cast<std::size_t>(i)];
        b.cs.middleCols(i * b.d, b.d) = e.c;
        b.queries.col(i) = e.query;
        b.targets.col(i) = e.target;
    }
    return b;
}

EpisodeBatch EpisodeBatch::from(const std::vector<Prompt>& prompts) {
    std::vector<Episode> eps;
    eps.reserve(prompts.size());
    for (const Prompt& p : prompts) eps.push_back(summarize(p));
    return from(eps);
}

EpisodeBatch EpisodeBatch::subset(const std::vector<std::size_t>& idx) const {
    EpisodeBatch b;
    b.d = d;
    const auto n = static_cast<Eigen::Index>(idx.size());
    b.cs.resize(d, d * n);
    b.queries.resize(d, n);
    b.targets.resize(d, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto i = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(k)]);
        b.cs.middleCols(k * d, d) = cs.middleCols(i * d, d);
        b.queries.col(k) = queries.col(i);
        b.targets.col(k) = targets.col(i);
    }
    return b;
}

RiskReport empirical_risk(const Theta& theta, const EpisodeBatch& batch) {
    BatchForward f = batch_forward(theta, batch);
    std::vector<double> losses(batch.size());
    for (std::size_t i = 0; i < losses.size(); ++i) losses[i] = f.r.col(static_cast<Eigen::Index>(i)).squaredNorm();
    return sampled_risk(losses, RiskMethod::Empirical);
}

RiskReport empirical_risk(const Theta& theta, const std::vector<Prompt>& prompts) {
    if (prompts.empty()) throw Error("empty prompt list");
    return empirical_risk(theta, EpisodeBatch::from(prompts));
}

Gradient risk_gradient(const Theta& theta, const EpisodeBatch& batch) {
    BatchForward f = batch_forward(theta, batch);
    const int d = batch.d;
    const auto n = static_cast<Eigen::Index>(batch.size());
    Mat ptr = theta.p.transpose() * f.r;
    Mat w(d, n);
    for (Eigen::Index i = 0; i < n; ++i) w.col(i).noalias() = batch.cs.middleCols(i * d, d).transpose() * ptr.col(i);
    const double scale = 2.0 / static_cast<double>(n);
    return {scale * f.r * f.v.transpose(), scale * w * batch.queries.transpose()};
}

Gradient risk_gradient(const Theta& theta, const std::vector<Prompt>& prompts) {
    if (prompts.empty()) throw Error("empty prompt list");
    return risk_gradient(theta, EpisodeBatch::from(prompts));
}

RiskReport population_risk_closed_form(const Theta& theta, const SpdMatrix& cov, const TaskMoments& moments, double n) {
    if (!(n >= 1.0)) throw Error("prompt length must be positive");
    RiskReport r;
    r.method = RiskMethod::ClosedForm;
    if (moments.exact()) {
        r.value = std::max(0.0, risk_terms(theta, cov, moments).at(n));
        return r;
    }
    std::vector<double> vals(moments.node_count());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = risk_terms(theta, cov, moments.node(i)).at(n);
    MeanEstimate est = mean_and_error(vals);
    r.value = std::max(0.0, est.mean);
    r.std_error = est.std_error;
    r.episodes = static_cast<long long>(vals.size());
    return r;
}

RiskReport population_risk_closed_form(const Theta& theta, const RiskContext& ctx, int task_samples, Rng& rng) {
    if (ctx.n < 1) throw Error("prompt length must be positive");
    TaskMoments m = TaskMoments::from_distribution(ctx.task_dist, task_samples, rng);
    return population_risk_closed_form(theta, ctx.cov_dist.cov(), m, ctx.n);
}

RiskReport limiting_risk(const Theta& theta, const SpdMatrix& cov, const TaskMoments& moments) {
    RiskReport r;
    r.method = RiskMethod::Limiting;
    if (moments.exact()) {
        r.value = std::max(0.0, risk_terms(theta, cov, moments).limit);
        return r;
    }
    std::vector<double> vals(moments.node_count());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = risk_terms(theta, cov, moments.node(i)).limit;
    MeanEstimate est = mean_and_error(vals);
    r.value = std::max(0.0, est.mean);
    r.std_error = est.std_error;
    r.episodes = static_cast<long long>(vals.size());
    return r;
}

RiskReport limiting_risk(const Theta& theta, const RiskContext& ctx, int task_samples, Rng& rng) {
    TaskMoments m = TaskMoments::from_distribution(ctx.task_dist, task_samples, rng);
    return limiting_risk(theta, ctx.cov_dist.cov(), m);
}

RiskReport monte_carlo_risk(const Theta& theta, const RiskContext& ctx, long long episodes, Rng& rng) {
    if (episodes < 1) throw Error("episode count must be positive");
    std::vector<double> losses(static_cast<std::size_t>(episodes));
    parallel_for(losses.size(), [&](std::size_t i) {
        Rng r = rng.child(i);
        losses[i] = episode_loss(theta, sample_episode(ctx.task_dist, ctx.cov_dist, ctx.n, r));
    });
    return sampled_risk(losses, RiskMethod::MonteCarlo);
}

RiskReport truncated_monte_carlo_risk(const Theta& theta, const RiskContext& ctx, double t, long long episodes, Rng& rng) {
    if (episodes < 1) throw Error("episode count must be positive");
    const TruncationEvent ev = truncation_event(ctx.cov_dist.cov(), ctx.n, t);
    std::vector<double> losses(static_cast<std::size_t>(episodes));
    std::vector<double> inside(losses.size());
    parallel_for(losses.size(), [&](std::size_t i) {
        Rng r = rng.child(i);
        Prompt p = sample_prompt(ctx.task_dist, ctx.cov_dist, ctx.n, r);
        Eigen::SelfAdjointEigenSolver<Mat> es(empirical_covariance(p.xs), Eigen::EigenvaluesOnly);
        bool in = p.query.norm() <= ev.query_bound && es.eigenvalues().cwiseAbs().maxCoeff() <= ev.cov_bound;
        inside[i] = in ? 1.0 : 0.0;
        losses[i] = in ? episode_loss(theta, summarize(p)) : 0.0;
    });
    RiskReport r = sampled_risk(losses, RiskMethod::MonteCarlo);
    r.event_frequency = pairwise_sum(inside) / static_cast<double>(inside.size());
    return r;
}

OptimalQ optimal_Q(const SpdMatrix& cov, const TaskMoments& moments, double n) {
    if (!(n >= 1.0)) throw Error("prompt length must be positive");
    const int d = cov.dim();
    auto solve = [&](const Mat& b) {
        const Mat& s = cov.matrix();
        Mat inner = (1.0 + 1.0 / n) * s * b + (trace_product(s, b) / n) * Mat::Identity(d, d);
        Eigen::PartialPivLU<Mat> lu(inner);
        if (!(lu.rcond() > 1e-14)) throw Error("degenerate task second moment");
        return Mat(b * lu.inverse());
    };
    OptimalQ out;
    out.b = moments.b();
    out.q = solve(out.b);
    if (moments.b_std_error().size() && moments.b_std_error().maxCoeff() > 0.0) {
        Mat se = moments.b_std_error();
        Mat pert = out.b + 0.5 * (se + se.transpose());
        out.q_tolerance = (solve(pert) - out.q).norm();
    }
    return out;
}

OptimalQ optimal_Q(const RiskContext& ctx, int task_samples, Rng& rng) {
    TaskMoments m = TaskMoments::from_distribution(ctx.task_dist, task_samples, rng);
    return optimal_Q(ctx.cov_dist.cov(), m, ctx.n);
}

}  // namespace icl
