#include "icl/harness.hpp"

#include "icl/plot.hpp"
#include "icl/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace icl {

using nlohmann::json;

std::string to_string(Axis a) {
    switch (a) {
        case Axis::n: return "n";
        case Axis::m: return "m";
        case Axis::N: return "N";
    }
    return "?";
}

Axis axis_from_string(const std::string& s) {
    if (s == "n") return Axis::n;
    if (s == "m") return Axis::m;
    if (s == "N") return Axis::N;
    throw Error("unknown sweep axis '" + s + "'");
}

double shifted_relative_error(double test_error, double floor, double truth_norm_sq) {
    if (!(truth_norm_sq > 0.0)) throw Error("ground truth norm must be positive");
    return std::max(test_error - floor, 0.0) / truth_norm_sq;
}

SlopeFit fit_slope(const std::vector<std::pair<double, double>>& points) {
    std::vector<double> lx, ly;
    for (std::size_t i = 1; i < points.size(); ++i) {
        auto [x, y] = points[i];
        if (!(x > 0.0) || !(y > 0.0) || !std::isfinite(y)) continue;
        lx.push_back(std::log(x));
        ly.push_back(std::log(y));
    }
    if (lx.size() < 4) throw Error("insufficient points");
    const double k = static_cast<double>(lx.size());
    const double mx = pairwise_sum(lx) / k, my = pairwise_sum(ly) / k;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (!(sxx > 0.0)) throw Error("insufficient points");
    SlopeFit f;
    f.slope = sxy / sxx;
    double ssr = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        double r = ly[i] - my - f.slope * (lx[i] - mx);
        ssr += r * r;
    }
    f.std_error = std::sqrt(ssr / (k - 2.0) / sxx);
    f.points = static_cast<int>(lx.size());
    return f;
}

SlopeFit fit_tail_slope(const std::vector<std::pair<double, double>>& points, int count) {
    if (static_cast<int>(points.size()) <= count) return fit_slope(points);
    return fit_slope({points.end() - count, points.end()});
}

// ---------------------------------------------------------------- specs

namespace {

Mat matrix_field(const json& j, int d, const char* what) {
    try {
        return mat_from_json(j, d, d);
    } catch (const std::exception& e) {
        throw Error(std::string(what) + ": " + e.what());
    }
}

FieldLaw field_from_json(const json& j) {
    if (j.is_number()) return FieldLaw::constant(j.get<double>());
    const std::string kind = j.value("kind", "constant");
    if (kind == "constant") return FieldLaw::constant(j.value("value", 1.0));
    if (kind == "uniform_constant") return FieldLaw::uniform_constant(j.value("lo", 1.0), j.value("hi", 2.0));
    if (kind == "log_gaussian") {
        GrfSpec g{j.value("amplitude", 1.0), j.value("alpha", 2.0), j.value("beta", 2.0)};
        return FieldLaw::log_gaussian(j.value("scale", 1.0), g);
    }
    throw Error("unknown field law '" + kind + "'");
}

json field_to_json(const FieldLaw& f) {
    switch (f.kind) {
        case FieldLaw::Kind::Constant: return {{"kind", "constant"}, {"value", f.value}};
        case FieldLaw::Kind::UniformConstant: return {{"kind", "uniform_constant"}, {"lo", f.lo}, {"hi", f.hi}};
        case FieldLaw::Kind::LogGaussian:
            return {{"kind", "log_gaussian"}, {"scale", f.value}, {"amplitude", f.grf.amplitude},
                    {"alpha", f.grf.alpha}, {"beta", f.grf.beta}};
    }
    return {};
}

json resolve_task_json(const json& j, int d) {
    const std::string kind = j.at("kind").get<std::string>();
    json out = j;
    if (kind == "rotated_diagonal" || kind == "constant_multiple") {
        out["lo"] = j.value("lo", 1.0);
        out["hi"] = j.value("hi", 2.0);
        if (kind == "rotated_diagonal") {
            out["basis"] = j.value("basis", json("fresh"));
            if (out["basis"] == "random_fixed") out["basis_seed"] = j.value("basis_seed", 0);
        }
    } else if (kind == "pde") {
        PdeFamily f = pde_family_from_json(j, d);
        out["a"] = field_to_json(f.a);
        out["v"] = field_to_json(f.v);
        out["field_modes"] = f.resolved_field_modes();
    }
    return out;
}

json resolve_covariate_json(const json& j) {
    const std::string kind = j.value("kind", "identity");
    json out = j;
    out["kind"] = kind;
    if (kind == "equal_correlated") out["rho"] = j.value("rho", 0.0);
    if (kind == "grf") {
        out["amplitude"] = j.value("amplitude", 1.0);
        out["alpha"] = j.value("alpha", 2.0);
        out["beta"] = j.value("beta", 2.0);
    }
    return out;
}

GrfSpec grf_from_json(const json& j) { return {j.value("amplitude", 1.0), j.value("alpha", 2.0), j.value("beta", 2.0)}; }

}  // namespace

PdeFamily pde_family_from_json(const json& j, int d) {
    if (j.value("kind", "") != "pde") throw Error("expected a pde task spec");
    PdeFamily f;
    f.modes = d;
    f.a = field_from_json(j.value("a", json(0.1)));
    f.v = field_from_json(j.value("v", json(0.0)));
    f.field_modes = j.value("field_modes", 0);
    return f;
}

TaskDistribution task_from_json(const json& j, int d) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "rotated_diagonal") {
        const double lo = j.value("lo", 1.0), hi = j.value("hi", 2.0);
        const json b = j.value("basis", json("fresh"));
        if (!b.is_string()) return TaskDistribution::rotated_diagonal(d, lo, hi, matrix_field(b, d, "basis"));
        const std::string s = b.get<std::string>();
        if (s == "fresh") return TaskDistribution::rotated_diagonal(d, lo, hi);
        if (s == "identity") return TaskDistribution::rotated_diagonal(d, lo, hi, Mat::Identity(d, d));
        if (s == "random_fixed") {
            Rng r(j.value("basis_seed", 0), hash_label("basis"));
            return TaskDistribution::rotated_diagonal(d, lo, hi, haar_orthogonal(r, d));
        }
        throw Error("unknown basis '" + s + "'");
    }
    if (kind == "constant_multiple") return TaskDistribution::constant_multiple(d, j.value("lo", 1.0), j.value("hi", 2.0));
    if (kind == "atomic") {
        std::vector<Mat> atoms;
        for (const auto& a : j.at("atoms")) atoms.push_back(matrix_field(a, d, "atom"));
        return TaskDistribution::atomic(std::move(atoms));
    }
    if (kind == "pde") return TaskDistribution::pde(pde_family_from_json(j, d));
    throw Error("unknown task kind '" + kind + "'");
}

CovariateDistribution covariate_from_json(const json& j, int d) {
    const std::string kind = j.value("kind", "identity");
    if (kind == "identity" || kind == "white_noise") return CovariateDistribution::identity(d);
    if (kind == "equal_correlated") return CovariateDistribution::equal_correlated(d, j.value("rho", 0.0));
    if (kind == "diagonal") {
        auto v = j.at("variances").get<std::vector<double>>();
        if (static_cast<int>(v.size()) < d) throw Error("covariance has too few entries");
        return CovariateDistribution::diagonal(Eigen::Map<Vec>(v.data(), d));
    }
    if (kind == "grf") return CovariateDistribution::diagonal(grf_mode_variances(grf_from_json(j), d), "grf");
    if (kind == "matrix") return CovariateDistribution(SpdMatrix(matrix_field(j.at("matrix"), d, "covariance")));
    throw Error("unknown covariate kind '" + kind + "'");
}

Vec source_variances_from_json(const json& j, int modes) {
    const std::string kind = j.value("kind", "identity");
    if (kind == "identity" || kind == "white_noise") return Vec::Ones(modes);
    if (kind == "grf") return grf_mode_variances(grf_from_json(j), modes);
    if (kind == "diagonal") {
        auto v = j.at("variances").get<std::vector<double>>();
        if (static_cast<int>(v.size()) < modes) throw Error("source covariance has too few modes");
        return Eigen::Map<Vec>(v.data(), modes);
    }
    throw Error("covariate kind '" + kind + "' has no mode expansion");
}

InitSpec init_from_json(const json& j, const SpdMatrix& cov, Rng& rng) {
    const int d = cov.dim();
    const std::string kind = j.value("kind", "gaussian");
    if (kind == "gaussian") return InitSpec::gaussian(j.value("scale", 0.0));
    if (kind != "near") throw Error("unknown init kind '" + kind + "'");
    const double noise = j.value("noise", 0.01);
    const std::string center = j.value("center", "identity");
    if (center == "identity") return InitSpec::near(Mat::Identity(d, d), cov.inverse(), noise);
    if (center == "ones") return InitSpec::near(Mat::Identity(d, d), Mat::Identity(d, d), noise);
    if (center == "random_diagonal") {
        const double lo = j.value("lo", 1.0), hi = j.value("hi", 2.0);
        Vec k(d);
        for (int i = 0; i < d; ++i) k(i) = rng.uniform(lo, hi);
        return InitSpec::near(k.asDiagonal(), cov.inverse() * Mat(k.cwiseInverse().asDiagonal()), noise);
    }
    if (center == "explicit")
        return InitSpec::near(matrix_field(j.at("p"), d, "init p"), matrix_field(j.at("q"), d, "init q"), noise);
    throw Error("unknown init center '" + center + "'");
}

// ---------------------------------------------------------------- config

json ExperimentConfig::resolved() const {
    json evals = json::array();
    for (const auto& e : evaluations)
        evals.push_back({{"label", e.label}, {"task", e.task}, {"covariate", e.covariate}});
    json j;
    j["name"] = name;
    j["kind"] = kind;
    j["d"] = d;
    j["axis"] = to_string(axis);
    j["grid"] = grid;
    j["n"] = n;
    j["m"] = m > 0 ? json(m) : json("same_as_n");
    j["N"] = N;
    j["train"] = {{"task", train_task}, {"covariate", train_covariate}};
    j["evaluations"] = evals;
    j["init"] = init;
    j["budget"] = budget;
    j["optimizer"] = {{"step", step}, {"max_iterations", max_iterations}, {"grad_tol", grad_tol}, {"batch", batch}};
    j["seeds"] = seeds;
    j["eval"] = {{"task_samples", task_samples}, {"ref_modes", resolved_ref_modes()}};
    j["metric"] = metric == Metric::H1 ? "h1" : "l2";
    j["output_dir"] = output_dir;
    return j;
}

ExperimentConfig parse_config(const json& j) {
    ExperimentConfig c;
    c.name = j.at("name").get<std::string>();
    if (c.name.empty()) throw Error("experiment needs a name");
    c.kind = j.value("kind", "sweep");
    if (c.kind != "sweep") throw Error("unknown experiment kind '" + c.kind + "'");
    c.d = j.at("d").get<int>();
    if (c.d < 1) throw Error("dimension must be positive");
    c.axis = axis_from_string(j.at("axis").get<std::string>());

    const json& g = j.at("grid");
    if (g.is_array()) {
        c.grid = g.get<std::vector<int>>();
    } else {
        const double start = g.at("start").get<double>(), ratio = g.value("ratio", 2.0);
        const int count = g.at("count").get<int>();
        for (int k = 0; k < count; ++k) c.grid.push_back(static_cast<int>(std::lround(start * std::pow(ratio, k))));
    }
    if (c.grid.empty()) throw Error("grid is empty");
    for (std::size_t i = 0; i < c.grid.size(); ++i) {
        if (c.grid[i] < 1) throw Error("grid values must be positive");
        if (i > 0 && c.grid[i] <= c.grid[i - 1]) throw Error("grid must be strictly increasing");
    }

    c.n = j.value("n", c.n);
    c.N = j.value("N", c.N);
    if (j.contains("m")) {
        if (j["m"].is_string()) {
            if (j["m"] != "same_as_n") throw Error("m must be a count or \"same_as_n\"");
            c.m = 0;
        } else {
            c.m = j["m"].get<int>();
            if (c.m < 1) throw Error("prompt length must be positive");
        }
    }

    const json train = j.at("train");
    c.train_task = resolve_task_json(train.at("task"), c.d);
    c.train_covariate = resolve_covariate_json(train.value("covariate", json::object()));

    const json evals = j.value("evaluations", json::array({{{"label", "in_domain"}}}));
    for (const auto& e : evals) {
        EvalSpec s;
        s.label = e.value("label", "eval" + std::to_string(c.evaluations.size()));
        s.task = e.contains("task") ? resolve_task_json(e["task"], c.d) : c.train_task;
        s.covariate = e.contains("covariate") ? resolve_covariate_json(e["covariate"]) : c.train_covariate;
        c.evaluations.push_back(std::move(s));
    }
    if (c.evaluations.empty()) throw Error("no evaluations");

    c.init = j.value("init", json{{"kind", "gaussian"}});
    if (!c.init.contains("kind")) c.init["kind"] = "gaussian";
    if (c.init["kind"] == "gaussian") {
        c.init["scale"] = c.init.value("scale", 0.0);
    } else {
        c.init["center"] = c.init.value("center", "identity");
        c.init["noise"] = c.init.value("noise", 0.01);
        if (c.init["center"] == "random_diagonal") {
            c.init["lo"] = c.init.value("lo", 1.0);
            c.init["hi"] = c.init.value("hi", 2.0);
        }
    }
    c.budget = j.value("budget", c.budget);

    const json opt = j.value("optimizer", json::object());
    c.step = opt.value("step", c.step);
    c.max_iterations = opt.value("max_iterations", c.max_iterations);
    c.grad_tol = opt.value("grad_tol", c.grad_tol);
    c.batch = opt.value("batch", c.batch);

    c.seeds = j.value("seeds", std::vector<std::uint64_t>{1, 2, 3, 4, 5});
    if (c.seeds.empty()) throw Error("at least one seed is required");

    const json ev = j.value("eval", json::object());
    c.task_samples = ev.value("task_samples", c.task_samples);
    c.ref_modes = ev.value("ref_modes", 0);
    const std::string metric = j.value("metric", "l2");
    if (metric == "l2") c.metric = Metric::L2;
    else if (metric == "h1") c.metric = Metric::H1;
    else throw Error("unknown metric '" + metric + "'");
    if (c.metric == Metric::H1 && c.resolved_ref_modes() < c.d) throw Error("reference resolution below learner resolution");
    c.output_dir = j.value("output_dir", "runs/" + c.name);
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot read " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw Error(path + ": " + e.what());
    }
    return parse_config(j);
}

// ---------------------------------------------------------------- evaluation

Evaluator Evaluator::l2(const TaskDistribution& task, const CovariateDistribution& cov, int task_samples, Rng& rng) {
    if (task.dim() != cov.dim()) throw Error("task and covariate dimensions differ");
    Evaluator e;
    e.cov_ = cov.cov();
    e.moments_ = TaskMoments::from_distribution(task, task_samples, rng);
    e.truth_ = truth_norm_sq(*e.cov_, *e.moments_);
    return e;
}

Evaluator Evaluator::h1(const PdeFamily& family, const Vec& source_variances, int ref_modes, int task_samples, Rng& rng) {
    Evaluator e;
    e.h1_.emplace(family, source_variances, ref_modes, task_samples, rng);
    e.truth_ = e.h1_->truth();
    return e;
}

RiskTerms Evaluator::terms(const Theta& theta) const {
    if (h1_) return h1_->terms(theta);
    return risk_terms(theta, *cov_, *moments_);
}

double Evaluator::truth() const { return truth_; }
const SpdMatrix& Evaluator::cov() const { return h1_ ? h1_->cov() : *cov_; }
const TaskMoments& Evaluator::moments() const { return h1_ ? h1_->moments() : *moments_; }

double estimate_floor(Axis axis, const Theta& theta_hat, const Evaluator& in_domain, double m) {
    if (axis == Axis::m) return std::max(0.0, in_domain.terms(theta_hat).limit);
    OptimalQ oq = optimal_Q(in_domain.cov(), in_domain.moments(), m);
    const int d = in_domain.cov().dim();
    Theta ref{Mat::Identity(d, d), oq.q};
    return std::max(0.0, in_domain.terms(ref).at(m));
}

// ---------------------------------------------------------------- runs

namespace {

Evaluator make_evaluator(const ExperimentConfig& cfg, const json& task, const json& cov, Rng rng) {
    if (cfg.metric == Metric::L2)
        return Evaluator::l2(task_from_json(task, cfg.d), covariate_from_json(cov, cfg.d), cfg.task_samples, rng);
    if (task.value("kind", "") != "pde") throw Error("h1 metric requires a pde task");
    const int r = cfg.resolved_ref_modes();
    return Evaluator::h1(pde_family_from_json(task, cfg.d), source_variances_from_json(cov, r), r, cfg.task_samples, rng);
}

struct JobOutput {
    TrainResult train;
    // rows[eval][grid index] for m-sweeps, rows[eval][0] otherwise
    std::vector<std::vector<ResultRow>> rows;
};

std::string experiment_label(const ExperimentConfig& cfg, const EvalSpec& e) { return cfg.name + "/" + e.label; }

JobOutput run_job(const ExperimentConfig& cfg, int value, std::uint64_t seed) {
    const Rng base(seed, hash_label(cfg.name));
    const int n = cfg.axis == Axis::n ? value : cfg.n;
    const int N = cfg.axis == Axis::N ? value : cfg.N;

    RiskContext ctx{task_from_json(cfg.train_task, cfg.d), covariate_from_json(cfg.train_covariate, cfg.d), n};
    const SpdMatrix& cov = ctx.cov_dist.cov();
    Rng data_rng = base.child(0);
    EpisodeBatch data = sample_training_set(ctx, N, data_rng);

    Rng center_rng = base.child(3);
    TrainConfig tc;
    tc.N = N;
    tc.n = n;
    tc.budget = cfg.budget;
    tc.step = cfg.step;
    tc.max_iterations = cfg.max_iterations;
    tc.grad_tol = cfg.grad_tol;
    tc.batch = cfg.batch;
    tc.init = init_from_json(cfg.init, cov, center_rng);
    Rng init_rng = base.child(1);

    JobOutput out;
    out.train = train_on(tc, data, cov, init_rng);
    const Theta& theta = out.train.theta;

    const Rng eval_rng = base.child(2);
    Evaluator in_domain = make_evaluator(cfg, cfg.train_task, cfg.train_covariate, eval_rng.child(0));

    std::vector<int> lengths;
    if (cfg.axis == Axis::m) lengths = cfg.grid;
    else lengths = {cfg.eval_length(n)};
    std::vector<double> floors;
    for (int m : lengths) floors.push_back(estimate_floor(cfg.axis, theta, in_domain, m));

    for (std::size_t k = 0; k < cfg.evaluations.size(); ++k) {
        const EvalSpec& e = cfg.evaluations[k];
        const bool same = e.task == cfg.train_task && e.covariate == cfg.train_covariate;
        std::optional<Evaluator> own;
        if (!same) own = make_evaluator(cfg, e.task, e.covariate, eval_rng.child(k + 1));
        const Evaluator& ev = same ? in_domain : *own;
        const RiskTerms t = ev.terms(theta);
        std::vector<ResultRow> rows;
        for (std::size_t i = 0; i < lengths.size(); ++i) {
            ResultRow r;
            r.experiment = experiment_label(cfg, e);
            r.axis = cfg.axis;
            r.value = cfg.axis == Axis::m ? lengths[i] : value;
            r.seed = seed;
            r.raw_error = std::max(0.0, t.at(lengths[i]));
            r.floor = floors[i];
            r.shifted_error = shifted_relative_error(r.raw_error, r.floor, ev.truth());
            rows.push_back(r);
        }
        out.rows.push_back(std::move(rows));
    }
    return out;
}

SweepResult summarize_curve(const ExperimentConfig& cfg, const EvalSpec& e, const std::vector<ResultRow>& rows) {
    SweepResult s;
    s.experiment = experiment_label(cfg, e);
    s.label = e.label;
    s.axis = cfg.axis;
    const std::size_t seeds = cfg.seeds.size();
    std::vector<std::pair<double, double>> pts;
    for (std::size_t g = 0; g < cfg.grid.size(); ++g) {
        std::vector<double> sh, raw, fl;
        for (std::size_t i = 0; i < seeds; ++i) {
            const ResultRow& r = rows[g * seeds + i];
            sh.push_back(r.shifted_error);
            raw.push_back(r.raw_error);
            fl.push_back(r.floor);
        }
        SweepPoint p;
        p.value = cfg.grid[g];
        MeanEstimate est = mean_and_error(sh);
        p.mean_shifted = est.mean;
        p.std_shifted = est.std_error * std::sqrt(static_cast<double>(seeds));
        p.mean_raw = pairwise_sum(raw) / static_cast<double>(seeds);
        p.mean_floor = pairwise_sum(fl) / static_cast<double>(seeds);
        s.points.push_back(p);
        pts.emplace_back(p.value, p.mean_shifted);
    }
    try {
        SlopeFit f = fit_slope(pts);
        SlopeFit t = fit_tail_slope(pts, 5);
        s.slope = f.slope;
        s.slope_std_error = f.std_error;
        s.tail_slope = t.slope;
        s.tail_slope_std_error = t.std_error;
        s.fitted = true;
    } catch (const Error&) {
        s.fitted = false;
    }
    return s;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    struct Job {
        int value;
        std::size_t seed_index;
    };
    std::vector<Job> jobs;
    if (cfg.axis == Axis::m) {
        for (std::size_t s = 0; s < cfg.seeds.size(); ++s) jobs.push_back({0, s});
    } else {
        for (int v : cfg.grid)
            for (std::size_t s = 0; s < cfg.seeds.size(); ++s) jobs.push_back({v, s});
    }

    std::vector<JobOutput> outputs(jobs.size());
    parallel_for(jobs.size(), [&](std::size_t i) {
        const Job& job = jobs[i];
        const std::uint64_t seed = cfg.seeds[job.seed_index];
        try {
            outputs[i] = run_job(cfg, job.value, seed);
        } catch (const std::exception& e) {
            std::string where = cfg.axis == Axis::m ? "" : " at " + to_string(cfg.axis) + "=" + std::to_string(job.value);
            throw Error(cfg.name + where + " seed " + std::to_string(seed) + ": " + e.what());
        }
    });

    ExperimentResult res;
    res.config = cfg;
    const std::size_t seeds = cfg.seeds.size();
    for (std::size_t k = 0; k < cfg.evaluations.size(); ++k) {
        std::vector<ResultRow> curve;
        for (std::size_t g = 0; g < cfg.grid.size(); ++g)
            for (std::size_t s = 0; s < seeds; ++s) {
                if (cfg.axis == Axis::m) curve.push_back(outputs[s].rows[k][g]);
                else curve.push_back(outputs[g * seeds + s].rows[k][0]);
            }
        res.curves.push_back(summarize_curve(cfg, cfg.evaluations[k], curve));
        res.rows.insert(res.rows.end(), curve.begin(), curve.end());
    }
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        TrainedModel tm;
        tm.value = jobs[i].value;
        tm.seed = cfg.seeds[jobs[i].seed_index];
        tm.result = std::move(outputs[i].train);
        res.models.push_back(std::move(tm));
    }
    return res;
}

std::string results_csv(const std::vector<ResultRow>& rows) {
    std::ostringstream o;
    o << "experiment,axis,value,seed,raw_error,floor,shifted_error\n";
    for (const auto& r : rows)
        o << r.experiment << ',' << to_string(r.axis) << ',' << fmt(r.value) << ',' << r.seed << ',' << fmt(r.raw_error)
          << ',' << fmt(r.floor) << ',' << fmt(r.shifted_error) << '\n';
    return o.str();
}

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << results_csv(rows);
}

json to_json(const SweepResult& r) {
    json pts = json::array();
    for (const auto& p : r.points)
        pts.push_back({{"value", p.value},
                       {"mean_shifted", p.mean_shifted},
                       {"std_shifted", p.std_shifted},
                       {"mean_raw", p.mean_raw},
                       {"mean_floor", p.mean_floor}});
    json j{{"experiment", r.experiment}, {"label", r.label}, {"axis", to_string(r.axis)}, {"points", pts}, {"fitted", r.fitted}};
    if (r.fitted) {
        j["slope"] = r.slope;
        j["slope_std_error"] = r.slope_std_error;
        j["tail_slope"] = r.tail_slope;
        j["tail_slope_std_error"] = r.tail_slope_std_error;
    }
    return j;
}

ExperimentResult run_and_write(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    ExperimentResult res = run_experiment(cfg);
    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir / "thetas");

    write_results_csv((dir / "results.csv").string(), res.rows);
    {
        std::ofstream f(dir / "config.json");
        f << cfg.resolved().dump(2) << '\n';
    }

    json models = json::array();
    for (const auto& m : res.models) {
        std::string stem = cfg.axis == Axis::m ? "theta_seed" + std::to_string(m.seed)
                                               : "theta_" + to_string(cfg.axis) + std::to_string(static_cast<int>(m.value)) +
                                                     "_seed" + std::to_string(m.seed);
        std::ofstream(dir / "thetas" / (stem + ".json")) << to_json(m.result.theta).dump() << '\n';
        std::ofstream trace(dir / "thetas" / (stem + "_trace.csv"));
        m.result.trace.write_csv(trace);
        models.push_back({{"file", "thetas/" + stem + ".json"},
                          {"seed", m.seed},
                          {"value", m.value},
                          {"iterations", m.result.iterations},
                          {"converged", m.result.converged},
                          {"final_risk", m.result.trace.records.back().risk}});
    }
    json summary{{"name", cfg.name}, {"curves", json::array()}, {"models", models}};
    for (const auto& c : res.curves) summary["curves"].push_back(to_json(c));
    std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';

    PlotSpec plot;
    plot.title = cfg.name;
    plot.xlabel = to_string(cfg.axis);
    plot.ylabel = cfg.metric == Metric::H1 ? "shifted relative H1 error" : "shifted relative error";
    for (std::size_t k = 0; k < res.curves.size(); ++k) {
        const SweepResult& c = res.curves[k];
        PlotSeries s;
        s.label = c.label;
        s.dashed = k > 0;
        for (const auto& p : c.points) {
            s.x.push_back(p.value);
            s.y.push_back(p.mean_shifted);
        }
        plot.series.push_back(std::move(s));
        char buf[96];
        if (c.fitted) std::snprintf(buf, sizeof buf, "%s: slope %.2f (tail %.2f)", c.label.c_str(), c.slope, c.tail_slope);
        else std::snprintf(buf, sizeof buf, "%s: no fit", c.label.c_str());
        plot.notes.push_back(buf);
    }
    write_svg((dir / "plot.svg").string(), plot);
    return res;
}

}  // namespace icl
