#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "icl/training.hpp"

#include <cmath>
#include <sstream>

using namespace icl;

namespace {

double max_norm(const Theta& t) { return std::max(spectral_norm(t.p), spectral_norm(t.q)); }

}  // namespace

TEST_CASE("one-dimensional training reaches the scalar optimum") {
    const int n = 100, N = 20000;
    auto one = TaskDistribution::atomic({Mat::Identity(1, 1)});
    RiskContext ctx{one, CovariateDistribution::identity(1), n};
    TrainConfig cfg;
    cfg.N = N;
    cfg.n = n;
    cfg.budget = 10.0;
    cfg.init = InitSpec::near(Mat::Ones(1, 1), Mat::Ones(1, 1), 0.1);
    Rng r(1);
    Rng data_rng = r.child(0), init_rng = r.child(1);
    EpisodeBatch data = sample_training_set(ctx, N, data_rng);
    TrainResult res = train_on(cfg, data, ctx.cov_dist.cov(), init_rng);
    CHECK(res.converged);
    const double pq = res.theta.p(0, 0) * res.theta.q(0, 0);

    // The objective is quadratic in s = pq: Σ (s c x − y)² minimized at Σ c x y / Σ (c x)².
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        double cx = data.cs(0, static_cast<Eigen::Index>(i)) * data.queries(0, static_cast<Eigen::Index>(i));
        num += cx * data.targets(0, static_cast<Eigen::Index>(i));
        den += cx * cx;
    }
    CHECK(std::abs(pq - num / den) < 1e-6);
    CHECK(std::abs(pq - n / (n + 2.0)) < 1e-2);
}

TEST_CASE("training from the in-domain optimum stays at the floor") {
    const int d = 3, n = 20, N = 4000;
    auto rd = TaskDistribution::rotated_diagonal(d, 1.0, 2.0);
    RiskContext ctx{rd, CovariateDistribution::identity(d), n};
    TrainConfig cfg;
    cfg.N = N;
    cfg.n = n;
    cfg.init = InitSpec::near(Mat::Identity(d, d), Mat::Identity(d, d), 0.0);
    Rng r(2);
    TrainResult res = train(cfg, ctx, r);
    CHECK(res.converged);
    Rng mr(3);
    TaskMoments mom = TaskMoments::from_distribution(rd, 10, mr);
    const SpdMatrix& cov = ctx.cov_dist.cov();
    double floor = population_risk_closed_form(Theta{Mat::Identity(d, d), optimal_Q(cov, mom, n).q}, cov, mom, n).value;
    double trained = population_risk_closed_form(res.theta, cov, mom, n).value;
    CHECK(trained >= floor * (1 - 1e-12));
    CHECK(trained < 1.05 * floor);
}

TEST_CASE("non-diverse trap keeps P near its initial K") {
    const int d = 5;
    Rng r(4);
    Vec k(d);
    for (int i = 0; i < d; ++i) k(i) = r.uniform(1.0, 2.0);
    Mat kk = k.asDiagonal();
    auto cm = TaskDistribution::constant_multiple(d, 1.0, 2.0);
    // The 1/n term pulls P toward a multiple of I, so the trap needs long prompts.
    const int n = 20000;
    RiskContext ctx{cm, CovariateDistribution::identity(d), n};
    TrainConfig cfg;
    cfg.N = 1000;
    cfg.n = n;
    cfg.max_iterations = 300;
    cfg.init = InitSpec::near(kk, Mat(kk.inverse()), 1e-3);
    TrainResult res = train(cfg, ctx, r);
    CHECK((res.theta.p - kk).norm() < 0.1);

    Rng mr(5);
    TaskMoments mom = TaskMoments::from_distribution(cm, 10, mr);
    const SpdMatrix& cov = ctx.cov_dist.cov();
    double floor = population_risk_closed_form(Theta{Mat::Identity(d, d), optimal_Q(cov, mom, n).q}, cov, mom, n).value;
    CHECK(limiting_risk(res.theta, cov, mom).value < 0.05 * floor);
    double center = population_risk_closed_form(Theta{kk, Mat(kk.inverse())}, cov, mom, n).value;
    CHECK(population_risk_closed_form(res.theta, cov, mom, n).value < center);
}

TEST_CASE("backtracking_step") {
    auto quad = [](const Theta& t) { return (t.p(0, 0) - 1.0) * (t.p(0, 0) - 1.0) + t.q(0, 0) * t.q(0, 0); };
    Theta t{Mat::Zero(1, 1), Mat::Zero(1, 1)};
    Gradient g{Mat::Constant(1, 1, -2.0), Mat::Zero(1, 1)};
    StepResult s = backtracking_step(t, g, quad, 0.25);
    CHECK(s.step == 0.25);
    CHECK(s.theta.p(0, 0) == doctest::Approx(0.5));
    CHECK(s.risk == doctest::Approx(0.25));

    StepResult big = backtracking_step(t, g, quad, 4.0);
    CHECK(big.step < 1.0);
    CHECK(big.risk < 1.0);

    Gradient zero{Mat::Zero(1, 1), Mat::Zero(1, 1)};
    StepResult z = backtracking_step(t, zero, quad, 1.0);
    CHECK(z.theta.p == t.p);
    CHECK(z.theta.q == t.q);

    Gradient wrong{Mat::Constant(1, 1, 2.0), Mat::Zero(1, 1)};
    CHECK_THROWS_WITH(backtracking_step(t, wrong, quad, 1.0), "no descent direction");

    Rng r(6);
    const int d = 3;
    auto rd = TaskDistribution::rotated_diagonal(d, 1.0, 2.0);
    std::vector<Prompt> prompts;
    for (int i = 0; i < 30; ++i) prompts.push_back(sample_prompt(rd, CovariateDistribution::identity(d), 6, r));
    auto risk = [&](const Theta& th) { return empirical_risk(th, prompts).value; };
    for (int i = 0; i < 100; ++i) {
        Theta th{gaussian_matrix(d, d, r), gaussian_matrix(d, d, r), 3.0};
        th = project_to_budget(th);
        StepResult st = backtracking_step(th, risk_gradient(th, prompts), risk, 1.0);
        CHECK(st.risk <= risk(th));
    }
}

TEST_CASE("training invariants") {
    const int d = 3;
    auto rd = TaskDistribution::rotated_diagonal(d, 1.0, 2.0);
    RiskContext ctx{rd, CovariateDistribution::equal_correlated(d, 0.3), 10};
    TrainConfig cfg;
    cfg.N = 300;
    cfg.n = 10;
    cfg.budget = 2.0;
    cfg.max_iterations = 400;
    Rng a(7), b(7);
    TrainResult ra = train(cfg, ctx, a);
    TrainResult rb = train(cfg, ctx, b);
    CHECK(ra.theta.p == rb.theta.p);
    CHECK(ra.theta.q == rb.theta.q);
    CHECK(max_norm(ra.theta) <= cfg.budget + 1e-12);
    REQUIRE(ra.trace.records.size() > 1);
    for (std::size_t i = 1; i < ra.trace.records.size(); ++i)
        CHECK(ra.trace.records[i].risk <= ra.trace.records[i - 1].risk);

    Rng c(7);
    EpisodeBatch data = sample_training_set(ctx, cfg.N, c);
    double base = empirical_risk(ra.theta, data).value;
    for (double s : {0.5, 3.0}) {
        Theta g{s * ra.theta.p, ra.theta.q / s};
        CHECK(std::abs(empirical_risk(g, data).value - base) <= 1e-12 * std::max(base, 1.0));
    }

    TrainConfig low = cfg;
    low.budget = 0.5;
    Rng e(8);
    CHECK_THROWS(train(low, ctx, e));

    std::ostringstream os;
    ra.trace.write_csv(os);
    CHECK(os.str().rfind("iteration,risk,grad_norm,p_norm,q_norm\n", 0) == 0);
}
