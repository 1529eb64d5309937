#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "icl/risk.hpp"

#include <cmath>

using namespace icl;

namespace {

SpdMatrix random_spd(int d, Rng& r) {
    Mat m = gaussian_matrix(d, d, r);
    return SpdMatrix(Mat(m * m.transpose() / d + 0.5 * Mat::Identity(d, d)));
}

Mat random_sym(int d, Rng& r) {
    Mat m = gaussian_matrix(d, d, r);
    return 0.5 * (m + m.transpose());
}

// Prompt whose sample covariance equals Σ exactly.
Prompt exact_prompt(const Mat& a, const SpdMatrix& cov, Rng& r) {
    const int d = cov.dim();
    Prompt p;
    p.task = a;
    p.xs = std::sqrt(double(d)) * cov.chol();
    p.ys = a.inverse() * p.xs;
    p.query = gaussian_vector(r, cov);
    p.target = a.inverse() * p.query;
    return p;
}

}  // namespace

TEST_CASE("trace_sigma") {
    Rng r(1);
    Mat k = random_sym(3, r);
    CHECK(trace_sigma(SpdMatrix::identity(3), k) == doctest::Approx(k.trace()).epsilon(1e-14));
    Vec v(2);
    v << 1, 2;
    Mat k2 = Vec(Vec::LinSpaced(2, 3, 4)).asDiagonal();
    CHECK(trace_sigma(SpdMatrix(Mat(v.asDiagonal())), k2) == doctest::Approx(11.0).epsilon(1e-15));
    SpdMatrix s = random_spd(6, r);
    Mat k6 = random_sym(6, r);
    CHECK(std::abs(trace_sigma(s, k6) - (s.matrix() * k6).trace()) < 1e-12 * (s.matrix().norm() * k6.norm()));
    Mat ns = gaussian_matrix(6, 6, r);
    CHECK(trace_sigma(s, ns) == doctest::Approx((s.matrix() * ns).trace()).epsilon(1e-12));
}

TEST_CASE("trace_sigma operator norm bound") {
    Rng r(2);
    for (int i = 0; i < 100; ++i) {
        int d = 1 + static_cast<int>(r.index(6));
        SpdMatrix s = random_spd(d, r);
        Mat k = random_sym(d, r);
        CHECK(trace_sigma(s, k) <= spectral_norm(k) * s.trace() * (1 + 1e-12));
    }
}

TEST_CASE("expected_cov_product") {
    SpdMatrix one = SpdMatrix::identity(1);
    CHECK(expected_cov_product(one, Mat::Ones(1, 1), 1)(0, 0) == doctest::Approx(3.0));
    Rng r(3);
    const long long draws = 10000000;
    double s = 0.0;
    for (long long i = 0; i < draws; ++i) {
        double x = r.normal();
        s += x * x * x * x;
    }
    CHECK(std::abs(s / draws - 3.0) < 0.02);

    SpdMatrix cov = random_spd(4, r);
    Mat k = random_sym(4, r);
    Mat lim = cov.matrix() * k * cov.matrix();
    CHECK((expected_cov_product(cov, k, 1000000) - lim).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("expected_cov_product against Monte-Carlo") {
    Rng r(4);
    const int d = 4, n = 8;
    SpdMatrix cov = random_spd(d, r);
    Mat k = random_sym(d, r);
    const int reps = 1000000;
    Mat sum = Mat::Zero(d, d), sq = Mat::Zero(d, d);
    for (int i = 0; i < reps; ++i) {
        Mat xs = cov.chol() * gaussian_matrix(d, n, r);
        Mat xn = xs * xs.transpose() / n;
        Mat v = xn * k * xn;
        sum += v;
        sq += v.cwiseProduct(v);
    }
    Mat mean = sum / reps;
    Mat se = ((sq / reps - mean.cwiseProduct(mean)) / reps).cwiseSqrt();
    Mat ref = expected_cov_product(cov, k, n);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) CHECK(std::abs(mean(i, j) - ref(i, j)) <= 4.0 * se(i, j));
}

TEST_CASE("empirical risk examples") {
    Rng r(5);
    const int d = 3;
    SpdMatrix cov = random_spd(d, r);
    auto dist = TaskDistribution::rotated_diagonal(d, 1.0, 2.0);
    std::vector<Prompt> prompts;
    for (int i = 0; i < 20; ++i) prompts.push_back(exact_prompt(sample_task(dist, r), cov, r));
    Theta opt{Mat::Identity(d, d), cov.inverse()};
    CHECK(empirical_risk(opt, prompts).value < 1e-20);
    Gradient g = risk_gradient(opt, prompts);
    CHECK(g.norm() < 1e-10);

    double mean = 0.0;
    for (const auto& p : prompts) mean += p.target.squaredNorm();
    mean /= prompts.size();
    CHECK(empirical_risk(Theta::zero(d), prompts).value == doctest::Approx(mean).epsilon(1e-13));

    Prompt p;
    p.task = Mat::Constant(1, 1, 2.0);
    p.xs.resize(1, 2);
    p.xs << 1.0, -1.0;
    p.ys = p.xs / 2.0;
    p.query = Vec::Constant(1, 3.0);
    p.target = Vec::Constant(1, 1.5);
    Theta t{Mat::Ones(1, 1), Mat::Ones(1, 1)};
    CHECK(empirical_risk(t, std::vector<Prompt>{p}).value < 1e-30);
    CHECK_THROWS(empirical_risk(t, std::vector<Prompt>{}));
}

TEST_CASE("scalar gradient matches the symbolic derivative") {
    Prompt p;
    p.task = Mat::Constant(1, 1, 2.0);
    p.xs.resize(1, 3);
    p.xs << 1.0, -0.5, 2.0;
    p.ys = p.xs / 2.0;
    p.query = Vec::Constant(1, 1.5);
    p.target = p.query / 2.0;
    const double c = (p.ys.array() * p.xs.array()).sum() / 3.0, x = 1.5, y = 0.75;
    const double pp = 0.8, qq = -0.3;
    Theta t{Mat::Constant(1, 1, pp), Mat::Constant(1, 1, qq)};
    const double res = pp * c * qq * x - y;
    Gradient g = risk_gradient(t, std::vector<Prompt>{p});
    CHECK(g.p(0, 0) == doctest::Approx(2 * res * c * qq * x).epsilon(1e-13));
    CHECK(g.q(0, 0) == doctest::Approx(2 * res * pp * c * x).epsilon(1e-13));
}

TEST_CASE("gradient against central differences") {
    Rng r(6);
    for (int cfg = 0; cfg < 10; ++cfg) {
        int d = 1 + static_cast<int>(r.index(6));
        auto dist = TaskDistribution::rotated_diagonal(d, 0.5, 2.0);
        std::vector<Prompt> prompts;
        for (int i = 0; i < 8; ++i) prompts.push_back(sample_prompt(dist, CovariateDistribution::identity(d), 5, r));
        Theta t{gaussian_matrix(d, d, r), gaussian_matrix(d, d, r)};
        Gradient g = risk_gradient(t, prompts);
        const double h = 1e-5;
        double scale = std::max(g.p.cwiseAbs().maxCoeff(), g.q.cwiseAbs().maxCoeff());
        for (int which = 0; which < 2; ++which)
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) {
                    Theta a = t, b = t;
                    (which ? a.q : a.p)(i, j) += h;
                    (which ? b.q : b.p)(i, j) -= h;
                    double fd = (empirical_risk(a, prompts).value - empirical_risk(b, prompts).value) / (2 * h);
                    double an = (which ? g.q : g.p)(i, j);
                    CHECK(std::abs(fd - an) <= 1e-6 * std::max(1.0, scale));
                }
    }
}

TEST_CASE("closed form population risk examples") {
    auto two = TaskDistribution::atomic({Mat::Constant(1, 1, 2.0)});
    auto cov1 = CovariateDistribution::identity(1);
    Rng r(7);
    RiskContext ctx{two, cov1, 2};
    Theta t{Mat::Ones(1, 1), Mat::Ones(1, 1)};
    CHECK(population_risk_closed_form(t, ctx, 10, r).value == doctest::Approx(0.25).epsilon(1e-14));

    const int d = 4;
    SpdMatrix cov = random_spd(d, r);
    std::vector<Mat> atoms;
    for (int i = 0; i < 3; ++i) atoms.push_back(sample_task(TaskDistribution::rotated_diagonal(d, 1.0, 3.0), r));
    TaskMoments mom = TaskMoments::from_tasks(atoms, true);
    double etr = 0.0;
    for (const Mat& a : atoms) etr += (a.inverse() * cov.matrix() * a.inverse().transpose()).trace() / 3.0;
    for (int n : {1, 5, 40}) {
        double v = population_risk_closed_form(Theta{Mat::Identity(d, d), cov.inverse()}, cov, mom, n).value;
        CHECK(v == doctest::Approx((d + 1.0) / n * etr).epsilon(1e-11));
    }

    Theta rt{gaussian_matrix(d, d, r), gaussian_matrix(d, d, r)};
    double lim = limiting_risk(rt, cov, mom).value;
    CHECK(population_risk_closed_form(rt, cov, mom, 1e9).value == doctest::Approx(lim).epsilon(1e-6));

    CHECK(limiting_risk(Theta{Mat::Identity(d, d), cov.inverse()}, cov, mom).value < 1e-20);
    CHECK(limiting_risk(Theta{7.0 * Mat::Identity(d, d), cov.inverse() / 7.0}, cov, mom).value < 1e-20);
    CHECK(limiting_risk(Theta{Mat::Identity(d, d), Mat::Zero(d, d)}, cov, mom).value == doctest::Approx(etr).epsilon(1e-12));
    CHECK(truth_norm_sq(cov, mom) == doctest::Approx(etr).epsilon(1e-12));
}

TEST_CASE("1/n structure of the risk") {
    Rng r(8);
    const int d = 3;
    SpdMatrix cov = random_spd(d, r);
    TaskMoments mom = TaskMoments::from_distribution(TaskDistribution::rotated_diagonal(d, 1.0, 2.0), 100, r);
    Theta t{gaussian_matrix(d, d, r), gaussian_matrix(d, d, r)};
    double lim = limiting_risk(t, cov, mom).value;
    RiskTerms terms = risk_terms(t, cov, mom);
    for (int n : {2, 8, 32}) {
        double rn = population_risk_closed_form(t, cov, mom, n).value;
        CHECK(n * (rn - lim) == doctest::Approx(terms.bracket).epsilon(1e-10));
    }
    for (auto [n, m] : {std::pair{3, 17}, std::pair{100, 7}}) {
        double diff = std::abs(population_risk_closed_form(t, cov, mom, n).value - population_risk_closed_form(t, cov, mom, m).value);
        CHECK(diff == doctest::Approx(std::abs(1.0 / n - 1.0 / m) * terms.bracket).epsilon(1e-10));
    }
}

TEST_CASE("Monte-Carlo risk") {
    Rng r(9);
    const int d = 5;
    auto id = TaskDistribution::atomic({Mat::Identity(d, d)});
    RiskContext ctx{id, CovariateDistribution::identity(d), 16};
    RiskReport zero = monte_carlo_risk(Theta::zero(d), ctx, 100000, r);
    CHECK(std::abs(zero.value - d) < 4.0 * zero.std_error);
    CHECK(zero.std_error == doctest::Approx(std::sqrt(2.0 * d / 100000)).epsilon(0.05));

    Rng a(10), b(10);
    Theta t{Mat::Identity(d, d), 0.5 * Mat::Identity(d, d)};
    CHECK(monte_carlo_risk(t, ctx, 1000, a).value == monte_carlo_risk(t, ctx, 1000, b).value);

    auto rd = TaskDistribution::rotated_diagonal(d, 1.0, 2.0);
    RiskContext rctx{rd, CovariateDistribution::equal_correlated(d, 0.3), 16};
    for (int i = 0; i < 3; ++i) {
        Theta rt{Mat::Identity(d, d) + 0.3 * gaussian_matrix(d, d, r), rctx.cov_dist.cov().inverse() + 0.3 * gaussian_matrix(d, d, r)};
        RiskReport mc = monte_carlo_risk(rt, rctx, 100000, r);
        RiskReport cf = population_risk_closed_form(rt, rctx, 1, r);
        CHECK(std::abs(mc.value - cf.value) < 4.0 * mc.std_error);
    }
}

TEST_CASE("truncated Monte-Carlo risk") {
    const int d = 3;
    auto rd = TaskDistribution::rotated_diagonal(d, 1.0, 2.0);
    RiskContext ctx{rd, CovariateDistribution::identity(d), 64};
    Theta t{Mat::Identity(d, d), 0.8 * Mat::Identity(d, d)};
    Rng a(11), b(11);
    RiskReport full = monte_carlo_risk(t, ctx, 2000, a);
    RiskReport big = truncated_monte_carlo_risk(t, ctx, 1e6, 2000, b);
    CHECK(big.value == full.value);
    CHECK(*big.event_frequency == 1.0);

    Rng c(11);
    RiskReport tiny = truncated_monte_carlo_risk(t, ctx, 1e-9, 2000, c);
    CHECK(*tiny.event_frequency < 1.0);
    CHECK(tiny.value <= full.value);

    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng e(seed), f(seed);
        CHECK(truncated_monte_carlo_risk(t, ctx, 1.0, 500, e).value <= monte_carlo_risk(t, ctx, 500, f).value);
    }
    TruncationEvent ev = truncation_event(SpdMatrix::identity(4), 16, 2.0);
    CHECK(ev.query_bound == doctest::Approx(4.0));
    CHECK(ev.cov_bound == doctest::Approx(3.5));
}

TEST_CASE("optimal Q") {
    auto one = TaskDistribution::atomic({Mat::Identity(1, 1)});
    Rng r(12);
    for (int n : {1, 2, 10, 1000}) {
        RiskContext ctx{one, CovariateDistribution::identity(1), n};
        CHECK(optimal_Q(ctx, 1, r).q(0, 0) == doctest::Approx(n / (n + 2.0)).epsilon(1e-14));
    }

    const int d = 4;
    SpdMatrix cov = random_spd(d, r);
    std::vector<Mat> atoms;
    for (int i = 0; i < 4; ++i) atoms.push_back(sample_task(TaskDistribution::rotated_diagonal(d, 1.0, 3.0), r));
    TaskMoments mom = TaskMoments::from_tasks(atoms, true);
    CHECK((optimal_Q(cov, mom, 1e9).q - cov.inverse()).cwiseAbs().maxCoeff() < 1e-6);

    const Mat& b = mom.b();
    const double bound = spectral_norm(cov.inverse()) * spectral_norm(cov.matrix()) * (1.0 + trace_sigma(cov, b) * spectral_norm(b.inverse()));
    for (int n : {10, 100, 1000, 10000}) {
        OptimalQ q = optimal_Q(cov, mom, n);
        CHECK(n * spectral_norm(q.q - cov.inverse()) <= bound);
        Gradient g = closed_form_gradient(Theta{Mat::Identity(d, d), q.q}, cov, mom, n);
        CHECK(g.q.cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("task moments") {
    Rng r(13);
    const int d = 3;
    auto iso = TaskDistribution::rotated_diagonal(d, 1.0, 2.0);
    TaskMoments exact = TaskMoments::from_distribution(iso, 10, r);
    CHECK(exact.exact());
    std::vector<Mat> tasks;
    for (int i = 0; i < 40000; ++i) tasks.push_back(sample_task(iso, r));
    TaskMoments mc = TaskMoments::from_tasks(tasks);
    Mat c = random_sym(d, r);
    CHECK((exact.apply(c) - mc.apply(c)).norm() < 0.02 * exact.apply(c).norm());
    CHECK((exact.b() - mc.b()).norm() < 0.01 * exact.b().norm());
    CHECK((exact.b() - 0.5 * Mat::Identity(d, d)).norm() < 1e-12);
}
