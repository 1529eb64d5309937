#include "icl/verify.hpp"

#include "icl/risk.hpp"
#include "icl/tasks.hpp"
#include "icl/transformer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace icl {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

SpdMatrix random_cov(int d, Rng& rng) {
    Mat u = haar_orthogonal(rng, d);
    Vec l(d);
    for (int i = 0; i < d; ++i) l(i) = rng.uniform(0.5, 2.0);
    return SpdMatrix(u * l.asDiagonal() * u.transpose());
}

Mat well_conditioned(int d, Rng& rng) {
    Mat a = Mat::Identity(d, d) + 0.3 / std::sqrt(static_cast<double>(d)) * gaussian_matrix(d, d, rng);
    return rng.uniform(0.8, 1.6) * a;
}

TaskDistribution random_family(int d, int which, Rng& rng) {
    const double lo = rng.uniform(0.5, 1.5);
    const double hi = lo + rng.uniform(0.5, 2.0);
    switch (which % 4) {
        case 0: return TaskDistribution::rotated_diagonal(d, lo, hi);
        case 1: return TaskDistribution::rotated_diagonal(d, lo, hi, haar_orthogonal(rng, d));
        case 2: return TaskDistribution::constant_multiple(d, lo, hi);
        default: {
            std::vector<Mat> atoms;
            for (int k = 0; k < 3; ++k) atoms.push_back(well_conditioned(d, rng));
            return TaskDistribution::atomic(std::move(atoms));
        }
    }
}

Theta random_theta(const SpdMatrix& cov, Rng& rng) {
    const int d = cov.dim();
    const double s = 0.3 / std::sqrt(static_cast<double>(d));
    return {Mat::Identity(d, d) + s * gaussian_matrix(d, d, rng), cov.inverse() + s * gaussian_matrix(d, d, rng)};
}

std::string format(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

}  // namespace

CheckResult verify_closed_form(int configs, long long episodes, std::uint64_t seed) {
    const auto t0 = Clock::now();
    CheckResult res{"closed_form_vs_monte_carlo", true, "", 0.0};
    const Rng root(seed, hash_label("verify/closed_form"));
    double worst = 0.0;
    for (int c = 0; c < configs; ++c) {
        Rng r = root.child(static_cast<std::uint64_t>(c));
        const int d = 5, n = 16;
        SpdMatrix cov = random_cov(d, r);
        TaskDistribution fam = random_family(d, c, r);
        Theta theta = random_theta(cov, r);
        RiskContext ctx{fam, CovariateDistribution(cov), n};
        Rng mc_rng = r.child(1);
        RiskReport mc = monte_carlo_risk(theta, ctx, episodes, mc_rng);
        Rng mom_rng = r.child(2);
        TaskMoments mom = TaskMoments::from_distribution(fam, 0, mom_rng);
        RiskReport cf = population_risk_closed_form(theta, cov, mom, n);
        const double z = std::abs(mc.value - cf.value) / std::sqrt(mc.std_error * mc.std_error + cf.std_error * cf.std_error);
        worst = std::max(worst, z);
        if (!(z <= 4.0)) res.passed = false;
    }
    res.detail = format("%.0f configurations, worst |MC - closed form| = %.2f standard errors", configs, worst);
    res.seconds = seconds_since(t0);
    return res;
}

CheckResult verify_moment_identity(int configs, long long reps, std::uint64_t seed) {
    const auto t0 = Clock::now();
    CheckResult res{"moment_identity", true, "", 0.0};
    const Rng root(seed, hash_label("verify/moments"));
    double worst = 0.0;
    for (int c = 0; c < configs; ++c) {
        Rng r = root.child(static_cast<std::uint64_t>(c));
        const int d = 2 + static_cast<int>(r.index(5));
        const int n = 2 + static_cast<int>(r.index(15));
        SpdMatrix cov = random_cov(d, r);
        Mat k = gaussian_matrix(d, d, r);
        const Mat exact = expected_cov_product(cov, k, n);
        std::vector<Mat> samples(static_cast<std::size_t>(reps));
        const Rng sr = r.child(1);
        parallel_for(samples.size(), [&](std::size_t i) {
            Rng e = sr.child(i);
            Mat xs = cov.chol() * gaussian_matrix(d, n, e);
            Mat x = empirical_covariance(xs);
            samples[i] = x * k * x;
        });
        std::vector<double> vals(samples.size());
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                for (std::size_t s = 0; s < samples.size(); ++s) vals[s] = samples[s](i, j);
                MeanEstimate est = mean_and_error(vals);
                const double z = std::abs(est.mean - exact(i, j)) / est.std_error;
                worst = std::max(worst, z);
                if (!(z <= 4.0)) res.passed = false;
            }
    }
    res.detail = format("%.0f configurations, worst entry deviation = %.2f standard errors", configs, worst);
    res.seconds = seconds_since(t0);
    return res;
}

CheckResult verify_gradients(int configs, std::uint64_t seed) {
    const auto t0 = Clock::now();
    CheckResult res{"gradient_finite_differences", true, "", 0.0};
    const Rng root(seed, hash_label("verify/gradients"));
    const double h = 1e-5;
    double worst = 0.0;
    auto compare = [&](const Theta& theta, const Gradient& g, const std::function<double(const Theta&)>& f) {
        const double scale = std::max(g.p.cwiseAbs().maxCoeff(), g.q.cwiseAbs().maxCoeff());
        for (int which = 0; which < 2; ++which) {
            const Mat& an = which == 0 ? g.p : g.q;
            for (Eigen::Index i = 0; i < an.size(); ++i) {
                Theta plus = theta, minus = theta;
                (which == 0 ? plus.p : plus.q).data()[i] += h;
                (which == 0 ? minus.p : minus.q).data()[i] -= h;
                const double fd = (f(plus) - f(minus)) / (2.0 * h);
                const double rel = std::abs(fd - an.data()[i]) / scale;
                worst = std::max(worst, rel);
                if (!(rel <= 1e-6)) res.passed = false;
            }
        }
    };
    for (int c = 0; c < configs; ++c) {
        Rng r = root.child(static_cast<std::uint64_t>(c));
        const int d = 1 + static_cast<int>(r.index(6));
        const int n = 2 + static_cast<int>(r.index(15));
        SpdMatrix cov = random_cov(d, r);
        TaskDistribution fam = random_family(d, c, r);
        Theta theta = random_theta(cov, r);
        RiskContext ctx{fam, CovariateDistribution(cov), n};

        std::vector<Prompt> prompts;
        for (int i = 0; i < 20; ++i) {
            Rng e = r.child(100 + static_cast<std::uint64_t>(i));
            prompts.push_back(sample_prompt(fam, ctx.cov_dist, n, e));
        }
        compare(theta, risk_gradient(theta, prompts), [&](const Theta& t) { return empirical_risk(t, prompts).value; });

        Rng mr = r.child(1);
        TaskMoments mom = TaskMoments::from_distribution(fam, 0, mr);
        compare(theta, closed_form_gradient(theta, cov, mom, n),
                [&](const Theta& t) { return risk_terms(t, cov, mom).at(n); });
    }
    res.detail = format("%.0f configurations, worst relative deviation = %.2e", configs, worst);
    res.seconds = seconds_since(t0);
    return res;
}

CheckResult verify_optimal_q(int configs, std::uint64_t seed) {
    const auto t0 = Clock::now();
    CheckResult res{"optimal_q", true, "", 0.0};
    const Rng root(seed, hash_label("verify/optimal_q"));
    double worst_grad = 0.0, worst_spread = 0.0;
    for (int c = 0; c < configs; ++c) {
        Rng r = root.child(static_cast<std::uint64_t>(c));
        const int d = 1 + static_cast<int>(r.index(5));
        SpdMatrix cov = random_cov(d, r);
        std::vector<Mat> atoms;
        for (int k = 0; k < 3; ++k) {
            Mat a = well_conditioned(d, r);
            if (c % 2 == 0) a = 0.5 * (a + a.transpose()) + static_cast<double>(d) * Mat::Identity(d, d);
            atoms.push_back(a);
        }
        TaskMoments mom = TaskMoments::from_tasks(atoms, true);
        for (double n : {10.0, 100.0, 1000.0}) {
            OptimalQ oq = optimal_Q(cov, mom, n);
            Theta t{Mat::Identity(d, d), oq.q};
            const double g = closed_form_gradient(t, cov, mom, n).q.norm();
            worst_grad = std::max(worst_grad, g);
            if (!(g < 1e-8)) res.passed = false;
        }
        std::vector<double> scaled;
        for (double n : {1e2, 1e3, 1e4}) scaled.push_back(n * spectral_norm(optimal_Q(cov, mom, n).q - cov.inverse()));
        const auto [lo, hi] = std::minmax_element(scaled.begin(), scaled.end());
        const double spread = (*hi - *lo) / *hi;
        worst_spread = std::max(worst_spread, spread);
        if (!(spread < 0.2)) res.passed = false;
    }
    res.detail = format("worst |grad_Q| at (I, Q_n) = %.2e, worst spread of n|Q_n - inv(Sigma)| = %.3f", worst_grad, worst_spread);
    res.seconds = seconds_since(t0);
    return res;
}

std::vector<CheckResult> verify_suite() {
    return {verify_closed_form(), verify_moment_identity(), verify_gradients(), verify_optimal_q()};
}

}  // namespace icl
