#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "icl/diversity.hpp"

#include <cmath>
#include <numbers>

using namespace icl;

namespace {

Mat rotation(double angle) {
    Mat r(2, 2);
    r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    return r;
}

Mat diag(std::initializer_list<double> v) {
    Vec x(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double a : v) x(i++) = a;
    return x.asDiagonal();
}

// Commutant dimension from the stacked system, one column per unit matrix.
int commutant_dimension(const std::vector<Mat>& gens) {
    const auto d = gens.front().rows();
    Mat k(static_cast<Eigen::Index>(gens.size()) * d * d, d * d);
    for (Eigen::Index col = 0; col < d * d; ++col) {
        Mat e = Mat::Zero(d, d);
        e(col % d, col / d) = 1.0;
        for (std::size_t g = 0; g < gens.size(); ++g) {
            Mat c = gens[g] * e - e * gens[g];
            k.block(static_cast<Eigen::Index>(g) * d * d, col, d * d, 1) = Eigen::Map<Vec>(c.data(), d * d);
        }
    }
    Eigen::JacobiSVD<Mat> svd(k);
    int rank = 0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) rank += svd.singularValues()(i) > 1e-9 * svd.singularValues()(0);
    return static_cast<int>(d * d) - rank;
}

}  // namespace

TEST_CASE("centralizer examples") {
    for (int d : {2, 3, 4}) {
        CentralizerReport r = centralizer({Mat::Identity(d, d)});
        CHECK(r.dimension == d * d);
        CHECK_FALSE(r.trivial);
    }
    CentralizerReport dg = centralizer({diag({1, 2})});
    CHECK(dg.dimension == 2);
    CHECK_FALSE(dg.trivial);
    for (const Mat& b : dg.basis) CHECK(std::abs(b(0, 1)) + std::abs(b(1, 0)) < 1e-12);

    std::vector<Mat> gens{diag({1, 2}), rotation(std::numbers::pi / 4)};
    CentralizerReport both = centralizer(gens);
    CHECK(both.dimension == 1);
    CHECK(both.dimension == commutant_dimension(gens));
    CHECK(both.trivial);
    CHECK(both.dimension_trace == std::vector<int>{2, 1});
    CHECK(to_json(both)["dimension"] == 1);
}

TEST_CASE("centralizer dimension matches the dense oracle and never grows") {
    Rng r(1);
    for (int trial = 0; trial < 20; ++trial) {
        const int d = 2 + static_cast<int>(r.index(3));
        Mat u = haar_orthogonal(r, d);
        std::vector<Mat> gens;
        // mix of commuting and generic generators
        for (int g = 0; g < 4; ++g) {
            Vec v(d);
            for (int i = 0; i < d; ++i) v(i) = std::floor(r.uniform(1.0, 4.0));
            gens.push_back(g < 2 || trial % 2 == 0 ? Mat(u * v.asDiagonal() * u.transpose()) : gaussian_matrix(d, d, r));
        }
        CentralizerReport rep = centralizer(gens);
        CHECK(rep.dimension == commutant_dimension(gens));
        CHECK(rep.dimension >= 1);
        for (std::size_t i = 1; i < rep.dimension_trace.size(); ++i) CHECK(rep.dimension_trace[i] <= rep.dimension_trace[i - 1]);
        for (const Mat& b : rep.basis)
            for (const Mat& g : gens) CHECK((g * b - b * g).norm() < 1e-8 * std::max(1.0, g.norm()));
    }
}

TEST_CASE("generators") {
    Rng r(2);
    for (const Mat& g : sample_generators(TaskDistribution::constant_multiple(3, 1, 2), 20, r)) {
        double c = g(0, 0);
        CHECK((g - c * Mat::Identity(3, 3)).norm() < 1e-14);
    }
    Mat u = haar_orthogonal(r, 4);
    for (const Mat& g : sample_generators(TaskDistribution::rotated_diagonal(4, 1, 3, u), 20, r)) {
        Mat t = u.transpose() * g * u;
        t.diagonal().setZero();
        CHECK(t.cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK(centralizer(sample_generators(TaskDistribution::rotated_diagonal(3, 1, 2), 20, r)).trivial);
    CHECK_THROWS(sample_generators(TaskDistribution::rotated_diagonal(3, 1, 2), 0, r));
}

TEST_CASE("simultaneous diagonalization") {
    std::vector<Mat> ds{diag({1, 2, 3}), diag({4, 0.5, 1}), diag({2, 2, 7})};
    auto u = simultaneously_diagonalizable(ds);
    REQUIRE(u);
    CHECK(((*u).cwiseAbs() * Mat::Ones(3, 3) - Mat::Ones(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
    for (const Mat& a : ds) {
        Mat t = u->transpose() * a * *u;
        t.diagonal().setZero();
        CHECK(t.cwiseAbs().maxCoeff() < 1e-12);
    }

    Mat rot = rotation(std::numbers::pi / 4);
    CHECK_FALSE(simultaneously_diagonalizable({diag({1, 2}), Mat(rot * diag({1, 2}) * rot.transpose())}));

    Rng r(3);
    Mat q = haar_orthogonal(r, 5);
    Mat single = q * diag({1, 2, 3, 4, 5}) * q.transpose();
    CHECK(simultaneously_diagonalizable({single}));

    Mat ns(2, 2);
    ns << 1, 2, 0, 1;
    CHECK_THROWS(simultaneously_diagonalizable({ns}));
}

TEST_CASE("limiting minimizers") {
    Rng r(4);
    const int d = 3;
    Mat m = gaussian_matrix(d, d, r);
    SpdMatrix cov(Mat(m * m.transpose() + Mat::Identity(d, d)));
    auto fresh = TaskDistribution::rotated_diagonal(d, 1, 2);
    std::vector<Mat> tasks;
    for (int i = 0; i < 20; ++i) tasks.push_back(sample_task(fresh, r));
    CHECK(is_limiting_minimizer(Theta{Mat::Identity(d, d), cov.inverse()}, tasks, cov, 1e-10));

    Mat k = diag({1.0, 1.7, 2.5});
    Theta kt{k, Mat(cov.inverse() * k.inverse())};
    auto fixed = TaskDistribution::rotated_diagonal(d, 1, 2, Mat::Identity(d, d));
    std::vector<Mat> diag_tasks;
    for (int i = 0; i < 20; ++i) diag_tasks.push_back(sample_task(fixed, r));
    CHECK(is_limiting_minimizer(kt, diag_tasks, cov, 1e-10));
    CHECK_FALSE(is_limiting_minimizer(kt, tasks, cov, 1e-3));

    Rng mr(5);
    CHECK(limiting_risk(kt, cov, TaskMoments::from_distribution(fresh, 10, mr)).value > 0.01);
    CHECK(limiting_risk(kt, cov, TaskMoments::from_distribution(fixed, 10, mr)).value < 1e-10);
}

TEST_CASE("minimizers of a diverse family are scalar in P") {
    Rng r(6);
    const int d = 3;
    auto fresh = TaskDistribution::rotated_diagonal(d, 1, 2);
    std::vector<Mat> tasks;
    for (int i = 0; i < 20; ++i) tasks.push_back(sample_task(fresh, r));
    SpdMatrix cov = SpdMatrix::identity(d);
    for (double c : {0.5, 2.0}) {
        Theta t{c * Mat::Identity(d, d), Mat::Identity(d, d) / c};
        REQUIRE(is_limiting_minimizer(t, tasks, cov, 1e-10));
        CHECK((t.p - t.p.trace() / d * Mat::Identity(d, d)).norm() <= 1e-10 * t.p.norm());
    }
}

TEST_CASE("diversity verdicts") {
    auto cov = CovariateDistribution::identity(3);
    Rng r(7);
    DiversityVerdict fresh = diversity_verdict(TaskDistribution::rotated_diagonal(3, 1, 2), TaskDistribution::constant_multiple(3, 5, 6), cov, 20, 1e-9, r);
    CHECK(fresh.verdict == Verdict::DiverseByCentralizer);
    CHECK(fresh.centralizer.dimension == 1);

    Mat u = haar_orthogonal(r, 3);
    DiversityVerdict sup = diversity_verdict(TaskDistribution::rotated_diagonal(3, 1, 3, u), TaskDistribution::rotated_diagonal(3, 1.5, 2, u), cov, 20, 1e-9, r);
    CHECK(sup.verdict == Verdict::DiverseBySupport);

    DiversityVerdict trap = diversity_verdict(TaskDistribution::constant_multiple(3, 1, 2), TaskDistribution::rotated_diagonal(3, 1, 2), cov, 20, 1e-9, r);
    CHECK(trap.verdict == Verdict::NotDiverse);
    REQUIRE(trap.witness);
    CHECK(trap.witness_train_risk < 1e-8);
    CHECK(trap.witness_test_risk > 0.01);
    CHECK(to_json(trap)["verdict"] == "not_diverse");
    CHECK(to_string(Verdict::Undetermined) == "undetermined");
}

TEST_CASE("distance surrogate") {
    auto two = TaskDistribution::atomic({Mat::Constant(1, 1, 2.0)});
    auto four = TaskDistribution::atomic({Mat::Constant(1, 1, 4.0)});
    SpdMatrix one = SpdMatrix::identity(1);
    Theta t{Mat::Ones(1, 1), Mat::Ones(1, 1)};
    Rng r(8);
    CHECK(distance_surrogate(two, four, t, one, 10, r) == doctest::Approx(0.375).epsilon(1e-14));
    CHECK(distance_surrogate(two, two, t, one, 10, r) == 0.0);

    auto rd = TaskDistribution::rotated_diagonal(3, 1, 2);
    auto cm = TaskDistribution::constant_multiple(3, 1, 3);
    CHECK(distance_surrogate(rd, cm, Theta::zero(3), SpdMatrix::identity(3), 100, r) == 0.0);
    Rng a(9);
    Theta rt{gaussian_matrix(3, 3, r), gaussian_matrix(3, 3, r)};
    CHECK(distance_surrogate(rd, rd, rt, SpdMatrix::identity(3), 50, a) == doctest::Approx(0.0).epsilon(1e-12));
}
