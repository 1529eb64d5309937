#include "icl/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace icl {

namespace {

void check_interval(double lo, double hi) {
    if (!(lo <= hi)) throw Error("task interval must satisfy lo <= hi");
    if (lo <= 0.0 && hi >= 0.0) throw Error("task family not uniformly invertible");
}

void check_orthogonal(const Mat& u, int d) {
    if (u.rows() != d || u.cols() != d) throw Error("fixed basis has wrong shape");
    double err = (u.transpose() * u - Mat::Identity(d, d)).cwiseAbs().maxCoeff();
    if (err > 1e-10) throw Error("fixed basis is not orthogonal");
}

struct Norms {
    double inv = 0.0;
    double fwd = 0.0;
};

Norms task_norms(const Mat& a, bool symmetric) {
    if (symmetric) {
        Eigen::SelfAdjointEigenSolver<Mat> es(a, Eigen::EigenvaluesOnly);
        Vec ab = es.eigenvalues().cwiseAbs();
        return {1.0 / ab.minCoeff(), ab.maxCoeff()};
    }
    Eigen::JacobiSVD<Mat> svd(a);
    const Vec& s = svd.singularValues();
    return {1.0 / s(s.size() - 1), s(0)};
}

std::string fmt(double x) {
    std::ostringstream os;
    os << x;
    return os.str();
}

}  // namespace

TaskDistribution::TaskDistribution(int d, TaskKind kind) : dim_(d), kind_(std::move(kind)) {
    if (d < 1) throw Error("dimension must be positive");
}

TaskDistribution TaskDistribution::rotated_diagonal(int d, double lo, double hi) {
    check_interval(lo, hi);
    TaskDistribution t(d, RotatedDiagonal{lo, hi, std::nullopt});
    t.certify();
    return t;
}

TaskDistribution TaskDistribution::rotated_diagonal(int d, double lo, double hi, const Mat& basis) {
    check_interval(lo, hi);
    check_orthogonal(basis, d);
    TaskDistribution t(d, RotatedDiagonal{lo, hi, basis});
    t.certify();
    return t;
}

TaskDistribution TaskDistribution::constant_multiple(int d, double lo, double hi) {
    check_interval(lo, hi);
    TaskDistribution t(d, ConstantMultiple{lo, hi});
    t.certify();
    return t;
}

TaskDistribution TaskDistribution::atomic(std::vector<Mat> atoms) {
    if (atoms.empty()) throw Error("atomic task family needs at least one atom");
    const auto d = atoms.front().rows();
    for (const Mat& a : atoms) {
        if (a.rows() != d || a.cols() != d) throw Error("atoms must be square and share one dimension");
        if (!a.allFinite()) throw Error("atom has non-finite entries");
    }
    TaskDistribution t(static_cast<int>(d), Atomic{std::move(atoms)});
    t.certify();
    return t;
}

TaskDistribution TaskDistribution::pde(const PdeFamily& family) {
    TaskDistribution t(family.modes, PdeStiffness{family});
    t.certify();
    return t;
}

bool TaskDistribution::symmetric() const {
    if (const auto* at = std::get_if<Atomic>(&kind_)) {
        for (const Mat& a : at->atoms)
            if (!is_symmetric(a, 1e-12)) return false;
    }
    return true;
}

std::string TaskDistribution::label() const {
    return std::visit(
        [](const auto& k) -> std::string {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, RotatedDiagonal>)
                return std::string(k.basis ? "fixed-U" : "fresh-U") + " U[" + fmt(k.lo) + "," + fmt(k.hi) + "]";
            else if constexpr (std::is_same_v<K, ConstantMultiple>)
                return "cI, c~U[" + fmt(k.lo) + "," + fmt(k.hi) + "]";
            else if constexpr (std::is_same_v<K, Atomic>)
                return "atomic(" + std::to_string(k.atoms.size()) + ")";
            else
                return "pde(d=" + std::to_string(k.family.modes) + ")";
        },
        kind_);
}

void TaskDistribution::certify() {
    const bool sym = symmetric();
    Norms analytic;
    bool exact = false;
    if (const auto* rd = std::get_if<RotatedDiagonal>(&kind_)) {
        analytic = {1.0 / std::min(std::abs(rd->lo), std::abs(rd->hi)), std::max(std::abs(rd->lo), std::abs(rd->hi))};
        exact = true;
    } else if (const auto* cm = std::get_if<ConstantMultiple>(&kind_)) {
        analytic = {1.0 / std::min(std::abs(cm->lo), std::abs(cm->hi)), std::max(std::abs(cm->lo), std::abs(cm->hi))};
        exact = true;
    } else if (const auto* at = std::get_if<Atomic>(&kind_)) {
        for (const Mat& a : at->atoms) {
            Norms n = task_norms(a, sym);
            if (!std::isfinite(n.inv) || n.inv > 1e14) throw Error("task family not uniformly invertible");
            analytic.inv = std::max(analytic.inv, n.inv);
            analytic.fwd = std::max(analytic.fwd, n.fwd);
        }
        inv_bound_ = analytic.inv;
        norm_bound_ = analytic.fwd;
        return;
    }

    Rng rng(0xC3A7F1E5ULL, hash_label(label()));
    Norms seen;
    for (int i = 0; i < 1000; ++i) {
        Rng r = rng.child(static_cast<std::uint64_t>(i));
        Norms n = task_norms(sample_task(*this, r), sym);
        if (!std::isfinite(n.inv)) throw Error("task family not uniformly invertible");
        seen.inv = std::max(seen.inv, n.inv);
        seen.fwd = std::max(seen.fwd, n.fwd);
    }
    if (exact) {
        const double slack = 1.0 + 1e-9;
        if (seen.inv > analytic.inv * slack || seen.fwd > analytic.fwd * slack)
            throw Error("sampled task violates certified bounds");
        inv_bound_ = analytic.inv;
        norm_bound_ = analytic.fwd;
    } else {
        inv_bound_ = seen.inv;
        norm_bound_ = seen.fwd;
    }
}

Mat sample_task(const TaskDistribution& dist, Rng& rng) {
    const int d = dist.dim();
    return std::visit(
        [&](const auto& k) -> Mat {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, RotatedDiagonal>) {
                Mat u = k.basis ? *k.basis : haar_orthogonal(rng, d);
                Vec lambda(d);
                for (int i = 0; i < d; ++i) lambda(i) = rng.uniform(k.lo, k.hi);
                Mat a = u * lambda.asDiagonal() * u.transpose();
                return 0.5 * (a + a.transpose());
            } else if constexpr (std::is_same_v<K, ConstantMultiple>) {
                return rng.uniform(k.lo, k.hi) * Mat::Identity(d, d);
            } else if constexpr (std::is_same_v<K, Atomic>) {
                return k.atoms[rng.index(k.atoms.size())];
            } else {
                return sample_elliptic_task(k.family, rng).stiffness;
            }
        },
        dist.kind());
}

CovariateDistribution::CovariateDistribution(SpdMatrix cov, std::string label)
    : cov_(std::move(cov)), label_(std::move(label)) {}

CovariateDistribution CovariateDistribution::identity(int d) {
    return CovariateDistribution(SpdMatrix::identity(d), "identity");
}

CovariateDistribution CovariateDistribution::equal_correlated(int d, double rho) {
    return CovariateDistribution(equal_correlated_cov(d, rho), "rho=" + fmt(rho));
}

CovariateDistribution CovariateDistribution::diagonal(const Vec& variances, std::string label) {
    if (variances.size() == 0 || variances.minCoeff() <= 0.0) throw Error("covariance not positive definite");
    return CovariateDistribution(SpdMatrix(Mat(variances.asDiagonal())), std::move(label));
}

SpdMatrix equal_correlated_cov(int d, double rho) {
    if (d < 1) throw Error("dimension must be positive");
    if (!(rho >= 0.0 && rho < 1.0)) throw Error("covariance not positive definite");
    Mat m = Mat::Constant(d, d, rho);
    m.diagonal().setOnes();
    return SpdMatrix(m);
}

Prompt sample_prompt(const TaskDistribution& task_dist, const CovariateDistribution& cov_dist, int n, Rng& rng) {
    if (n < 1) throw Error("prompt length must be positive");
    if (task_dist.dim() != cov_dist.dim()) throw Error("task and covariate dimensions differ");
    const int d = task_dist.dim();
    Prompt p;
    p.task = sample_task(task_dist, rng);
    p.xs = cov_dist.cov().chol() * gaussian_matrix(d, n, rng);
    p.query = gaussian_vector(rng, cov_dist.cov());
    Eigen::PartialPivLU<Mat> lu(p.task);
    p.ys = lu.solve(p.xs);
    p.target = lu.solve(p.query);
    return p;
}

Episode summarize(const Prompt& prompt) {
    Episode e;
    e.c = prompt.ys * prompt.xs.transpose() / static_cast<double>(prompt.length());
    e.query = prompt.query;
    e.target = prompt.target;
    return e;
}

Episode sample_episode(const TaskDistribution& task_dist, const CovariateDistribution& cov_dist, int n, Rng& rng) {
    return summarize(sample_prompt(task_dist, cov_dist, n, rng));
}

Mat embed(const Prompt& prompt) {
    const int d = prompt.dim(), n = prompt.length();
    Mat z = Mat::Zero(2 * d, n + 1);
    z.topLeftCorner(d, n) = prompt.xs;
    z.bottomLeftCorner(d, n) = prompt.ys;
    z.block(0, n, d, 1) = prompt.query;
    return z;
}

}  // namespace icl
