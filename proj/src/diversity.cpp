#include "icl/diversity.hpp"

#include <algorithm>
#include <cmath>

namespace icl {

namespace {

// vec(S M − M S) = (I ⊗ S − Sᵀ ⊗ I) vec(M), column-major vec.
Mat commutator_operator(const Mat& s) {
    const auto d = s.rows();
    Mat k = Mat::Zero(d * d, d * d);
    for (Eigen::Index j = 0; j < d; ++j) k.block(j * d, j * d, d, d) = s;
    for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index b = 0; b < d; ++b)
            for (Eigen::Index i = 0; i < d; ++i) k(a * d + i, b * d + i) -= s(b, a);
    return k;
}

// Null space with an absolute singular-value cutoff.
Mat null_below(const Mat& m, double thr) {
    const Eigen::Index n = m.cols();
    Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeFullV);
    const Vec& s = svd.singularValues();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < n; ++i)
        if (i >= s.size() || s(i) <= thr) keep.push_back(i);
    Mat basis(n, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) basis.col(static_cast<Eigen::Index>(k)) = svd.matrixV().col(keep[k]);
    return basis;
}

Mat reshape_col(const Eigen::Ref<const Vec>& v, Eigen::Index d) { return Eigen::Map<const Mat>(v.data(), d, d); }

double off_diagonal_max(const Mat& m) {
    Mat o = m;
    o.diagonal().setZero();
    return o.cwiseAbs().maxCoeff();
}

bool diagonal_in(const Mat& u, const Mat& a, double tol) {
    return off_diagonal_max(u.transpose() * a * u) <= tol * std::max(spectral_norm(a), 1e-300);
}

bool inside(double lo, double hi, double a, double b, double tol) { return lo >= a - tol && hi <= b + tol; }

bool eigenvalues_inside(const Mat& a, double lo, double hi, double tol) {
    if (!is_symmetric(a, 1e-10)) return false;
    Vec ev = eig_sym(a).values;
    return ev.minCoeff() >= lo - tol && ev.maxCoeff() <= hi + tol;
}

bool is_scalar_in(const Mat& a, double lo, double hi, double tol) {
    const auto d = a.rows();
    double c = a.trace() / static_cast<double>(d);
    return (a - c * Mat::Identity(d, d)).norm() <= tol * std::max(1.0, std::abs(c)) && c >= lo - tol && c <= hi + tol;
}

bool same_basis(const Mat& u, const Mat& v, double tol) {
    Mat p = (u.transpose() * v).cwiseAbs();
    // signed permutation: every row and column has a single unit entry
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        if (std::abs(p.row(i).maxCoeff() - 1.0) > tol || std::abs(p.col(i).maxCoeff() - 1.0) > tol) return false;
    return std::abs(p.sum() - static_cast<double>(p.rows())) <= tol * static_cast<double>(p.size());
}

bool same_field_law(const FieldLaw& a, const FieldLaw& b) {
    return a.kind == b.kind && a.value == b.value && a.lo == b.lo && a.hi == b.hi && a.grf.amplitude == b.grf.amplitude &&
           a.grf.alpha == b.grf.alpha && a.grf.beta == b.grf.beta;
}

}  // namespace

CentralizerReport centralizer(const std::vector<Mat>& generators, double tol) {
    if (generators.empty()) throw Error("centralizer needs at least one generator");
    const auto d = generators.front().rows();
    Mat basis = Mat::Identity(d * d, d * d);
    CentralizerReport rep;
    for (const Mat& s : generators) {
        if (s.rows() != d || s.cols() != d) throw Error("generators must share one square shape");
        if (basis.cols() > 0) {
            Mat k = commutator_operator(s);
            basis = basis * null_below(k * basis, tol * std::max(2.0 * spectral_norm(s), 1e-300));
        }
        rep.dimension_trace.push_back(static_cast<int>(basis.cols()));
    }
    rep.generators = static_cast<int>(generators.size());
    rep.dimension = static_cast<int>(basis.cols());
    for (Eigen::Index c = 0; c < basis.cols(); ++c) rep.basis.push_back(reshape_col(basis.col(c), d));
    if (rep.dimension == 1) {
        const Mat& m = rep.basis.front();
        double c = m.trace() / static_cast<double>(d);
        rep.trivial = (m - c * Mat::Identity(d, d)).norm() <= std::max(tol, 1e-12) * m.norm();
    }
    return rep;
}

std::vector<Mat> sample_generators(const TaskDistribution& dist, int pairs, Rng& rng) {
    if (pairs < 1) throw Error("generator sample needs at least one pair");
    std::vector<Mat> gens(static_cast<std::size_t>(pairs));
    parallel_for(gens.size(), [&](std::size_t i) {
        Rng r = rng.child(i);
        Mat a1 = sample_task(dist, r);
        Mat a2 = sample_task(dist, r);
        // A1 A2⁻¹ = (A2⁻ᵀ A1ᵀ)ᵀ
        gens[i] = Eigen::PartialPivLU<Mat>(a2.transpose()).solve(a1.transpose()).transpose();
    });
    return gens;
}

std::optional<Mat> simultaneously_diagonalizable(const std::vector<Mat>& tasks, double tol) {
    if (tasks.empty()) throw Error("empty task list");
    for (const Mat& a : tasks)
        if (!is_symmetric(a, 1e-10)) throw Error("simultaneous diagonalization needs symmetric tasks");
    auto min_gap = [](const Mat& a) {
        Vec ev = eig_sym(a).values;
        double g = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 1; i < ev.size(); ++i) g = std::min(g, ev(i) - ev(i - 1));
        return g / std::max(spectral_norm(a), 1e-300);
    };
    std::size_t best = 0;
    double best_gap = -1.0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        double g = min_gap(tasks[i]);
        if (g > best_gap) {
            best_gap = g;
            best = i;
        }
    }
    auto accepts = [&](const Mat& u) {
        for (const Mat& a : tasks)
            if (!diagonal_in(u, a, tol)) return false;
        return true;
    };
    Mat u = eig_sym(tasks[best]).vectors;
    if (accepts(u)) return u;
    if (best_gap <= std::sqrt(tol)) {
        // repeated eigenvalues leave U ambiguous; a generic combination resolves the joint eigenspaces
        Mat mix = Mat::Zero(tasks.front().rows(), tasks.front().cols());
        for (std::size_t i = 0; i < tasks.size(); ++i) mix += tasks[i] / std::sqrt(static_cast<double>(i) + 2.0);
        u = eig_sym(mix).vectors;
        if (accepts(u)) return u;
    }
    return std::nullopt;
}

bool is_limiting_minimizer(const Theta& theta, const std::vector<Mat>& tasks, const SpdMatrix& cov, double tol) {
    double worst = 0.0;
    for (const Mat& a : tasks) {
        Mat w = Eigen::PartialPivLU<Mat>(a).inverse();
        worst = std::max(worst, (theta.p * w * cov.matrix() * theta.q - w).norm() / w.norm());
    }
    return worst <= tol;
}

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::DiverseBySupport: return "diverse_by_support";
        case Verdict::DiverseByCentralizer: return "diverse_by_centralizer";
        case Verdict::NotDiverse: return "not_diverse";
        case Verdict::Undetermined: return "undetermined";
    }
    return "undetermined";
}

bool support_contained(const TaskDistribution& test, const TaskDistribution& train, double tol) {
    if (test.dim() != train.dim()) return false;
    const TaskKind& tk = test.kind();
    if (const auto* tr = std::get_if<RotatedDiagonal>(&train.kind())) {
        if (const auto* t = std::get_if<RotatedDiagonal>(&tk)) {
            if (!inside(t->lo, t->hi, tr->lo, tr->hi, tol)) return false;
            if (!tr->basis) return true;
            if (t->lo == t->hi) return true;
            return t->basis && same_basis(*tr->basis, *t->basis, 1e-10);
        }
        if (const auto* t = std::get_if<ConstantMultiple>(&tk)) return inside(t->lo, t->hi, tr->lo, tr->hi, tol);
        if (const auto* t = std::get_if<Atomic>(&tk)) {
            for (const Mat& a : t->atoms) {
                if (!eigenvalues_inside(a, tr->lo, tr->hi, tol)) return false;
                if (tr->basis && !diagonal_in(*tr->basis, a, 1e-10)) return false;
            }
            return true;
        }
        return false;
    }
    if (const auto* tr = std::get_if<ConstantMultiple>(&train.kind())) {
        if (const auto* t = std::get_if<ConstantMultiple>(&tk)) return inside(t->lo, t->hi, tr->lo, tr->hi, tol);
        if (const auto* t = std::get_if<RotatedDiagonal>(&tk)) return t->lo == t->hi && inside(t->lo, t->hi, tr->lo, tr->hi, tol);
        if (const auto* t = std::get_if<Atomic>(&tk)) {
            for (const Mat& a : t->atoms)
                if (!is_scalar_in(a, tr->lo, tr->hi, tol)) return false;
            return true;
        }
        return false;
    }
    if (const auto* tr = std::get_if<Atomic>(&train.kind())) {
        auto in_train = [&](const Mat& a) {
            for (const Mat& b : tr->atoms)
                if ((a - b).norm() <= tol * std::max(1.0, b.norm())) return true;
            return false;
        };
        if (const auto* t = std::get_if<Atomic>(&tk)) {
            for (const Mat& a : t->atoms)
                if (!in_train(a)) return false;
            return true;
        }
        if (const auto* t = std::get_if<ConstantMultiple>(&tk))
            return t->lo == t->hi && in_train(t->lo * Mat::Identity(test.dim(), test.dim()));
        return false;
    }
    if (const auto* tr = std::get_if<PdeStiffness>(&train.kind())) {
        const auto* t = std::get_if<PdeStiffness>(&tk);
        return t && t->family.modes == tr->family.modes &&
               t->family.resolved_field_modes() == tr->family.resolved_field_modes() &&
               same_field_law(t->family.a, tr->family.a) && same_field_law(t->family.v, tr->family.v);
    }
    return false;
}

DiversityVerdict diversity_verdict(const TaskDistribution& train, const TaskDistribution& test,
                                   const CovariateDistribution& cov, int pairs, double tol, Rng& rng) {
    if (train.dim() != test.dim() || train.dim() != cov.dim()) throw Error("distributions have different dimensions");
    const int d = train.dim();
    DiversityVerdict out;
    Rng gen_rng = rng.child(0);
    out.centralizer = centralizer(sample_generators(train, pairs, gen_rng), tol);
    if (out.centralizer.trivial) {
        out.verdict = Verdict::DiverseByCentralizer;
        out.reason = "only scalar matrices commute with the sampled generators";
        return out;
    }
    if (support_contained(test, train)) {
        out.verdict = Verdict::DiverseBySupport;
        out.reason = "test support is contained in the training support";
        return out;
    }
    if (!train.symmetric()) {
        out.reason = "training tasks are not symmetric";
        return out;
    }
    std::vector<Mat> tasks(static_cast<std::size_t>(2 * pairs));
    Rng task_rng = rng.child(1);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        Rng r = task_rng.child(i);
        tasks[i] = sample_task(train, r);
    }
    std::optional<Mat> u = simultaneously_diagonalizable(tasks, 1e-8);
    if (!u) {
        out.reason = "centralizer is non-trivial but the training tasks share no eigenbasis";
        return out;
    }
    Rng test_rng = rng.child(2);
    bool breaks = false;
    for (const Mat& g : sample_generators(test, pairs, test_rng))
        if (!diagonal_in(*u, g, 1e-8)) {
            breaks = true;
            break;
        }
    if (!breaks) {
        out.reason = "test generators share the training eigenbasis";
        return out;
    }
    Vec spread = Vec::LinSpaced(d, 1.0, 3.0);
    Mat k = *u * spread.asDiagonal() * u->transpose();
    Mat k_inv = *u * spread.cwiseInverse().asDiagonal() * u->transpose();
    Theta w{k, cov.cov().inverse() * k_inv};
    Rng mom_rng = rng.child(3);
    out.witness_train_risk =
        limiting_risk(w, cov.cov(), TaskMoments::from_distribution(train, 2000, mom_rng)).value;
    out.witness_test_risk = limiting_risk(w, cov.cov(), TaskMoments::from_distribution(test, 2000, mom_rng)).value;
    out.witness = w;
    out.verdict = Verdict::NotDiverse;
    out.reason = "training tasks share an eigenbasis that a test generator breaks";
    return out;
}

double surrogate_integrand(const Theta& theta, const SpdMatrix& cov, const TaskMoments& moments) {
    return risk_terms(theta, cov, moments).bracket;
}

double distance_surrogate(const TaskDistribution& train, const TaskDistribution& test, const Theta& theta,
                          const SpdMatrix& cov, int task_samples, Rng& rng) {
    Rng a = rng.child(0), b = rng.child(1);
    double ft = surrogate_integrand(theta, cov, TaskMoments::from_distribution(train, task_samples, a));
    double fs = surrogate_integrand(theta, cov, TaskMoments::from_distribution(test, task_samples, b));
    return std::abs(ft - fs);
}

nlohmann::json to_json(const CentralizerReport& r) {
    nlohmann::json basis = nlohmann::json::array();
    for (const Mat& m : r.basis) basis.push_back(mat_to_json(m));
    return {{"generators", r.generators}, {"dimension", r.dimension}, {"dimension_trace", r.dimension_trace},
            {"trivial", r.trivial}, {"basis", basis}};
}

nlohmann::json to_json(const DiversityVerdict& v) {
    nlohmann::json j{{"verdict", to_string(v.verdict)}, {"reason", v.reason}, {"centralizer", to_json(v.centralizer)}};
    if (v.witness) {
        j["witness"] = to_json(*v.witness);
        j["witness_train_limiting_risk"] = v.witness_train_risk;
        j["witness_test_limiting_risk"] = v.witness_test_risk;
    }
    return j;
}

}  // namespace icl
