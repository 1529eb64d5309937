#include "icl/pde.hpp"

#include <cmath>
#include <numbers>

namespace icl {

namespace {

constexpr double kPi = std::numbers::pi;
const double kSqrt2 = std::sqrt(2.0);

// Σ_k c_k φ_k at every point, using the sine recurrence.
Vec sine_series(const std::vector<double>& x, const Vec& c) {
    Vec out = Vec::Zero(static_cast<Eigen::Index>(x.size()));
    if (c.size() == 0) return out;
    for (std::size_t q = 0; q < x.size(); ++q) {
        double t = kPi * x[q];
        double c1 = std::cos(t);
        double s_prev = 0.0, s = std::sin(t), acc = 0.0;
        for (Eigen::Index k = 0; k < c.size(); ++k) {
            acc += c(k) * s;
            double s_next = 2.0 * c1 * s - s_prev;
            s_prev = s;
            s = s_next;
        }
        out(static_cast<Eigen::Index>(q)) = kSqrt2 * acc;
    }
    return out;
}

Vec field_on(const FieldSample& f, const std::vector<double>& x) {
    if (f.constant) return Vec::Constant(static_cast<Eigen::Index>(x.size()), f.scale);
    return f.scale * sine_series(x, f.coeffs).array().exp().matrix();
}

Mat assemble_from_values(const Vec& a, const Vec& v, const Quadrature& quad, int modes) {
    if (a.minCoeff() <= 0.0 || !a.allFinite()) throw Error("coefficient not uniformly elliptic");
    if (v.minCoeff() < 0.0 || !v.allFinite()) throw Error("potential must be non-negative");
    BasisTable t = sine_table(quad.x, modes);
    Vec w = Eigen::Map<const Vec>(quad.w.data(), static_cast<Eigen::Index>(quad.w.size()));
    Vec wa = w.cwiseProduct(a), wv = w.cwiseProduct(v);
    Mat m = t.dphi.transpose() * wa.asDiagonal() * t.dphi + t.phi.transpose() * wv.asDiagonal() * t.phi;
    return 0.5 * (m + m.transpose());
}

}  // namespace

FieldLaw FieldLaw::constant(double v) {
    FieldLaw f;
    f.kind = Kind::Constant;
    f.value = v;
    return f;
}

FieldLaw FieldLaw::uniform_constant(double lo, double hi) {
    if (!(lo <= hi)) throw Error("field interval must satisfy lo <= hi");
    FieldLaw f;
    f.kind = Kind::UniformConstant;
    f.lo = lo;
    f.hi = hi;
    return f;
}

FieldLaw FieldLaw::log_gaussian(double scale, const GrfSpec& g) {
    if (!(g.beta > 0.5)) throw Error("random field exponent beta must exceed 1/2");
    FieldLaw f;
    f.kind = Kind::LogGaussian;
    f.value = scale;
    f.grf = g;
    return f;
}

double FieldSample::operator()(double x) const {
    if (constant) return scale;
    return scale * std::exp(sine_series({x}, coeffs)(0));
}

FieldSample sample_field(const FieldLaw& law, int field_modes, Rng& rng) {
    FieldSample s;
    switch (law.kind) {
        case FieldLaw::Kind::Constant:
            s.scale = law.value;
            break;
        case FieldLaw::Kind::UniformConstant:
            s.scale = rng.uniform(law.lo, law.hi);
            break;
        case FieldLaw::Kind::LogGaussian:
            s.constant = false;
            s.scale = law.value;
            s.coeffs = sample_grf(law.grf, field_modes, rng);
            break;
    }
    return s;
}

EllipticTask sample_elliptic_task(const PdeFamily& family, Rng& rng) {
    EllipticTask t;
    const int fm = family.resolved_field_modes();
    t.a = sample_field(family.a, fm, rng);
    t.v = sample_field(family.v, fm, rng);
    t.stiffness = assemble_stiffness(t.a, t.v, SineBasis{family.modes});
    return t;
}

Quadrature composite_gauss_legendre(int panels, int points) {
    if (panels < 1) throw Error("quadrature needs at least one panel");
    GaussLegendre gl = gauss_legendre(points);
    Quadrature q;
    const double h = 1.0 / panels;
    for (int p = 0; p < panels; ++p) {
        double mid = (p + 0.5) * h;
        for (int i = 0; i < points; ++i) {
            q.x.push_back(mid + 0.5 * h * gl.nodes[i]);
            q.w.push_back(0.5 * h * gl.weights[i]);
        }
    }
    return q;
}

int default_panels(int modes) { return std::max(128, 8 * modes); }

BasisTable sine_table(const std::vector<double>& x, int modes) {
    const auto nq = static_cast<Eigen::Index>(x.size());
    BasisTable t{Mat(nq, modes), Mat(nq, modes)};
    for (Eigen::Index q = 0; q < nq; ++q) {
        double th = kPi * x[static_cast<std::size_t>(q)];
        double c1 = std::cos(th), s1 = std::sin(th);
        double s_prev = 0.0, s = s1, c_prev = 1.0, c = c1;
        for (int k = 0; k < modes; ++k) {
            t.phi(q, k) = kSqrt2 * s;
            t.dphi(q, k) = kSqrt2 * (k + 1) * kPi * c;
            double s_next = 2.0 * c1 * s - s_prev;
            double c_next = 2.0 * c1 * c - c_prev;
            s_prev = s;
            s = s_next;
            c_prev = c;
            c = c_next;
        }
    }
    return t;
}

Vec grf_mode_variances(const GrfSpec& spec, int modes) {
    Vec v(modes);
    for (int k = 1; k <= modes; ++k) v(k - 1) = spec.amplitude * std::pow(k * k * kPi * kPi + spec.alpha, -spec.beta);
    return v;
}

Vec sample_grf(const GrfSpec& spec, int modes, Rng& rng) {
    if (modes < 1) throw Error("field needs at least one mode");
    Vec sd = grf_mode_variances(spec, modes).cwiseSqrt();
    Vec c(modes);
    for (int k = 0; k < modes; ++k) c(k) = sd(k) * rng.normal();
    return c;
}

Mat assemble_stiffness(const std::function<double(double)>& a, const std::function<double(double)>& v,
                       const SineBasis& basis, int panels) {
    Quadrature quad = composite_gauss_legendre(panels > 0 ? panels : default_panels(basis.modes));
    const auto nq = static_cast<Eigen::Index>(quad.x.size());
    Vec av(nq), vv(nq);
    for (Eigen::Index q = 0; q < nq; ++q) {
        av(q) = a(quad.x[static_cast<std::size_t>(q)]);
        vv(q) = v(quad.x[static_cast<std::size_t>(q)]);
    }
    return assemble_from_values(av, vv, quad, basis.modes);
}

Mat assemble_stiffness(const FieldSample& a, const FieldSample& v, const SineBasis& basis, int panels) {
    Quadrature quad = composite_gauss_legendre(panels > 0 ? panels : default_panels(basis.modes));
    return assemble_from_values(field_on(a, quad.x), field_on(v, quad.x), quad, basis.modes);
}

Vec encode(const std::function<double(double)>& f, const SineBasis& basis, int panels) {
    Quadrature quad = composite_gauss_legendre(panels > 0 ? panels : default_panels(basis.modes));
    BasisTable t = sine_table(quad.x, basis.modes);
    Vec fw(static_cast<Eigen::Index>(quad.x.size()));
    for (std::size_t q = 0; q < quad.x.size(); ++q) fw(static_cast<Eigen::Index>(q)) = quad.w[q] * f(quad.x[q]);
    return t.phi.transpose() * fw;
}

Vec encode(const Vec& coeffs, const SineBasis& basis) {
    Vec out = Vec::Zero(basis.modes);
    const auto k = std::min<Eigen::Index>(coeffs.size(), basis.modes);
    out.head(k) = coeffs.head(k);
    return out;
}

double Decoded::operator()(double x) const { return sine_series({x}, c_)(0); }

double Decoded::derivative(double x) const {
    BasisTable t = sine_table({x}, static_cast<int>(c_.size()));
    return t.dphi.row(0).dot(c_);
}

Decoded decode(const Vec& x) { return Decoded(x); }

Vec h1_weights(int modes) {
    Vec w(modes);
    for (int k = 1; k <= modes; ++k) w(k - 1) = 1.0 + k * k * kPi * kPi;
    return w;
}

double h1_norm_sq(const Vec& x) {
    return x.cwiseProduct(x).dot(h1_weights(static_cast<int>(x.size())));
}

Mat reference_stiffness(const EllipticTask& task, int ref_modes) {
    return assemble_stiffness(task.a, task.v, SineBasis{ref_modes});
}

Vec reference_solution(const EllipticTask& task, const Vec& f, int ref_modes) {
    Mat a = reference_stiffness(task, ref_modes);
    Eigen::LLT<Mat> llt(a);
    if (llt.info() != Eigen::Success) throw Error("reference system is not positive definite");
    return llt.solve(encode(f, SineBasis{ref_modes}));
}

TaskDistribution pde_task_distribution(const PdeFamily& family) { return TaskDistribution::pde(family); }

double h1_l2_ratio_diagnostic(int modes, int trials, Rng& rng) {
    double best = 0.0;
    for (int t = 0; t < trials; ++t) {
        Vec x = gaussian_matrix(modes, 1, rng).col(0);
        best = std::max(best, h1_norm_sq(x) / x.squaredNorm());
    }
    return best;
}

}  // namespace icl

namespace icl {

H1Evaluator::H1Evaluator(const PdeFamily& family, const Vec& source_variances, int ref_modes, int task_samples, Rng& rng)
    : d_(family.modes), ref_modes_(ref_modes) {
    if (ref_modes < d_) throw Error("reference resolution below learner resolution");
    if (source_variances.size() < ref_modes) throw Error("source covariance has too few modes");
    if (task_samples < 1) throw Error("task sample count must be positive");
    const Vec sf = source_variances.head(ref_modes);
    cov_ = SpdMatrix(Mat(sf.head(d_).asDiagonal()));
    hd_ = h1_weights(d_);
    const Vec h = h1_weights(ref_modes);

    nodes_.resize(static_cast<std::size_t>(task_samples));
    std::vector<Mat> inverses(nodes_.size());
    parallel_for(nodes_.size(), [&](std::size_t i) {
        Rng r = rng.child(i);
        EllipticTask task = sample_elliptic_task(family, r);
        Mat ref = reference_stiffness(task, ref_modes);
        Mat rinv = ref.llt().solve(Mat::Identity(ref_modes, ref_modes));
        Node& nd = nodes_[i];
        nd.w = task.stiffness.llt().solve(Mat::Identity(d_, d_));
        Mat srh = sf.asDiagonal() * rinv * h.asDiagonal();
        nd.g = srh.topLeftCorner(d_, d_);
        nd.t3 = (srh * rinv).trace();
        inverses[i] = task.stiffness;
    });
    moments_ = TaskMoments::from_tasks(inverses, false);
    std::vector<double> t3(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) t3[i] = nodes_[i].t3;
    truth_ = pairwise_sum(t3) / static_cast<double>(t3.size());
}

RiskTerms H1Evaluator::terms(const Theta& theta) const {
    if (theta.dim() != d_) throw Error("parameter dimension does not match the task dimension");
    const Mat& s = cov_.matrix();
    const Mat sq = s * theta.q;
    const double trk = (sq * s * theta.q.transpose()).trace();  // Tr(Σ Q Σ Qᵀ)
    std::vector<double> lim(nodes_.size()), br(nodes_.size());
    parallel_for(nodes_.size(), [&](std::size_t i) {
        const Node& nd = nodes_[i];
        Mat pw = theta.p * nd.w;
        Mat m = pw * sq;
        double quad = (hd_.asDiagonal() * m * s * m.transpose()).trace();
        lim[i] = quad - 2.0 * (m * nd.g).trace() + nd.t3;
        br[i] = quad + trk * (hd_.asDiagonal() * pw * s * pw.transpose()).trace();
    });
    const double inv = 1.0 / static_cast<double>(nodes_.size());
    return {pairwise_sum(lim) * inv, pairwise_sum(br) * inv};
}

double H1Evaluator::discretization_gap() const {
    Theta t{Mat::Identity(d_, d_), cov_.inverse()};
    return terms(t).limit / truth_;
}

}  // namespace icl
