#include "icl/numerics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>

namespace icl {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

thread_local bool in_parallel_region = false;

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

Rng Rng::child(std::uint64_t id) const {
    return Rng(seed_, splitmix64(stream_ ^ splitmix64(id + 0x632BE59BD9B4E019ULL)));
}

void Rng::refill() {
    std::uint32_t c[4] = {static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                          static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    std::uint32_t k0 = static_cast<std::uint32_t>(seed_);
    std::uint32_t k1 = static_cast<std::uint32_t>(seed_ >> 32);
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(0xD2511F53u, c[0], hi0, lo0);
        mulhilo(0xCD9E8D57u, c[2], hi1, lo1);
        c[0] = hi1 ^ c[1] ^ k0;
        c[1] = lo1;
        c[2] = hi0 ^ c[3] ^ k1;
        c[3] = lo0;
        k0 += 0x9E3779B9u;
        k1 += 0xBB67AE85u;
    }
    std::copy(c, c + 4, block_);
    ++counter_;
    used_ = 0;
}

std::uint64_t Rng::next_u64() {
    if (used_ > 2) refill();
    std::uint64_t v = (static_cast<std::uint64_t>(block_[used_]) << 32) | block_[used_ + 1];
    used_ += 2;
    return v;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
}

std::size_t Rng::index(std::size_t n) {
    if (n == 0) throw Error("index range is empty");
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

std::uint64_t hash_label(const std::string& s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001B3ULL;
    }
    return splitmix64(h);
}

bool is_symmetric(const Mat& m, double rel_tol) {
    if (m.rows() != m.cols()) return false;
    double scale = std::max(1e-300, m.cwiseAbs().maxCoeff());
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

SpdMatrix::SpdMatrix(const Mat& m) {
    if (m.rows() == 0 || m.rows() != m.cols()) throw Error("covariance must be a non-empty square matrix");
    if (!m.allFinite()) throw Error("covariance has non-finite entries");
    if (!is_symmetric(m)) throw Error("covariance is not symmetric");
    m_ = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(m_);
    if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
        throw Error("covariance is not positive definite");
    evals_ = es.eigenvalues();
    evecs_ = es.eigenvectors();
    Eigen::LLT<Mat> llt(m_);
    if (llt.info() != Eigen::Success) throw Error("covariance is not positive definite");
    l_ = llt.matrixL();
    inv_ = llt.solve(Mat::Identity(m_.rows(), m_.cols()));
    inv_ = 0.5 * (inv_ + inv_.transpose()).eval();
}

SpdMatrix SpdMatrix::identity(int d) { return SpdMatrix(Mat::Identity(d, d)); }

Vec gaussian_vector(Rng& rng, const SpdMatrix& cov) {
    Vec z(cov.dim());
    for (int i = 0; i < z.size(); ++i) z(i) = rng.normal();
    return cov.chol() * z;
}

Mat gaussian_matrix(int rows, int cols, Rng& rng) {
    Mat g(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) g(i, j) = rng.normal();
    return g;
}

Mat haar_orthogonal(Rng& rng, int d) {
    if (d < 1) throw Error("dimension must be positive");
    Mat g = gaussian_matrix(d, d, rng);
    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ();
    Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < d; ++j)
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    return q;
}

Mat empirical_covariance(const Mat& xs) {
    if (xs.cols() == 0) throw Error("empty sample");
    return xs * xs.transpose() / static_cast<double>(xs.cols());
}

Mat empirical_covariance(const std::vector<Vec>& xs) {
    if (xs.empty()) throw Error("empty sample");
    Mat m(xs.front().size(), static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = xs[i];
    return empirical_covariance(m);
}

double spectral_norm(const Mat& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<Mat> svd(m);
    return svd.singularValues()(0);
}

EigSym eig_sym(const Mat& m) {
    if (!is_symmetric(m, 1e-10)) throw Error("matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
    if (es.info() != Eigen::Success) throw Error("symmetric eigensolver failed");
    return {es.eigenvalues(), es.eigenvectors()};
}

Mat solve_spd(const SpdMatrix& a, const Mat& b) {
    if (b.rows() != a.dim()) throw Error("dimension mismatch in solve_spd");
    Mat x = a.chol().triangularView<Eigen::Lower>().solve(b);
    return a.chol().transpose().triangularView<Eigen::Upper>().solve(x);
}

Mat nullspace(const Mat& m, double tol) {
    const Eigen::Index n = m.cols();
    if (m.rows() == 0) return Mat::Identity(n, n);
    Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeFullV);
    const Vec& s = svd.singularValues();
    double thr = tol * (s.size() ? s(0) : 0.0);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < n; ++i)
        if (i >= s.size() || s(i) <= thr) keep.push_back(i);
    Mat basis(n, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) basis.col(static_cast<Eigen::Index>(k)) = svd.matrixV().col(keep[k]);
    return basis;
}

double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 8) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.subspan(0, half)) + pairwise_sum(xs.subspan(half));
}

MeanEstimate mean_and_error(std::span<const double> xs) {
    MeanEstimate out;
    const std::size_t n = xs.size();
    if (n == 0) return out;
    out.mean = pairwise_sum(xs) / static_cast<double>(n);
    if (n < 2) return out;
    std::vector<double> dev(n);
    for (std::size_t i = 0; i < n; ++i) dev[i] = (xs[i] - out.mean) * (xs[i] - out.mean);
    double var = pairwise_sum(dev) / static_cast<double>(n - 1);
    out.std_error = std::sqrt(var / static_cast<double>(n));
    return out;
}

GaussLegendre gauss_legendre(int n) {
    if (n < 1) throw Error("quadrature order must be positive");
    GaussLegendre gl;
    gl.nodes.resize(n);
    gl.weights.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        gl.nodes[i] = -x;
        gl.nodes[n - 1 - i] = x;
        double w = 2.0 / ((1.0 - x * x) * dp * dp);
        gl.weights[i] = w;
        gl.weights[n - 1 - i] = w;
    }
    return gl;
}

double uniform_expectation(double lo, double hi, const std::function<double(double)>& f) {
    if (hi == lo) return f(lo);
    static const GaussLegendre gl = gauss_legendre(64);
    double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    double s = 0.0;
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) s += gl.weights[i] * f(mid + half * gl.nodes[i]);
    return 0.5 * s;
}

int worker_count() {
    if (const char* env = std::getenv("ICL_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
    int workers = static_cast<int>(std::min<std::size_t>(count, static_cast<std::size_t>(worker_count())));
    if (workers <= 1 || in_parallel_region) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto body = [&] {
        in_parallel_region = true;
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= count) break;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(count);
            }
        }
        in_parallel_region = false;
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(body);
    body();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace icl
