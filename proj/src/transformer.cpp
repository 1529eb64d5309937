#include "icl/transformer.hpp"

#include <cmath>

namespace icl {

Theta Theta::zero(int d, double budget) { return Theta{Mat::Zero(d, d), Mat::Zero(d, d), budget}; }

FullTheta expand(const Theta& theta) {
    const int d = theta.dim();
    FullTheta f{Mat::Zero(2 * d, 2 * d), Mat::Zero(2 * d, 2 * d)};
    f.p.bottomRightCorner(d, d) = theta.p;
    f.q.topLeftCorner(d, d) = theta.q;
    return f;
}

Mat forward_full(const FullTheta& theta, const Mat& z) {
    const auto t = z.cols();
    if (t < 2) throw Error("normalization undefined");
    if (theta.p.rows() != z.rows() || theta.q.rows() != z.rows()) throw Error("parameter and embedding shapes differ");
    Mat attn = z.transpose() * theta.q * z;
    return z + theta.p * z * attn / static_cast<double>(t - 1);
}

Vec predict(const Theta& theta, const Prompt& prompt) {
    if (prompt.length() < 1) throw Error("prompt length must be positive");
    Vec u = prompt.xs.transpose() * (theta.q * prompt.query);
    return theta.p * (prompt.ys * u) / static_cast<double>(prompt.length());
}

Vec predict(const Theta& theta, const Episode& episode) { return theta.p * (episode.c * (theta.q * episode.query)); }

Theta project_to_budget(const Theta& theta) {
    if (!(theta.budget > 0.0)) throw Error("budget must be positive");
    Theta out = theta;
    if (std::isinf(theta.budget)) return out;
    for (Mat* m : {&out.p, &out.q}) {
        double nrm = spectral_norm(*m);
        if (nrm > theta.budget) *m *= theta.budget / nrm;
    }
    return out;
}

nlohmann::json mat_to_json(const Mat& m) {
    nlohmann::json arr = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) arr.push_back(m(i, j));
    return arr;
}

Mat mat_from_json(const nlohmann::json& j, int rows, int cols) {
    if (!j.is_array()) throw Error("matrix must be a JSON array");
    if (!j.empty() && j.front().is_array()) {
        if (static_cast<int>(j.size()) != rows) throw Error("matrix has wrong row count");
        Mat m(rows, cols);
        for (int i = 0; i < rows; ++i) {
            if (static_cast<int>(j[i].size()) != cols) throw Error("matrix has wrong column count");
            for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
        }
        return m;
    }
    if (static_cast<int>(j.size()) != rows * cols) throw Error("matrix has wrong entry count");
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int c = 0; c < cols; ++c) m(i, c) = j[static_cast<std::size_t>(i * cols + c)].get<double>();
    return m;
}

nlohmann::json to_json(const Theta& theta) {
    nlohmann::json j;
    j["d"] = theta.dim();
    if (std::isinf(theta.budget))
        j["M"] = nullptr;
    else
        j["M"] = theta.budget;
    j["P"] = mat_to_json(theta.p);
    j["Q"] = mat_to_json(theta.q);
    return j;
}

Theta theta_from_json(const nlohmann::json& j) {
    int d = j.at("d").get<int>();
    Theta t;
    t.p = mat_from_json(j.at("P"), d, d);
    t.q = mat_from_json(j.at("Q"), d, d);
    if (j.contains("M") && !j["M"].is_null()) t.budget = j["M"].get<double>();
    return t;
}

}  // namespace icl
