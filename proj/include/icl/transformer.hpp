#pragma once

#include "icl/numerics.hpp"
#include "icl/tasks.hpp"

#include <json.hpp>

#include <limits>

namespace icl {

struct Theta {
    Mat p, q;
    double budget = std::numeric_limits<double>::infinity();

    int dim() const { return static_cast<int>(p.rows()); }
    static Theta zero(int d, double budget = std::numeric_limits<double>::infinity());
};

struct FullTheta {
    Mat p, q;  // 2d × 2d
};

// Pfull = [[0,0],[0,P]], Qfull = [[Q,0],[0,0]].
FullTheta expand(const Theta& theta);

Mat forward_full(const FullTheta& theta, const Mat& z);

Vec predict(const Theta& theta, const Prompt& prompt);
Vec predict(const Theta& theta, const Episode& episode);

Theta project_to_budget(const Theta& theta);

nlohmann::json mat_to_json(const Mat& m);  // flat row-major
Mat mat_from_json(const nlohmann::json& j, int rows, int cols);
nlohmann::json to_json(const Theta& theta);
Theta theta_from_json(const nlohmann::json& j);

}  // namespace icl
