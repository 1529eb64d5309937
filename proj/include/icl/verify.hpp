#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace icl {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

// Monte-Carlo population risk against the closed form, random (θ, Σ, task law).
CheckResult verify_closed_form(int configs = 20, long long episodes = 100000, std::uint64_t seed = 11);
// expected_cov_product against sampled E[X K X], entrywise.
CheckResult verify_moment_identity(int configs = 20, long long reps = 20000, std::uint64_t seed = 12);
// Analytic gradients against central differences (empirical and closed-form risks).
CheckResult verify_gradients(int configs = 50, std::uint64_t seed = 13);
// Stationarity of (I, Q_n) in Q and the 1/n expansion of Q_n.
CheckResult verify_optimal_q(int configs = 20, std::uint64_t seed = 14);

std::vector<CheckResult> verify_suite();

}  // namespace icl
