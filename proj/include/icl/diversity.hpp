#pragma once

#include "icl/risk.hpp"
#include "icl/tasks.hpp"
#include "icl/transformer.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace icl {

struct CentralizerReport {
    int generators = 0;
    int dimension = 0;
    std::vector<Mat> basis;
    std::vector<int> dimension_trace;  // nullspace dimension after each generator
    bool trivial = false;
};

// Joint commutant {M : M S = S M for all S} by incremental nullspace refinement.
CentralizerReport centralizer(const std::vector<Mat>& generators, double tol = 1e-9);

std::vector<Mat> sample_generators(const TaskDistribution& dist, int pairs, Rng& rng);

std::optional<Mat> simultaneously_diagonalizable(const std::vector<Mat>& tasks, double tol = 1e-8);

bool is_limiting_minimizer(const Theta& theta, const std::vector<Mat>& tasks, const SpdMatrix& cov, double tol);

enum class Verdict { DiverseBySupport, DiverseByCentralizer, NotDiverse, Undetermined };
std::string to_string(Verdict v);

struct DiversityVerdict {
    Verdict verdict = Verdict::Undetermined;
    CentralizerReport centralizer;
    std::string reason;
    std::optional<Theta> witness;
    double witness_train_risk = 0.0;
    double witness_test_risk = 0.0;
};

// Support containment decided per family without sampling.
bool support_contained(const TaskDistribution& test, const TaskDistribution& train, double tol = 1e-10);

DiversityVerdict diversity_verdict(const TaskDistribution& train, const TaskDistribution& test,
                                   const CovariateDistribution& cov, int pairs, double tol, Rng& rng);

// f(A;θ) = Tr(P A⁻¹ΣQΣQᵀΣA⁻ᵀPᵀ) + Tr_Σ(QΣQᵀ) Tr(P A⁻¹ΣA⁻ᵀPᵀ)
double surrogate_integrand(const Theta& theta, const SpdMatrix& cov, const TaskMoments& moments);
double distance_surrogate(const TaskDistribution& train, const TaskDistribution& test, const Theta& theta,
                          const SpdMatrix& cov, int task_samples, Rng& rng);

nlohmann::json to_json(const CentralizerReport& r);
nlohmann::json to_json(const DiversityVerdict& v);

}  // namespace icl
