#include "icl/diversity.hpp"
#include "icl/harness.hpp"
#include "icl/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

using nlohmann::json;

namespace {

int cmd_run(const std::string& path, const std::string& out_override) {
    icl::ExperimentConfig cfg = icl::load_config(path);
    if (!out_override.empty()) cfg.output_dir = out_override;
    icl::ExperimentResult res = icl::run_and_write(cfg);
    for (const auto& c : res.curves) {
        if (c.fitted)
            std::printf("%-40s slope %+.3f +/- %.3f   tail %+.3f +/- %.3f\n", c.experiment.c_str(), c.slope, c.slope_std_error,
                        c.tail_slope, c.tail_slope_std_error);
        else
            std::printf("%-40s (too few positive points for a fit)\n", c.experiment.c_str());
    }
    std::printf("wrote %s\n", cfg.output_dir.c_str());
    return 0;
}

int cmd_verify() {
    bool ok = true;
    for (const auto& r : icl::verify_suite()) {
        std::printf("%s %-30s %s (%.1fs)\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str(), r.seconds);
        ok = ok && r.passed;
    }
    return ok ? 0 : 1;
}

int cmd_diversity(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw icl::Error("cannot read " + path);
    json j = json::parse(f);
    const int d = j.at("d").get<int>();
    icl::TaskDistribution train = icl::task_from_json(j.at("train"), d);
    icl::TaskDistribution test = icl::task_from_json(j.at("test"), d);
    icl::CovariateDistribution cov = icl::covariate_from_json(j.value("covariate", json::object()), d);
    icl::Rng rng(j.value("seed", 1), icl::hash_label("diversity"));
    icl::DiversityVerdict v =
        icl::diversity_verdict(train, test, cov, j.value("pairs", 20), j.value("tol", 1e-9), rng);
    json out = icl::to_json(v);
    std::optional<icl::Theta> theta;
    if (j.contains("theta")) {
        const json& t = j["theta"];
        if (t.is_string()) {
            std::ifstream tf(t.get<std::string>());
            if (!tf) throw icl::Error("cannot read " + t.get<std::string>());
            theta = icl::theta_from_json(json::parse(tf));
        } else {
            theta = icl::theta_from_json(t);
        }
    } else if (v.witness) {
        theta = v.witness;
    }
    if (theta) {
        icl::Rng sr = rng.child(7);
        out["distance_surrogate"] =
            icl::distance_surrogate(train, test, *theta, cov.cov(), j.value("task_samples", 2000), sr);
    }
    std::cout << out.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Linear-attention in-context learning experiments"};
    app.require_subcommand(1);

    std::string run_path, out_dir;
    auto* run = app.add_subcommand("run", "Run an experiment sweep");
    run->add_option("config", run_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("-o,--output", out_dir, "Override the output directory");

    auto* verify = app.add_subcommand("verify", "Run the closed-form oracle suite");

    std::string div_path;
    auto* div = app.add_subcommand("diversity", "Classify a train/test task pair");
    div->add_option("config", div_path, "Diversity config (JSON)")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) return cmd_run(run_path, out_dir);
        if (*verify) return cmd_verify();
        if (*div) return cmd_diversity(div_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
