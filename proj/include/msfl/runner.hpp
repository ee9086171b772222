#pragma once

#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "msfl/config.hpp"
#include "msfl/theory.hpp"

namespace msfl {

struct RunSummary {
    double final_eval_loss = 0.0;
    double final_eval_acc = 0.0;
    double final_train_loss = 0.0;
    double initial_train_loss = 0.0;
    double min_train_loss = 0.0;
    std::optional<int> rounds_to_target;
    double cumulative_latency_s = 0.0;
    double smoothness_estimate = 0.0;
    std::optional<theory::BoundReport> bound;
    theory::LrConditionReport lr_conditions;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
};

struct RunOutputs {
    Topology topo;
    RunResult result;
    RunSummary summary;
    std::string csv;  // header + one row per round
    std::string plans_jsonl;
};

// Learning-rate precondition check against a smoothness probe on this
// config's data. Cheap relative to a run.
theory::LrConditionReport check_lr(const RunConfig& cfg, double* smoothness_out);

// Executes the configured run end to end; no file output.
RunOutputs execute_run(const RunConfig& cfg);

// Writes config copy, rounds.csv, summary.json, plans.jsonl and the final
// model into cfg.output_dir.
void write_run_outputs(const RunConfig& cfg, const RunOutputs& outputs);

// Per-architecture transmission totals over the configured rounds.
struct LatencyComparison {
    int rounds = 0;
    std::vector<double> multi_per_round;
    std::vector<double> single_per_round;
    std::vector<double> hfl_per_round;  // includes the periodic global term
    double multi_total = 0.0;
    double single_total = 0.0;
    double hfl_total = 0.0;
    int hfl_global_rounds = 0;
    double cfl_total = 0.0;

    nlohmann::json to_json() const;
    std::string to_csv() const;
};

LatencyComparison compare_latency(const RunConfig& cfg);

}  // namespace msfl
