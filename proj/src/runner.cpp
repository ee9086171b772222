#include "msfl/runner.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace msfl {

namespace {

double effective_model_bits(const RunConfig& cfg) {
    if (cfg.latency.model_bits > 0.0) return cfg.latency.model_bits;
    return 32.0 * static_cast<double>(cfg.model.param_count());
}

Engine make_engine(const RunConfig& cfg, const Topology& topo, DataMap data,
                   ClientDataset eval) {
    return Engine(topo, std::move(data), cfg.model, cfg.engine, cfg.latency,
                  std::move(eval), cfg.seed);
}

}  // namespace

nlohmann::json RunSummary::to_json() const {
    nlohmann::json j{{"final_eval_loss", final_eval_loss},
                     {"final_eval_acc", final_eval_acc},
                     {"final_train_loss", final_train_loss},
                     {"initial_train_loss", initial_train_loss},
                     {"min_train_loss", min_train_loss},
                     {"cumulative_latency_s", cumulative_latency_s},
                     {"smoothness_estimate", smoothness_estimate},
                     {"lr_conditions", lr_conditions.to_json()},
                     {"seed", seed}};
    j["rounds_to_target"] = rounds_to_target ? nlohmann::json(*rounds_to_target)
                                             : nlohmann::json(nullptr);
    j["bound_report"] = bound ? bound->to_json() : nlohmann::json(nullptr);
    return j;
}

theory::LrConditionReport check_lr(const RunConfig& cfg, double* smoothness_out) {
    const Topology topo = cfg.build_topology();
    const DataMap data = generate(cfg.data, topo, cfg.seed);
    const double smoothness = theory::estimate_smoothness(data, cfg.model, cfg.seed);
    if (smoothness_out) *smoothness_out = smoothness;
    theory::AssumptionEstimates est;
    est.smoothness = smoothness;
    const auto inputs = theory::make_theorem_inputs(est, topo, cfg.engine, cfg.bound_c,
                                                    0.0, 0.0);
    return theory::validate_lr(inputs, cfg.engine.strategy.kind,
                               cfg.engine.strategy.scheme);
}

RunOutputs execute_run(const RunConfig& cfg) {
    RunOutputs out;
    out.topo = cfg.build_topology();
    DataMap data = generate(cfg.data, out.topo, cfg.seed);
    ClientDataset eval = global_eval_set(cfg.data, cfg.eval_size, cfg.seed);

    Engine engine = make_engine(cfg, out.topo, data, std::move(eval));
    out.result = cfg.algorithm == "hfl" ? engine.run_hfl_baseline() : engine.run();

    std::ostringstream csv;
    write_csv_header(csv, out.topo.num_servers());
    std::ostringstream plans;
    for (const auto& rec : out.result.records) write_csv_row(csv, rec);
    out.csv = csv.str();

    // Plans are re-derivable from (topology, strategy, seed); log them for audit.
    {
        Topology current = out.topo;
        const Topology partitioned =
            cfg.algorithm == "hfl" ? out.topo.hfl_partition() : out.topo;
        for (int t = 0; t < cfg.engine.rounds; ++t) {
            if (cfg.engine.mobility && t > 0 && cfg.algorithm != "hfl") {
                RngStream rng(cfg.seed, StreamDomain::mobility, static_cast<std::uint64_t>(t));
                current = current.relocate(*cfg.engine.mobility, rng);
            }
            const Topology& plan_topo = cfg.algorithm == "hfl" ? partitioned : current;
            const auto plan = make_plan(plan_topo, cfg.engine.strategy, t, cfg.seed);
            for (const auto& line : plan.to_json_lines()) plans << line << "\n";
        }
    }
    out.plans_jsonl = plans.str();

    RunSummary& summary = out.summary;
    summary.seed = cfg.seed;
    summary.initial_train_loss = out.result.initial_train_loss;
    summary.min_train_loss = out.result.initial_train_loss;
    if (!out.result.records.empty()) {
        const auto& last = out.result.records.back();
        summary.final_eval_loss = last.global_loss;
        summary.final_eval_acc = last.global_acc;
        summary.final_train_loss = last.train_loss;
        summary.cumulative_latency_s = last.cumulative_latency_s;
        for (const auto& rec : out.result.records) {
            summary.min_train_loss = std::min(summary.min_train_loss, rec.train_loss);
            if (cfg.target_loss && !summary.rounds_to_target &&
                rec.global_loss <= *cfg.target_loss) {
                summary.rounds_to_target = rec.t + 1;
            }
        }
    }

    summary.lr_conditions = check_lr(cfg, &summary.smoothness_estimate);
    if (!out.result.trace.rounds.empty()) {
        const auto estimates =
            theory::estimate_assumptions(out.result.trace, data, cfg.model, cfg.seed);
        summary.bound = theory::evaluate_bound(
            estimates, out.topo, cfg.engine, cfg.bound_c,
            out.result.initial_train_loss, summary.min_train_loss, "best_observed");
    }
    return out;
}

void write_run_outputs(const RunConfig& cfg, const RunOutputs& outputs) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    const fs::path dir(cfg.output_dir);

    std::ofstream(dir / "config.json") << cfg.to_json().dump(2) << "\n";
    std::ofstream(dir / "rounds.csv") << outputs.csv;
    std::ofstream(dir / "summary.json") << outputs.summary.to_json().dump(2) << "\n";
    std::ofstream(dir / "plans.jsonl") << outputs.plans_jsonl;
    std::ofstream(dir / "final_model.json")
        << outputs.result.final_global.to_json().dump() << "\n";
    std::ofstream(dir / "topology.json") << outputs.topo.to_json().dump(2) << "\n";
}

nlohmann::json LatencyComparison::to_json() const {
    return {{"rounds", rounds},
            {"multi_total_s", multi_total},
            {"single_total_s", single_total},
            {"hfl_total_s", hfl_total},
            {"hfl_global_rounds", hfl_global_rounds},
            {"cfl_total_s", cfl_total}};
}

std::string LatencyComparison::to_csv() const {
    std::ostringstream out;
    out << "t,multi_s,single_s,hfl_s\n";
    for (int t = 0; t < rounds; ++t) {
        out << t << ',' << multi_per_round[static_cast<std::size_t>(t)] << ','
            << single_per_round[static_cast<std::size_t>(t)] << ','
            << hfl_per_round[static_cast<std::size_t>(t)] << "\n";
    }
    return out.str();
}

LatencyComparison compare_latency(const RunConfig& cfg) {
    LatencyComparison cmp;
    cmp.rounds = cfg.engine.rounds;
    LatencyParams params = cfg.latency;
    params.model_bits = effective_model_bits(cfg);

    Topology current = cfg.build_topology();
    const Topology partitioned = current.hfl_partition();

    // HFL reuses the configured sampling count per server; exact per-type
    // quotas are not expressible on the partitioned regions.
    StrategySpec hfl_strategy = cfg.engine.strategy;
    if (hfl_strategy.kind == StrategyKind::biased) {
        int quota = 0;
        if (!hfl_strategy.class_totals.empty()) {
            for (const auto& [cls, total] : hfl_strategy.class_totals) quota += total;
        } else if (!hfl_strategy.bias.quotas.empty()) {
            quota = hfl_strategy.bias.server_quota(hfl_strategy.bias.quotas.begin()->first);
        }
        hfl_strategy = StrategySpec{};
        hfl_strategy.kind = StrategyKind::unbiased;
        hfl_strategy.scheme = SamplingScheme::without_replacement;
        hfl_strategy.per_server_count = std::max(1, quota);
        for (int m = 1; m <= partitioned.num_servers(); ++m) {
            hfl_strategy.per_server_count =
                std::min(hfl_strategy.per_server_count, partitioned.region_size(m));
        }
    }

    for (int t = 0; t < cfg.engine.rounds; ++t) {
        if (cfg.engine.mobility && t > 0) {
            RngStream rng(cfg.seed, StreamDomain::mobility, static_cast<std::uint64_t>(t));
            current = current.relocate(*cfg.engine.mobility, rng);
        }
        const auto plan = make_plan(current, cfg.engine.strategy, t, cfg.seed);
        const double multi = round_latency_multi(current, plan, params, cfg.seed, t);
        const double single = round_latency_single(current, plan.distinct_clients(),
                                                   params, cfg.seed, t);

        const auto hfl_plan = make_plan(partitioned, hfl_strategy, t, cfg.seed);
        double hfl = round_latency_multi(partitioned, hfl_plan, params, cfg.seed, t);
        if ((t + 1) % cfg.engine.hfl_period == 0) {
            hfl += hfl_global_latency(partitioned, params, cfg.seed, t);
            ++cmp.hfl_global_rounds;
        }

        cmp.multi_per_round.push_back(multi);
        cmp.single_per_round.push_back(single);
        cmp.hfl_per_round.push_back(hfl);
        cmp.multi_total += multi;
        cmp.single_total += single;
        cmp.hfl_total += hfl;
    }
    cmp.cfl_total = total_latency_cfl(cmp.multi_per_round, cfg.cfl_recluster_every,
                                      cfg.cfl_cluster_cost_fraction);
    return cmp;
}

}  // namespace msfl
