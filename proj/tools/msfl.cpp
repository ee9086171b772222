#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "msfl/runner.hpp"

namespace {

using msfl::RunConfig;

constexpr int kExitBadConfig = 2;
constexpr int kExitUnsafeLr = 3;

struct CommonOpts {
    std::string config_path;
    std::string preset;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    std::string mode;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "JSON run configuration file");
    cmd->add_option("--preset", opts.preset, "named preset configuration")
        ->check(CLI::IsMember(msfl::preset_names()));
    cmd->add_option("--seed", opts.seed, "override the RNG seed")
        ->each([&opts](const std::string&) { opts.seed_set = true; });
    cmd->add_option("--out", opts.out_dir, "override the output directory");
    cmd->add_option("--mode", opts.mode, "aggregation mode override")
        ->check(CLI::IsMember({"literal", "displacement", "delta"}));
}

RunConfig load_config(const CommonOpts& opts) {
    if (opts.config_path.empty() == opts.preset.empty()) {
        throw std::invalid_argument("give exactly one of --config or --preset");
    }
    RunConfig cfg;
    if (!opts.preset.empty()) {
        cfg = msfl::preset_config(opts.preset);
    } else {
        std::ifstream in(opts.config_path);
        if (!in) throw std::invalid_argument("cannot read " + opts.config_path);
        nlohmann::json j;
        in >> j;
        cfg = RunConfig::from_json(j);
    }
    if (opts.seed_set) cfg.seed = opts.seed;
    if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
    if (!opts.mode.empty()) {
        cfg.engine.mode = msfl::aggregation_mode_from_string(opts.mode);
    }
    cfg.validate();
    return cfg;
}

int cmd_run(const CommonOpts& opts, bool allow_unsafe_lr) {
    const RunConfig cfg = load_config(opts);

    double smoothness = 0.0;
    const auto conditions = msfl::check_lr(cfg, &smoothness);
    if (!conditions.all()) {
        std::ostringstream msg;
        msg << "learning-rate preconditions violated (L_hat=" << smoothness << "):";
        if (!conditions.lemma1) {
            msg << " lemma-1 bound eta_l <= " << conditions.lemma1_threshold << ";";
        }
        if (!conditions.strategy) {
            msg << " strategy threshold eta_l <= " << conditions.strategy_threshold << ";";
        }
        if (!conditions.composite) {
            msg << " composite condition value " << conditions.composite_value << " >= 1;";
        }
        if (!allow_unsafe_lr) {
            std::cerr << "error: " << msg.str()
                      << " (pass --allow-unsafe-lr to run anyway)\n";
            return kExitUnsafeLr;
        }
        std::cerr << "warning: " << msg.str() << "\n";
    }

    const auto outputs = msfl::execute_run(cfg);
    msfl::write_run_outputs(cfg, outputs);
    std::cout << "wrote " << cfg.output_dir << " (" << outputs.result.records.size()
              << " rounds, final eval acc "
              << outputs.summary.final_eval_acc << ")\n";
    return 0;
}

int cmd_latency(const CommonOpts& opts) {
    const RunConfig cfg = load_config(opts);
    const auto cmp = msfl::compare_latency(cfg);

    std::filesystem::create_directories(cfg.output_dir);
    const std::filesystem::path dir(cfg.output_dir);
    std::ofstream(dir / "latency.json") << cmp.to_json().dump(2) << "\n";
    std::ofstream(dir / "latency.csv") << cmp.to_csv();

    std::cout << "architecture totals over " << cmp.rounds << " rounds (s):\n"
              << "  multi-server  " << cmp.multi_total << "\n"
              << "  single-server " << cmp.single_total << "\n"
              << "  hfl           " << cmp.hfl_total << " (" << cmp.hfl_global_rounds
              << " global aggregations)\n"
              << "  cfl           " << cmp.cfl_total << "\n";
    return 0;
}

int cmd_sweep(const CommonOpts& opts, const std::string& axis,
              const std::vector<double>& values, bool allow_unsafe_lr) {
    if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
    const RunConfig base = load_config(opts);

    std::ostringstream merged;
    merged << "axis,value,final_eval_loss,final_eval_acc,rounds_to_target,"
              "cumulative_latency_s\n";
    for (double value : values) {
        RunConfig cfg = base;
        if (axis == "E") {
            cfg.engine.epochs = static_cast<int>(value);
        } else if (axis == "K_m") {
            if (cfg.engine.strategy.kind != msfl::StrategyKind::unbiased) {
                throw std::invalid_argument("K_m sweep needs the unbiased strategy");
            }
            cfg.engine.strategy.per_server_count = static_cast<int>(value);
        } else if (axis == "eta_l") {
            cfg.engine.eta_l = value;
        } else if (axis == "eta_g") {
            cfg.engine.eta_g = value;
        } else if (axis == "B_cr_hz") {
            cfg.latency.bandwidth_cr_hz = value;
        } else if (axis == "rounds") {
            cfg.engine.rounds = static_cast<int>(value);
        } else {
            throw std::invalid_argument("unknown sweep axis: " + axis);
        }
        std::ostringstream tag;
        tag << axis << "=" << value;
        cfg.output_dir = base.output_dir + "/sweep_" + tag.str();
        cfg.validate();

        const auto conditions = msfl::check_lr(cfg, nullptr);
        if (!conditions.all() && !allow_unsafe_lr) {
            std::cerr << "error: " << tag.str()
                      << " violates the learning-rate preconditions\n";
            return kExitUnsafeLr;
        }
        const auto outputs = msfl::execute_run(cfg);
        msfl::write_run_outputs(cfg, outputs);
        merged << axis << ',' << value << ',' << outputs.summary.final_eval_loss << ','
               << outputs.summary.final_eval_acc << ',';
        if (outputs.summary.rounds_to_target) {
            merged << *outputs.summary.rounds_to_target;
        }
        merged << ',' << outputs.summary.cumulative_latency_s << "\n";
        std::cout << tag.str() << ": final eval acc "
                  << outputs.summary.final_eval_acc << "\n";
    }
    std::filesystem::create_directories(base.output_dir);
    std::ofstream(std::filesystem::path(base.output_dir) / "sweep.csv") << merged.str();
    return 0;
}

int cmd_topo(const CommonOpts& opts) {
    const RunConfig cfg = load_config(opts);
    const msfl::Topology topo = cfg.build_topology();
    std::cout << "N = " << topo.num_clients() << "\n";
    for (int m = 1; m <= topo.num_servers(); ++m) {
        std::cout << "N_" << m << " = " << topo.region_size(m) << "\n";
    }
    std::cout << topo.types().size() << " types\n";
    for (const auto& [type, members] : topo.types()) {
        std::cout << "  {";
        for (std::size_t k = 0; k < type.size(); ++k) {
            if (k) std::cout << ',';
            std::cout << type[k];
        }
        std::cout << "}: " << members.size() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-server federated learning simulator"};
    app.require_subcommand(1);

    CommonOpts run_opts, latency_opts, sweep_opts, topo_opts;
    bool allow_unsafe_lr = false;
    bool sweep_allow_unsafe_lr = false;
    std::string sweep_axis;
    std::vector<double> sweep_values;

    auto* run = app.add_subcommand("run", "execute a configured training run");
    add_common(run, run_opts);
    run->add_flag("--allow-unsafe-lr", allow_unsafe_lr,
                  "downgrade learning-rate violations to warnings");

    auto* latency = app.add_subcommand("latency", "compare architecture latencies");
    add_common(latency, latency_opts);

    auto* sweep = app.add_subcommand("sweep", "run once per value of one axis");
    add_common(sweep, sweep_opts);
    sweep->add_option("--axis", sweep_axis, "E, K_m, eta_l, eta_g, B_cr_hz or rounds")
        ->required();
    sweep->add_option("--values", sweep_values, "axis values")
        ->required()
        ->delimiter(',');
    sweep->add_flag("--allow-unsafe-lr", sweep_allow_unsafe_lr,
                    "downgrade learning-rate violations to warnings");

    auto* topo = app.add_subcommand("topo", "print a topology summary");
    add_common(topo, topo_opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_opts, allow_unsafe_lr);
        if (latency->parsed()) return cmd_latency(latency_opts);
        if (sweep->parsed()) {
            return cmd_sweep(sweep_opts, sweep_axis, sweep_values, sweep_allow_unsafe_lr);
        }
        if (topo->parsed()) return cmd_topo(topo_opts);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadConfig;
    }
    return 0;
}
