#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "msfl/engine.hpp"

namespace msfl {

// Everything one run needs, loadable from a JSON document.
struct RunConfig {
    // topology
    std::string builder = "symmetric";  // "symmetric" | "custom"
    int num_servers = 3;
    int singleton_count = 15, pair_count = 10, triple_count = 10;  // symmetric
    std::map<AreaType, int> type_sizes;                            // custom

    DataGenSpec data;
    int eval_size = 1000;
    ModelSpec model;
    EngineConfig engine;
    LatencyParams latency;

    // latency-comparison extras
    double cfl_cluster_cost_fraction = 0.05;  // 1/20 of a round
    int cfl_recluster_every = 1;

    std::string algorithm = "msfedavg";  // "msfedavg" | "hfl" | "single"
    std::uint64_t seed = 1;
    std::string output_dir = "runs/out";
    std::optional<double> target_loss;  // eval loss for rounds-to-target
    double bound_c = 1.0;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);

    Topology build_topology() const;
    // Cross-field checks beyond what from_json enforces.
    void validate() const;
};

std::vector<std::string> preset_names();
RunConfig preset_config(const std::string& name);

}  // namespace msfl
