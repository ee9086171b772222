#include "msfl/config.hpp"

#include <algorithm>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace msfl {

namespace {

nlohmann::json types_to_json(const std::map<AreaType, int>& sizes) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [type, count] : sizes) {
        arr.push_back({{"servers", type}, {"count", count}});
    }
    return arr;
}

std::map<AreaType, int> types_from_json(const nlohmann::json& arr) {
    std::map<AreaType, int> sizes;
    for (const auto& entry : arr) {
        AreaType type = entry.at("servers").get<AreaType>();
        std::sort(type.begin(), type.end());
        sizes[type] += entry.at("count").get<int>();
    }
    return sizes;
}

nlohmann::json strategy_to_json(const StrategySpec& s) {
    nlohmann::json j{{"kind", to_string(s.kind)}};
    if (s.kind != StrategyKind::full) j["scheme"] = to_string(s.scheme);
    if (s.kind == StrategyKind::unbiased) j["K_m"] = s.per_server_count;
    if (s.kind == StrategyKind::biased) {
        if (!s.class_totals.empty()) {
            nlohmann::json q = nlohmann::json::object();
            for (const auto& [cls, total] : s.class_totals) {
                q[std::to_string(cls)] = total;
            }
            j["class_quotas"] = q;
        } else {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& [m, per_type] : s.bias.quotas) {
                for (const auto& [type, quota] : per_type) {
                    arr.push_back({{"server", m}, {"servers", type}, {"count", quota}});
                }
            }
            j["type_quotas"] = arr;
        }
    }
    return j;
}

StrategySpec strategy_from_json(const nlohmann::json& j) {
    StrategySpec s;
    s.kind = strategy_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("scheme")) s.scheme = scheme_from_string(j.at("scheme").get<std::string>());
    if (s.kind == StrategyKind::unbiased) s.per_server_count = j.at("K_m").get<int>();
    if (s.kind == StrategyKind::biased) {
        if (j.contains("class_quotas")) {
            for (const auto& [key, value] : j.at("class_quotas").items()) {
                s.class_totals[std::stoi(key)] = value.get<int>();
            }
        } else if (j.contains("type_quotas")) {
            for (const auto& entry : j.at("type_quotas")) {
                AreaType type = entry.at("servers").get<AreaType>();
                std::sort(type.begin(), type.end());
                s.bias.quotas[entry.at("server").get<int>()][type] =
                    entry.at("count").get<int>();
            }
        } else {
            throw std::invalid_argument(
                "biased strategy needs class_quotas or type_quotas");
        }
    }
    return s;
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
    nlohmann::json topo{{"builder", builder}, {"M", num_servers}};
    if (builder == "symmetric") {
        topo["U"] = singleton_count;
        topo["V"] = pair_count;
        topo["W"] = triple_count;
    } else {
        topo["types"] = types_to_json(type_sizes);
    }

    nlohmann::json j{
        {"topology", topo},
        {"data",
         {{"classes", data.num_classes},
          {"feature_dim", data.feature_dim},
          {"shard_size", data.shard_size},
          {"dirichlet_alpha", data.dirichlet_alpha},
          {"class_separation", data.class_separation},
          {"eval_size", eval_size}}},
        {"model",
         {{"kind", to_string(model.kind)},
          {"hidden", model.hidden},
          {"init_scale", model.init_scale}}},
        {"engine",
         {{"eta_g", engine.eta_g},
          {"eta_l", engine.eta_l},
          {"epochs", engine.epochs},
          {"rounds", engine.rounds},
          {"batch_size", engine.batch_size},
          {"mode", to_string(engine.mode)},
          {"t_global", engine.hfl_period},
          {"probe_rounds", engine.probe_rounds}}},
        {"strategy", strategy_to_json(engine.strategy)},
        {"latency",
         {{"B_cr_hz", latency.bandwidth_cr_hz},
          {"B_rc_hz", latency.bandwidth_rc_hz},
          {"B_cc_hz", latency.bandwidth_cc_hz},
          {"p_up_dbm", latency.power_up_dbm},
          {"p_down_dbm", latency.power_down_dbm},
          {"noise_dbm", latency.noise_dbm},
          {"model_bits", latency.model_bits},
          {"fading", to_string(latency.fading)},
          {"units", to_string(latency.units)},
          {"cfl_cluster_cost_fraction", cfl_cluster_cost_fraction},
          {"cfl_recluster_every", cfl_recluster_every}}},
        {"algorithm", algorithm},
        {"seed", seed},
        {"output_dir", output_dir},
        {"bound_c", bound_c},
    };
    if (engine.mobility) {
        nlohmann::json probs = nlohmann::json::object();
        for (const auto& [cls, p] : engine.mobility->class_probs) {
            probs[std::to_string(cls)] = p;
        }
        j["mobility"] = {{"probs", probs}};
    }
    if (target_loss) j["target_loss"] = *target_loss;
    return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig cfg;
    const auto& topo = j.at("topology");
    cfg.builder = topo.at("builder").get<std::string>();
    cfg.num_servers = topo.at("M").get<int>();
    if (cfg.builder == "symmetric") {
        cfg.singleton_count = topo.at("U").get<int>();
        cfg.pair_count = topo.at("V").get<int>();
        cfg.triple_count = topo.at("W").get<int>();
    } else if (cfg.builder == "custom") {
        cfg.type_sizes = types_from_json(topo.at("types"));
    } else {
        throw std::invalid_argument("unknown topology builder: " + cfg.builder);
    }

    const auto& data = j.at("data");
    cfg.data.num_classes = data.at("classes").get<int>();
    cfg.data.feature_dim = data.at("feature_dim").get<int>();
    cfg.data.shard_size = data.at("shard_size").get<int>();
    cfg.data.dirichlet_alpha = data.at("dirichlet_alpha").get<double>();
    cfg.data.class_separation = data.at("class_separation").get<double>();
    cfg.eval_size = data.at("eval_size").get<int>();

    const auto& model = j.at("model");
    cfg.model.kind = model_kind_from_string(model.at("kind").get<std::string>());
    cfg.model.hidden = model.at("hidden").get<int>();
    cfg.model.init_scale = model.at("init_scale").get<double>();
    cfg.model.feature_dim = cfg.data.feature_dim;
    cfg.model.num_classes = cfg.data.num_classes;

    const auto& engine = j.at("engine");
    cfg.engine.eta_g = engine.at("eta_g").get<double>();
    cfg.engine.eta_l = engine.at("eta_l").get<double>();
    cfg.engine.epochs = engine.at("epochs").get<int>();
    cfg.engine.rounds = engine.at("rounds").get<int>();
    cfg.engine.batch_size = engine.at("batch_size").get<int>();
    cfg.engine.mode = aggregation_mode_from_string(engine.at("mode").get<std::string>());
    cfg.engine.hfl_period = engine.at("t_global").get<int>();
    cfg.engine.probe_rounds = engine.at("probe_rounds").get<int>();
    cfg.engine.strategy = strategy_from_json(j.at("strategy"));

    const auto& lat = j.at("latency");
    cfg.latency.bandwidth_cr_hz = lat.at("B_cr_hz").get<double>();
    cfg.latency.bandwidth_rc_hz = lat.at("B_rc_hz").get<double>();
    cfg.latency.bandwidth_cc_hz = lat.at("B_cc_hz").get<double>();
    cfg.latency.power_up_dbm = lat.at("p_up_dbm").get<double>();
    cfg.latency.power_down_dbm = lat.at("p_down_dbm").get<double>();
    cfg.latency.noise_dbm = lat.at("noise_dbm").get<double>();
    cfg.latency.model_bits = lat.at("model_bits").get<double>();
    cfg.latency.fading = fading_mode_from_string(lat.at("fading").get<std::string>());
    cfg.latency.units = bandwidth_units_from_string(lat.at("units").get<std::string>());
    cfg.cfl_cluster_cost_fraction = lat.at("cfl_cluster_cost_fraction").get<double>();
    cfg.cfl_recluster_every = lat.at("cfl_recluster_every").get<int>();

    if (j.contains("mobility")) {
        MobilitySpec spec;
        for (const auto& [key, value] : j.at("mobility").at("probs").items()) {
            spec.class_probs[std::stoi(key)] = value.get<double>();
        }
        cfg.engine.mobility = spec;
    }

    cfg.algorithm = j.at("algorithm").get<std::string>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.output_dir = j.at("output_dir").get<std::string>();
    cfg.bound_c = j.at("bound_c").get<double>();
    if (j.contains("target_loss")) cfg.target_loss = j.at("target_loss").get<double>();

    cfg.engine.cloud_links = cfg.algorithm == "single";
    cfg.validate();
    return cfg;
}

Topology RunConfig::build_topology() const {
    if (builder == "symmetric") {
        return Topology::build_symmetric(num_servers, singleton_count, pair_count,
                                         triple_count, seed);
    }
    return Topology::build_custom(num_servers, type_sizes, seed);
}

void RunConfig::validate() const {
    if (algorithm != "msfedavg" && algorithm != "hfl" && algorithm != "single") {
        throw std::invalid_argument("unknown algorithm: " + algorithm);
    }
    if (algorithm == "single" && !(builder == "custom" && num_servers == 1)) {
        throw std::invalid_argument(
            "single-server algorithm expects a custom single-server topology");
    }
    if (engine.rounds < 0 || engine.epochs < 1) {
        throw std::invalid_argument("invalid rounds/epochs");
    }
    if (engine.eta_g <= 0.0 || engine.eta_l < 0.0) {
        throw std::invalid_argument("invalid learning rates");
    }
    if (model.kind == ModelKind::mlp && model.hidden < 1) {
        throw std::invalid_argument("mlp needs a positive hidden width");
    }
    // Quota cross-checks against the actual topology.
    const Topology topo = build_topology();
    if (engine.strategy.kind == StrategyKind::biased) {
        const BiasSpec spec = engine.strategy.class_totals.empty()
                                  ? engine.strategy.bias
                                  : BiasSpec::from_class_totals(topo, engine.strategy.class_totals);
        spec.validate(topo, engine.strategy.scheme);
    }
    if (engine.strategy.kind == StrategyKind::unbiased) {
        if (engine.strategy.per_server_count < 1) {
            throw std::invalid_argument("K_m must be positive");
        }
        if (engine.strategy.scheme == SamplingScheme::without_replacement) {
            for (int m = 1; m <= topo.num_servers(); ++m) {
                if (engine.strategy.per_server_count > topo.region_size(m)) {
                    throw std::invalid_argument("K_m exceeds region size under scheme II");
                }
            }
        }
    }
    if (engine.mobility) {
        double total = 0.0;
        for (const auto& [cls, p] : engine.mobility->class_probs) total += p;
        if (std::abs(total - 1.0) > 1e-9) {
            throw std::invalid_argument("mobility probabilities must sum to 1");
        }
    }
}

std::vector<std::string> preset_names() {
    return {"symmetric-fig3", "all-overlap-wN", "asymmetric-fig8",
            "single-server", "hfl-baseline", "mobility"};
}

RunConfig preset_config(const std::string& name) {
    RunConfig cfg;
    cfg.data = DataGenSpec{3, 4, 64, 0.4, 1.0};
    cfg.eval_size = 1000;
    cfg.model = ModelSpec{ModelKind::logistic, cfg.data.feature_dim,
                          cfg.data.num_classes, 0, 0.0};
    cfg.engine.eta_g = 1.0;
    cfg.engine.eta_l = 0.05;
    cfg.engine.epochs = 5;
    cfg.engine.rounds = 500;
    cfg.engine.batch_size = 64;
    cfg.engine.mode = AggregationMode::server_displacement;
    cfg.engine.strategy.kind = StrategyKind::full;
    cfg.engine.probe_rounds = 10;
    cfg.latency = LatencyParams{};
    cfg.latency.fading = FadingMode::rayleigh;
    cfg.seed = 1;
    cfg.bound_c = 1.0;

    if (name == "symmetric-fig3") {
        cfg.builder = "symmetric";
        cfg.num_servers = 3;
        cfg.singleton_count = 15;
        cfg.pair_count = 10;
        cfg.triple_count = 10;
        cfg.target_loss = 1.0;
    } else if (name == "all-overlap-wN") {
        cfg.builder = "symmetric";
        cfg.num_servers = 3;
        cfg.singleton_count = 0;
        cfg.pair_count = 0;
        cfg.triple_count = 85;
        cfg.engine.rounds = 200;
        cfg.target_loss = 1.0;
    } else if (name == "asymmetric-fig8") {
        cfg.builder = "custom";
        cfg.num_servers = 3;
        cfg.type_sizes = {{{1}, 20}, {{2}, 10}, {{3}, 15}, {{1, 2}, 12},
                          {{2, 3}, 8},  {{1, 3}, 5},  {{1, 2, 3}, 15}};
        cfg.engine.rounds = 300;
        cfg.target_loss = 1.0;
    } else if (name == "single-server") {
        cfg.builder = "custom";
        cfg.num_servers = 1;
        cfg.type_sizes = {{{1}, 85}};
        cfg.algorithm = "single";
        cfg.engine.rounds = 300;
        cfg.target_loss = 1.0;
    } else if (name == "hfl-baseline") {
        cfg.builder = "symmetric";
        cfg.num_servers = 3;
        cfg.singleton_count = 15;
        cfg.pair_count = 10;
        cfg.triple_count = 10;
        cfg.algorithm = "hfl";
        cfg.engine.hfl_period = 5;
        cfg.engine.rounds = 300;
        cfg.target_loss = 1.0;
    } else if (name == "mobility") {
        cfg.builder = "symmetric";
        cfg.num_servers = 3;
        cfg.singleton_count = 15;
        cfg.pair_count = 10;
        cfg.triple_count = 10;
        MobilitySpec spec;
        spec.class_probs = {{1, 0.5294}, {2, 0.3530}, {3, 0.1176}};
        cfg.engine.mobility = spec;
        cfg.engine.rounds = 300;
        cfg.target_loss = 1.0;
    } else {
        throw std::invalid_argument("unknown preset: " + name);
    }
    cfg.output_dir = "runs/" + name;
    cfg.validate();
    return cfg;
}

}  // namespace msfl
