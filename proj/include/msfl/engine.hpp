#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "msfl/datagen.hpp"
#include "msfl/latency.hpp"
#include "msfl/model.hpp"
#include "msfl/participation.hpp"
#include "msfl/topology.hpp"

namespace msfl {

enum class AggregationMode {
    // w_m <- eta_g * mean(uploads): Algorithm line as printed.
    literal,
    // w_m <- w_m + eta_g * (mean(uploads) - w_m): default; equals `literal`
    // at eta_g = 1 and stays stable for large eta_g.
    server_displacement,
    // w_m <- w_m + eta_g * mean(uploads - client inits).
    client_delta,
};

struct StrategySpec {
    StrategyKind kind = StrategyKind::full;
    SamplingScheme scheme = SamplingScheme::without_replacement;
    int per_server_count = 0;          // K_m (unbiased)
    BiasSpec bias;                     // explicit per-type quotas (biased)
    std::map<int, int> class_totals;   // alternative biased input, re-split per round
};

ParticipationPlan make_plan(const Topology& topo, const StrategySpec& strategy,
                            int round, std::uint64_t seed);

struct EngineConfig {
    double eta_g = 1.0;
    double eta_l = 0.01;
    int epochs = 5;       // E
    int rounds = 10;      // T
    int batch_size = 0;   // 0 means full shard
    AggregationMode mode = AggregationMode::server_displacement;
    StrategySpec strategy;
    int hfl_period = 5;   // t_Global, HFL baseline only
    int probe_rounds = 0; // rounds that collect assumption probes
    std::optional<MobilitySpec> mobility;
    // Account per-round latency over client<->cloud links (single-server FL)
    // instead of the regional links.
    bool cloud_links = false;
};

struct RegionalState {
    int round = 0;
    std::map<int, ParamVector> regional;  // w_m

    // Mean of the regional models, the reported global iterate.
    ParamVector mean() const;
};

struct RoundRecord {
    int t = 0;
    double global_loss = 0.0;  // eval-set cross-entropy at the regional mean
    double global_acc = 0.0;
    double grad_norm_sq = 0.0;  // ||grad f(mean)||^2 on the training objective
    std::vector<double> region_grad_norm_sq;
    double latency_s = 0.0;
    double cumulative_latency_s = 0.0;
    std::string strategy;
    std::string mode;
    double train_loss = 0.0;   // f(mean); not part of the CSV row
    int distinct_participants = 0;
};

void write_csv_header(std::ostream& out, int num_servers);
void write_csv_row(std::ostream& out, const RoundRecord& rec);

// Per-round snapshot used by the theory estimators.
struct RoundProbe {
    int t = 0;
    Topology topo;                          // topology in effect that round
    ParticipationPlan plan;
    std::map<int, ParamVector> regional;    // w_m^{t+1}
    std::map<int, ParamVector> trained;     // w_i^{t+1} for trained clients
    std::map<int, double> sigma_sq;         // per-client minibatch deviation probe
};

struct RunTrace {
    std::vector<RoundProbe> rounds;
};

struct RunResult {
    ParamVector final_global;
    std::vector<RoundRecord> records;
    RunTrace trace;
    double initial_train_loss = 0.0;  // f(w^0)
};

// Initial model from each client's accessible regional models: the mean over
// theta_i (just w_m for non-overlap clients).
ParamVector client_init(int client_id, const RegionalState& state, const Topology& topo);

class Engine {
  public:
    Engine(Topology topo, DataMap data, ModelSpec model, EngineConfig config,
           LatencyParams latency, ClientDataset eval_set, std::uint64_t seed);

    // One MS-FedAvg round: dedup-train every sampled client, then aggregate
    // each server over its own (multi)set. Mutates `state`, returns the record.
    RoundRecord run_round(RegionalState& state, const ParticipationPlan& plan,
                          const Topology& topo, double cumulative_latency_before,
                          RoundProbe* probe);

    RunResult run();
    RunResult run_hfl_baseline();

    const Topology& topology() const { return topo_; }
    const EngineConfig& config() const { return config_; }

  private:
    RoundRecord make_record(const RegionalState& state, const Topology& topo,
                            int t, int distinct, double latency_s,
                            double cumulative_latency_s) const;
    double train_loss_and_grad_norm(const ParamVector& at, double* grad_norm_sq) const;

    Topology topo_;
    DataMap data_;
    ModelSpec model_;
    EngineConfig config_;
    LatencyParams latency_;
    ClientDataset eval_;
    std::uint64_t seed_;
};

std::string to_string(AggregationMode mode);
AggregationMode aggregation_mode_from_string(const std::string& s);

}  // namespace msfl
