#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "msfl/engine.hpp"

namespace msfl {

// Straight-line serial implementations kept alongside the OpenMP engine.
// They share the model and RNG primitives but re-code the orchestration with
// plain loops, so tests can cross-check the engine and the benchmark has a
// serial baseline.
namespace reference {

// Classic single-server FedAvg step: every participant starts from the global
// model, trains E epochs, and the server takes the plain average.
ParamVector fedavg_round(const ParamVector& global, const DataMap& data,
                         std::span<const int> participants, int epochs,
                         int batch_size, double eta_l, std::uint64_t seed,
                         int round);

// Full single-server trajectory; returns the model after every round.
std::vector<ParamVector> fedavg_run(const ParamVector& w0, const DataMap& data,
                                    std::span<const int> participants, int rounds,
                                    int epochs, int batch_size, double eta_l,
                                    std::uint64_t seed);

// One MS-FedAvg round, serial, no dedup table: walks servers and clients in
// plain loops. Semantics match Engine::run_round for any plan and mode.
std::map<int, ParamVector> msfedavg_round(const std::map<int, ParamVector>& regional,
                                          const Topology& topo, const DataMap& data,
                                          const ParticipationPlan& plan,
                                          AggregationMode mode, double eta_g,
                                          double eta_l, int epochs, int batch_size,
                                          std::uint64_t seed, int round);

}  // namespace reference
}  // namespace msfl
