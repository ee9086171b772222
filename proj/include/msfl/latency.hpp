#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "msfl/participation.hpp"
#include "msfl/topology.hpp"

namespace msfl {

enum class FadingMode { deterministic, rayleigh };

// Units of the three bandwidth fields: "total" is a budget shared by the
// transmitters of the round (b = B / count); "per_client" is already one
// channel's width and is used as-is.
enum class BandwidthUnits { total, per_client };

struct LatencyParams {
    double bandwidth_cr_hz = 475e6;  // client <-> regional server budget
    double bandwidth_rc_hz = 850e6;  // regional server <-> cloud budget
    double bandwidth_cc_hz = 150e6;  // client <-> cloud budget
    double power_up_dbm = 23.0;
    double power_down_dbm = 23.0;
    double noise_dbm = -107.0;
    double model_bits = 0.0;  // q
    FadingMode fading = FadingMode::deterministic;
    BandwidthUnits units = BandwidthUnits::total;
};

double dbm_to_mw(double dbm);
// 128.1 + 37.6 log10(d / km), in dB.
double path_loss_db(double d_km);
// Spectral efficiency log2(1 + snr) in bits/s/Hz.
double rate_from_snr(double snr);
// Rate over a faded path-loss link; fading_power multiplies |g|^2.
double link_rate(double power_dbm, double d_km, double noise_dbm,
                 double fading_power = 1.0);

// max_i q/(b r_up_i) + max_i q/(b r_down_i); the slowest link governs each
// direction. Rates are in bits/s/Hz, q in bits, b in Hz.
double latency_from_rates(std::span<const double> up_rates,
                          std::span<const double> down_rates, double q_bits,
                          double b_hz);

// Round latency of the multi-server architecture: uploads go to sampling
// servers only, downloads come from every accessible server of each
// participant (broadcast).
double round_latency_multi(const Topology& topo, const ParticipationPlan& plan,
                           const LatencyParams& params, std::uint64_t seed,
                           int round);

// Single central server over the client-to-cloud links.
double round_latency_single(const Topology& topo, std::span<const int> participants,
                            const LatencyParams& params, std::uint64_t seed,
                            int round);

// Lowest-id accessible server per client; the HFL partition.
std::map<int, int> hfl_assignment(const Topology& topo);

// HFL edge-aggregation round: every participant talks to its assigned server
// only. `participants` maps server -> sorted client ids.
double round_latency_hfl_regional(const Topology& topo,
                                  const std::map<int, std::vector<int>>& participants,
                                  const LatencyParams& params, std::uint64_t seed,
                                  int round);

// HFL cloud-aggregation term over the server <-> cloud links.
double hfl_global_latency(const Topology& topo, const LatencyParams& params,
                          std::uint64_t seed, int round);

// Sum of per-round latencies plus one re-cluster charge (a fraction of that
// round's latency) every `recluster_every` rounds.
double total_latency_cfl(std::span<const double> round_latency_s,
                         int recluster_every, double cluster_cost_fraction);

std::string to_string(FadingMode mode);
FadingMode fading_mode_from_string(const std::string& s);
std::string to_string(BandwidthUnits units);
BandwidthUnits bandwidth_units_from_string(const std::string& s);

}  // namespace msfl
