#include "msfl/latency.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace msfl {

namespace {

// Fading substream coordinates. The cloud takes server slot 0; direction is
// the low bit so uplink and downlink of one link stay decorrelated.
std::uint64_t link_key(int client_id, int server, int direction) {
    return (static_cast<std::uint64_t>(client_id + 1) << 9) |
           (static_cast<std::uint64_t>(server) << 1) |
           static_cast<std::uint64_t>(direction);
}

double fading_power(const LatencyParams& params, std::uint64_t seed, int round,
                    std::uint64_t key) {
    if (params.fading == FadingMode::deterministic) return 1.0;
    RngStream rng(seed, StreamDomain::fading, static_cast<std::uint64_t>(round), key);
    return rng.next_exponential();
}

double channel_bandwidth(const LatencyParams& params, double budget_hz,
                         std::size_t transmitters) {
    if (budget_hz <= 0.0) throw std::invalid_argument("bandwidth must be positive");
    if (params.units == BandwidthUnits::per_client) return budget_hz;
    if (transmitters == 0) throw std::invalid_argument("no transmitting clients");
    return budget_hz / static_cast<double>(transmitters);
}

void check_params(const LatencyParams& params) {
    if (params.model_bits <= 0.0) throw std::invalid_argument("model size must be positive");
}

}  // namespace

double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }

double path_loss_db(double d_km) {
    if (d_km <= 0.0) throw std::invalid_argument("distance must be positive");
    return 128.1 + 37.6 * std::log10(d_km);
}

double rate_from_snr(double snr) { return std::log2(1.0 + snr); }

double link_rate(double power_dbm, double d_km, double noise_dbm, double fading_power) {
    const double gain = std::pow(10.0, -path_loss_db(d_km) / 10.0) * fading_power;
    const double snr = dbm_to_mw(power_dbm) * gain / dbm_to_mw(noise_dbm);
    return rate_from_snr(snr);
}

double latency_from_rates(std::span<const double> up_rates,
                          std::span<const double> down_rates, double q_bits,
                          double b_hz) {
    if (up_rates.empty() || down_rates.empty()) {
        throw std::invalid_argument("latency needs at least one link per direction");
    }
    double up = 0.0;
    for (double r : up_rates) up = std::max(up, q_bits / (b_hz * r));
    double down = 0.0;
    for (double r : down_rates) down = std::max(down, q_bits / (b_hz * r));
    return up + down;
}

double round_latency_multi(const Topology& topo, const ParticipationPlan& plan,
                           const LatencyParams& params, std::uint64_t seed,
                           int round) {
    check_params(params);
    const auto participants = plan.distinct_clients();
    if (participants.empty()) throw std::invalid_argument("empty participation plan");
    const double b = channel_bandwidth(params, params.bandwidth_cr_hz, participants.size());

    std::vector<double> up;
    for (const auto& [m, list] : plan.selected) {
        int prev = -1;
        for (int id : list) {
            if (id == prev) continue;  // multiplicity does not add links
            prev = id;
            up.push_back(link_rate(params.power_up_dbm,
                                   topo.client(id).dist_regional_km.at(m),
                                   params.noise_dbm,
                                   fading_power(params, seed, round, link_key(id, m, 0))));
        }
    }
    std::vector<double> down;
    for (int id : participants) {
        for (int m : topo.client(id).type) {
            down.push_back(link_rate(params.power_down_dbm,
                                     topo.client(id).dist_regional_km.at(m),
                                     params.noise_dbm,
                                     fading_power(params, seed, round, link_key(id, m, 1))));
        }
    }
    return latency_from_rates(up, down, params.model_bits, b);
}

double round_latency_single(const Topology& topo, std::span<const int> participants,
                            const LatencyParams& params, std::uint64_t seed,
                            int round) {
    check_params(params);
    if (participants.empty()) throw std::invalid_argument("no participants");
    const double b = channel_bandwidth(params, params.bandwidth_cc_hz, participants.size());
    std::vector<double> up, down;
    for (int id : participants) {
        const double d = topo.client(id).dist_cloud_km;
        up.push_back(link_rate(params.power_up_dbm, d, params.noise_dbm,
                               fading_power(params, seed, round, link_key(id, 0, 0))));
        down.push_back(link_rate(params.power_down_dbm, d, params.noise_dbm,
                                 fading_power(params, seed, round, link_key(id, 0, 1))));
    }
    return latency_from_rates(up, down, params.model_bits, b);
}

std::map<int, int> hfl_assignment(const Topology& topo) {
    std::map<int, int> assigned;
    for (const auto& c : topo.clients()) assigned[c.id] = c.type.front();
    return assigned;
}

double round_latency_hfl_regional(const Topology& topo,
                                  const std::map<int, std::vector<int>>& participants,
                                  const LatencyParams& params, std::uint64_t seed,
                                  int round) {
    check_params(params);
    std::size_t count = 0;
    for (const auto& [m, list] : participants) count += list.size();
    if (count == 0) throw std::invalid_argument("no participants");
    const double b = channel_bandwidth(params, params.bandwidth_cr_hz, count);
    std::vector<double> up, down;
    for (const auto& [m, list] : participants) {
        for (int id : list) {
            const double d = topo.client(id).dist_regional_km.at(m);
            up.push_back(link_rate(params.power_up_dbm, d, params.noise_dbm,
                                   fading_power(params, seed, round, link_key(id, m, 0))));
            down.push_back(link_rate(params.power_down_dbm, d, params.noise_dbm,
                                     fading_power(params, seed, round, link_key(id, m, 1))));
        }
    }
    return latency_from_rates(up, down, params.model_bits, b);
}

double hfl_global_latency(const Topology& topo, const LatencyParams& params,
                          std::uint64_t seed, int round) {
    check_params(params);
    const double b = channel_bandwidth(params, params.bandwidth_rc_hz,
                                       static_cast<std::size_t>(topo.num_servers()));
    std::vector<double> up, down;
    for (int m = 1; m <= topo.num_servers(); ++m) {
        const double d = topo.server_cloud_km(m);
        up.push_back(link_rate(params.power_up_dbm, d, params.noise_dbm,
                               fading_power(params, seed, round, link_key(-1, m, 0))));
        down.push_back(link_rate(params.power_down_dbm, d, params.noise_dbm,
                                 fading_power(params, seed, round, link_key(-1, m, 1))));
    }
    return latency_from_rates(up, down, params.model_bits, b);
}

double total_latency_cfl(std::span<const double> round_latency_s,
                         int recluster_every, double cluster_cost_fraction) {
    if (recluster_every < 1) throw std::invalid_argument("recluster period must be >= 1");
    if (cluster_cost_fraction < 0.0) throw std::invalid_argument("negative cluster cost");
    double total = 0.0;
    for (std::size_t t = 0; t < round_latency_s.size(); ++t) {
        total += round_latency_s[t];
        if ((t + 1) % static_cast<std::size_t>(recluster_every) == 0) {
            total += cluster_cost_fraction * round_latency_s[t];
        }
    }
    return total;
}

std::string to_string(FadingMode mode) {
    return mode == FadingMode::deterministic ? "deterministic" : "rayleigh";
}

FadingMode fading_mode_from_string(const std::string& s) {
    if (s == "deterministic") return FadingMode::deterministic;
    if (s == "rayleigh") return FadingMode::rayleigh;
    throw std::invalid_argument("unknown fading mode: " + s);
}

std::string to_string(BandwidthUnits units) {
    return units == BandwidthUnits::total ? "total" : "per_client";
}

BandwidthUnits bandwidth_units_from_string(const std::string& s) {
    if (s == "total") return BandwidthUnits::total;
    if (s == "per_client") return BandwidthUnits::per_client;
    throw std::invalid_argument("unknown bandwidth units: " + s);
}

}  // namespace msfl
