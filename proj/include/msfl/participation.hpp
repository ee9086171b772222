#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "msfl/topology.hpp"

namespace msfl {

enum class SamplingScheme {
    with_replacement,     // scheme I
    without_replacement,  // scheme II
};

enum class StrategyKind { full, unbiased, biased };

// Per-server per-type quotas K_{m,theta}. K_m is the quota sum per server.
struct BiasSpec {
    std::map<int, std::map<AreaType, int>> quotas;

    // Builds per-type quotas from per-class totals (class = |theta|): each
    // server's class total splits evenly across its concrete types of that
    // class. Fails if a total is not divisible.
    static BiasSpec from_class_totals(const Topology& topo,
                                      const std::map<int, int>& class_totals);
    void validate(const Topology& topo, SamplingScheme scheme) const;
    int server_quota(int server) const;
};

struct ParticipationPlan {
    int round = 0;
    StrategyKind strategy = StrategyKind::full;
    SamplingScheme scheme = SamplingScheme::without_replacement;
    // Sorted multiset per server; duplicates mean multiplicity under scheme I.
    std::map<int, std::vector<int>> selected;
    // K_{m,theta} realized counts.
    std::map<int, std::map<AreaType, int>> per_type;

    // Distinct client ids across all servers, sorted.
    std::vector<int> distinct_clients() const;
    // One JSON line per server: {t, m, clients, per_type}.
    std::vector<std::string> to_json_lines() const;
};

ParticipationPlan sample_full(const Topology& topo, int round);

// Scheme I: K_m uniform draws with replacement from the region.
// Scheme II: K_m distinct clients uniformly without replacement.
ParticipationPlan sample_unbiased(const Topology& topo, int per_server_count,
                                  SamplingScheme scheme, int round,
                                  std::uint64_t seed);

// Draws the configured quota inside each area type.
ParticipationPlan sample_biased(const Topology& topo, const BiasSpec& spec,
                                SamplingScheme scheme, int round,
                                std::uint64_t seed);

std::string to_string(StrategyKind k);
std::string to_string(SamplingScheme s);
StrategyKind strategy_kind_from_string(const std::string& s);
SamplingScheme scheme_from_string(const std::string& s);

}  // namespace msfl
