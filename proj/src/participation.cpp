#include "msfl/participation.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace msfl {

namespace {

std::vector<int> sample_with_replacement(const std::vector<int>& pool, int k,
                                         RngStream& rng) {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        out.push_back(pool[rng.next_below(pool.size())]);
    }
    return out;
}

std::vector<int> sample_without_replacement(const std::vector<int>& pool, int k,
                                            RngStream& rng) {
    std::vector<int> shuffled = pool;
    // Partial Fisher-Yates: only the first k slots are needed.
    for (int i = 0; i < k; ++i) {
        const std::size_t j =
            static_cast<std::size_t>(i) +
            static_cast<std::size_t>(rng.next_below(shuffled.size() - static_cast<std::size_t>(i)));
        std::swap(shuffled[static_cast<std::size_t>(i)], shuffled[j]);
    }
    shuffled.resize(static_cast<std::size_t>(k));
    return shuffled;
}

void record_types(const Topology& topo, ParticipationPlan& plan, int server) {
    auto& counts = plan.per_type[server];
    for (const auto& type : topo.types_of_region(server)) counts[type] = 0;
    for (int id : plan.selected[server]) ++counts[topo.client(id).type];
}

}  // namespace

BiasSpec BiasSpec::from_class_totals(const Topology& topo,
                                     const std::map<int, int>& class_totals) {
    BiasSpec spec;
    for (int m = 1; m <= topo.num_servers(); ++m) {
        std::map<int, std::vector<AreaType>> by_class;
        for (const auto& type : topo.types_of_region(m)) {
            by_class[static_cast<int>(type.size())].push_back(type);
        }
        for (const auto& [cls, total] : class_totals) {
            if (total == 0) continue;
            auto it = by_class.find(cls);
            if (it == by_class.end()) {
                throw std::invalid_argument(
                    "server " + std::to_string(m) + " has no area type of class " +
                    std::to_string(cls));
            }
            const int n_types = static_cast<int>(it->second.size());
            if (total % n_types != 0) {
                throw std::invalid_argument(
                    "class total " + std::to_string(total) + " does not split evenly over " +
                    std::to_string(n_types) + " types of class " + std::to_string(cls));
            }
            for (const auto& type : it->second) spec.quotas[m][type] = total / n_types;
        }
    }
    return spec;
}

void BiasSpec::validate(const Topology& topo, SamplingScheme scheme) const {
    if (quotas.empty()) throw std::invalid_argument("empty bias spec");
    for (const auto& [m, per_type] : quotas) {
        for (const auto& [type, quota] : per_type) {
            if (quota < 0) throw std::invalid_argument("negative sampling quota");
            const int available = topo.type_count_in_region(m, type);
            if (quota > 0 && available == 0) {
                throw std::invalid_argument("quota on empty area type");
            }
            if (scheme == SamplingScheme::without_replacement && quota > available) {
                std::ostringstream msg;
                msg << "quota " << quota << " exceeds type population " << available
                    << " for server " << m;
                throw std::invalid_argument(msg.str());
            }
        }
    }
}

int BiasSpec::server_quota(int server) const {
    auto it = quotas.find(server);
    if (it == quotas.end()) return 0;
    int total = 0;
    for (const auto& [type, q] : it->second) total += q;
    return total;
}

std::vector<int> ParticipationPlan::distinct_clients() const {
    std::set<int> ids;
    for (const auto& [m, list] : selected) ids.insert(list.begin(), list.end());
    return std::vector<int>(ids.begin(), ids.end());
}

std::vector<std::string> ParticipationPlan::to_json_lines() const {
    std::vector<std::string> lines;
    for (const auto& [m, list] : selected) {
        nlohmann::json per_type_json = nlohmann::json::object();
        auto it = per_type.find(m);
        if (it != per_type.end()) {
            for (const auto& [type, count] : it->second) {
                std::ostringstream key;
                for (std::size_t k = 0; k < type.size(); ++k) {
                    if (k) key << ',';
                    key << type[k];
                }
                per_type_json[key.str()] = count;
            }
        }
        nlohmann::json line = {{"t", round}, {"m", m}, {"clients", list},
                               {"per_type", per_type_json}};
        lines.push_back(line.dump());
    }
    return lines;
}

ParticipationPlan sample_full(const Topology& topo, int round) {
    ParticipationPlan plan;
    plan.round = round;
    plan.strategy = StrategyKind::full;
    for (int m = 1; m <= topo.num_servers(); ++m) {
        plan.selected[m] = topo.region(m);
        record_types(topo, plan, m);
    }
    return plan;
}

ParticipationPlan sample_unbiased(const Topology& topo, int per_server_count,
                                  SamplingScheme scheme, int round,
                                  std::uint64_t seed) {
    if (per_server_count < 1) throw std::invalid_argument("need a positive sample count");
    ParticipationPlan plan;
    plan.round = round;
    plan.strategy = StrategyKind::unbiased;
    plan.scheme = scheme;
    for (int m = 1; m <= topo.num_servers(); ++m) {
        const auto& pool = topo.region(m);
        if (scheme == SamplingScheme::without_replacement &&
            per_server_count > static_cast<int>(pool.size())) {
            throw std::invalid_argument(
                "sample count exceeds region size under scheme II");
        }
        RngStream rng(seed, StreamDomain::participation, static_cast<std::uint64_t>(round),
                      static_cast<std::uint64_t>(m));
        auto picked = scheme == SamplingScheme::with_replacement
                          ? sample_with_replacement(pool, per_server_count, rng)
                          : sample_without_replacement(pool, per_server_count, rng);
        std::sort(picked.begin(), picked.end());
        plan.selected[m] = std::move(picked);
        record_types(topo, plan, m);
    }
    return plan;
}

ParticipationPlan sample_biased(const Topology& topo, const BiasSpec& spec,
                                SamplingScheme scheme, int round,
                                std::uint64_t seed) {
    spec.validate(topo, scheme);
    ParticipationPlan plan;
    plan.round = round;
    plan.strategy = StrategyKind::biased;
    plan.scheme = scheme;
    for (const auto& [m, per_type] : spec.quotas) {
        RngStream rng(seed, StreamDomain::participation, static_cast<std::uint64_t>(round),
                      static_cast<std::uint64_t>(m));
        std::vector<int> picked;
        for (const auto& [type, quota] : per_type) {
            if (quota == 0) continue;
            auto it = topo.types().find(type);
            if (it == topo.types().end()) {
                throw std::invalid_argument("quota on unknown area type");
            }
            auto drawn = scheme == SamplingScheme::with_replacement
                             ? sample_with_replacement(it->second, quota, rng)
                             : sample_without_replacement(it->second, quota, rng);
            picked.insert(picked.end(), drawn.begin(), drawn.end());
        }
        std::sort(picked.begin(), picked.end());
        plan.selected[m] = std::move(picked);
        record_types(topo, plan, m);
    }
    return plan;
}

std::string to_string(StrategyKind k) {
    switch (k) {
        case StrategyKind::full: return "full";
        case StrategyKind::unbiased: return "unbiased";
        case StrategyKind::biased: return "biased";
    }
    return "?";
}

std::string to_string(SamplingScheme s) {
    return s == SamplingScheme::with_replacement ? "I" : "II";
}

StrategyKind strategy_kind_from_string(const std::string& s) {
    if (s == "full") return StrategyKind::full;
    if (s == "unbiased") return StrategyKind::unbiased;
    if (s == "biased") return StrategyKind::biased;
    throw std::invalid_argument("unknown strategy: " + s);
}

SamplingScheme scheme_from_string(const std::string& s) {
    if (s == "I" || s == "with_replacement") return SamplingScheme::with_replacement;
    if (s == "II" || s == "without_replacement") return SamplingScheme::without_replacement;
    throw std::invalid_argument("unknown sampling scheme: " + s);
}

}  // namespace msfl
