#include "msfl/topology.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace msfl {

namespace {

constexpr double kMinRegionalKm = 0.1;
constexpr double kMaxRegionalKm = 2.0;
constexpr double kMinCloudKm = 0.5;
constexpr double kMaxCloudKm = 5.0;

std::string format_double(double v) {
    char buf[40];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

void check_type(const AreaType& type, int num_servers) {
    if (type.empty()) throw std::invalid_argument("area type must be non-empty");
    if (!std::is_sorted(type.begin(), type.end())) {
        throw std::invalid_argument("area type must be sorted");
    }
    if (std::adjacent_find(type.begin(), type.end()) != type.end()) {
        throw std::invalid_argument("area type has duplicate server ids");
    }
    if (type.front() < 1 || type.back() > num_servers) {
        throw std::invalid_argument("area type references unknown server id");
    }
}

}  // namespace

std::vector<AreaType> enumerate_types_of_class(int num_servers, int class_size) {
    std::vector<AreaType> out;
    AreaType current;
    // Iterative combinations in lexicographic order.
    std::vector<int> idx(static_cast<std::size_t>(class_size));
    for (int i = 0; i < class_size; ++i) idx[static_cast<std::size_t>(i)] = i + 1;
    if (class_size < 1 || class_size > num_servers) return out;
    for (;;) {
        out.push_back(idx);
        int pos = class_size - 1;
        while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == num_servers - (class_size - 1 - pos)) --pos;
        if (pos < 0) break;
        ++idx[static_cast<std::size_t>(pos)];
        for (int j = pos + 1; j < class_size; ++j) {
            idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
        }
    }
    return out;
}

Topology Topology::build_symmetric(int num_servers, int singleton_count,
                                   int pair_count, int triple_count,
                                   std::uint64_t seed) {
    if (num_servers != 3) {
        throw std::invalid_argument(
            "build_symmetric supports exactly 3 servers; use build_custom for "
            "other layouts");
    }
    if (singleton_count < 0 || pair_count < 0 || triple_count < 0) {
        throw std::invalid_argument("type sizes must be non-negative");
    }
    std::map<AreaType, int> sizes;
    for (const auto& t : enumerate_types_of_class(3, 1)) sizes[t] = singleton_count;
    for (const auto& t : enumerate_types_of_class(3, 2)) sizes[t] = pair_count;
    sizes[{1, 2, 3}] = triple_count;
    return build_custom(3, sizes, seed);
}

Topology Topology::build_custom(int num_servers,
                                const std::map<AreaType, int>& type_sizes,
                                std::uint64_t seed) {
    if (num_servers < 1) throw std::invalid_argument("need at least one server");
    Topology topo;
    topo.num_servers_ = num_servers;
    topo.seed_ = seed;
    int next_id = 0;
    for (const auto& [type, count] : type_sizes) {
        check_type(type, num_servers);
        if (count < 0) throw std::invalid_argument("type size must be non-negative");
        for (int k = 0; k < count; ++k) {
            ClientInfo info;
            info.id = next_id++;
            info.type = type;
            topo.clients_.push_back(std::move(info));
        }
    }
    topo.draw_distances();
    topo.rebuild_indexes();
    topo.validate();
    return topo;
}

void Topology::draw_distances() {
    for (auto& c : clients_) {
        RngStream rng(seed_, StreamDomain::topology, static_cast<std::uint64_t>(c.id), 0);
        c.dist_regional_km.clear();
        for (int m : c.type) {
            c.dist_regional_km[m] = rng.next_uniform(kMinRegionalKm, kMaxRegionalKm);
        }
        c.dist_cloud_km = rng.next_uniform(kMinCloudKm, kMaxCloudKm);
    }
    server_cloud_km_.clear();
    for (int m = 1; m <= num_servers_; ++m) {
        RngStream rng(seed_, StreamDomain::topology, static_cast<std::uint64_t>(m), 1);
        server_cloud_km_[m] = rng.next_uniform(kMinCloudKm, kMaxCloudKm);
    }
}

void Topology::rebuild_indexes() {
    regions_.clear();
    types_.clear();
    for (int m = 1; m <= num_servers_; ++m) regions_[m];
    for (const auto& c : clients_) {
        types_[c.type].push_back(c.id);
        for (int m : c.type) regions_[m].push_back(c.id);
    }
    // Client ids are assigned in increasing order, so members stay sorted.
}

void Topology::validate() const {
    std::size_t in_types = 0;
    for (const auto& [type, members] : types_) {
        check_type(type, num_servers_);
        in_types += members.size();
    }
    if (in_types != clients_.size()) {
        throw std::logic_error("type groups do not partition the client set");
    }
    for (const auto& c : clients_) {
        if (c.dist_regional_km.size() != c.type.size()) {
            throw std::logic_error("client distance map does not match its type");
        }
        for (const auto& [m, d] : c.dist_regional_km) {
            if (d <= 0.0) throw std::logic_error("non-positive regional distance");
            if (!std::binary_search(c.type.begin(), c.type.end(), m)) {
                throw std::logic_error("distance entry for inaccessible server");
            }
        }
        if (c.dist_cloud_km <= 0.0) throw std::logic_error("non-positive cloud distance");
    }
}

const std::vector<int>& Topology::region(int server) const {
    auto it = regions_.find(server);
    if (it == regions_.end()) throw std::out_of_range("unknown server id");
    return it->second;
}

int Topology::type_count_in_region(int server, const AreaType& type) const {
    if (!std::binary_search(type.begin(), type.end(), server)) return 0;
    auto it = types_.find(type);
    return it == types_.end() ? 0 : static_cast<int>(it->second.size());
}

std::vector<AreaType> Topology::types_of_region(int server) const {
    std::vector<AreaType> out;
    for (const auto& [type, members] : types_) {
        if (!members.empty() && std::binary_search(type.begin(), type.end(), server)) {
            out.push_back(type);
        }
    }
    return out;
}

double Topology::server_cloud_km(int server) const {
    auto it = server_cloud_km_.find(server);
    if (it == server_cloud_km_.end()) throw std::out_of_range("unknown server id");
    return it->second;
}

Topology Topology::relocate(const MobilitySpec& spec, RngStream& rng) const {
    double total = 0.0;
    for (const auto& [cls, p] : spec.class_probs) {
        if (cls < 1 || cls > num_servers_) {
            throw std::invalid_argument("mobility class exceeds server count");
        }
        if (p < 0.0) throw std::invalid_argument("negative relocation probability");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument("relocation probabilities must sum to 1");
    }

    // Cache the concrete types per class once.
    std::map<int, std::vector<AreaType>> class_types;
    for (const auto& [cls, p] : spec.class_probs) {
        class_types[cls] = enumerate_types_of_class(num_servers_, cls);
    }

    Topology moved;
    moved.num_servers_ = num_servers_;
    moved.seed_ = seed_;
    moved.clients_ = clients_;
    moved.server_cloud_km_ = server_cloud_km_;
    for (auto& c : moved.clients_) {
        const double u = rng.next_double();
        double acc = 0.0;
        int chosen_class = spec.class_probs.rbegin()->first;
        for (const auto& [cls, p] : spec.class_probs) {
            acc += p;
            if (u < acc) {
                chosen_class = cls;
                break;
            }
        }
        const auto& candidates = class_types[chosen_class];
        c.type = candidates[rng.next_below(candidates.size())];
        c.dist_regional_km.clear();
        for (int m : c.type) {
            c.dist_regional_km[m] = rng.next_uniform(kMinRegionalKm, kMaxRegionalKm);
        }
        c.dist_cloud_km = rng.next_uniform(kMinCloudKm, kMaxCloudKm);
    }
    moved.rebuild_indexes();
    moved.validate();
    return moved;
}

Topology Topology::hfl_partition() const {
    Topology part;
    part.num_servers_ = num_servers_;
    part.seed_ = seed_;
    part.clients_ = clients_;
    part.server_cloud_km_ = server_cloud_km_;
    for (auto& c : part.clients_) {
        const int assigned = c.type.front();
        const double d = c.dist_regional_km.at(assigned);
        c.type = {assigned};
        c.dist_regional_km = {{assigned, d}};
    }
    part.rebuild_indexes();
    part.validate();
    return part;
}

nlohmann::json Topology::to_json() const {
    nlohmann::json types = nlohmann::json::array();
    for (const auto& [type, members] : types_) {
        types.push_back({{"servers", type}, {"count", members.size()}});
    }
    return {{"M", num_servers_}, {"types", types}, {"seed", seed_}};
}

Topology Topology::from_json(const nlohmann::json& j) {
    const int num_servers = j.at("M").get<int>();
    std::map<AreaType, int> sizes;
    for (const auto& entry : j.at("types")) {
        AreaType type = entry.at("servers").get<AreaType>();
        std::sort(type.begin(), type.end());
        sizes[type] += entry.at("count").get<int>();
    }
    return build_custom(num_servers, sizes, j.at("seed").get<std::uint64_t>());
}

std::string Topology::canonical_string() const {
    std::ostringstream out;
    out << "M=" << num_servers_ << " seed=" << seed_ << "\n";
    for (const auto& c : clients_) {
        out << c.id << " type=";
        for (std::size_t k = 0; k < c.type.size(); ++k) {
            if (k) out << ',';
            out << c.type[k];
        }
        for (int m : c.type) out << " d" << m << "=" << format_double(c.dist_regional_km.at(m));
        out << " dc=" << format_double(c.dist_cloud_km) << "\n";
    }
    for (const auto& [m, d] : server_cloud_km_) {
        out << "server " << m << " dc=" << format_double(d) << "\n";
    }
    return out.str();
}

}  // namespace msfl
