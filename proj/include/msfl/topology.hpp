#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "msfl/rng.hpp"

namespace msfl {

// An area type is the exact set of regional servers a client can reach,
// kept sorted so it can serve as a map key. Server ids are 1-based.
using AreaType = std::vector<int>;

struct ClientInfo {
    int id = 0;
    AreaType type;
    std::map<int, double> dist_regional_km;  // one entry per server in `type`
    double dist_cloud_km = 0.0;
};

// Per-round relocation probabilities keyed by type class (|theta|: 1 =
// non-overlapping, 2 = two-server overlap, ...). Must sum to one.
struct MobilitySpec {
    std::map<int, double> class_probs;
};

// Immutable multi-server coverage topology. Regions and type groups are
// derived views over `clients`; distances are a pure function of `seed`.
class Topology {
  public:
    Topology() = default;  // empty; fill via a builder

    static Topology build_symmetric(int num_servers, int singleton_count,
                                    int pair_count, int triple_count,
                                    std::uint64_t seed);
    static Topology build_custom(int num_servers,
                                 const std::map<AreaType, int>& type_sizes,
                                 std::uint64_t seed);

    // Redraws every client's type: sample a class size from `spec`, then a
    // concrete type of that class uniformly. Distances are redrawn too.
    Topology relocate(const MobilitySpec& spec, RngStream& rng) const;

    int num_servers() const { return num_servers_; }
    int num_clients() const { return static_cast<int>(clients_.size()); }
    std::uint64_t seed() const { return seed_; }

    const std::vector<ClientInfo>& clients() const { return clients_; }
    const ClientInfo& client(int id) const { return clients_.at(static_cast<std::size_t>(id)); }

    // N_m: sorted client ids covered by server m.
    const std::vector<int>& region(int server) const;
    int region_size(int server) const { return static_cast<int>(region(server).size()); }

    // All area types with at least one client, with their members.
    const std::map<AreaType, std::vector<int>>& types() const { return types_; }
    // N_{m,theta}; zero when theta has no clients or m is not in theta.
    int type_count_in_region(int server, const AreaType& type) const;
    // Types theta with m in theta and N_{m,theta} > 0, in sorted order.
    std::vector<AreaType> types_of_region(int server) const;

    double server_cloud_km(int server) const;

    // HFL view: each client keeps only its lowest-id accessible server, so
    // regions partition the client set. Ids, datasets and distances persist.
    Topology hfl_partition() const;

    nlohmann::json to_json() const;
    static Topology from_json(const nlohmann::json& j);
    // Stable textual dump of the full topology including distances.
    std::string canonical_string() const;

  private:
    void rebuild_indexes();
    void draw_distances();
    void validate() const;

    int num_servers_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<ClientInfo> clients_;
    std::map<int, std::vector<int>> regions_;
    std::map<AreaType, std::vector<int>> types_;
    std::map<int, double> server_cloud_km_;
};

// All size-k subsets of {1..M}, sorted.
std::vector<AreaType> enumerate_types_of_class(int num_servers, int class_size);

}  // namespace msfl
