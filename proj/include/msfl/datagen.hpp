#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <vector>

#include "msfl/topology.hpp"

namespace msfl {

struct DataGenSpec {
    int num_classes = 10;        // C
    int feature_dim = 10;        // d_f
    int shard_size = 64;         // samples per client, identical everywhere
    double dirichlet_alpha = 0.4;
    double class_separation = 1.0;
};

struct ClientDataset {
    int client_id = -1;
    int feature_dim = 0;
    int num_classes = 0;
    std::vector<double> features;  // row-major, size() * feature_dim
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    const double* row(std::size_t i) const { return features.data() + i * static_cast<std::size_t>(feature_dim); }
};

using DataMap = std::map<int, ClientDataset>;

// Label-skewed shards: per-client class proportions ~ Dirichlet(alpha * 1_C),
// features ~ N(separation * e_{c mod d_f}, I). Each client depends only on
// (seed, client id), so generation parallelizes and reorders freely.
DataMap generate(const DataGenSpec& spec, const Topology& topo, std::uint64_t seed);

// Held-out iid set from the class-balanced mixture, on its own stream.
ClientDataset global_eval_set(const DataGenSpec& spec, int n_eval, std::uint64_t seed);

// Columns: label, f_0..f_{d_f-1}.
void write_csv(const ClientDataset& data, std::ostream& out);

// Empirical label entropy in nats.
double label_entropy(const ClientDataset& data);

}  // namespace msfl
