#include "msfl/datagen.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

namespace msfl {

namespace {

void check_spec(const DataGenSpec& spec) {
    if (spec.num_classes < 1 || spec.feature_dim < 1 || spec.shard_size < 0 ||
        spec.dirichlet_alpha <= 0.0 || spec.class_separation <= 0.0) {
        throw std::invalid_argument("invalid data generation spec");
    }
}

ClientDataset make_shard(const DataGenSpec& spec, int client_id, int n,
                         const std::vector<double>& proportions, RngStream& rng) {
    ClientDataset shard;
    shard.client_id = client_id;
    shard.feature_dim = spec.feature_dim;
    shard.num_classes = spec.num_classes;
    shard.labels.reserve(static_cast<std::size_t>(n));
    shard.features.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(spec.feature_dim));
    for (int s = 0; s < n; ++s) {
        const double u = rng.next_double();
        double acc = 0.0;
        int label = spec.num_classes - 1;
        for (int c = 0; c < spec.num_classes; ++c) {
            acc += proportions[static_cast<std::size_t>(c)];
            if (u < acc) {
                label = c;
                break;
            }
        }
        shard.labels.push_back(label);
        const int mean_coord = label % spec.feature_dim;
        for (int d = 0; d < spec.feature_dim; ++d) {
            double v = rng.next_normal();
            if (d == mean_coord) v += spec.class_separation;
            shard.features.push_back(v);
        }
    }
    return shard;
}

}  // namespace

DataMap generate(const DataGenSpec& spec, const Topology& topo, std::uint64_t seed) {
    check_spec(spec);
    const int n_clients = topo.num_clients();
    std::vector<ClientDataset> shards(static_cast<std::size_t>(n_clients));

#pragma omp parallel for schedule(dynamic)
    for (int id = 0; id < n_clients; ++id) {
        RngStream rng(seed, StreamDomain::datagen, static_cast<std::uint64_t>(id));
        std::vector<double> proportions(static_cast<std::size_t>(spec.num_classes));
        double total = 0.0;
        for (auto& p : proportions) {
            p = rng.next_gamma(spec.dirichlet_alpha);
            total += p;
        }
        for (auto& p : proportions) p /= total;
        shards[static_cast<std::size_t>(id)] =
            make_shard(spec, id, spec.shard_size, proportions, rng);
    }

    DataMap out;
    for (auto& shard : shards) out.emplace(shard.client_id, std::move(shard));
    return out;
}

ClientDataset global_eval_set(const DataGenSpec& spec, int n_eval, std::uint64_t seed) {
    check_spec(spec);
    if (n_eval < 0) throw std::invalid_argument("n_eval must be non-negative");
    RngStream rng(seed, StreamDomain::eval_set);
    const std::vector<double> uniform(static_cast<std::size_t>(spec.num_classes),
                                      1.0 / spec.num_classes);
    return make_shard(spec, -1, n_eval, uniform, rng);
}

void write_csv(const ClientDataset& data, std::ostream& out) {
    out << "label";
    for (int d = 0; d < data.feature_dim; ++d) out << ",f_" << d;
    out << "\n";
    char buf[40];
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << data.labels[i];
        const double* x = data.row(i);
        for (int d = 0; d < data.feature_dim; ++d) {
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x[d]);
            out << ',';
            out.write(buf, ptr - buf);
        }
        out << "\n";
    }
}

double label_entropy(const ClientDataset& data) {
    if (data.size() == 0) return 0.0;
    std::vector<double> counts(static_cast<std::size_t>(data.num_classes), 0.0);
    for (int y : data.labels) counts[static_cast<std::size_t>(y)] += 1.0;
    double h = 0.0;
    for (double c : counts) {
        if (c > 0.0) {
            const double p = c / static_cast<double>(data.size());
            h -= p * std::log(p);
        }
    }
    return h;
}

}  // namespace msfl
