#include "msfl/reference.hpp"

#include <algorithm>
#include <set>

namespace msfl {
namespace reference {

ParamVector fedavg_round(const ParamVector& global, const DataMap& data,
                         std::span<const int> participants, int epochs,
                         int batch_size, double eta_l, std::uint64_t seed,
                         int round) {
    ParamVector accum = global;
    std::fill(accum.values.begin(), accum.values.end(), 0.0);
    for (int id : participants) {
        RngStream shuffle(seed, StreamDomain::local_shuffle,
                          static_cast<std::uint64_t>(round),
                          static_cast<std::uint64_t>(id));
        ParamVector local = sgd_epochs(global, data.at(id), epochs, batch_size,
                                       eta_l, shuffle);
        for (std::size_t k = 0; k < accum.values.size(); ++k) {
            accum.values[k] += local.values[k];
        }
    }
    const double count = static_cast<double>(participants.size());
    for (auto& v : accum.values) v /= count;
    return accum;
}

std::vector<ParamVector> fedavg_run(const ParamVector& w0, const DataMap& data,
                                    std::span<const int> participants, int rounds,
                                    int epochs, int batch_size, double eta_l,
                                    std::uint64_t seed) {
    std::vector<ParamVector> trajectory;
    ParamVector w = w0;
    for (int t = 0; t < rounds; ++t) {
        w = fedavg_round(w, data, participants, epochs, batch_size, eta_l, seed, t);
        trajectory.push_back(w);
    }
    return trajectory;
}

std::map<int, ParamVector> msfedavg_round(const std::map<int, ParamVector>& regional,
                                          const Topology& topo, const DataMap& data,
                                          const ParticipationPlan& plan,
                                          AggregationMode mode, double eta_g,
                                          double eta_l, int epochs, int batch_size,
                                          std::uint64_t seed, int round) {
    // Train each distinct sampled client once from its averaged init.
    std::set<int> sampled;
    for (const auto& [m, list] : plan.selected) sampled.insert(list.begin(), list.end());

    std::map<int, ParamVector> inits;
    std::map<int, ParamVector> uploads;
    for (int id : sampled) {
        const auto& type = topo.client(id).type;
        ParamVector w0 = regional.at(type.front());
        bool all_equal = true;
        for (std::size_t k = 1; k < type.size(); ++k) {
            all_equal = all_equal && regional.at(type[k]).values == w0.values;
        }
        if (!all_equal) {
            for (std::size_t k = 1; k < type.size(); ++k) {
                const auto& other = regional.at(type[k]).values;
                for (std::size_t j = 0; j < w0.values.size(); ++j) w0.values[j] += other[j];
            }
            for (auto& v : w0.values) v /= static_cast<double>(type.size());
        }
        RngStream shuffle(seed, StreamDomain::local_shuffle,
                          static_cast<std::uint64_t>(round),
                          static_cast<std::uint64_t>(id));
        uploads.emplace(id, sgd_epochs(w0, data.at(id), epochs, batch_size, eta_l, shuffle));
        inits.emplace(id, std::move(w0));
    }

    std::map<int, ParamVector> next = regional;
    for (auto& [m, w] : next) {
        const auto& list = plan.selected.at(m);
        const double count = static_cast<double>(list.size());
        std::vector<double> acc(w.values.size(), 0.0);
        for (int id : list) {
            const auto& up = uploads.at(id).values;
            if (mode == AggregationMode::client_delta) {
                const auto& start = inits.at(id).values;
                for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += up[k] - start[k];
            } else if (mode == AggregationMode::server_displacement) {
                for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += up[k] - w.values[k];
            } else {
                for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += up[k];
            }
        }
        for (auto& v : acc) v /= count;
        switch (mode) {
            case AggregationMode::literal:
                for (std::size_t k = 0; k < w.values.size(); ++k) w.values[k] = eta_g * acc[k];
                break;
            case AggregationMode::server_displacement:
            case AggregationMode::client_delta:
                for (std::size_t k = 0; k < w.values.size(); ++k) w.values[k] += eta_g * acc[k];
                break;
        }
    }
    return next;
}

}  // namespace reference
}  // namespace msfl
