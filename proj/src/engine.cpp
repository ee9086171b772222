#include "msfl/engine.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

namespace msfl {

namespace {

void write_double(std::ostream& out, double v) {
    char buf[40];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, ptr - buf);
}

void add_into(std::vector<double>& acc, const std::vector<double>& v) {
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += v[k];
}

void divide_by(std::vector<double>& acc, double count) {
    for (auto& x : acc) x /= count;
}

}  // namespace

ParamVector RegionalState::mean() const {
    if (regional.empty()) throw std::logic_error("no regional models");
    // Averaging identical vectors must be exact, not identical up to rounding.
    bool all_equal = true;
    for (const auto& [m, w] : regional) {
        all_equal = all_equal && w.values == regional.begin()->second.values;
    }
    if (all_equal) return regional.begin()->second;
    ParamVector out = regional.begin()->second;
    std::fill(out.values.begin(), out.values.end(), 0.0);
    for (const auto& [m, w] : regional) add_into(out.values, w.values);
    divide_by(out.values, static_cast<double>(regional.size()));
    return out;
}

ParticipationPlan make_plan(const Topology& topo, const StrategySpec& strategy,
                            int round, std::uint64_t seed) {
    switch (strategy.kind) {
        case StrategyKind::full:
            return sample_full(topo, round);
        case StrategyKind::unbiased:
            return sample_unbiased(topo, strategy.per_server_count, strategy.scheme,
                                   round, seed);
        case StrategyKind::biased: {
            const BiasSpec& spec = strategy.class_totals.empty()
                                       ? strategy.bias
                                       : BiasSpec::from_class_totals(topo, strategy.class_totals);
            if (strategy.class_totals.empty()) {
                return sample_biased(topo, strategy.bias, strategy.scheme, round, seed);
            }
            return sample_biased(topo, spec, strategy.scheme, round, seed);
        }
    }
    throw std::logic_error("unreachable strategy kind");
}

ParamVector client_init(int client_id, const RegionalState& state, const Topology& topo) {
    const auto& type = topo.client(client_id).type;
    ParamVector out = state.regional.at(type.front());
    if (type.size() == 1) return out;
    bool all_equal = true;
    for (std::size_t k = 1; k < type.size(); ++k) {
        all_equal = all_equal && state.regional.at(type[k]).values == out.values;
    }
    if (all_equal) return out;
    for (std::size_t k = 1; k < type.size(); ++k) {
        add_into(out.values, state.regional.at(type[k]).values);
    }
    divide_by(out.values, static_cast<double>(type.size()));
    return out;
}

Engine::Engine(Topology topo, DataMap data, ModelSpec model, EngineConfig config,
               LatencyParams latency, ClientDataset eval_set, std::uint64_t seed)
    : topo_(std::move(topo)),
      data_(std::move(data)),
      model_(model),
      config_(config),
      latency_(latency),
      eval_(std::move(eval_set)),
      seed_(seed) {
    if (config_.eta_g <= 0.0 || config_.eta_l < 0.0) {
        throw std::invalid_argument("learning rates must be positive");
    }
    if (config_.rounds < 0 || config_.epochs < 1) {
        throw std::invalid_argument("invalid round/epoch counts");
    }
    for (const auto& c : topo_.clients()) {
        if (!data_.count(c.id)) {
            throw std::invalid_argument("missing dataset for client " + std::to_string(c.id));
        }
    }
    if (latency_.model_bits <= 0.0) {
        latency_.model_bits = 32.0 * static_cast<double>(model_.param_count());
    }
}

RoundRecord Engine::run_round(RegionalState& state, const ParticipationPlan& plan,
                              const Topology& topo, double cumulative_latency_before,
                              RoundProbe* probe) {
    for (const auto& [m, w] : state.regional) {
        auto it = plan.selected.find(m);
        if (it == plan.selected.end() || it->second.empty()) {
            throw std::invalid_argument("round " + std::to_string(state.round) +
                                        ": empty plan for server " + std::to_string(m));
        }
    }

    const std::vector<int> participants = plan.distinct_clients();
    const int n = static_cast<int>(participants.size());
    std::map<int, int> slot;
    for (int idx = 0; idx < n; ++idx) slot[participants[static_cast<std::size_t>(idx)]] = idx;

    // Every sampled client trains exactly once, even when several servers
    // sampled it; slots keep the result order independent of scheduling.
    std::vector<ParamVector> inits(static_cast<std::size_t>(n));
    std::vector<ParamVector> trained(static_cast<std::size_t>(n));
    std::vector<double> sigma(static_cast<std::size_t>(n), 0.0);
    const int t = state.round;

#pragma omp parallel for schedule(dynamic)
    for (int idx = 0; idx < n; ++idx) {
        const int id = participants[static_cast<std::size_t>(idx)];
        inits[static_cast<std::size_t>(idx)] = client_init(id, state, topo);
        RngStream shuffle(seed_, StreamDomain::local_shuffle,
                          static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(id));
        trained[static_cast<std::size_t>(idx)] = sgd_epochs(
            inits[static_cast<std::size_t>(idx)], data_.at(id), config_.epochs,
            config_.batch_size, config_.eta_l, shuffle,
            probe ? &sigma[static_cast<std::size_t>(idx)] : nullptr);
    }

    for (auto& [m, w] : state.regional) {
        const auto& list = plan.selected.at(m);
        const double count = static_cast<double>(list.size());
        std::vector<double> acc(w.values.size(), 0.0);
        switch (config_.mode) {
            case AggregationMode::literal: {
                for (int id : list) add_into(acc, trained[static_cast<std::size_t>(slot.at(id))].values);
                divide_by(acc, count);
                for (std::size_t k = 0; k < w.values.size(); ++k) {
                    w.values[k] = config_.eta_g * acc[k];
                }
                break;
            }
            case AggregationMode::server_displacement: {
                // Accumulated as differences so a no-op round leaves the
                // model bit-identical.
                for (int id : list) {
                    const auto& up = trained[static_cast<std::size_t>(slot.at(id))].values;
                    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += up[k] - w.values[k];
                }
                divide_by(acc, count);
                for (std::size_t k = 0; k < w.values.size(); ++k) {
                    w.values[k] += config_.eta_g * acc[k];
                }
                break;
            }
            case AggregationMode::client_delta: {
                for (int id : list) {
                    const int idx = slot.at(id);
                    const auto& up = trained[static_cast<std::size_t>(idx)].values;
                    const auto& start = inits[static_cast<std::size_t>(idx)].values;
                    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += up[k] - start[k];
                }
                divide_by(acc, count);
                for (std::size_t k = 0; k < w.values.size(); ++k) {
                    w.values[k] += config_.eta_g * acc[k];
                }
                break;
            }
        }
    }
    state.round = t + 1;

    const double latency_s =
        config_.cloud_links
            ? round_latency_single(topo, participants, latency_, seed_, t)
            : round_latency_multi(topo, plan, latency_, seed_, t);
    RoundRecord rec = make_record(state, topo, t, n, latency_s,
                                  cumulative_latency_before + latency_s);

    if (probe) {
        probe->t = t;
        probe->topo = topo;
        probe->plan = plan;
        probe->regional = state.regional;
        for (int idx = 0; idx < n; ++idx) {
            const int id = participants[static_cast<std::size_t>(idx)];
            probe->trained.emplace(id, trained[static_cast<std::size_t>(idx)]);
            probe->sigma_sq[id] = sigma[static_cast<std::size_t>(idx)];
        }
    }
    return rec;
}

double Engine::train_loss_and_grad_norm(const ParamVector& at, double* grad_norm_sq) const {
    const int n = topo_.num_clients();
    std::vector<double> losses(static_cast<std::size_t>(n), 0.0);
    std::vector<std::vector<double>> grads(static_cast<std::size_t>(n));

#pragma omp parallel for schedule(dynamic)
    for (int id = 0; id < n; ++id) {
        auto& g = grads[static_cast<std::size_t>(id)];
        g.assign(at.values.size(), 0.0);
        losses[static_cast<std::size_t>(id)] =
            loss_and_grad(at, BatchView::all(data_.at(id)), g);
    }

    std::vector<double> mean_grad(at.values.size(), 0.0);
    double mean_loss = 0.0;
    for (int id = 0; id < n; ++id) {
        mean_loss += losses[static_cast<std::size_t>(id)];
        add_into(mean_grad, grads[static_cast<std::size_t>(id)]);
    }
    mean_loss /= static_cast<double>(n);
    divide_by(mean_grad, static_cast<double>(n));
    if (grad_norm_sq) {
        double norm = 0.0;
        for (double g : mean_grad) norm += g * g;
        *grad_norm_sq = norm;
    }
    return mean_loss;
}

RoundRecord Engine::make_record(const RegionalState& state, const Topology& topo,
                                int t, int distinct, double latency_s,
                                double cumulative_latency_s) const {
    RoundRecord rec;
    rec.t = t;
    rec.strategy = to_string(config_.strategy.kind);
    if (config_.strategy.kind != StrategyKind::full) {
        rec.strategy += "-" + to_string(config_.strategy.scheme);
    }
    rec.mode = to_string(config_.mode);
    rec.latency_s = latency_s;
    rec.cumulative_latency_s = cumulative_latency_s;
    rec.distinct_participants = distinct;

    const ParamVector global = state.mean();
    if (eval_.size() > 0) {
        rec.global_loss = loss(global, BatchView::all(eval_));
        rec.global_acc = accuracy(global, eval_);
    }
    rec.train_loss = train_loss_and_grad_norm(global, &rec.grad_norm_sq);

    // Per-region gradient norms at each server's own iterate.
    for (const auto& [m, w] : state.regional) {
        const auto& members = topo.region(m);
        std::vector<std::vector<double>> grads(members.size());

#pragma omp parallel for schedule(dynamic)
        for (int j = 0; j < static_cast<int>(members.size()); ++j) {
            auto& g = grads[static_cast<std::size_t>(j)];
            g.assign(w.values.size(), 0.0);
            grad_into(w, BatchView::all(data_.at(members[static_cast<std::size_t>(j)])), g);
        }
        std::vector<double> mean_grad(w.values.size(), 0.0);
        for (const auto& g : grads) add_into(mean_grad, g);
        if (!members.empty()) divide_by(mean_grad, static_cast<double>(members.size()));
        double norm = 0.0;
        for (double g : mean_grad) norm += g * g;
        rec.region_grad_norm_sq.push_back(norm);
    }
    return rec;
}

RunResult Engine::run() {
    RunResult result;
    const ParamVector w0 = init_params(model_, seed_);
    RegionalState state;
    for (int m = 1; m <= topo_.num_servers(); ++m) state.regional[m] = w0;
    result.initial_train_loss = train_loss_and_grad_norm(w0, nullptr);

    Topology current = topo_;
    double cumulative = 0.0;
    for (int t = 0; t < config_.rounds; ++t) {
        if (config_.mobility && t > 0) {
            RngStream rng(seed_, StreamDomain::mobility, static_cast<std::uint64_t>(t));
            current = current.relocate(*config_.mobility, rng);
        }
        const ParticipationPlan plan = make_plan(current, config_.strategy, t, seed_);
        RoundProbe probe;
        const bool want_probe = t < config_.probe_rounds;
        RoundRecord rec = run_round(state, plan, current, cumulative, want_probe ? &probe : nullptr);
        cumulative = rec.cumulative_latency_s;
        result.records.push_back(std::move(rec));
        if (want_probe) result.trace.rounds.push_back(std::move(probe));
    }
    result.final_global = state.mean();
    return result;
}

RunResult Engine::run_hfl_baseline() {
    if (config_.hfl_period < 1) throw std::invalid_argument("t_Global must be >= 1");
    const Topology partitioned = topo_.hfl_partition();

    RunResult result;
    const ParamVector w0 = init_params(model_, seed_);
    RegionalState state;
    for (int m = 1; m <= partitioned.num_servers(); ++m) state.regional[m] = w0;
    result.initial_train_loss = train_loss_and_grad_norm(w0, nullptr);

    double cumulative = 0.0;
    for (int t = 0; t < config_.rounds; ++t) {
        const ParticipationPlan plan = make_plan(partitioned, config_.strategy, t, seed_);
        RoundProbe probe;
        const bool want_probe = t < config_.probe_rounds;
        RoundRecord rec = run_round(state, plan, partitioned, cumulative,
                                    want_probe ? &probe : nullptr);
        if ((t + 1) % config_.hfl_period == 0) {
            // Cloud aggregation: all regional models collapse to their mean.
            const ParamVector merged = state.mean();
            for (auto& [m, w] : state.regional) w = merged;
            const double global_s = hfl_global_latency(partitioned, latency_, seed_, t);
            rec.latency_s += global_s;
            rec.cumulative_latency_s += global_s;
            // Metrics and probes describe the post-sync state.
            RoundRecord synced = make_record(state, partitioned, t, rec.distinct_participants,
                                             rec.latency_s, rec.cumulative_latency_s);
            synced.strategy = rec.strategy;
            synced.mode = rec.mode;
            rec = synced;
            if (want_probe) probe.regional = state.regional;
        }
        cumulative = rec.cumulative_latency_s;
        result.records.push_back(std::move(rec));
        if (want_probe) result.trace.rounds.push_back(std::move(probe));
    }
    result.final_global = state.mean();
    return result;
}

void write_csv_header(std::ostream& out, int num_servers) {
    out << "t,global_loss,global_acc,grad_norm_sq";
    for (int m = 1; m <= num_servers; ++m) out << ",region_grad_norm_sq_" << m;
    out << ",latency_s,cumulative_latency_s,strategy,mode\n";
}

void write_csv_row(std::ostream& out, const RoundRecord& rec) {
    out << rec.t << ',';
    write_double(out, rec.global_loss);
    out << ',';
    write_double(out, rec.global_acc);
    out << ',';
    write_double(out, rec.grad_norm_sq);
    for (double g : rec.region_grad_norm_sq) {
        out << ',';
        write_double(out, g);
    }
    out << ',';
    write_double(out, rec.latency_s);
    out << ',';
    write_double(out, rec.cumulative_latency_s);
    out << ',' << rec.strategy << ',' << rec.mode << "\n";
}

std::string to_string(AggregationMode mode) {
    switch (mode) {
        case AggregationMode::literal: return "literal";
        case AggregationMode::server_displacement: return "displacement";
        case AggregationMode::client_delta: return "delta";
    }
    return "?";
}

AggregationMode aggregation_mode_from_string(const std::string& s) {
    if (s == "literal") return AggregationMode::literal;
    if (s == "displacement") return AggregationMode::server_displacement;
    if (s == "delta") return AggregationMode::client_delta;
    throw std::invalid_argument("unknown aggregation mode: " + s);
}

}  // namespace msfl
