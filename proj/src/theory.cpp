#include "msfl/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace msfl {
namespace theory {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 0/0 reads as an absent term; x/0 with x > 0 as an unconstraining bound.
double safe_div(double num, double den) {
    if (den == 0.0) return num == 0.0 ? 0.0 : kInf;
    return num / den;
}

double sq_norm_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

std::vector<double> mean_region_grad(const ParamVector& at, const Topology& topo,
                                     const DataMap& data, int server) {
    const auto& members = topo.region(server);
    std::vector<double> mean(at.values.size(), 0.0);
    std::vector<double> g(at.values.size(), 0.0);
    for (int id : members) {
        grad_into(at, BatchView::all(data.at(id)), g);
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += g[k];
    }
    for (auto& v : mean) v /= static_cast<double>(members.size());
    return mean;
}

}  // namespace

double estimate_smoothness(const DataMap& data, const ModelSpec& model,
                           std::uint64_t seed, int n_pairs, double scale) {
    if (data.empty()) throw std::invalid_argument("estimate_smoothness: no data");
    RngStream rng(seed, StreamDomain::probe);
    ParamVector u = zero_params(model);
    ParamVector v = zero_params(model);
    std::vector<double> gu(u.values.size()), gv(u.values.size()), acc(u.values.size());

    auto global_grad = [&](const ParamVector& at, std::vector<double>& out) {
        std::fill(out.begin(), out.end(), 0.0);
        std::vector<double> g(out.size());
        for (const auto& [id, shard] : data) {
            grad_into(at, BatchView::all(shard), g);
            for (std::size_t k = 0; k < out.size(); ++k) out[k] += g[k];
        }
        for (auto& x : out) x /= static_cast<double>(data.size());
    };

    double best = 0.0;
    for (int p = 0; p < n_pairs; ++p) {
        for (auto& x : u.values) x = scale * rng.next_normal();
        for (auto& x : v.values) x = scale * rng.next_normal();
        global_grad(u, gu);
        global_grad(v, gv);
        const double dw = std::sqrt(sq_norm_diff(u.values, v.values));
        if (dw == 0.0) continue;
        const double dg = std::sqrt(sq_norm_diff(gu, gv));
        best = std::max(best, dg / dw);
    }
    return best;
}

AssumptionEstimates estimate_assumptions(const RunTrace& trace, const DataMap& data,
                                         const ModelSpec& model, std::uint64_t seed,
                                         int smoothness_pairs) {
    if (trace.rounds.empty()) throw std::invalid_argument("empty run trace");
    AssumptionEstimates est;
    est.smoothness = estimate_smoothness(data, model, seed, smoothness_pairs);

    std::vector<double> gi;
    for (const auto& probe : trace.rounds) {
        for (const auto& [m, wm] : probe.regional) {
            const auto region_grad = mean_region_grad(wm, probe.topo, data, m);
            const auto& list = probe.plan.selected.at(m);
            int prev = -1;
            for (int id : list) {
                if (id == prev) continue;
                prev = id;
                auto it = probe.trained.find(id);
                if (it == probe.trained.end()) continue;
                gi.assign(wm.values.size(), 0.0);
                grad_into(it->second, BatchView::all(data.at(id)), gi);
                const double dev = sq_norm_diff(gi, region_grad);
                auto& slot = est.alpha_sq[m][probe.topo.client(id).type];
                slot = std::max(slot, dev);
                auto sit = probe.sigma_sq.find(id);
                if (sit != probe.sigma_sq.end()) {
                    auto& sig = est.sigma_sq[m];
                    sig = std::max(sig, sit->second);
                }
            }
        }
    }
    return est;
}

TheoremInputs make_theorem_inputs(const AssumptionEstimates& estimates,
                                  const Topology& topo, const EngineConfig& config,
                                  double c, double f0, double fstar) {
    TheoremInputs in;
    in.eta_g = config.eta_g;
    in.eta_l = config.eta_l;
    in.smoothness = estimates.smoothness;
    in.epochs = static_cast<double>(config.epochs);
    in.rounds = static_cast<double>(config.rounds);
    in.num_servers = static_cast<double>(topo.num_servers());
    in.c = c;
    in.f0 = f0;
    in.fstar = fstar;

    const auto& strategy = config.strategy;
    BiasSpec bias = strategy.bias;
    if (strategy.kind == StrategyKind::biased && !strategy.class_totals.empty()) {
        bias = BiasSpec::from_class_totals(topo, strategy.class_totals);
    }

    for (int m = 1; m <= topo.num_servers(); ++m) {
        TheoremInputs::Region region;
        region.server = m;
        region.clients = static_cast<double>(topo.region_size(m));
        auto sit = estimates.sigma_sq.find(m);
        region.sigma_sq = sit == estimates.sigma_sq.end() ? 0.0 : sit->second;

        double k_m = 0.0;
        for (const auto& type : topo.types_of_region(m)) {
            TheoremInputs::TypeTerm term;
            term.clients = static_cast<double>(topo.type_count_in_region(m, type));
            switch (strategy.kind) {
                case StrategyKind::full:
                    term.sampled = term.clients;
                    break;
                case StrategyKind::unbiased:
                    term.sampled = static_cast<double>(strategy.per_server_count) *
                                   term.clients / region.clients;
                    break;
                case StrategyKind::biased: {
                    auto qit = bias.quotas.find(m);
                    if (qit != bias.quotas.end()) {
                        auto tq = qit->second.find(type);
                        term.sampled = tq == qit->second.end()
                                           ? 0.0
                                           : static_cast<double>(tq->second);
                    }
                    break;
                }
            }
            auto ait = estimates.alpha_sq.find(m);
            if (ait != estimates.alpha_sq.end()) {
                auto tit = ait->second.find(type);
                if (tit != ait->second.end()) term.alpha_sq = tit->second;
            }
            k_m += term.sampled;
            region.types.push_back(term);
        }
        region.sampled = strategy.kind == StrategyKind::unbiased
                             ? static_cast<double>(strategy.per_server_count)
                             : k_m;
        if (strategy.kind == StrategyKind::full) region.sampled = region.clients;
        in.regions.push_back(std::move(region));
    }
    return in;
}

LrConditionReport validate_lr(const TheoremInputs& in, StrategyKind kind,
                              SamplingScheme scheme) {
    const double L = in.smoothness;
    const double E = in.epochs;
    const double T = in.rounds;
    LrConditionReport rep;
    rep.eta_l = in.eta_l;
    rep.lemma1_threshold = 1.0 / (std::sqrt(30.0) * L * E);
    rep.lemma1 = in.eta_l <= rep.lemma1_threshold;

    if (kind == StrategyKind::full) {
        rep.strategy_threshold =
            std::min(1.0 / (std::sqrt(30.0) * L * E), 1.0 / (L * E * in.eta_g));
        rep.strategy = in.eta_l <= rep.strategy_threshold;
        rep.composite_value = 0.0;
        rep.composite = true;
        return rep;
    }

    double threshold = kInf;
    double composite = 0.0;
    for (const auto& r : in.regions) {
        double type_sum = 0.0;
        double cond_sum = 0.0;
        if (kind == StrategyKind::unbiased) {
            if (scheme == SamplingScheme::with_replacement) {
                double n_sum = 0.0;
                for (const auto& t : r.types) {
                    type_sum += safe_div(t.clients * (t.sampled - 1.0),
                                         E * L * in.eta_g * r.sampled * r.clients);
                    n_sum += t.clients;
                }
                cond_sum = L * in.eta_g * in.eta_l * n_sum / (r.sampled * r.clients) *
                           (90.0 * E * E * E * L * L * in.eta_l * in.eta_l + 3.0 * E);
            } else {
                for (const auto& t : r.types) {
                    type_sum += safe_div(
                        r.sampled * r.sampled * t.clients * (t.clients - 1.0),
                        E * L * in.eta_g * r.clients * r.clients * t.sampled *
                            (t.sampled - 1.0));
                    cond_sum += safe_div(L * in.eta_g * in.eta_l * (t.sampled - 1.0),
                                         2.0 * r.sampled * (t.clients - 1.0)) *
                                (90.0 * E * E * E * L * L * in.eta_l * in.eta_l + 3.0 * E);
                }
            }
        } else {  // biased
            if (scheme == SamplingScheme::with_replacement) {
                for (const auto& t : r.types) {
                    type_sum += safe_div(t.sampled * (t.sampled - 1.0),
                                         E * L * in.eta_g * r.sampled * r.sampled);
                    cond_sum += safe_div(L * in.eta_g * in.eta_l * t.sampled * t.sampled,
                                         r.sampled * r.sampled * t.clients) *
                                (90.0 * E * E * E * L * L * in.eta_l * in.eta_l + 3.0 * E);
                }
            } else {
                for (const auto& t : r.types) {
                    type_sum += safe_div(
                        t.sampled * t.sampled * (t.clients - 1.0),
                        E * L * in.eta_g * t.clients * r.sampled * (t.sampled - 1.0));
                    cond_sum += safe_div(
                                    L * in.eta_g * in.eta_l * t.sampled *
                                        (t.clients - t.sampled),
                                    r.sampled * t.clients * (t.clients - 1.0)) *
                                (90.0 * E * E * E * L * L * in.eta_l * in.eta_l + 3.0 * E);
                }
            }
        }
        // First threshold branch as printed per strategy/scheme.
        double first;
        if (kind == StrategyKind::unbiased) {
            first = 1.0 / (std::sqrt(30.0) * E * L);
        } else if (scheme == SamplingScheme::with_replacement) {
            first = 1.0 / (std::sqrt(30.0) * E * T);
        } else {
            first = 1.0 / (std::sqrt(30.0) * r.sampled * L);
        }
        threshold = std::min(threshold, std::min(first, type_sum));
        composite = std::max(
            composite, 30.0 * E * E * L * L * in.eta_l * in.eta_l + cond_sum);
    }
    rep.strategy_threshold = threshold;
    rep.strategy = in.eta_l <= threshold;
    rep.composite_value = composite;
    rep.composite = composite < 1.0;
    return rep;
}

BoundTerms evaluate_bound_terms(const TheoremInputs& in, StrategyKind kind,
                                SamplingScheme scheme, bool biased_beta_with_alpha) {
    const double L = in.smoothness;
    const double E = in.epochs;
    const double T = in.rounds;
    const double M = in.num_servers;
    const double c = in.c;
    const double eg = in.eta_g;
    const double el = in.eta_l;

    BoundTerms out;
    out.vanishing = (in.f0 - in.fstar) / (c * M * E * T * eg * el);

    if (kind == StrategyKind::full) {
        double psi = 0.0;
        for (const auto& r : in.regions) {
            double region_term = L * eg * el / (2.0 * M * r.clients) * r.sigma_sq;
            for (const auto& t : r.types) {
                region_term += 5.0 * t.clients * E * L * L * el * el /
                               (2.0 * M * r.clients) *
                               (r.sigma_sq +
                                6.0 * E * t.clients / (M * r.clients) * t.alpha_sq);
            }
            psi += region_term;
        }
        out.psi = psi / c;
        out.total = out.vanishing + out.psi;
        double dom = 0.0;
        for (const auto& r : in.regions) dom += 1.0 / std::sqrt(r.clients * E * T);
        out.dominant = dom / M;
        return out;
    }

    double psi1 = 0.0, psi2 = 0.0, psi3 = 0.0;
    for (const auto& r : in.regions) {
        if (kind == StrategyKind::unbiased) {
            if (scheme == SamplingScheme::with_replacement) {
                psi1 += E * L * eg * el / (2.0 * c * M * r.sampled) * r.sigma_sq;
                for (const auto& t : r.types) {
                    const double beta = r.sigma_sq +
                                        6.0 * E * t.clients * t.alpha_sq / r.clients;
                    psi2 += 3.0 * E * L * eg * el * t.clients /
                            (2.0 * c * M * r.sampled * r.clients) * t.alpha_sq;
                    psi3 += (5.0 * t.clients * E * L * L * el * el /
                                 (2.0 * c * M * r.clients) +
                             15.0 * t.clients * E * E * L * L * L * eg * el * el * el /
                                 (c * M * r.sampled * r.clients)) *
                            beta;
                }
            } else {
                psi1 += L * eg * el / (2.0 * c * M * r.sampled) * r.sigma_sq;
                for (const auto& t : r.types) {
                    const double beta = r.sigma_sq +
                                        6.0 * E * t.clients * t.alpha_sq / r.clients;
                    psi2 += safe_div(2.0 * E * L * L * eg * el * t.clients *
                                         (t.clients - t.sampled),
                                     c * M * r.sampled * r.clients * (t.clients - 1.0)) *
                            t.alpha_sq;
                    psi3 += (5.0 * E * L * L * L * el * el * t.clients /
                                 (2.0 * c * M * r.clients) +
                             safe_div(15.0 * E * E * L * L * L * eg * el * el * el *
                                          t.clients * (t.clients - t.sampled),
                                      2.0 * c * M * r.clients * r.sampled *
                                          (t.clients - 1.0))) *
                            beta;
                }
            }
        } else {  // biased
            psi1 += L * eg * el / (2.0 * c * M * r.sampled) * r.sigma_sq;
            for (const auto& t : r.types) {
                const double beta =
                    biased_beta_with_alpha
                        ? r.sigma_sq + 6.0 * E * t.sampled * t.alpha_sq / r.sampled
                        : r.sigma_sq + 6.0 * E * t.sampled / r.sampled;
                if (scheme == SamplingScheme::with_replacement) {
                    psi2 += safe_div(3.0 * E * L * eg * el * t.sampled * t.sampled *
                                         t.sampled,
                                     2.0 * c * M * r.sampled * r.sampled * r.sampled *
                                         t.clients) *
                            t.alpha_sq;
                    psi3 += (5.0 * E * L * L * el * el * t.sampled /
                                 (2.0 * c * M * r.sampled) +
                             safe_div(15.0 * E * E * L * L * L * eg * el * el * el *
                                          t.sampled * t.sampled,
                                      2.0 * c * M * r.sampled * r.sampled * t.clients)) *
                            beta;
                } else {
                    psi2 += safe_div(3.0 * L * eg * el * t.sampled *
                                         (t.clients - t.sampled),
                                     2.0 * c * r.sampled * r.sampled * t.clients *
                                         (t.clients - 1.0)) *
                            t.alpha_sq;
                    psi3 += E * L * L * el * el *
                            (5.0 * t.sampled * E * L * L * el * el /
                                 (2.0 * c * M * r.sampled) +
                             safe_div(15.0 * E * E * L * L * L * eg * el * el * el *
                                          t.sampled * (t.clients - t.sampled),
                                      2.0 * c * M * r.sampled * t.clients *
                                          (t.clients - 1.0))) *
                            beta;
                }
            }
        }
    }
    out.psi1 = psi1;
    out.psi2 = psi2;
    out.psi3 = psi3;
    out.total = out.vanishing + psi1 + psi2 + psi3;
    double dom = 0.0;
    for (const auto& r : in.regions) dom += 1.0 / std::sqrt(r.sampled * E * T);
    out.dominant = dom / M;
    return out;
}

nlohmann::json LrConditionReport::to_json() const {
    return {{"eta_l", eta_l},
            {"lemma1_threshold", lemma1_threshold},
            {"lemma1", lemma1},
            {"strategy_threshold", strategy_threshold},
            {"strategy", strategy},
            {"composite_value", composite_value},
            {"composite", composite},
            {"all", all()}};
}

nlohmann::json BoundReport::to_json() const {
    nlohmann::json j{{"conditions", conditions.to_json()},
                     {"vanishing", terms.vanishing},
                     {"psi", terms.psi},
                     {"psi1", terms.psi1},
                     {"psi2", terms.psi2},
                     {"psi3", terms.psi3},
                     {"total", terms.total},
                     {"dominant_term", terms.dominant},
                     {"c_sensitivity", c_sensitivity},
                     {"fstar_label", fstar_label},
                     {"estimate_label", estimate_label}};
    if (biased_total_beta_literal != 0.0 || biased_total_beta_alpha != 0.0) {
        j["biased_total_beta_literal"] = biased_total_beta_literal;
        j["biased_total_beta_alpha_weighted"] = biased_total_beta_alpha;
    }
    return j;
}

BoundReport evaluate_bound(const AssumptionEstimates& estimates, const Topology& topo,
                           const EngineConfig& config, double c, double f0,
                           double fstar, const std::string& fstar_label) {
    if (c <= 0.0) throw std::invalid_argument("constant c must be positive");
    const StrategyKind kind = config.strategy.kind;
    const SamplingScheme scheme = config.strategy.scheme;

    TheoremInputs in = make_theorem_inputs(estimates, topo, config, c, f0, fstar);
    BoundReport rep;
    rep.conditions = validate_lr(in, kind, scheme);
    rep.terms = evaluate_bound_terms(in, kind, scheme);
    rep.fstar_label = fstar_label;
    if (kind == StrategyKind::biased) {
        rep.biased_total_beta_literal = rep.terms.total;
        rep.biased_total_beta_alpha =
            evaluate_bound_terms(in, kind, scheme, true).total;
    }
    for (double cv : {0.5, 1.0, 2.0}) {
        TheoremInputs sens = in;
        sens.c = cv;
        std::ostringstream key;
        key << "c=" << cv;
        rep.c_sensitivity[key.str()] =
            evaluate_bound_terms(sens, kind, scheme).total;
    }
    return rep;
}

}  // namespace theory
}  // namespace msfl
