#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "msfl/engine.hpp"

namespace msfl {
namespace theory {

// Empirical stand-ins for the assumption constants. Maxima over finite
// probes, so they are lower bounds of the true constants.
struct AssumptionEstimates {
    double smoothness = 0.0;                              // L
    std::map<int, double> sigma_sq;                       // per server
    std::map<int, std::map<AreaType, double>> alpha_sq;   // per (server, type)
};

// max ||grad f(u) - grad f(v)|| / ||u - v|| over random parameter pairs,
// f being the mean loss over all shards.
double estimate_smoothness(const DataMap& data, const ModelSpec& model,
                           std::uint64_t seed, int n_pairs = 20,
                           double scale = 1.0);

AssumptionEstimates estimate_assumptions(const RunTrace& trace, const DataMap& data,
                                         const ModelSpec& model, std::uint64_t seed,
                                         int smoothness_pairs = 20);

// Scalar inputs of the convergence statements, one entry per region with its
// per-type counts. For unbiased strategies K uses the expected per-type count
// K_m * N_{m,theta} / N_m; for biased it is the configured quota.
struct TheoremInputs {
    double eta_g = 0.0;
    double eta_l = 0.0;
    double smoothness = 0.0;  // L
    double epochs = 0.0;      // E
    double rounds = 0.0;      // T
    double num_servers = 0.0; // M
    double c = 1.0;
    double f0 = 0.0;
    double fstar = 0.0;

    struct TypeTerm {
        double clients = 0.0;   // N_{m,theta}
        double sampled = 0.0;   // K_{m,theta}
        double alpha_sq = 0.0;
    };
    struct Region {
        int server = 0;
        double clients = 0.0;   // N_m
        double sampled = 0.0;   // K_m
        double sigma_sq = 0.0;
        std::vector<TypeTerm> types;
    };
    std::vector<Region> regions;
};

TheoremInputs make_theorem_inputs(const AssumptionEstimates& estimates,
                                  const Topology& topo, const EngineConfig& config,
                                  double c, double f0, double fstar);

// Learning-rate preconditions evaluated verbatim from the statements.
// Boundary equality counts as satisfied. Thresholds with several regions use
// the worst region.
struct LrConditionReport {
    double eta_l = 0.0;
    double lemma1_threshold = 0.0;
    bool lemma1 = false;
    double strategy_threshold = 0.0;  // Theorem 1/2/3 min{...} bound
    bool strategy = false;
    double composite_value = 0.0;     // partial strategies: must be < 1
    bool composite = true;
    bool all() const { return lemma1 && strategy && composite; }
    nlohmann::json to_json() const;
};

LrConditionReport validate_lr(const TheoremInputs& in, StrategyKind kind,
                              SamplingScheme scheme);

// Printed bound pieces: vanishing term plus Psi (full) or Psi_1..3 (partial).
struct BoundTerms {
    double vanishing = 0.0;
    double psi = 0.0;                 // full participation
    double psi1 = 0.0, psi2 = 0.0, psi3 = 0.0;
    double total = 0.0;
    double dominant = 0.0;            // corollary rate 1/sqrt(N_m E T) or 1/sqrt(K_m E T)
};

// `biased_beta_with_alpha` selects the alpha-weighted reading of Theorem 3's
// beta (the printed one omits the alpha^2 factor); ignored elsewhere.
BoundTerms evaluate_bound_terms(const TheoremInputs& in, StrategyKind kind,
                                SamplingScheme scheme,
                                bool biased_beta_with_alpha = false);

struct BoundReport {
    LrConditionReport conditions;
    BoundTerms terms;
    // Theorem 3 beta ambiguity: both readings, labeled.
    double biased_total_beta_literal = 0.0;
    double biased_total_beta_alpha = 0.0;
    std::map<std::string, double> c_sensitivity;  // total at c in {0.5, 1, 2}
    std::string fstar_label;                      // "given" or "best_observed"
    std::string estimate_label =
        "empirical lower bounds of the assumption constants";
    nlohmann::json to_json() const;
};

BoundReport evaluate_bound(const AssumptionEstimates& estimates, const Topology& topo,
                           const EngineConfig& config, double c, double f0,
                           double fstar, const std::string& fstar_label);

}  // namespace theory
}  // namespace msfl
