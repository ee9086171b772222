#include <doctest.h>

#include <cmath>

#include "msfl/latency.hpp"
#include "msfl/runner.hpp"

using namespace msfl;

TEST_CASE("path loss at 1 km is exactly the model intercept") {
    CHECK(path_loss_db(1.0) == 128.1);
    CHECK(path_loss_db(10.0) == doctest::Approx(128.1 + 37.6).epsilon(1e-12));
    CHECK_THROWS_AS(path_loss_db(0.0), std::invalid_argument);
}

TEST_CASE("snr of 3 gives 2 bits/s/Hz") {
    CHECK(rate_from_snr(3.0) == 2.0);
    CHECK(rate_from_snr(0.0) == 0.0);
}

TEST_CASE("23 dBm converts to about 199.526 mW") {
    // Independent evaluation of 10^(23/10).
    CHECK(dbm_to_mw(23.0) == doctest::Approx(199.52623149688797).epsilon(1e-12));
    CHECK(dbm_to_mw(0.0) == 1.0);
}

TEST_CASE("two-client fixture: slowest link governs each direction") {
    const double up[] = {2.0, 1.0};
    const double down[] = {2.0, 1.0};
    const double tau = latency_from_rates(up, down, 1e6, 1e7);
    CHECK(std::abs(tau - 0.2) < 1e-9);
}

TEST_CASE("equal rates reduce to a single client's round trip") {
    const double rates[] = {1.5, 1.5, 1.5};
    const double tau = latency_from_rates(rates, rates, 4e6, 2e6);
    CHECK(tau == doctest::Approx(2.0 * 4e6 / (2e6 * 1.5)).epsilon(1e-12));
}

TEST_CASE("identical formula inputs give identical single and multi latency") {
    const double up[] = {0.8, 1.2, 2.5};
    const double down[] = {1.1, 0.9, 3.0};
    CHECK(latency_from_rates(up, down, 1e6, 5e6) ==
          latency_from_rates(up, down, 1e6, 5e6));
}

namespace {

RunConfig fixture_config(FadingMode fading) {
    RunConfig cfg = preset_config("symmetric-fig3");
    cfg.engine.rounds = 6;
    cfg.latency.fading = fading;
    return cfg;
}

}  // namespace

TEST_CASE("doubling bandwidth halves the round latency exactly") {
    RunConfig cfg = fixture_config(FadingMode::deterministic);
    const Topology topo = cfg.build_topology();
    const auto plan = sample_full(topo, 0);

    LatencyParams params = cfg.latency;
    params.model_bits = 1e6;
    const double tau = round_latency_multi(topo, plan, params, cfg.seed, 0);
    params.bandwidth_cr_hz *= 2.0;
    const double tau2 = round_latency_multi(topo, plan, params, cfg.seed, 0);
    CHECK(tau2 == doctest::Approx(tau / 2.0).epsilon(1e-12));
}

TEST_CASE("latency is monotone in bandwidth, payload and distance") {
    RngStream rng(77, StreamDomain::test);
    for (int trial = 0; trial < 20; ++trial) {
        const int u = 2 + static_cast<int>(rng.next_below(8));
        const std::uint64_t seed = rng.next_u64() % 1000;
        const Topology topo = Topology::build_symmetric(
            3, u, 1 + static_cast<int>(rng.next_below(5)),
            1 + static_cast<int>(rng.next_below(5)), seed);
        const auto plan = sample_full(topo, 0);

        LatencyParams params;
        params.fading = FadingMode::deterministic;
        params.model_bits = 1e5 + rng.next_double() * 1e7;
        params.bandwidth_cr_hz = 1e6 + rng.next_double() * 1e9;
        const double base = round_latency_multi(topo, plan, params, seed, 0);

        LatencyParams more_bw = params;
        more_bw.bandwidth_cr_hz *= 1.0 + rng.next_double() * 3.0;
        CHECK(round_latency_multi(topo, plan, more_bw, seed, 0) <= base);

        LatencyParams more_bits = params;
        more_bits.model_bits *= 1.0 + rng.next_double() * 3.0;
        CHECK(round_latency_multi(topo, plan, more_bits, seed, 0) >= base);
    }

    // Distance monotonicity on a raw link.
    for (int trial = 0; trial < 20; ++trial) {
        const double d = 0.1 + rng.next_double() * 4.0;
        const double factor = 1.0 + rng.next_double() * 2.0;
        CHECK(link_rate(23.0, d * factor, -107.0) <= link_rate(23.0, d, -107.0));
    }
}

TEST_CASE("removing the slowest client never increases round latency") {
    RunConfig cfg = fixture_config(FadingMode::rayleigh);
    const Topology topo = cfg.build_topology();
    LatencyParams params = cfg.latency;
    params.model_bits = 1e6;
    params.units = BandwidthUnits::per_client;  // isolate the max rule from b

    for (int t = 0; t < 5; ++t) {
        const auto plan = sample_unbiased(topo, 12, SamplingScheme::without_replacement,
                                          t, cfg.seed);
        const double full = round_latency_multi(topo, plan, params, cfg.seed, t);

        // Identify the slowest uploader and drop it from every server.
        int slowest = -1;
        double worst = -1.0;
        for (const auto& [m, list] : plan.selected) {
            for (int id : list) {
                const double r = link_rate(params.power_up_dbm,
                                           topo.client(id).dist_regional_km.at(m),
                                           params.noise_dbm, 1.0);
                const double tau = params.model_bits / (params.bandwidth_cr_hz * r);
                if (tau > worst) {
                    worst = tau;
                    slowest = id;
                }
            }
        }
        ParticipationPlan trimmed = plan;
        bool any_left = true;
        for (auto& [m, list] : trimmed.selected) {
            list.erase(std::remove(list.begin(), list.end(), slowest), list.end());
            any_left = any_left && !list.empty();
        }
        if (!any_left) continue;
        // Deterministic fading keeps per-link rates fixed across the two calls.
        LatencyParams det = params;
        det.fading = FadingMode::deterministic;
        const double full_det = round_latency_multi(topo, plan, det, cfg.seed, t);
        const double trimmed_det = round_latency_multi(topo, trimmed, det, cfg.seed, t);
        CHECK(trimmed_det <= full_det + 1e-15);
        (void)full;
    }
}

TEST_CASE("hfl adds exactly floor(T / t_global) global aggregation terms") {
    RunConfig cfg = fixture_config(FadingMode::deterministic);
    cfg.engine.rounds = 23;
    cfg.engine.hfl_period = 5;
    const auto cmp = compare_latency(cfg);
    CHECK(cmp.hfl_global_rounds == 4);

    double regional_only = 0.0;
    const Topology part = cfg.build_topology().hfl_partition();
    LatencyParams params = cfg.latency;
    params.model_bits = 32.0 * static_cast<double>(cfg.model.param_count());
    for (int t = 0; t < cfg.engine.rounds; ++t) {
        const auto plan = sample_full(part, t);
        regional_only += round_latency_multi(part, plan, params, cfg.seed, t);
    }
    const double globals = cmp.hfl_total - regional_only;
    const double one_global = hfl_global_latency(part, params, cfg.seed, 4);
    CHECK(globals == doctest::Approx(4.0 * one_global).epsilon(1e-9));
}

TEST_CASE("cfl recluster overhead: 1/20 per round over 100 rounds is 5 rounds") {
    std::vector<double> rounds(100, 2.0);
    const double total = total_latency_cfl(rounds, 1, 1.0 / 20.0);
    CHECK(total == doctest::Approx(100.0 * 2.0 + 5.0 * 2.0).epsilon(1e-12));

    const double sparse = total_latency_cfl(rounds, 5, 1.0 / 20.0);
    CHECK(sparse == doctest::Approx(100.0 * 2.0 + 1.0 * 2.0).epsilon(1e-12));
    CHECK_THROWS_AS(total_latency_cfl(rounds, 0, 0.1), std::invalid_argument);
}

TEST_CASE("rayleigh fading is reproducible and round-dependent") {
    RunConfig cfg = fixture_config(FadingMode::rayleigh);
    const Topology topo = cfg.build_topology();
    const auto plan = sample_full(topo, 0);
    LatencyParams params = cfg.latency;
    params.model_bits = 1e6;
    const double a = round_latency_multi(topo, plan, params, cfg.seed, 0);
    const double b = round_latency_multi(topo, plan, params, cfg.seed, 0);
    const double c = round_latency_multi(topo, plan, params, cfg.seed, 1);
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("per-architecture comparison is finite and positive at table scale") {
    RunConfig cfg = fixture_config(FadingMode::rayleigh);
    const auto cmp = compare_latency(cfg);
    CHECK(cmp.multi_total > 0.0);
    CHECK(cmp.single_total > 0.0);
    CHECK(cmp.hfl_total > 0.0);
    CHECK(cmp.cfl_total >= cmp.multi_total);
    CHECK(std::isfinite(cmp.multi_total));
    CHECK(std::isfinite(cmp.single_total));
    CHECK(std::isfinite(cmp.hfl_total));
}
