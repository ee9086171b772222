#include <doctest.h>

#include <omp.h>

#include <cmath>

#include "msfl/reference.hpp"
#include "msfl/runner.hpp"

using namespace msfl;

namespace {

struct Fixture {
    Topology topo;
    DataMap data;
    ClientDataset eval;
    ModelSpec model;
    LatencyParams latency;

    static Fixture make(const Topology& topo, std::uint64_t seed, int shard = 32) {
        Fixture f;
        f.topo = topo;
        DataGenSpec spec{4, 5, shard, 0.4, 1.0};
        f.data = generate(spec, topo, seed);
        f.eval = global_eval_set(spec, 200, seed);
        f.model = ModelSpec{ModelKind::logistic, 5, 4, 0, 0.0};
        f.latency.fading = FadingMode::deterministic;
        return f;
    }

    Engine engine(EngineConfig cfg, std::uint64_t seed) const {
        return Engine(topo, data, model, cfg, latency, eval, seed);
    }
};

double max_abs_diff(const ParamVector& a, const ParamVector& b) {
    double worst = 0.0;
    for (std::size_t k = 0; k < a.values.size(); ++k) {
        worst = std::max(worst, std::abs(a.values[k] - b.values[k]));
    }
    return worst;
}

EngineConfig basic_config(int rounds, double eta_g = 1.0, double eta_l = 0.05) {
    EngineConfig cfg;
    cfg.eta_g = eta_g;
    cfg.eta_l = eta_l;
    cfg.epochs = 3;
    cfg.rounds = rounds;
    cfg.batch_size = 8;
    cfg.strategy.kind = StrategyKind::full;
    return cfg;
}

}  // namespace

TEST_CASE("client_init averages exactly the accessible regional models") {
    const Topology topo = Topology::build_custom(
        2, {{{1}, 1}, {{2}, 1}, {{1, 2}, 1}}, 3);
    ModelSpec spec{ModelKind::logistic, 1, 2, 0, 0.0};
    RegionalState state;
    state.regional[1] = ParamVector{spec, {1.0, 3.0, 0.0, 0.0}};
    state.regional[2] = ParamVector{spec, {3.0, 5.0, 0.0, 0.0}};

    // Non-overlap client: bitwise the regional model.
    const int solo = topo.types().at({1}).front();
    CHECK(client_init(solo, state, topo).values == state.regional[1].values);

    const int shared = topo.types().at({1, 2}).front();
    const auto mean = client_init(shared, state, topo);
    CHECK(mean.values[0] == 2.0);
    CHECK(mean.values[1] == 4.0);

    state.regional[2] = state.regional[1];
    for (const auto& c : topo.clients()) {
        CHECK(max_abs_diff(client_init(c.id, state, topo), state.regional[1]) == 0.0);
    }
}

TEST_CASE("literal and displacement modes coincide at eta_g = 1") {
    const Fixture f = Fixture::make(Topology::build_symmetric(3, 4, 3, 2, 5), 5);
    EngineConfig lit = basic_config(3);
    lit.mode = AggregationMode::literal;
    EngineConfig disp = basic_config(3);
    disp.mode = AggregationMode::server_displacement;
    const auto a = f.engine(lit, 7).run();
    const auto b = f.engine(disp, 7).run();
    CHECK(max_abs_diff(a.final_global, b.final_global) <= 1e-12);
}

TEST_CASE("zero local step size freezes displacement and delta modes") {
    const Fixture f = Fixture::make(Topology::build_symmetric(3, 4, 3, 2, 6), 6);
    for (auto mode : {AggregationMode::server_displacement, AggregationMode::client_delta}) {
        EngineConfig cfg = basic_config(2, 1.7, 0.0);
        cfg.mode = mode;
        ModelSpec spec = f.model;
        spec.init_scale = 0.3;
        Engine engine(f.topo, f.data, spec, cfg, f.latency, f.eval, 11);
        const auto result = engine.run();
        const ParamVector w0 = init_params(spec, 11);
        CHECK(max_abs_diff(result.final_global, w0) == 0.0);
    }
}

TEST_CASE("single-server reduction is bitwise against the fedavg reference") {
    const Topology topo = Topology::build_custom(1, {{{1}, 12}}, 9);
    const Fixture f = Fixture::make(topo, 9);

    EngineConfig cfg = basic_config(4);
    cfg.mode = AggregationMode::literal;
    Engine engine = f.engine(cfg, 13);

    RegionalState state;
    const ParamVector w0 = init_params(f.model, 13);
    state.regional[1] = w0;
    ParamVector expected = w0;
    for (int t = 0; t < 4; ++t) {
        const auto plan = sample_full(topo, t);
        engine.run_round(state, plan, topo, 0.0, nullptr);
        expected = reference::fedavg_round(expected, f.data, topo.region(1), cfg.epochs,
                                           cfg.batch_size, cfg.eta_l, 13, t);
        CHECK(state.regional.at(1).values == expected.values);
    }
}

TEST_CASE("reduction holds plan-for-plan under partial participation") {
    const Topology topo = Topology::build_custom(1, {{{1}, 12}}, 10);
    const Fixture f = Fixture::make(topo, 10);
    for (auto scheme : {SamplingScheme::with_replacement,
                        SamplingScheme::without_replacement}) {
        EngineConfig cfg = basic_config(3);
        cfg.mode = AggregationMode::literal;
        cfg.strategy.kind = StrategyKind::unbiased;
        cfg.strategy.scheme = scheme;
        cfg.strategy.per_server_count = 5;
        Engine engine = f.engine(cfg, 17);

        RegionalState state;
        const ParamVector w0 = init_params(f.model, 17);
        state.regional[1] = w0;
        ParamVector expected = w0;
        for (int t = 0; t < 3; ++t) {
            const auto plan = make_plan(topo, cfg.strategy, t, 17);
            engine.run_round(state, plan, topo, 0.0, nullptr);
            expected = reference::fedavg_round(expected, f.data, plan.selected.at(1),
                                               cfg.epochs, cfg.batch_size, cfg.eta_l,
                                               17, t);
            CHECK(state.regional.at(1).values == expected.values);
        }
    }
}

TEST_CASE("all-overlap topology keeps every regional model identical") {
    const Topology topo = Topology::build_symmetric(3, 0, 0, 30, 21);
    const Fixture f = Fixture::make(topo, 21);
    EngineConfig cfg = basic_config(10, 1.4);
    Engine engine = f.engine(cfg, 23);

    RegionalState state;
    const ParamVector w0 = init_params(f.model, 23);
    for (int m = 1; m <= 3; ++m) state.regional[m] = w0;
    for (int t = 0; t < 10; ++t) {
        const auto plan = sample_full(topo, t);
        engine.run_round(state, plan, topo, 0.0, nullptr);
        CHECK(max_abs_diff(state.regional.at(1), state.regional.at(2)) <= 1e-12);
        CHECK(max_abs_diff(state.regional.at(1), state.regional.at(3)) <= 1e-12);
    }
}

TEST_CASE("zero rounds returns the initial model") {
    const Fixture f = Fixture::make(Topology::build_symmetric(3, 2, 1, 1, 2), 2);
    EngineConfig cfg = basic_config(0);
    ModelSpec spec = f.model;
    spec.init_scale = 0.2;
    Engine engine(f.topo, f.data, spec, cfg, f.latency, f.eval, 31);
    const auto result = engine.run();
    CHECK(result.final_global.values == init_params(spec, 31).values);
    CHECK(result.records.empty());
}

TEST_CASE("overlap clients train once and upload the same vector everywhere") {
    // Two servers, one shared client, plans containing only that client.
    const Topology topo = Topology::build_custom(2, {{{1, 2}, 1}, {{1}, 1}, {{2}, 1}}, 4);
    const Fixture f = Fixture::make(topo, 4);
    const int shared = topo.types().at({1, 2}).front();

    EngineConfig cfg = basic_config(1);
    cfg.mode = AggregationMode::literal;
    Engine engine = f.engine(cfg, 41);

    RegionalState state;
    const ParamVector w0 = init_params(f.model, 41);
    state.regional[1] = w0;
    state.regional[2] = w0;
    ParticipationPlan plan;
    plan.round = 0;
    plan.strategy = StrategyKind::biased;
    plan.selected[1] = {shared};
    plan.selected[2] = {shared};
    engine.run_round(state, plan, topo, 0.0, nullptr);
    CHECK(state.regional.at(1).values == state.regional.at(2).values);
}

TEST_CASE("aggregation modes coincide at eta_g=1 with full participation, no overlap") {
    const Topology topo = Topology::build_custom(2, {{{1}, 5}, {{2}, 6}}, 8);
    const Fixture f = Fixture::make(topo, 8);
    std::vector<ParamVector> finals;
    for (auto mode : {AggregationMode::literal, AggregationMode::server_displacement,
                      AggregationMode::client_delta}) {
        EngineConfig cfg = basic_config(4);
        cfg.mode = mode;
        finals.push_back(f.engine(cfg, 51).run().final_global);
    }
    CHECK(max_abs_diff(finals[0], finals[1]) <= 1e-12);
    CHECK(max_abs_diff(finals[0], finals[2]) <= 1e-12);
}

TEST_CASE("engine rounds match the serial reference for all modes and strategies") {
    const Topology topo = Topology::build_symmetric(3, 3, 2, 2, 61);
    const Fixture f = Fixture::make(topo, 61, 16);
    for (auto mode : {AggregationMode::literal, AggregationMode::server_displacement,
                      AggregationMode::client_delta}) {
        for (auto kind : {StrategyKind::full, StrategyKind::unbiased}) {
            EngineConfig cfg = basic_config(3, 1.3, 0.04);
            cfg.mode = mode;
            cfg.strategy.kind = kind;
            cfg.strategy.scheme = SamplingScheme::with_replacement;
            cfg.strategy.per_server_count = 4;
            Engine engine = f.engine(cfg, 71);

            RegionalState state;
            const ParamVector w0 = init_params(f.model, 71);
            std::map<int, ParamVector> serial;
            for (int m = 1; m <= 3; ++m) {
                state.regional[m] = w0;
                serial.emplace(m, w0);
            }
            for (int t = 0; t < 3; ++t) {
                const auto plan = make_plan(topo, cfg.strategy, t, 71);
                engine.run_round(state, plan, topo, 0.0, nullptr);
                serial = reference::msfedavg_round(serial, topo, f.data, plan, mode,
                                                   cfg.eta_g, cfg.eta_l, cfg.epochs,
                                                   cfg.batch_size, 71, t);
                for (int m = 1; m <= 3; ++m) {
                    CHECK(state.regional.at(m).values == serial.at(m).values);
                }
            }
        }
    }
}

TEST_CASE("csv output is byte-identical across thread counts") {
    const int original = omp_get_max_threads();
    RunConfig cfg = preset_config("symmetric-fig3");
    cfg.engine.rounds = 8;

    omp_set_num_threads(1);
    const std::string csv1 = execute_run(cfg).csv;
    omp_set_num_threads(2);
    const std::string csv2 = execute_run(cfg).csv;
    omp_set_num_threads(4);
    const std::string csv4 = execute_run(cfg).csv;
    omp_set_num_threads(original);

    CHECK(csv1 == csv2);
    CHECK(csv1 == csv4);
    CHECK(csv1.find("t,global_loss,global_acc,grad_norm_sq,region_grad_norm_sq_1") == 0);
}

TEST_CASE("hfl with t_global=1 matches single-server fedavg on equal regions") {
    // Equal-size disjoint regions; means of means equal the global mean.
    const Topology topo = Topology::build_custom(3, {{{1}, 6}, {{2}, 6}, {{3}, 6}}, 71);
    const Fixture f = Fixture::make(topo, 71);
    EngineConfig cfg = basic_config(4);
    cfg.hfl_period = 1;
    Engine engine = f.engine(cfg, 81);
    const auto result = engine.run_hfl_baseline();

    std::vector<int> everyone;
    for (const auto& c : topo.clients()) everyone.push_back(c.id);
    const auto trajectory = reference::fedavg_run(init_params(f.model, 81), f.data,
                                                  everyone, 4, cfg.epochs,
                                                  cfg.batch_size, cfg.eta_l, 81);
    CHECK(max_abs_diff(result.final_global, trajectory.back()) <= 1e-12);
}

TEST_CASE("hfl models sync exactly at the period and drift in between") {
    const Fixture f = Fixture::make(Topology::build_symmetric(3, 3, 2, 2, 91), 91);
    EngineConfig cfg = basic_config(6);
    cfg.hfl_period = 5;
    cfg.probe_rounds = 6;
    Engine engine = f.engine(cfg, 91);
    const auto result = engine.run_hfl_baseline();
    REQUIRE(result.trace.rounds.size() == 6);

    // Rounds 0-3: regional models differ; round 4 ((t+1)%5==0): all equal.
    const auto& drifted = result.trace.rounds[1].regional;
    CHECK(max_abs_diff(drifted.at(1), drifted.at(2)) > 0.0);
    const auto& synced = result.trace.rounds[4].regional;
    CHECK(synced.at(1).values == synced.at(2).values);
    CHECK(synced.at(1).values == synced.at(3).values);
    const auto& after = result.trace.rounds[5].regional;
    CHECK(max_abs_diff(after.at(1), after.at(2)) > 0.0);
}

TEST_CASE("hfl with a period beyond T is independent regional fedavg") {
    const Topology topo = Topology::build_symmetric(3, 3, 2, 2, 95);
    const Fixture f = Fixture::make(topo, 95);
    EngineConfig cfg = basic_config(4);
    cfg.mode = AggregationMode::literal;
    cfg.hfl_period = 100;
    Engine engine = f.engine(cfg, 97);
    const auto result = engine.run_hfl_baseline();

    const Topology part = topo.hfl_partition();
    const ParamVector w0 = init_params(f.model, 97);
    ParamVector mean = w0;
    std::fill(mean.values.begin(), mean.values.end(), 0.0);
    for (int m = 1; m <= 3; ++m) {
        const auto traj = reference::fedavg_run(w0, f.data, part.region(m), 4,
                                                cfg.epochs, cfg.batch_size, cfg.eta_l, 97);
        for (std::size_t k = 0; k < mean.values.size(); ++k) {
            mean.values[k] += traj.back().values[k];
        }
    }
    for (auto& v : mean.values) v /= 3.0;
    CHECK(max_abs_diff(result.final_global, mean) <= 1e-12);
}

TEST_CASE("empty plans are rejected") {
    const Fixture f = Fixture::make(Topology::build_symmetric(3, 3, 2, 2, 99), 99);
    EngineConfig cfg = basic_config(1);
    Engine engine = f.engine(cfg, 99);
    RegionalState state;
    const ParamVector w0 = init_params(f.model, 99);
    for (int m = 1; m <= 3; ++m) state.regional[m] = w0;
    ParticipationPlan plan = sample_full(f.topo, 0);
    plan.selected.erase(2);
    CHECK_THROWS_AS(engine.run_round(state, plan, f.topo, 0.0, nullptr),
                    std::invalid_argument);
}

TEST_CASE("round records carry finite metrics and cumulative latency") {
    const Fixture f = Fixture::make(Topology::build_symmetric(3, 3, 2, 2, 109), 109);
    EngineConfig cfg = basic_config(5);
    Engine engine = f.engine(cfg, 109);
    const auto result = engine.run();
    REQUIRE(result.records.size() == 5);
    double cumulative = 0.0;
    for (const auto& rec : result.records) {
        CHECK(std::isfinite(rec.global_loss));
        CHECK(rec.global_acc >= 0.0);
        CHECK(rec.global_acc <= 1.0);
        CHECK(std::isfinite(rec.grad_norm_sq));
        CHECK(rec.region_grad_norm_sq.size() == 3);
        CHECK(rec.latency_s > 0.0);
        cumulative += rec.latency_s;
        CHECK(rec.cumulative_latency_s == doctest::Approx(cumulative).epsilon(1e-12));
        CHECK(rec.strategy == "full");
        CHECK(rec.mode == "displacement");
    }
}

TEST_CASE("mobility relocates between rounds deterministically") {
    RunConfig cfg = preset_config("mobility");
    cfg.engine.rounds = 5;
    const auto a = execute_run(cfg);
    const auto b = execute_run(cfg);
    CHECK(a.csv == b.csv);

    RunConfig other = cfg;
    other.seed = cfg.seed + 1;
    const auto c = execute_run(other);
    CHECK(a.csv != c.csv);
}
