#include <doctest.h>

#include <algorithm>
#include <map>

#include <nlohmann/json.hpp>

#include "msfl/participation.hpp"

using namespace msfl;

namespace {

const Topology& fig3() {
    static const Topology topo = Topology::build_symmetric(3, 15, 10, 10, 1);
    return topo;
}

}  // namespace

TEST_CASE("full participation selects every region unchanged") {
    const auto plan = sample_full(fig3(), 0);
    for (int m = 1; m <= 3; ++m) {
        CHECK(plan.selected.at(m).size() == 45);
        CHECK(plan.selected.at(m) == fig3().region(m));
    }
    const auto again = sample_full(fig3(), 0);
    CHECK(plan.selected == again.selected);

    const Topology single = Topology::build_custom(1, {{{1}, 20}}, 1);
    const auto all = sample_full(single, 0);
    CHECK(all.selected.at(1).size() == 20);
    CHECK(all.distinct_clients().size() == 20);
}

TEST_CASE("unbiased sampling reproduces the population type ratios") {
    const std::map<AreaType, double> expected{
        {{1}, 15.0 / 45.0}, {{1, 2}, 10.0 / 45.0}, {{1, 3}, 10.0 / 45.0},
        {{1, 2, 3}, 10.0 / 45.0}};
    for (auto scheme : {SamplingScheme::with_replacement,
                        SamplingScheme::without_replacement}) {
        std::map<AreaType, double> totals;
        const int rounds = 10000;
        for (int t = 0; t < rounds; ++t) {
            const auto plan = sample_unbiased(fig3(), 10, scheme, t, 33);
            for (const auto& [type, count] : plan.per_type.at(1)) {
                totals[type] += count;
            }
        }
        for (const auto& [type, ratio] : expected) {
            const double got = totals[type] / (10.0 * rounds);
            CHECK(std::abs(got - ratio) <= 0.02);
        }
    }
}

TEST_CASE("scheme II with the full region count returns the region") {
    const auto plan = sample_unbiased(fig3(), 45, SamplingScheme::without_replacement,
                                      3, 5);
    for (int m = 1; m <= 3; ++m) CHECK(plan.selected.at(m) == fig3().region(m));
}

TEST_CASE("single draws are uniform over the region (chi-square)") {
    std::map<int, int> hits;
    const int rounds = 10000;
    for (int t = 0; t < rounds; ++t) {
        const auto plan = sample_unbiased(fig3(), 1, SamplingScheme::with_replacement,
                                          t, 7);
        REQUIRE(plan.selected.at(1).size() == 1);
        ++hits[plan.selected.at(1).front()];
    }
    const double expected = rounds / 45.0;
    double stat = 0.0;
    for (int id : fig3().region(1)) {
        const double diff = hits[id] - expected;
        stat += diff * diff / expected;
    }
    // 44 degrees of freedom; chi-square 0.99 quantile is 68.71.
    CHECK(stat < 68.71);
}

TEST_CASE("scheme II rejects oversampling") {
    CHECK_THROWS_AS(sample_unbiased(fig3(), 46, SamplingScheme::without_replacement, 0, 1),
                    std::invalid_argument);
    CHECK_NOTHROW(sample_unbiased(fig3(), 46, SamplingScheme::with_replacement, 0, 1));
}

TEST_CASE("biased class totals split into exact per-type quotas") {
    const BiasSpec spec = BiasSpec::from_class_totals(fig3(), {{1, 4}, {2, 4}, {3, 2}});
    for (int m = 1; m <= 3; ++m) CHECK(spec.server_quota(m) == 10);

    for (int t = 0; t < 200; ++t) {
        const auto plan = sample_biased(fig3(), spec, SamplingScheme::without_replacement,
                                        t, 9);
        for (int m = 1; m <= 3; ++m) {
            CHECK(plan.selected.at(m).size() == 10);
            const auto& per_type = plan.per_type.at(m);
            for (const auto& [type, quota] : spec.quotas.at(m)) {
                CHECK(per_type.at(type) == quota);
            }
        }
    }
}

TEST_CASE("single-area quotas only touch that area") {
    const BiasSpec spec = BiasSpec::from_class_totals(fig3(), {{1, 10}});
    const auto plan = sample_biased(fig3(), spec, SamplingScheme::without_replacement, 0, 2);
    for (int m = 1; m <= 3; ++m) {
        CHECK(plan.selected.at(m).size() == 10);
        for (int id : plan.selected.at(m)) {
            CHECK(fig3().client(id).type == AreaType{m});
        }
    }
}

TEST_CASE("quotas equal to the type sizes reproduce the region") {
    std::map<int, int> totals{{1, 15}, {2, 20}, {3, 10}};
    const BiasSpec spec = BiasSpec::from_class_totals(fig3(), totals);
    const auto plan = sample_biased(fig3(), spec, SamplingScheme::without_replacement, 0, 3);
    for (int m = 1; m <= 3; ++m) {
        CHECK(plan.selected.at(m) == fig3().region(m));
    }
}

TEST_CASE("biased validation errors") {
    BiasSpec over;
    over.quotas[1][{1}] = 16;  // only 15 singleton clients
    CHECK_THROWS_AS(sample_biased(fig3(), over, SamplingScheme::without_replacement, 0, 1),
                    std::invalid_argument);
    CHECK_NOTHROW(sample_biased(fig3(), over, SamplingScheme::with_replacement, 0, 1));

    BiasSpec negative;
    negative.quotas[1][{1}] = -1;
    CHECK_THROWS_AS(sample_biased(fig3(), negative, SamplingScheme::with_replacement, 0, 1),
                    std::invalid_argument);

    CHECK_THROWS_AS(BiasSpec::from_class_totals(fig3(), {{2, 3}}),
                    std::invalid_argument);  // 3 does not split over 2 pair types
}

TEST_CASE("every sampled client belongs to the sampling region") {
    for (int t = 0; t < 50; ++t) {
        const auto plan = sample_unbiased(fig3(), 12, SamplingScheme::with_replacement,
                                          t, 13);
        for (const auto& [m, list] : plan.selected) {
            const auto& region = fig3().region(m);
            for (int id : list) {
                CHECK(std::binary_search(region.begin(), region.end(), id));
            }
            CHECK(std::is_sorted(list.begin(), list.end()));
        }
    }
}

TEST_CASE("per-type counts always sum to the draw count") {
    for (int t = 0; t < 50; ++t) {
        const auto plan = sample_unbiased(fig3(), 9, SamplingScheme::without_replacement,
                                          t, 15);
        for (const auto& [m, per_type] : plan.per_type) {
            int sum = 0;
            for (const auto& [type, count] : per_type) sum += count;
            CHECK(sum == 9);
        }
    }
}

TEST_CASE("plans are reproducible per (seed, round, server)") {
    const auto a = sample_unbiased(fig3(), 10, SamplingScheme::with_replacement, 4, 21);
    const auto b = sample_unbiased(fig3(), 10, SamplingScheme::with_replacement, 4, 21);
    CHECK(a.selected == b.selected);
    const auto c = sample_unbiased(fig3(), 10, SamplingScheme::with_replacement, 5, 21);
    CHECK(a.selected != c.selected);
}

TEST_CASE("plans serialize as json lines") {
    const auto plan = sample_unbiased(fig3(), 3, SamplingScheme::without_replacement, 2, 1);
    const auto lines = plan.to_json_lines();
    REQUIRE(lines.size() == 3);
    const auto parsed = nlohmann::json::parse(lines[0]);
    CHECK(parsed.at("t") == 2);
    CHECK(parsed.at("m") == 1);
    CHECK(parsed.at("clients").size() == 3);
    CHECK(parsed.contains("per_type"));
}
