#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "carbonfl/errors.hpp"
#include "carbonfl/metrics.hpp"
#include "carbonfl/rng.hpp"
#include "carbonfl/timeutil.hpp"

using namespace carbonfl;

namespace {

using Matrix = std::vector<std::vector<uint8_t>>;

double mean_lambda2_estimate(double p, int K, int rounds, int seeds) {
    double acc = 0.0;
    for (int s = 0; s < seeds; ++s) {
        const auto chain = ParticipationChain::homogeneous(K, 0.5, 1.0 - 2.0 * p);
        const auto a = mc_generate_schedule(chain, rounds, 1000 + s);
        acc += estimate_correlation(a).rho_t;
    }
    return acc / seeds;
}

}  // namespace

TEST_CASE("selection stats") {
    SUBCASE("all-ones matrix") {
        const Matrix a(3, std::vector<uint8_t>(5, 1));
        const auto stats = selection_stats_range(a, 0, 5);
        for (const double p : stats.pi) CHECK(p == 1.0);
        REQUIRE(stats.rho_h.has_value());
        CHECK(*stats.rho_h == 0.0);
        REQUIRE(stats.tv.has_value());
        CHECK(*stats.tv == 0.0);
    }
    SUBCASE("hand-computed two-client case") {
        // Client 1 every round, client 2 half the rounds.
        const Matrix a = {{1, 1, 1, 1}, {1, 0, 1, 0}};
        const auto stats = selection_stats_range(a, 0, 4);
        CHECK(stats.pi == std::vector<double>{1.0, 0.5});
        CHECK(*stats.rho_h == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(*stats.tv == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    }
    SUBCASE("zero-frequency client leaves rho_h undefined but keeps pi and tv") {
        const Matrix a = {{1, 1}, {0, 0}};
        const auto stats = selection_stats_range(a, 0, 2);
        CHECK(!stats.rho_h.has_value());
        CHECK(stats.zero_frequency_clients == std::vector<int>{2});
        CHECK(stats.pi == std::vector<double>{1.0, 0.0});
        CHECK(*stats.tv == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("tv identity on random matrices") {
        Rng rng(9, 0);
        for (int trial = 0; trial < 20; ++trial) {
            const int K = 2 + static_cast<int>(rng.next_below(5));
            const int H = 3 + static_cast<int>(rng.next_below(20));
            Matrix a(K, std::vector<uint8_t>(H));
            for (auto& row : a)
                for (auto& v : row) v = rng.next_unit() < 0.6 ? 1 : 0;
            const auto stats = selection_stats_range(a, 0, H);
            if (!stats.tv) continue;
            double norm1 = 0.0;
            for (const double p : stats.pi) norm1 += p;
            double expect = 0.0;
            for (const double p : stats.pi) expect += std::abs(1.0 / K - p / norm1);
            expect *= 0.5;
            CHECK(*stats.tv == doctest::Approx(expect).epsilon(1e-12));
            CHECK(*stats.tv >= 0.0);
            CHECK(*stats.tv <= 1.0);
        }
    }
    SUBCASE("rho_h decreases when any frequency rises") {
        const Matrix lo = {{1, 0, 0, 0}, {1, 1, 1, 1}};
        const Matrix hi = {{1, 1, 0, 0}, {1, 1, 1, 1}};
        CHECK(*selection_stats_range(hi, 0, 4).rho_h < *selection_stats_range(lo, 0, 4).rho_h);
    }
    SUBCASE("schedule horizons") {
        ScheduleMatrix sched;
        sched.a = {{1, 0, 1, 1, 0}, {0, 1, 1, 1, 0}};
        sched.T = 2;
        sched.t_ft = 2;
        sched.s = 2;  // window covers slots 3..4
        const auto pre = selection_stats(sched, FrequencyHorizon::pre_finetune);
        CHECK(pre.pi == std::vector<double>{0.5, 0.5});
        const auto full = selection_stats(sched, FrequencyHorizon::full);
        CHECK(full.pi == std::vector<double>{0.6, 0.6});
    }
}

TEST_CASE("carbon-fair fixture schedule: rho_h agrees with an independent recomputation") {
    // A low-alpha schedule on the bundled fixture, with rho_h checked
    // against the defining formula evaluated from raw selection counts.
    const std::string fixture = std::string(CARBONFL_DATA_DIR) + "/sample_ci_336h_7regions.csv";
    const std::vector<std::string> regions = {"BE", "GB", "IE", "FI", "SE", "DE", "FR"};
    const CiTraceSet traces = load_ci_traces(fixture, regions,
                                             parse_hour_utc("2022-01-01T00:00:00Z"), 336,
                                             GapPolicy::reject);
    std::vector<ClientProfile> profiles;
    for (size_t i = 0; i < regions.size(); ++i)
        profiles.push_back(make_profile(static_cast<int>(i) + 1, regions[i], 1.0));
    const auto costs = carbon_cost_matrix(traces, profiles, 336);

    ScheduleConfig cfg;
    cfg.T = 50;
    cfg.t_sl = 36;
    cfg.alpha = 0.001;
    cfg.solver = SolverKind::greedy;
    double reference = 0.0;
    for (int t = 0; t < cfg.T; ++t)
        for (int c = 0; c < 7; ++c) reference += costs.costs[c][t];
    cfg.budget_kg = 0.25 * reference;
    const auto sched = solve_alpha_fair_greedy(costs, cfg);

    const auto stats = selection_stats(sched, FrequencyHorizon::pre_finetune);
    REQUIRE(stats.rho_h.has_value());
    const int horizon = sched.last_active_slot();
    double expect = 0.0;
    for (int c = 0; c < 7; ++c) {
        int count = 0;
        for (int t = 0; t < horizon; ++t) count += sched.a[c][t];
        REQUIRE(count > 0);
        const double pi = static_cast<double>(count) / horizon;
        expect += (1.0 - pi) / pi;
    }
    expect /= 7.0;
    CHECK(*stats.rho_h == doctest::Approx(expect).epsilon(1e-12));
    CHECK(*stats.rho_h > 0.0);
}

TEST_CASE("participation chain validation") {
    CHECK_THROWS_AS(ParticipationChain::homogeneous(0, 0.5, 0.0), Error);
    CHECK_THROWS_AS(ParticipationChain::homogeneous(3, 0.0, 0.0), Error);
    CHECK_THROWS_AS(ParticipationChain::homogeneous(3, 0.5, 1.0), Error);
    ParticipationChain frozen;
    frozen.p01 = {0.0};
    frozen.p10 = {0.0};
    CHECK_THROWS_AS(frozen.validate(), Error);
    ParticipationChain bad_coupling = ParticipationChain::homogeneous(2, 0.5, 0.0);
    bad_coupling.coupling = 1.5;
    CHECK_THROWS_AS(bad_coupling.validate(), Error);
}

TEST_CASE("mc_generate_schedule") {
    SUBCASE("p01 = p10 = 1 alternates strictly") {
        const auto chain = ParticipationChain::homogeneous(4, 0.5, -1.0);
        const auto a = mc_generate_schedule(chain, 50, 7);
        for (int c = 0; c < 4; ++c)
            for (int t = 1; t < 50; ++t) CHECK(a[c][t] == 1 - a[c][t - 1]);
    }
    SUBCASE("same seed reproduces the matrix, different seeds do not") {
        const auto chain = ParticipationChain::homogeneous(3, 0.4, 0.6, 0.5);
        CHECK(mc_generate_schedule(chain, 200, 42) == mc_generate_schedule(chain, 200, 42));
        CHECK(mc_generate_schedule(chain, 200, 42) != mc_generate_schedule(chain, 200, 43));
    }
    SUBCASE("iid chain: empirical lambda2 near zero") {
        CHECK(mean_lambda2_estimate(0.5, 5, 10000, 5) < 0.05);
    }
    SUBCASE("sticky chain: empirical lambda2 near 0.9") {
        CHECK(std::abs(mean_lambda2_estimate(0.05, 5, 10000, 5) - 0.9) < 0.05);
    }
    SUBCASE("stationary activity is respected") {
        const auto chain = ParticipationChain::homogeneous(2, 0.3, 0.2);
        const auto a = mc_generate_schedule(chain, 20000, 11);
        for (int c = 0; c < 2; ++c) {
            double mean = 0.0;
            for (const auto v : a[c]) mean += v;
            mean /= a[c].size();
            CHECK(mean == doctest::Approx(0.3).epsilon(0.15));
        }
    }
}

TEST_CASE("estimate_correlation") {
    SUBCASE("block pattern is strongly time correlated") {
        Matrix a(3, std::vector<uint8_t>(200));
        for (int c = 0; c < 3; ++c)
            for (int t = 0; t < 200; ++t) a[c][t] = (t / 10 + c) % 2;
        const auto est = estimate_correlation(a);
        CHECK(est.rho_t > 0.7);
        CHECK(est.degenerate_clients.empty());
    }
    SUBCASE("iid pattern is weakly correlated") {
        Rng rng(5, 0);
        Matrix a(5, std::vector<uint8_t>(5000));
        for (auto& row : a)
            for (auto& v : row) v = rng.next_unit() < 0.5 ? 1 : 0;
        CHECK(estimate_correlation(a).rho_t < 0.1);
    }
    SUBCASE("constant rows are flagged and count as lambda2 = 1") {
        Matrix a = {{1, 1, 1, 1}, {0, 1, 0, 1}};
        const auto est = estimate_correlation(a);
        CHECK(est.degenerate_clients == std::vector<int>{1});
        CHECK(est.rho_t > 0.5);  // mean of 1.0 and a near-one alternating estimate
    }
    SUBCASE("a shared latent chain raises rho_ts over independent clients") {
        const int rounds = 10000;
        const auto indep = ParticipationChain::homogeneous(6, 0.5, 0.9, 0.0);
        const auto coupled = ParticipationChain::homogeneous(6, 0.5, 0.9, 1.0);
        double rho_indep = 0.0, rho_coupled = 0.0;
        for (int s = 0; s < 3; ++s) {
            rho_indep += estimate_correlation(mc_generate_schedule(indep, rounds, 100 + s)).rho_ts;
            rho_coupled +=
                estimate_correlation(mc_generate_schedule(coupled, rounds, 100 + s)).rho_ts;
        }
        CHECK(rho_coupled / 3.0 > rho_indep / 3.0);
    }
    SUBCASE("needs two columns") {
        Matrix a = {{1}};
        CHECK_THROWS_AS(estimate_correlation(a), Error);
    }
}

TEST_CASE("stats CSV writer") {
    const Matrix a = {{1, 1, 0, 1}, {0, 1, 1, 0}};
    const auto stats = selection_stats_range(a, 0, 4);
    const auto corr = estimate_correlation(a);
    const auto dir = std::filesystem::temp_directory_path() / "carbonfl_test_metrics";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "stats.csv").string();
    write_stats_csv(stats, &corr, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "stat,client,value");
    int pi_rows = 0, rho_rows = 0;
    while (std::getline(in, line)) {
        pi_rows += line.rfind("pi,", 0) == 0;
        rho_rows += line.rfind("rho_", 0) == 0;
    }
    CHECK(pi_rows == 2);
    CHECK(rho_rows == 3);  // rho_h, rho_t, rho_ts
}
