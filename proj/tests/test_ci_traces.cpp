#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "carbonfl/ci_traces.hpp"
#include "carbonfl/errors.hpp"
#include "carbonfl/rng.hpp"
#include "carbonfl/timeutil.hpp"

using namespace carbonfl;
namespace fs = std::filesystem;

namespace {

const int64_t kStart2022 = parse_hour_utc("2022-01-01T00:00:00Z");

fs::path temp_file(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "carbonfl_test_ci";
    fs::create_directories(dir);
    return dir / name;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

std::string constant_trace_csv(const std::string& region, int hours, double value) {
    std::ostringstream out;
    out << "timestamp,region,ci_kg_per_kwh\n";
    char buf[64];
    for (int h = 0; h < hours; ++h) {
        std::snprintf(buf, sizeof(buf), "%.6f", value);
        out << format_hour_utc(kStart2022 + h) << ',' << region << ',' << buf << '\n';
    }
    return out.str();
}

}  // namespace

TEST_CASE("timestamp parse/format round trip") {
    CHECK(parse_hour_utc("1970-01-01T00:00:00Z") == 0);
    CHECK(parse_hour_utc("1970-01-02T01:00:00Z") == 25);
    CHECK(format_hour_utc(kStart2022) == "2022-01-01T00:00:00Z");
    for (const int64_t h : {int64_t(0), kStart2022, kStart2022 + 335, int64_t(1234567)})
        CHECK(parse_hour_utc(format_hour_utc(h)) == h);
    CHECK_THROWS_AS(parse_hour_utc("2022-01-01T00:30:00Z"), Error);
    CHECK_THROWS_AS(parse_hour_utc("2022-01-01 00:00:00Z"), Error);
    CHECK_THROWS_AS(parse_hour_utc("2022-02-29T00:00:00Z"), Error);
    CHECK_THROWS_AS(parse_hour_utc("2022-13-01T00:00:00Z"), Error);
}

TEST_CASE("constant trace loads exactly") {
    const auto path = temp_file("const_fr.csv");
    write_file(path, constant_trace_csv("FR", 24, 0.05));
    const CiTraceSet traces = load_ci_traces(path.string(), {"FR"}, kStart2022, 24,
                                             GapPolicy::reject);
    CHECK(traces.hours == 24);
    CHECK(traces.filled_cells == 0);
    for (int h = 0; h < 24; ++h) CHECK(traces.values[0][h] == 0.05);
}

TEST_CASE("unknown region rejected") {
    const auto path = temp_file("const_fr2.csv");
    write_file(path, constant_trace_csv("FR", 24, 0.05));
    CHECK_THROWS_WITH_AS(
        load_ci_traces(path.string(), {"ZZ"}, kStart2022, 24, GapPolicy::reject),
        doctest::Contains("UnknownRegion"), Error);
}

TEST_CASE("missing file") {
    try {
        load_ci_traces("/nonexistent/trace.csv", {"FR"}, kStart2022, 24, GapPolicy::reject);
        FAIL("expected FileNotFound");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::file_not_found);
    }
}

TEST_CASE("gap handling") {
    // DE trace with hour 7 removed.
    std::ostringstream out;
    out << "timestamp,region,ci_kg_per_kwh\n";
    for (int h = 0; h < 24; ++h) {
        if (h == 7) continue;
        out << format_hour_utc(kStart2022 + h) << ",DE,0." << (100000 + h) << '\n';
    }
    const auto path = temp_file("gap_de.csv");
    write_file(path, out.str());

    SUBCASE("reject errors") {
        try {
            load_ci_traces(path.string(), {"DE"}, kStart2022, 24, GapPolicy::reject);
            FAIL("expected GapError");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::gap);
        }
    }
    SUBCASE("forward_fill copies the prior hour") {
        const CiTraceSet traces =
            load_ci_traces(path.string(), {"DE"}, kStart2022, 24, GapPolicy::forward_fill);
        CHECK(traces.filled_cells == 1);
        CHECK(traces.values[0][7] == traces.values[0][6]);
        CHECK(traces.values[0][8] != traces.values[0][7]);
    }
    SUBCASE("a missing first hour cannot be filled") {
        std::ostringstream out2;
        out2 << "timestamp,region,ci_kg_per_kwh\n";
        for (int h = 1; h < 24; ++h)
            out2 << format_hour_utc(kStart2022 + h) << ",DE,0.1\n";
        const auto path2 = temp_file("gap_first.csv");
        write_file(path2, out2.str());
        CHECK_THROWS_AS(
            load_ci_traces(path2.string(), {"DE"}, kStart2022, 24, GapPolicy::forward_fill),
            Error);
    }
}

TEST_CASE("schema violations") {
    SUBCASE("bad header") {
        const auto path = temp_file("bad_header.csv");
        write_file(path, "time,region,value\n2022-01-01T00:00:00Z,FR,0.05\n");
        CHECK_THROWS_AS(load_ci_traces(path.string(), {"FR"}, kStart2022, 1, GapPolicy::reject),
                        Error);
    }
    SUBCASE("duplicate (timestamp, region)") {
        const auto path = temp_file("dup.csv");
        write_file(path,
                   "timestamp,region,ci_kg_per_kwh\n"
                   "2022-01-01T00:00:00Z,FR,0.05\n"
                   "2022-01-01T00:00:00Z,FR,0.06\n");
        try {
            load_ci_traces(path.string(), {"FR"}, kStart2022, 1, GapPolicy::reject);
            FAIL("expected SchemaError");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::schema);
        }
    }
    SUBCASE("negative value") {
        const auto path = temp_file("neg.csv");
        write_file(path, "timestamp,region,ci_kg_per_kwh\n2022-01-01T00:00:00Z,FR,-0.05\n");
        CHECK_THROWS_AS(load_ci_traces(path.string(), {"FR"}, kStart2022, 1, GapPolicy::reject),
                        Error);
    }
    SUBCASE("wrong column count") {
        const auto path = temp_file("cols.csv");
        write_file(path, "timestamp,region,ci_kg_per_kwh\n2022-01-01T00:00:00Z,FR\n");
        CHECK_THROWS_AS(load_ci_traces(path.string(), {"FR"}, kStart2022, 1, GapPolicy::reject),
                        Error);
    }
}

TEST_CASE("carbon cost matrix basics") {
    CiTraceSet traces;
    traces.regions = {"A", "B"};
    traces.start_hour = kStart2022;
    traces.hours = 2;
    traces.values = {{0.05, 0.05}, {0.1, 0.3}};

    SUBCASE("unit energy copies the trace") {
        const auto m = carbon_cost_matrix(traces, {make_profile(1, "A", 1.0)}, 2);
        CHECK(m.costs[0][0] == 0.05);
        CHECK(m.costs[0][1] == 0.05);
        CHECK(m.g_max == 0.05);
    }
    SUBCASE("linear scaling") {
        const auto m = carbon_cost_matrix(traces, {make_profile(1, "B", 2.0)}, 2);
        CHECK(m.costs[0][0] == doctest::Approx(0.2).epsilon(1e-15));
        CHECK(m.costs[0][1] == doctest::Approx(0.6).epsilon(1e-15));
        CHECK(m.g_max == m.costs[0][1]);
    }
    SUBCASE("horizon too long") {
        try {
            carbon_cost_matrix(traces, {make_profile(1, "A", 1.0)}, 3);
            FAIL("expected HorizonTooLong");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::horizon_too_long);
        }
    }
    SUBCASE("unknown profile region") {
        CHECK_THROWS_AS(carbon_cost_matrix(traces, {make_profile(1, "Z", 1.0)}, 2), Error);
    }
    SUBCASE("doubling power doubles every entry exactly") {
        const auto m1 = carbon_cost_matrix(traces, {make_profile(1, "B", 1.5)}, 2);
        const auto m2 = carbon_cost_matrix(traces, {make_profile(1, "B", 3.0)}, 2);
        for (int t = 0; t < 2; ++t) CHECK(m2.costs[0][t] == 2.0 * m1.costs[0][t]);
    }
}

TEST_CASE("fixture matrix equals an independent elementwise recomputation") {
    const std::string fixture = std::string(CARBONFL_DATA_DIR) + "/sample_ci_336h_7regions.csv";
    const std::vector<std::string> regions = {"BE", "GB", "IE", "FI", "SE", "DE", "FR"};
    const CiTraceSet traces = load_ci_traces(fixture, regions, kStart2022, 336, GapPolicy::reject);
    std::vector<ClientProfile> profiles;
    for (size_t i = 0; i < regions.size(); ++i)
        profiles.push_back(make_profile(static_cast<int>(i) + 1, regions[i], 0.5 + 0.25 * i));
    const auto m = carbon_cost_matrix(traces, profiles, 336);

    // Independent parse: raw string splitting, no shared code path.
    std::map<std::pair<std::string, std::string>, double> raw;
    std::ifstream in(fixture);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
        raw[{line.substr(0, c1), line.substr(c1 + 1, c2 - c1 - 1)}] =
            std::stod(line.substr(c2 + 1));
    }
    REQUIRE(raw.size() == 336u * 7u);
    double expected_max = 0.0;
    for (size_t i = 0; i < profiles.size(); ++i) {
        for (int t = 0; t < 336; ++t) {
            const double expect =
                profiles[i].energy_per_slot_kwh * raw.at({format_hour_utc(kStart2022 + t),
                                                          profiles[i].region});
            CHECK(m.costs[i][t] == expect);
            expected_max = std::max(expected_max, expect);
        }
    }
    CHECK(m.g_max == expected_max);

    // g_max consistency: nothing exceeds it, something attains it.
    bool attained = false;
    for (const auto& row : m.costs)
        for (const double v : row) {
            CHECK(v <= m.g_max);
            attained = attained || v == m.g_max;
        }
    CHECK(attained);
}

TEST_CASE("CSV round trip is bit-for-bit") {
    const std::string fixture = std::string(CARBONFL_DATA_DIR) + "/sample_ci_336h_7regions.csv";
    const std::vector<std::string> regions = {"FR", "DE", "SE"};
    const CiTraceSet traces = load_ci_traces(fixture, regions, kStart2022, 336, GapPolicy::reject);
    const auto out_path = temp_file("roundtrip.csv");
    write_ci_csv(traces, out_path.string());
    const CiTraceSet again =
        load_ci_traces(out_path.string(), regions, kStart2022, 336, GapPolicy::reject);
    for (size_t r = 0; r < regions.size(); ++r)
        for (int h = 0; h < 336; ++h) CHECK(traces.values[r][h] == again.values[r][h]);

    // Writing once more reproduces the same bytes.
    const auto out2 = temp_file("roundtrip2.csv");
    write_ci_csv(again, out2.string());
    std::ifstream a(out_path), b(out2);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
}

TEST_CASE("rows in any order are accepted") {
    std::ostringstream out;
    out << "timestamp,region,ci_kg_per_kwh\n";
    for (int h = 23; h >= 0; --h)
        out << format_hour_utc(kStart2022 + h) << ",FR,0.05" << (h % 3) << "000\n";
    const auto path = temp_file("reversed.csv");
    write_file(path, out.str());
    const CiTraceSet traces =
        load_ci_traces(path.string(), {"FR"}, kStart2022, 24, GapPolicy::reject);
    CHECK(traces.values[0][0] == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(traces.values[0][1] == doctest::Approx(0.051).epsilon(1e-12));
}
