#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace carbonfl {

/// Hourly carbon-intensity series for a set of regions, covering
/// [start_hour, start_hour + hours) in UTC. Values are kgCO2e/kWh.
/// Immutable after construction; safe to share read-only across threads.
struct CiTraceSet {
    std::vector<std::string> regions;
    int64_t start_hour = 0;  // hours since Unix epoch
    int hours = 0;
    std::vector<std::vector<double>> values;  // [region][hour]
    int filled_cells = 0;                     // cells filled by forward_fill

    int region_index(const std::string& name) const;
};

struct ClientProfile {
    int client_id = 0;  // 1-based
    std::string region;
    double power_kw = 0.0;
    double energy_per_slot_kwh = 0.0;  // power_kw x 1h slots
};

ClientProfile make_profile(int client_id, const std::string& region, double power_kw);

/// Per-client, per-slot carbon cost in kgCO2e. The maximum entry g_max is
/// the constant that turns the scheduling objective into a maximization.
struct CarbonCostMatrix {
    std::vector<std::vector<double>> costs;  // [client][slot]
    double g_max = 0.0;
    int horizon = 0;

    int clients() const { return static_cast<int>(costs.size()); }
    const std::vector<double>& row(int c) const { return costs[c]; }
};

enum class GapPolicy { reject, forward_fill };

/// Budget / carbon comparisons use this absolute tolerance everywhere.
inline constexpr double kBudgetTolKg = 1e-9;

/// Loads the CSV schema `timestamp,region,ci_kg_per_kwh` (rows in any
/// order) and returns the series covering exactly [start_hour,
/// start_hour + hours) for the requested regions. Under forward_fill a
/// missing hour copies the most recent prior value; a missing first hour
/// cannot be filled and is still a GapError.
CiTraceSet load_ci_traces(const std::string& path, const std::vector<std::string>& regions,
                          int64_t start_hour, int hours, GapPolicy gap_policy);

/// Writes the same CSV schema, region-major, hours ascending, values at
/// six fractional digits (reloading reproduces identical doubles).
void write_ci_csv(const CiTraceSet& traces, const std::string& path);

CarbonCostMatrix carbon_cost_matrix(const CiTraceSet& traces,
                                    const std::vector<ClientProfile>& profiles, int horizon);

}  // namespace carbonfl
