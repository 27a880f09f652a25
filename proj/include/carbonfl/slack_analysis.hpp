#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "carbonfl/ci_traces.hpp"

namespace carbonfl {

/// Per-client savings from moving T training slots into a window of
/// T + t_sl slots. Slot indices are 1-based.
struct SlackReport {
    int client_id = 0;  // 1-based
    int t_sl = 0;
    std::vector<int> chosen_slots;  // sorted ascending, size T
    double baseline_kg = 0.0;       // first-T total
    double optimized_kg = 0.0;      // chosen-slot total
    double savings_fraction = 0.0;  // 1 - optimized/baseline
};

/// Joint client-selection savings: the N cheapest clients without slack
/// versus with slack. Client ids are 1-based.
struct SelectionReport {
    int n = 0;
    std::vector<int> fixed_set;  // sorted ascending
    std::vector<int> slack_set;  // sorted ascending
    double fixed_kg = 0.0;
    double slack_kg = 0.0;
    double savings_fraction = 0.0;
};

/// Mean savings over a set of training start offsets.
struct SlackSweepResult {
    std::vector<int> t_sl_values;
    std::vector<int> offsets;
    // [t_sl index][client index 0-based]: mean per-client savings
    std::vector<std::vector<double>> savings_single_mean;
    // [t_sl index][N-1]: mean joint savings for N = 1..K
    std::vector<std::vector<double>> savings_multi_mean;
};

/// The T slots of lowest total cost within the first T + t_sl entries of
/// the row; ties resolved toward the lowest slot index. 1-based result.
std::vector<int> best_slots_single(std::span<const double> row, int T, int t_sl);

SlackReport savings_single(std::span<const double> row, int client_id, int T, int t_sl);

/// N clients with the smallest first-T cost totals; ties toward the
/// lowest client index. Returns 1-based client ids sorted ascending.
std::vector<int> select_clients_fixed(const CarbonCostMatrix& costs, int N, int T);

/// As above, but ranking clients by the cost of their T cheapest slots
/// within the T + t_sl window.
std::vector<int> select_clients_slack(const CarbonCostMatrix& costs, int N, int T, int t_sl);

SelectionReport savings_multi(const CarbonCostMatrix& costs, int N, int T, int t_sl);

/// Recomputes single- and multi-client savings for every (offset, t_sl)
/// pair and averages over offsets. An offset o shifts the analysis
/// window to slots [o+1, o+T+t_sl].
SlackSweepResult sweep_slack(const CarbonCostMatrix& costs, int T,
                             const std::vector<int>& t_sl_values, const std::vector<int>& offsets);

/// Offsets drawn uniformly without replacement from [0, max_offset],
/// sorted ascending. Deterministic in the seed.
std::vector<int> draw_start_offsets(int max_offset, int count, uint64_t seed);

}  // namespace carbonfl
