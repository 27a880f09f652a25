#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "carbonfl/ci_traces.hpp"

namespace carbonfl {

enum class SolverKind { exact, greedy, auto_select };

SolverKind parse_solver(const std::string& name);
const char* solver_name(SolverKind kind);

struct ScheduleConfig {
    int T = 0;
    int t_sl = 0;
    int t_ft = 0;  // 0 disables fine-tuning
    double alpha = 1.0;
    double budget_kg = 0.0;
    SolverKind solver = SolverKind::auto_select;
    // Run the greedy from every feasible size-3 seed set as well (cubic in
    // items; off by default, desk-scale instances only).
    bool partial_enumeration = false;

    int horizon() const { return T + t_sl; }
    void validate() const;
};

/// Binary allocation over K clients x (T + t_sl) slots. When fine-tuning
/// is enabled, s is the window end offset: slots {T+s-t_ft+1, ..., T+s}
/// (1-based) are all-ones and everything after T+s is zero.
struct ScheduleMatrix {
    std::vector<std::vector<uint8_t>> a;  // [client][slot]
    std::optional<int> s;
    double total_kg = 0.0;
    double objective = 0.0;
    double alpha = 1.0;  // alpha the objective was evaluated at
    int T = 0;
    int t_ft = 0;

    int clients() const { return static_cast<int>(a.size()); }
    int horizon() const { return a.empty() ? 0 : static_cast<int>(a[0].size()); }
    /// 1-based index of the last slot with any selection; 0 if none.
    int last_active_slot() const;
    int selected_slots() const;
    /// 1-based round range covered by training: [1, T+s] with a window,
    /// otherwise up to the last active slot.
    int training_rounds() const { return s ? T + *s : last_active_slot(); }
    bool in_finetune_window(int slot_1based) const {
        return s && slot_1based > T + *s - t_ft && slot_1based <= T + *s;
    }
};

/// Sum of g over selected cells, slot-major then client order. Training
/// emission accounting accumulates in the same order, so totals agree
/// bit for bit.
double schedule_total_kg(const std::vector<std::vector<uint8_t>>& a, const CarbonCostMatrix& costs);

/// alpha-fair utility: sum_c (sum_t (g_max - g_c^t) a_c^t)^alpha, with
/// 0^alpha = 0. alpha must lie in (0, 1].
double objective_value(const std::vector<std::vector<uint8_t>>& a, const CarbonCostMatrix& costs,
                       double alpha);

/// Globally optimal allocation by depth-first branch-and-bound over the
/// flattened (client, slot) items; capped at 24 decision variables. Among
/// equal-objective optima the solution selecting the earliest items wins.
ScheduleMatrix solve_alpha_fair_exact(const CarbonCostMatrix& costs, const ScheduleConfig& config);

/// Lazy cost-benefit greedy (marginal gain per kg with stale-bound
/// re-evaluation) combined with best-single-element selection; ties
/// resolved by (client, slot) index.
ScheduleMatrix solve_alpha_fair_greedy(const CarbonCostMatrix& costs, const ScheduleConfig& config);

/// Dispatches on config.solver; auto_select runs exact up to 24 variables.
ScheduleMatrix solve_alpha_fair(const CarbonCostMatrix& costs, const ScheduleConfig& config);

/// Forces the fine-tuning window to end at offset s, zeroes everything
/// after it, and solves the residual pre-window problem with the budget
/// that remains. Errors with NoFeasiblePlacement if the window alone
/// exceeds the budget.
ScheduleMatrix solve_with_window_at(const CarbonCostMatrix& costs, const ScheduleConfig& config,
                                    int s);

/// Joint allocation + fine-tuning placement: enumerates s in {1..t_sl},
/// keeps the feasible placement with the highest objective (smallest s on
/// ties). With t_ft = 0 this is plain solve_alpha_fair.
ScheduleMatrix solve_with_finetuning(const CarbonCostMatrix& costs, const ScheduleConfig& config);

/// Full participation from slot 1 until the next round would overshoot
/// the budget; that round and everything after stay unselected.
ScheduleMatrix no_slack_baseline(const CarbonCostMatrix& costs, double budget_kg);

/// Matrix CSV: header row of slot indices, one 0/1 row per client,
/// footer comments `# s=`, `# total_kg=`, `# objective=`.
void write_schedule_csv(const ScheduleMatrix& schedule, const std::string& path);
ScheduleMatrix read_schedule_csv(const std::string& path);

}  // namespace carbonfl
