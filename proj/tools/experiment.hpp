#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "carbonfl/ci_traces.hpp"
#include "carbonfl/fl_sim.hpp"
#include "carbonfl/scheduler.hpp"
#include "carbonfl/slack_analysis.hpp"

namespace carbonfl {

/// Everything a run needs, resolved from one JSON document (CLI flags
/// override individual fields). The resolved spec is echoed into the
/// output directory so results are reproducible from that file alone.
struct ExperimentSpec {
    std::string ci_file;
    std::string start = "2022-01-01T00:00:00Z";
    int hours = 336;
    GapPolicy gap_policy = GapPolicy::reject;
    std::vector<ClientProfile> clients;

    ScheduleConfig schedule;
    FlConfig fl;

    // Synthetic task (default), or an IDX image/label pair when the four
    // idx_* paths are set.
    Arch arch = Arch::softmax_regression;
    int num_classes = 5;
    int feature_dim = 20;
    int samples_per_class = 200;
    int hidden_units = 128;
    double separation = 6.0;
    std::string idx_train_images, idx_train_labels;
    std::string idx_test_images, idx_test_labels;

    // analyze-slack.
    int slack_T = 100;
    std::vector<int> t_sl_values;
    std::vector<int> offsets;
    int num_random_offsets = 0;
    uint64_t offset_seed = 1;

    // sweep axes.
    std::vector<double> budgets_kg;
    std::vector<double> budgets_pct;
    std::vector<int> s_values;
    std::vector<int> t_ft_values;
    std::vector<double> alphas;
    std::vector<uint64_t> seeds;

    static ExperimentSpec from_json(const nlohmann::json& j);
    static ExperimentSpec from_json_file(const std::string& path);
    nlohmann::json to_json() const;

    CiTraceSet load_traces() const;
    CarbonCostMatrix cost_matrix(const CiTraceSet& traces) const;
    FlTask build_task(uint64_t seed) const;
    /// Dispatches to solve_with_finetuning / solve_alpha_fair on t_ft.
    ScheduleMatrix solve_schedule(const CarbonCostMatrix& costs) const;
};

/// Cost of the no-slack baseline completing all T rounds with every
/// client: the denominator behind percentage budgets.
double full_budget_reference(const CarbonCostMatrix& costs, int T);

void write_resolved_config(const ExperimentSpec& spec, const std::string& out_dir);

/// `metric,param,value` rows for the slack sweep (per-client and per-N
/// savings at every t_sl).
void write_slack_report_csv(const SlackSweepResult& sweep, const std::string& path);

/// Runs the (budget x alpha x t_ft x s) grid plus the no-slack baseline
/// column, averaging final accuracy over the seed list. Cells run in a
/// worker pool (CARBONFL_WORKERS; outputs are independent of the worker
/// count). Infeasible cells carry the literal `---`; failed cells an
/// error tag, and the sweep continues.
void run_sweep(const ExperimentSpec& spec, const std::string& out_dir);

}  // namespace carbonfl
