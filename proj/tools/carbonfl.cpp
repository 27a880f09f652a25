#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "carbonfl/errors.hpp"
#include "carbonfl/metrics.hpp"
#include "carbonfl/timeutil.hpp"
#include "experiment.hpp"
#include "svg_report.hpp"

namespace fs = std::filesystem;
using namespace carbonfl;

namespace {

struct CommonOpts {
    std::string config;
    std::string ci_file;
    std::string out_dir;
    std::string solver;
    std::optional<uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_out) {
    cmd->add_option("--config", opts.config, "experiment JSON document");
    cmd->add_option("--ci-file", opts.ci_file, "carbon-intensity CSV (overrides config)");
    auto* out = cmd->add_option("--out-dir", opts.out_dir, "output directory");
    if (needs_out) out->required();
    cmd->add_option("--solver", opts.solver, "exact|greedy|auto (overrides config)");
    cmd->add_option("--seed", opts.seed, "base RNG seed (overrides config)");
}

ExperimentSpec resolve_spec(const CommonOpts& opts) {
    ExperimentSpec spec =
        opts.config.empty() ? ExperimentSpec{} : ExperimentSpec::from_json_file(opts.config);
    if (!opts.ci_file.empty()) spec.ci_file = opts.ci_file;
    if (!opts.solver.empty()) spec.schedule.solver = parse_solver(opts.solver);
    if (opts.seed) spec.fl.seed = *opts.seed;
    return spec;
}

void ensure_out_dir(const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) raise(Errc::io, "cannot create " + out_dir);
}

void emit_schedule_outputs(const ExperimentSpec& spec, const ScheduleMatrix& sched,
                           const std::string& out_dir) {
    write_schedule_csv(sched, (fs::path(out_dir) / "schedule.csv").string());
    const SelectionStats stats = selection_stats(sched, FrequencyHorizon::pre_finetune);
    const CorrelationEstimate corr = estimate_correlation(sched.a);
    write_stats_csv(stats, &corr, (fs::path(out_dir) / "schedule_stats.csv").string());
    write_resolved_config(spec, out_dir);
}

int cmd_analyze_slack(const CommonOpts& opts) {
    ExperimentSpec spec = resolve_spec(opts);
    ensure_out_dir(opts.out_dir);
    const CiTraceSet traces = spec.load_traces();
    const CarbonCostMatrix costs = spec.cost_matrix(traces);

    std::vector<int> t_sl_values = spec.t_sl_values;
    if (t_sl_values.empty()) {
        for (const int v : {0, 1, 2, 5, 10, 20, 50, 100, 150, 200, 236})
            if (spec.slack_T + v <= costs.horizon) t_sl_values.push_back(v);
    }
    int max_t_sl = 0;
    for (const int v : t_sl_values) max_t_sl = std::max(max_t_sl, v);

    std::vector<int> offsets = spec.offsets;
    if (spec.num_random_offsets > 0) {
        const int max_offset = costs.horizon - spec.slack_T - max_t_sl;
        if (max_offset < 0)
            raise(Errc::offset_out_of_range, "T + max t_sl exceeds the trace horizon");
        // Clamp to the number of distinct start times the trace allows.
        const int count = std::min(spec.num_random_offsets, max_offset + 1);
        offsets = draw_start_offsets(max_offset, count, spec.offset_seed);
    }
    if (offsets.empty()) offsets = {0};

    const SlackSweepResult sweep = sweep_slack(costs, spec.slack_T, t_sl_values, offsets);
    spec.t_sl_values = t_sl_values;
    spec.offsets = offsets;
    write_slack_report_csv(sweep, (fs::path(opts.out_dir) / "slack_report.csv").string());
    write_resolved_config(spec, opts.out_dir);
    std::cout << "analyze-slack: " << costs.clients() << " clients, " << t_sl_values.size()
              << " slack values, " << offsets.size() << " offsets -> " << opts.out_dir << "\n";
    return 0;
}

int cmd_schedule(const CommonOpts& opts) {
    const ExperimentSpec spec = resolve_spec(opts);
    ensure_out_dir(opts.out_dir);
    const CiTraceSet traces = spec.load_traces();
    const CarbonCostMatrix costs = spec.cost_matrix(traces);
    const ScheduleMatrix sched = spec.solve_schedule(costs);
    emit_schedule_outputs(spec, sched, opts.out_dir);
    std::cout << "schedule: " << sched.selected_slots() << " slots, total "
              << sched.total_kg << " kg";
    if (sched.s) std::cout << ", s=" << *sched.s;
    std::cout << " -> " << opts.out_dir << "\n";
    return 0;
}

int cmd_simulate(const CommonOpts& opts, const std::string& schedule_file, bool baseline) {
    const ExperimentSpec spec = resolve_spec(opts);
    ensure_out_dir(opts.out_dir);
    const CiTraceSet traces = spec.load_traces();
    const CarbonCostMatrix costs = spec.cost_matrix(traces);

    ScheduleMatrix sched;
    if (baseline) {
        sched = no_slack_baseline(costs, spec.schedule.budget_kg);
    } else if (!schedule_file.empty()) {
        sched = read_schedule_csv(schedule_file);
        sched.T = spec.schedule.T;
        sched.t_ft = sched.s ? spec.schedule.t_ft : 0;
        sched.alpha = spec.schedule.alpha;
        const double recomputed = schedule_total_kg(sched.a, costs);
        if (std::abs(recomputed - sched.total_kg) > 1e-6)
            raise(Errc::schedule_cost_mismatch,
                  "schedule file total_kg does not match these costs");
        sched.total_kg = recomputed;
    } else {
        sched = spec.solve_schedule(costs);
    }

    const FlTask task = spec.build_task(spec.fl.seed);
    const TrainingRun run = run_training(task, sched, costs, spec.fl);
    write_run_csv(run, (fs::path(opts.out_dir) / "run.csv").string());
    emit_schedule_outputs(spec, sched, opts.out_dir);
    std::cout << "simulate: " << run.rounds.size() << " rounds, final acc " << run.final_test_acc
              << ", total " << run.total_kg << " kg -> " << opts.out_dir << "\n";
    return 0;
}

int cmd_sweep(const CommonOpts& opts) {
    const ExperimentSpec spec = resolve_spec(opts);
    ensure_out_dir(opts.out_dir);
    run_sweep(spec, opts.out_dir);
    std::cout << "sweep -> " << opts.out_dir << "/summary.csv\n";
    return 0;
}

// --- report: turn emitted CSVs into self-contained SVGs -------------------

std::vector<std::vector<std::string>> read_csv_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::file_not_found, path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::string cur;
        for (const char c : line) {
            if (c == ',') {
                fields.push_back(cur);
                cur.clear();
            } else if (c != '\r') {
                cur.push_back(c);
            }
        }
        fields.push_back(cur);
        rows.push_back(std::move(fields));
    }
    return rows;
}

void report_slack(const std::string& csv_path, const std::string& out_dir) {
    const auto rows = read_csv_rows(csv_path);
    // metric,param,value with metric savings_single.c<i> / savings_multi.N<n>
    std::map<int, std::map<int, double>> single;  // client -> t_sl -> savings
    std::map<int, std::map<int, double>> multi;   // N -> t_sl -> savings
    for (size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 3) continue;
        const std::string& metric = rows[i][0];
        const int t_sl = std::stoi(rows[i][1].substr(rows[i][1].find('=') + 1));
        const double value = std::stod(rows[i][2]);
        if (metric.rfind("savings_single.c", 0) == 0)
            single[std::stoi(metric.substr(16))][t_sl] = value;
        else if (metric.rfind("savings_multi.N", 0) == 0)
            multi[std::stoi(metric.substr(15))][t_sl] = value;
    }
    if (!single.empty()) {
        // Heatmap rows ordered by savings at maximum slack, best first.
        const int max_t_sl = single.begin()->second.rbegin()->first;
        std::vector<std::pair<double, int>> order;
        for (const auto& [client, per_t] : single)
            order.push_back({per_t.at(max_t_sl), client});
        std::sort(order.begin(), order.end(), std::greater<>());
        std::vector<std::string> row_labels, col_labels;
        std::vector<std::vector<double>> values;
        for (const auto& [save, client] : order) {
            row_labels.push_back("client " + std::to_string(client));
            std::vector<double> row;
            for (const auto& [t_sl, v] : single.at(client)) {
                if (values.empty()) col_labels.push_back(std::to_string(t_sl));
                row.push_back(v);
            }
            values.push_back(std::move(row));
        }
        svg::write_file((fs::path(out_dir) / "slack_heatmap.svg").string(),
                        svg::heatmap("Per-client CO2e savings vs slack", row_labels, col_labels,
                                     values));
    }
    if (!multi.empty()) {
        std::map<int, svg::Series> by_t_sl;
        for (const auto& [n, per_t] : multi)
            for (const auto& [t_sl, v] : per_t) {
                auto& s = by_t_sl[t_sl];
                s.label = "t_sl=" + std::to_string(t_sl);
                s.x.push_back(n);
                s.y.push_back(v);
            }
        std::vector<svg::Series> series;
        for (auto& [t_sl, s] : by_t_sl) series.push_back(std::move(s));
        svg::write_file((fs::path(out_dir) / "savings_vs_clients.svg").string(),
                        svg::line_chart("CO2e savings vs selected clients", "N", "savings",
                                        series));
    }
}

void report_run(const std::string& csv_path, const std::string& out_dir) {
    const auto rows = read_csv_rows(csv_path);
    svg::Series acc{"test_acc", {}, {}}, kg{"cum_kg", {}, {}};
    for (size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 5) continue;
        acc.x.push_back(std::stod(rows[i][0]));
        acc.y.push_back(std::stod(rows[i][3]));
        kg.x.push_back(std::stod(rows[i][0]));
        kg.y.push_back(std::stod(rows[i][2]));
    }
    svg::write_file((fs::path(out_dir) / "run_accuracy.svg").string(),
                    svg::line_chart("Test accuracy per round", "round", "accuracy", {acc}));
    svg::write_file((fs::path(out_dir) / "run_emissions.svg").string(),
                    svg::line_chart("Cumulative emissions per round", "round", "kgCO2e", {kg}));
}

void report_summary(const std::string& csv_path, const std::string& out_dir) {
    const auto rows = read_csv_rows(csv_path);
    std::map<std::string, svg::Series> series;
    for (size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() < 12 || r[6] != "ok") continue;
        const std::string key = r[0] == "baseline"
                                    ? "baseline"
                                    : "alpha=" + r[3] + " t_ft=" + r[4];
        auto& s = series[key];
        s.label = key;
        s.x.push_back(std::stod(r[2]));  // budget_pct
        s.y.push_back(std::stod(r[9]));  // mean_final_acc
    }
    std::vector<svg::Series> list;
    for (auto& [key, s] : series) {
        // Points arrive grouped by budget; sort by x for a clean polyline.
        std::vector<size_t> idx(s.x.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return s.x[a] < s.x[b]; });
        svg::Series sorted{s.label, {}, {}};
        for (const size_t i : idx) {
            sorted.x.push_back(s.x[i]);
            sorted.y.push_back(s.y[i]);
        }
        list.push_back(std::move(sorted));
    }
    svg::write_file((fs::path(out_dir) / "sweep_accuracy.svg").string(),
                    svg::line_chart("Final accuracy vs carbon budget", "budget (% of reference)",
                                    "accuracy", list));
}

int cmd_report(const std::string& in_dir, std::string out_dir) {
    if (out_dir.empty()) out_dir = in_dir;
    ensure_out_dir(out_dir);
    bool any = false;
    if (fs::exists(fs::path(in_dir) / "slack_report.csv")) {
        report_slack((fs::path(in_dir) / "slack_report.csv").string(), out_dir);
        any = true;
    }
    if (fs::exists(fs::path(in_dir) / "run.csv")) {
        report_run((fs::path(in_dir) / "run.csv").string(), out_dir);
        any = true;
    }
    if (fs::exists(fs::path(in_dir) / "summary.csv")) {
        report_summary((fs::path(in_dir) / "summary.csv").string(), out_dir);
        any = true;
    }
    if (!any)
        raise(Errc::file_not_found,
              "no slack_report.csv, run.csv or summary.csv under " + in_dir);
    std::cout << "report -> " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"carbon-aware federated learning: slack analysis, scheduling, simulation"};
    app.require_subcommand(1);

    CommonOpts slack_opts, schedule_opts, simulate_opts, sweep_opts;
    std::string schedule_file, report_in, report_out;

    auto* slack = app.add_subcommand("analyze-slack", "per-client and joint slack savings");
    add_common(slack, slack_opts, true);
    auto* schedule = app.add_subcommand("schedule", "solve the carbon-aware allocation");
    add_common(schedule, schedule_opts, true);
    auto* simulate = app.add_subcommand("simulate", "train on a schedule");
    add_common(simulate, simulate_opts, true);
    simulate->add_option("--schedule-file", schedule_file,
                         "run a previously written schedule.csv instead of solving");
    bool baseline = false;
    simulate->add_flag("--baseline", baseline,
                       "run the no-slack full-participation baseline at the configured budget");
    auto* sweep = app.add_subcommand("sweep", "budget x placement experiment grid");
    add_common(sweep, sweep_opts, true);
    auto* report = app.add_subcommand("report", "render emitted CSVs as SVG charts");
    report->add_option("--in-dir", report_in, "directory with emitted CSVs")->required();
    report->add_option("--out-dir", report_out, "SVG destination (default: --in-dir)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (slack->parsed()) return cmd_analyze_slack(slack_opts);
        if (schedule->parsed()) return cmd_schedule(schedule_opts);
        if (simulate->parsed()) return cmd_simulate(simulate_opts, schedule_file, baseline);
        if (sweep->parsed()) return cmd_sweep(sweep_opts);
        if (report->parsed()) return cmd_report(report_in, report_out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return errc_exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
