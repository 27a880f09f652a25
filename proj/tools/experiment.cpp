#include "experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "carbonfl/errors.hpp"
#include "carbonfl/metrics.hpp"
#include "carbonfl/timeutil.hpp"

namespace carbonfl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt12(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

template <typename T>
std::vector<T> read_array(const json& j, const char* key, std::vector<T> fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<std::vector<T>>();
}

}  // namespace

ExperimentSpec ExperimentSpec::from_json(const json& j) {
    ExperimentSpec spec;
    spec.ci_file = j.value("ci_file", spec.ci_file);
    spec.start = j.value("start", spec.start);
    spec.hours = j.value("hours", spec.hours);
    const std::string gap = j.value("gap_policy", "reject");
    if (gap == "reject")
        spec.gap_policy = GapPolicy::reject;
    else if (gap == "forward_fill")
        spec.gap_policy = GapPolicy::forward_fill;
    else
        raise(Errc::bad_config, "unknown gap_policy '" + gap + "'");

    if (j.contains("clients")) {
        for (const auto& c : j.at("clients"))
            spec.clients.push_back(make_profile(c.at("client_id").get<int>(),
                                                c.at("region").get<std::string>(),
                                                c.at("power_kw").get<double>()));
    }
    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        spec.schedule.T = s.value("T", spec.schedule.T);
        spec.schedule.t_sl = s.value("t_sl", spec.schedule.t_sl);
        spec.schedule.t_ft = s.value("t_ft", spec.schedule.t_ft);
        spec.schedule.alpha = s.value("alpha", spec.schedule.alpha);
        spec.schedule.budget_kg = s.value("budget_kg", spec.schedule.budget_kg);
        spec.schedule.solver = parse_solver(s.value("solver", "auto"));
        spec.schedule.partial_enumeration =
            s.value("partial_enumeration", spec.schedule.partial_enumeration);
    }
    if (j.contains("fl")) {
        const auto& f = j.at("fl");
        spec.fl.tau = f.value("tau", spec.fl.tau);
        spec.fl.eta = f.value("eta", spec.fl.eta);
        spec.fl.batch_size = f.value("batch_size", spec.fl.batch_size);
        spec.fl.seed = f.value("seed", spec.fl.seed);
        spec.fl.dirichlet_beta = f.value("dirichlet_beta", spec.fl.dirichlet_beta);
        spec.fl.eval_every = f.value("eval_every", spec.fl.eval_every);
    }
    if (j.contains("task")) {
        const auto& t = j.at("task");
        spec.arch = parse_arch(t.value("arch", "softmax_regression"));
        spec.num_classes = t.value("num_classes", spec.num_classes);
        spec.feature_dim = t.value("feature_dim", spec.feature_dim);
        spec.samples_per_class = t.value("samples_per_class", spec.samples_per_class);
        spec.hidden_units = t.value("hidden_units", spec.hidden_units);
        spec.separation = t.value("separation", spec.separation);
        spec.idx_train_images = t.value("idx_train_images", spec.idx_train_images);
        spec.idx_train_labels = t.value("idx_train_labels", spec.idx_train_labels);
        spec.idx_test_images = t.value("idx_test_images", spec.idx_test_images);
        spec.idx_test_labels = t.value("idx_test_labels", spec.idx_test_labels);
    }
    if (j.contains("slack")) {
        const auto& s = j.at("slack");
        spec.slack_T = s.value("T", spec.slack_T);
        spec.t_sl_values = read_array<int>(s, "t_sl_values", {});
        spec.offsets = read_array<int>(s, "offsets", {});
        spec.num_random_offsets = s.value("num_random_offsets", 0);
        spec.offset_seed = s.value("offset_seed", spec.offset_seed);
    }
    if (j.contains("sweep")) {
        const auto& s = j.at("sweep");
        spec.budgets_kg = read_array<double>(s, "budgets_kg", {});
        spec.budgets_pct = read_array<double>(s, "budgets_pct", {});
        spec.s_values = read_array<int>(s, "s_values", {});
        spec.t_ft_values = read_array<int>(s, "t_ft_values", {});
        spec.alphas = read_array<double>(s, "alphas", {});
        spec.seeds = read_array<uint64_t>(s, "seeds", {});
    }
    return spec;
}

ExperimentSpec ExperimentSpec::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::file_not_found, path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        raise(Errc::bad_config, path + ": " + e.what());
    }
    return from_json(j);
}

json ExperimentSpec::to_json() const {
    json j;
    j["ci_file"] = ci_file;
    j["start"] = start;
    j["hours"] = hours;
    j["gap_policy"] = gap_policy == GapPolicy::reject ? "reject" : "forward_fill";
    j["clients"] = json::array();
    for (const auto& c : clients)
        j["clients"].push_back(
            {{"client_id", c.client_id}, {"region", c.region}, {"power_kw", c.power_kw}});
    j["schedule"] = {{"T", schedule.T},
                     {"t_sl", schedule.t_sl},
                     {"t_ft", schedule.t_ft},
                     {"alpha", schedule.alpha},
                     {"budget_kg", schedule.budget_kg},
                     {"solver", solver_name(schedule.solver)},
                     {"partial_enumeration", schedule.partial_enumeration}};
    j["fl"] = {{"tau", fl.tau},
               {"eta", fl.eta},
               {"batch_size", fl.batch_size},
               {"seed", fl.seed},
               {"dirichlet_beta", fl.dirichlet_beta},
               {"eval_every", fl.eval_every}};
    j["task"] = {{"arch", arch_name(arch)},
                 {"num_classes", num_classes},
                 {"feature_dim", feature_dim},
                 {"samples_per_class", samples_per_class},
                 {"hidden_units", hidden_units},
                 {"separation", separation},
                 {"idx_train_images", idx_train_images},
                 {"idx_train_labels", idx_train_labels},
                 {"idx_test_images", idx_test_images},
                 {"idx_test_labels", idx_test_labels}};
    j["slack"] = {{"T", slack_T},
                  {"t_sl_values", t_sl_values},
                  {"offsets", offsets},
                  {"num_random_offsets", num_random_offsets},
                  {"offset_seed", offset_seed}};
    j["sweep"] = {{"budgets_kg", budgets_kg}, {"budgets_pct", budgets_pct},
                  {"s_values", s_values},     {"t_ft_values", t_ft_values},
                  {"alphas", alphas},         {"seeds", seeds}};
    return j;
}

CiTraceSet ExperimentSpec::load_traces() const {
    if (ci_file.empty()) raise(Errc::bad_config, "no CI file given (config ci_file or --ci-file)");
    std::vector<std::string> regions;
    for (const auto& c : clients) {
        if (std::find(regions.begin(), regions.end(), c.region) == regions.end())
            regions.push_back(c.region);
    }
    if (regions.empty()) raise(Errc::bad_config, "no clients configured");
    return load_ci_traces(ci_file, regions, parse_hour_utc(start), hours, gap_policy);
}

CarbonCostMatrix ExperimentSpec::cost_matrix(const CiTraceSet& traces) const {
    return carbon_cost_matrix(traces, clients, hours);
}

FlTask ExperimentSpec::build_task(uint64_t seed) const {
    if (!idx_train_images.empty()) {
        FlTask task;
        task.arch = arch;
        task.hidden_units = hidden_units;
        task.train = load_idx_dataset(idx_train_images, idx_train_labels);
        task.test = load_idx_dataset(idx_test_images, idx_test_labels);
        task.partitions = dirichlet_partition(task.train, static_cast<int>(clients.size()),
                                              fl.dirichlet_beta, seed);
        return task;
    }
    return build_synthetic_fl_task(static_cast<int>(clients.size()), num_classes, feature_dim,
                                   samples_per_class, separation, fl.dirichlet_beta, seed, arch,
                                   hidden_units);
}

ScheduleMatrix ExperimentSpec::solve_schedule(const CarbonCostMatrix& costs) const {
    if (schedule.t_ft > 0) return solve_with_finetuning(costs, schedule);
    return solve_alpha_fair(costs, schedule);
}

double full_budget_reference(const CarbonCostMatrix& costs, int T) {
    if (T < 1 || T > costs.horizon) raise(Errc::bad_config, "reference T out of range");
    double total = 0.0;
    for (int t = 0; t < T; ++t)
        for (int c = 0; c < costs.clients(); ++c) total += costs.costs[c][t];
    return total;
}

void write_resolved_config(const ExperimentSpec& spec, const std::string& out_dir) {
    std::ofstream out(fs::path(out_dir) / "resolved_config.json");
    if (!out) raise(Errc::io, "cannot write resolved_config.json under " + out_dir);
    out << spec.to_json().dump(2) << '\n';
}

void write_slack_report_csv(const SlackSweepResult& sweep, const std::string& path) {
    std::ofstream out(path);
    if (!out) raise(Errc::io, "cannot open " + path + " for writing");
    out << "metric,param,value\n";
    for (size_t ti = 0; ti < sweep.t_sl_values.size(); ++ti) {
        for (size_t c = 0; c < sweep.savings_single_mean[ti].size(); ++c)
            out << "savings_single.c" << (c + 1) << ",t_sl=" << sweep.t_sl_values[ti] << ','
                << fmt12(sweep.savings_single_mean[ti][c]) << '\n';
        for (size_t n = 0; n < sweep.savings_multi_mean[ti].size(); ++n)
            out << "savings_multi.N" << (n + 1) << ",t_sl=" << sweep.t_sl_values[ti] << ','
                << fmt12(sweep.savings_multi_mean[ti][n]) << '\n';
    }
    if (!out) raise(Errc::io, "write failed: " + path);
}

namespace {

struct SweepJob {
    bool baseline = false;
    int budget_index = 0;
    double budget_kg = 0.0;
    double budget_pct = 0.0;
    double alpha = 0.0;
    int t_ft = 0;
    int s = 0;  // pinned window end; ignored when t_ft == 0
    std::string cell_name;
};

struct SweepOutcome {
    std::string status = "ok";  // ok | --- | error:<Name>
    double total_kg = 0.0;
    int rounds = 0;
    double mean_acc = 0.0, std_acc = 0.0, mean_loss = 0.0;
};

SweepOutcome run_cell(const ExperimentSpec& spec, const CarbonCostMatrix& costs,
                      const SweepJob& job, const std::string& cells_dir) {
    SweepOutcome out;
    ScheduleMatrix sched;
    try {
        if (job.baseline) {
            sched = no_slack_baseline(costs, job.budget_kg);
        } else {
            ScheduleConfig cfg = spec.schedule;
            cfg.budget_kg = job.budget_kg;
            cfg.alpha = job.alpha;
            cfg.t_ft = job.t_ft;
            if (job.t_ft > 0)
                sched = solve_with_window_at(costs, cfg, job.s);
            else
                sched = solve_alpha_fair(costs, cfg);
        }
    } catch (const Error& e) {
        out.status = e.code() == Errc::no_feasible_placement ? "---"
                                                             : std::string("error:") +
                                                                   errc_name(e.code());
        return out;
    } catch (const std::exception&) {
        out.status = "error:Unknown";
        return out;
    }
    out.total_kg = sched.total_kg;
    out.rounds = sched.training_rounds();

    std::vector<double> accs, losses;
    try {
        for (const uint64_t seed : spec.seeds) {
            const FlTask task = spec.build_task(seed);
            FlConfig fl = spec.fl;
            fl.seed = seed;
            const TrainingRun run = run_training(task, sched, costs, fl);
            write_run_csv(run, cells_dir + "/" + job.cell_name + "_seed" + std::to_string(seed) +
                                   ".csv");
            accs.push_back(run.final_test_acc);
            losses.push_back(run.final_test_loss);
        }
    } catch (const Error& e) {
        out.status = std::string("error:") + errc_name(e.code());
        return out;
    } catch (const std::exception&) {
        out.status = "error:Unknown";
        return out;
    }
    for (const double a : accs) out.mean_acc += a;
    for (const double l : losses) out.mean_loss += l;
    out.mean_acc /= accs.size();
    out.mean_loss /= losses.size();
    if (accs.size() > 1) {
        double ss = 0.0;
        for (const double a : accs) ss += (a - out.mean_acc) * (a - out.mean_acc);
        out.std_acc = std::sqrt(ss / (accs.size() - 1));
    }
    return out;
}

}  // namespace

void run_sweep(const ExperimentSpec& base_spec, const std::string& out_dir) {
    ExperimentSpec spec = base_spec;
    if (spec.clients.empty()) raise(Errc::bad_config, "sweep needs clients");
    if (spec.seeds.empty()) spec.seeds = {spec.fl.seed};
    if (spec.alphas.empty()) spec.alphas = {spec.schedule.alpha};
    if (spec.t_ft_values.empty()) spec.t_ft_values = {spec.schedule.t_ft};
    for (const int t_ft : spec.t_ft_values)
        if (t_ft > 0 && spec.s_values.empty())
            raise(Errc::bad_config, "sweep with t_ft > 0 needs s_values");

    const CiTraceSet traces = spec.load_traces();
    const CarbonCostMatrix costs = spec.cost_matrix(traces);
    const double reference = full_budget_reference(costs, spec.schedule.T);

    std::vector<std::pair<double, double>> budgets;  // (kg, pct)
    for (const double kg : spec.budgets_kg) budgets.push_back({kg, 100.0 * kg / reference});
    for (const double pct : spec.budgets_pct) budgets.push_back({pct / 100.0 * reference, pct});
    if (budgets.empty()) budgets.push_back({spec.schedule.budget_kg,
                                            100.0 * spec.schedule.budget_kg / reference});

    fs::create_directories(fs::path(out_dir) / "cells");
    write_resolved_config(spec, out_dir);
    const std::string cells_dir = (fs::path(out_dir) / "cells").string();

    std::vector<SweepJob> jobs;
    for (size_t bi = 0; bi < budgets.size(); ++bi) {
        SweepJob baseline;
        baseline.baseline = true;
        baseline.budget_index = static_cast<int>(bi);
        baseline.budget_kg = budgets[bi].first;
        baseline.budget_pct = budgets[bi].second;
        baseline.cell_name = "k" + std::to_string(bi) + "_baseline";
        jobs.push_back(baseline);
        for (size_t ai = 0; ai < spec.alphas.size(); ++ai) {
            for (const int t_ft : spec.t_ft_values) {
                const std::vector<int> s_list = t_ft > 0 ? spec.s_values : std::vector<int>{0};
                for (const int s : s_list) {
                    SweepJob job;
                    job.budget_index = static_cast<int>(bi);
                    job.budget_kg = budgets[bi].first;
                    job.budget_pct = budgets[bi].second;
                    job.alpha = spec.alphas[ai];
                    job.t_ft = t_ft;
                    job.s = s;
                    job.cell_name = "k" + std::to_string(bi) + "_a" + std::to_string(ai) +
                                    "_tft" + std::to_string(t_ft) + "_s" + std::to_string(s);
                    jobs.push_back(job);
                }
            }
        }
    }

    std::vector<SweepOutcome> outcomes(jobs.size());
    unsigned workers = std::thread::hardware_concurrency();
    if (const char* env = std::getenv("CARBONFL_WORKERS")) {
        const int parsed = std::atoi(env);
        if (parsed >= 1) workers = static_cast<unsigned>(parsed);
    }
    workers = std::max(1u, std::min<unsigned>(workers, jobs.size()));

    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= jobs.size()) return;
                outcomes[i] = run_cell(spec, costs, jobs[i], cells_dir);
            }
        });
    }
    for (auto& t : pool) t.join();

    // Summary assembled in deterministic grid order.
    std::ofstream out(fs::path(out_dir) / "summary.csv");
    if (!out) raise(Errc::io, "cannot write summary.csv under " + out_dir);
    out << "kind,budget_kg,budget_pct,alpha,t_ft,s,status,total_kg,rounds,mean_final_acc,"
           "std_final_acc,mean_final_loss\n";
    for (size_t i = 0; i < jobs.size(); ++i) {
        const SweepJob& job = jobs[i];
        const SweepOutcome& res = outcomes[i];
        out << (job.baseline ? "baseline" : "carbon_aware") << ',' << fmt12(job.budget_kg) << ','
            << fmt12(job.budget_pct) << ',';
        if (job.baseline)
            out << ",,,";
        else
            out << fmt12(job.alpha) << ',' << job.t_ft << ','
                << (job.t_ft > 0 ? std::to_string(job.s) : std::string()) << ',';
        out << res.status << ',';
        if (res.status == "ok")
            out << fmt12(res.total_kg) << ',' << res.rounds << ',' << fmt12(res.mean_acc) << ','
                << fmt12(res.std_acc) << ',' << fmt12(res.mean_loss);
        else
            out << ",,---,---,---";
        out << '\n';
    }
    if (!out) raise(Errc::io, "write failed: summary.csv");
}

}  // namespace carbonfl
