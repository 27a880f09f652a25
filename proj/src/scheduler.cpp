#include "carbonfl/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <queue>
#include <sstream>

#include "carbonfl/errors.hpp"

namespace carbonfl {

namespace {

double upow(double u, double alpha) { return u <= 0.0 ? 0.0 : std::pow(u, alpha); }

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// One flattened decision variable.
struct Item {
    int client;
    int slot;
    double cost;    // g_c^(t)
    double weight;  // g_max - g_c^(t)
};

// Residual allocation problem: free items live in columns [0, limit_col),
// each client starts from a base utility (the forced fine-tuning window's
// contribution), and the budget covers the free items only.
struct Instance {
    const CarbonCostMatrix* costs = nullptr;
    int limit_col = 0;
    double budget = 0.0;
    double alpha = 1.0;
    std::vector<double> base_util;  // size K

    int clients() const { return costs->clients(); }
    int item_count() const { return clients() * limit_col; }
    std::vector<Item> items() const {
        std::vector<Item> out;
        out.reserve(item_count());
        for (int c = 0; c < clients(); ++c)
            for (int t = 0; t < limit_col; ++t)
                out.push_back({c, t, costs->costs[c][t], costs->g_max - costs->costs[c][t]});
        return out;
    }
};

struct Selection {
    std::vector<uint8_t> take;  // aligned with Instance::items()
    std::vector<double> util;   // per-client utility including base
};

double selection_objective(const Selection& sel, double alpha) {
    double obj = 0.0;
    for (const double u : sel.util) obj += upow(u, alpha);
    return obj;
}

// ---------------------------------------------------------------------------
// Exact branch-and-bound.

class ExactSolver {
public:
    explicit ExactSolver(const Instance& inst)
        : inst_(inst), items_(inst.items()), n_(static_cast<int>(items_.size())) {
        const int K = inst.clients();
        // suffix_weight_[i * K + c]: total weight of items >= i owned by c.
        suffix_weight_.assign(static_cast<size_t>(n_ + 1) * K, 0.0);
        for (int i = n_ - 1; i >= 0; --i) {
            for (int c = 0; c < K; ++c)
                suffix_weight_[i * K + c] = suffix_weight_[(i + 1) * K + c];
            suffix_weight_[i * K + items_[i].client] += items_[i].weight;
        }
    }

    Selection solve() {
        take_.assign(n_, 0);
        util_ = inst_.base_util;
        best_take_.assign(n_, 0);
        best_obj_ = -std::numeric_limits<double>::infinity();
        cost_used_ = 0.0;
        scratch_.reserve(n_);
        dfs(0);
        Selection sel;
        sel.take = best_take_;
        // Recompute utilities canonically (base + weights in item order).
        sel.util = inst_.base_util;
        for (int i = 0; i < n_; ++i)
            if (sel.take[i]) sel.util[items_[i].client] += items_[i].weight;
        return sel;
    }

private:
    void dfs(int i) {
        if (i == n_) {
            double obj = 0.0;
            for (const double u : util_) obj += upow(u, inst_.alpha);
            // Strict improvement only: the first optimum in include-first
            // DFS order selects the earliest (client, slot) items.
            if (obj > best_obj_) {
                best_obj_ = obj;
                best_take_ = take_;
            }
            return;
        }
        if (bound(i) <= best_obj_) return;
        const Item& it = items_[i];
        if (cost_used_ + it.cost <= inst_.budget + kBudgetTolKg) {
            take_[i] = 1;
            const double saved_util = util_[it.client];
            const double saved_cost = cost_used_;
            util_[it.client] = saved_util + it.weight;
            cost_used_ = saved_cost + it.cost;
            dfs(i + 1);
            util_[it.client] = saved_util;
            cost_used_ = saved_cost;
        }
        take_[i] = 0;
        dfs(i + 1);
    }

    // Upper bound on the objective achievable below node i.
    double bound(int i) {
        const int K = inst_.clients();
        // Monotone bound: grant every undecided item for free.
        double ub_free = 0.0;
        for (int c = 0; c < K; ++c) ub_free += upow(util_[c] + suffix_weight_[i * K + c], inst_.alpha);
        if (ub_free <= best_obj_) return ub_free;
        // Fractional relaxation: each undecided item's marginal gain is at
        // most its first-addition gain (concavity), so a fractional
        // knapsack over those gains bounds any feasible completion.
        double obj_now = 0.0;
        for (const double u : util_) obj_now += upow(u, inst_.alpha);
        scratch_.clear();
        for (int j = i; j < n_; ++j) {
            const Item& it = items_[j];
            const double gain =
                upow(util_[it.client] + it.weight, inst_.alpha) - upow(util_[it.client], inst_.alpha);
            scratch_.push_back({gain, it.cost});
        }
        std::sort(scratch_.begin(), scratch_.end(), [](const auto& a, const auto& b) {
            return a.first * b.second > b.first * a.second;
        });
        double capacity = inst_.budget + kBudgetTolKg - cost_used_;
        double ub_frac = obj_now;
        for (const auto& [gain, cost] : scratch_) {
            if (capacity <= 0.0) break;
            if (cost <= capacity) {
                ub_frac += gain;
                capacity -= cost;
            } else {
                ub_frac += gain * (capacity / cost);
                capacity = 0.0;
            }
        }
        return std::min(ub_free, ub_frac);
    }

    const Instance& inst_;
    std::vector<Item> items_;
    int n_;
    std::vector<double> suffix_weight_;
    std::vector<uint8_t> take_, best_take_;
    std::vector<double> util_;
    std::vector<std::pair<double, double>> scratch_;
    double cost_used_ = 0.0;
    double best_obj_ = 0.0;
};

Selection solve_exact_instance(const Instance& inst) {
    if (inst.item_count() > 24)
        raise(Errc::instance_too_large,
              std::to_string(inst.item_count()) + " decision variables exceed the exact cap of 24");
    return ExactSolver(inst).solve();
}

// ---------------------------------------------------------------------------
// Lazy cost-benefit greedy.

struct QueueEntry {
    double gain;
    double cost;
    int client;
    int slot;
    int item_index;
    uint32_t stamp;  // per-client utility version the gain was computed at
};

// Max-heap priority: gain/cost descending (cross-multiplied so zero costs
// order correctly), then (client, slot) ascending.
struct LowerPriority {
    bool operator()(const QueueEntry& x, const QueueEntry& y) const {
        const double lx = x.gain * y.cost;
        const double ly = y.gain * x.cost;
        if (lx != ly) return lx < ly;
        if (x.client != y.client) return x.client > y.client;
        return x.slot > y.slot;
    }
};

Selection greedy_from_seed(const Instance& inst, const std::vector<Item>& items,
                           const std::vector<int>& seed_items) {
    const int K = inst.clients();
    Selection sel;
    sel.take.assign(items.size(), 0);
    sel.util = inst.base_util;
    double remaining = inst.budget;
    std::vector<uint32_t> stamp(K, 0);

    for (const int i : seed_items) {
        sel.take[i] = 1;
        sel.util[items[i].client] += items[i].weight;
        remaining -= items[i].cost;
        ++stamp[items[i].client];
    }

    std::priority_queue<QueueEntry, std::vector<QueueEntry>, LowerPriority> queue;
    for (int i = 0; i < static_cast<int>(items.size()); ++i) {
        if (sel.take[i]) continue;
        const Item& it = items[i];
        const double gain =
            upow(sel.util[it.client] + it.weight, inst.alpha) - upow(sel.util[it.client], inst.alpha);
        queue.push({gain, it.cost, it.client, it.slot, i, stamp[it.client]});
    }
    while (!queue.empty()) {
        QueueEntry top = queue.top();
        queue.pop();
        if (top.stamp != stamp[top.client]) {
            // Stale bound: the client's utility moved since this gain was
            // computed. Re-evaluate and reinsert.
            const Item& it = items[top.item_index];
            top.gain = upow(sel.util[it.client] + it.weight, inst.alpha) -
                       upow(sel.util[it.client], inst.alpha);
            top.stamp = stamp[top.client];
            queue.push(top);
            continue;
        }
        if (top.cost > remaining + kBudgetTolKg) continue;  // never affordable again
        sel.take[top.item_index] = 1;
        sel.util[top.client] += items[top.item_index].weight;
        remaining -= top.cost;
        ++stamp[top.client];
    }
    return sel;
}

Selection solve_greedy_instance(const Instance& inst, bool partial_enumeration) {
    const std::vector<Item> items = inst.items();
    Selection best = greedy_from_seed(inst, items, {});
    double best_obj = selection_objective(best, inst.alpha);

    // Best single element: with it, cost-benefit greedy guarantees at
    // least (1 - 1/e)/2 of the optimum under the knapsack constraint.
    int best_single = -1;
    double best_single_obj = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < static_cast<int>(items.size()); ++i) {
        if (items[i].cost > inst.budget + kBudgetTolKg) continue;
        double obj = 0.0;
        for (int c = 0; c < inst.clients(); ++c) {
            const double u = inst.base_util[c] + (items[i].client == c ? items[i].weight : 0.0);
            obj += upow(u, inst.alpha);
        }
        if (obj > best_single_obj) {
            best_single_obj = obj;
            best_single = i;
        }
    }
    if (best_single >= 0 && best_single_obj > best_obj) {
        Selection sel;
        sel.take.assign(items.size(), 0);
        sel.take[best_single] = 1;
        sel.util = inst.base_util;
        sel.util[items[best_single].client] += items[best_single].weight;
        best = sel;
        best_obj = best_single_obj;
    }

    if (partial_enumeration) {
        const int n = static_cast<int>(items.size());
        for (int a = 0; a < n; ++a) {
            if (items[a].cost > inst.budget + kBudgetTolKg) continue;
            for (int b = a + 1; b < n; ++b) {
                const double cost_ab = items[a].cost + items[b].cost;
                if (cost_ab > inst.budget + kBudgetTolKg) continue;
                for (int c = b + 1; c < n; ++c) {
                    if (cost_ab + items[c].cost > inst.budget + kBudgetTolKg) continue;
                    Selection sel = greedy_from_seed(inst, items, {a, b, c});
                    const double obj = selection_objective(sel, inst.alpha);
                    if (obj > best_obj) {
                        best_obj = obj;
                        best = sel;
                    }
                }
            }
        }
    }
    return best;
}

Selection solve_instance(const Instance& inst, SolverKind kind, bool partial_enumeration) {
    switch (kind) {
        case SolverKind::exact:
            return solve_exact_instance(inst);
        case SolverKind::greedy:
            return solve_greedy_instance(inst, partial_enumeration);
        case SolverKind::auto_select:
        default:
            if (inst.item_count() <= 24) return solve_exact_instance(inst);
            return solve_greedy_instance(inst, partial_enumeration);
    }
}

ScheduleMatrix assemble(const CarbonCostMatrix& costs, const ScheduleConfig& config,
                        const Selection& sel, int limit_col, std::optional<int> s) {
    const int K = costs.clients();
    const int H = config.horizon();
    ScheduleMatrix m;
    m.T = config.T;
    m.t_ft = s ? config.t_ft : 0;
    m.s = s;
    m.alpha = config.alpha;
    m.a.assign(K, std::vector<uint8_t>(H, 0));
    for (int c = 0; c < K; ++c)
        for (int t = 0; t < limit_col; ++t) m.a[c][t] = sel.take[c * limit_col + t];
    if (s) {
        const int begin = config.T + *s - config.t_ft;  // 0-based inclusive
        const int end = config.T + *s;                  // 0-based exclusive
        for (int c = 0; c < K; ++c)
            for (int t = begin; t < end; ++t) m.a[c][t] = 1;
    }
    m.total_kg = schedule_total_kg(m.a, costs);
    m.objective = objective_value(m.a, costs, config.alpha);
    return m;
}

void check_dims(const CarbonCostMatrix& costs, const ScheduleConfig& config) {
    if (costs.clients() < 1) raise(Errc::dimension_mismatch, "cost matrix has no clients");
    if (config.horizon() > costs.horizon)
        raise(Errc::dimension_mismatch, "T + t_sl = " + std::to_string(config.horizon()) +
                                            " exceeds cost horizon " +
                                            std::to_string(costs.horizon));
}

}  // namespace

SolverKind parse_solver(const std::string& name) {
    if (name == "exact") return SolverKind::exact;
    if (name == "greedy") return SolverKind::greedy;
    if (name == "auto") return SolverKind::auto_select;
    raise(Errc::bad_config, "unknown solver '" + name + "'");
}

const char* solver_name(SolverKind kind) {
    switch (kind) {
        case SolverKind::exact:
            return "exact";
        case SolverKind::greedy:
            return "greedy";
        default:
            return "auto";
    }
}

void ScheduleConfig::validate() const {
    if (T < 1) raise(Errc::bad_config, "T must be >= 1");
    if (t_sl < 0) raise(Errc::bad_config, "t_sl must be >= 0");
    if (t_ft < 0) raise(Errc::bad_config, "t_ft must be >= 0");
    if (!(alpha > 0.0) || alpha > 1.0) raise(Errc::bad_alpha, "alpha must lie in (0, 1]");
    if (!(budget_kg >= 0.0)) raise(Errc::bad_config, "budget_kg must be >= 0");
    if (t_ft > T + t_sl) raise(Errc::bad_config, "t_ft exceeds the scheduling horizon");
    if (t_ft >= 1 && t_sl < t_ft)
        raise(Errc::bad_config, "fine-tuning needs t_sl >= t_ft so a window placement exists");
}

int ScheduleMatrix::last_active_slot() const {
    for (int t = horizon() - 1; t >= 0; --t)
        for (const auto& row : a)
            if (row[t]) return t + 1;
    return 0;
}

int ScheduleMatrix::selected_slots() const {
    int n = 0;
    for (const auto& row : a)
        for (const uint8_t v : row) n += v;
    return n;
}

double schedule_total_kg(const std::vector<std::vector<uint8_t>>& a,
                         const CarbonCostMatrix& costs) {
    if (a.empty()) return 0.0;
    double total = 0.0;
    const int H = static_cast<int>(a[0].size());
    for (int t = 0; t < H; ++t)
        for (size_t c = 0; c < a.size(); ++c)
            if (a[c][t]) total += costs.costs[c][t];
    return total;
}

double objective_value(const std::vector<std::vector<uint8_t>>& a, const CarbonCostMatrix& costs,
                       double alpha) {
    if (!(alpha > 0.0) || alpha > 1.0) raise(Errc::bad_alpha, "alpha must lie in (0, 1]");
    if (static_cast<int>(a.size()) != costs.clients())
        raise(Errc::dimension_mismatch, "row count does not match client count");
    double obj = 0.0;
    for (size_t c = 0; c < a.size(); ++c) {
        if (static_cast<int>(a[c].size()) > costs.horizon || (c > 0 && a[c].size() != a[0].size()))
            raise(Errc::dimension_mismatch, "bad schedule row length");
        double util = 0.0;
        for (size_t t = 0; t < a[c].size(); ++t)
            if (a[c][t]) util += costs.g_max - costs.costs[c][t];
        obj += upow(util, alpha);
    }
    return obj;
}

ScheduleMatrix solve_alpha_fair_exact(const CarbonCostMatrix& costs, const ScheduleConfig& config) {
    config.validate();
    check_dims(costs, config);
    Instance inst{&costs, config.horizon(), config.budget_kg, config.alpha,
                  std::vector<double>(costs.clients(), 0.0)};
    return assemble(costs, config, solve_exact_instance(inst), config.horizon(), std::nullopt);
}

ScheduleMatrix solve_alpha_fair_greedy(const CarbonCostMatrix& costs,
                                       const ScheduleConfig& config) {
    config.validate();
    check_dims(costs, config);
    Instance inst{&costs, config.horizon(), config.budget_kg, config.alpha,
                  std::vector<double>(costs.clients(), 0.0)};
    return assemble(costs, config, solve_greedy_instance(inst, config.partial_enumeration),
                    config.horizon(), std::nullopt);
}

ScheduleMatrix solve_alpha_fair(const CarbonCostMatrix& costs, const ScheduleConfig& config) {
    config.validate();
    check_dims(costs, config);
    Instance inst{&costs, config.horizon(), config.budget_kg, config.alpha,
                  std::vector<double>(costs.clients(), 0.0)};
    return assemble(costs, config,
                    solve_instance(inst, config.solver, config.partial_enumeration),
                    config.horizon(), std::nullopt);
}

ScheduleMatrix solve_with_window_at(const CarbonCostMatrix& costs, const ScheduleConfig& config,
                                    int s) {
    config.validate();
    check_dims(costs, config);
    if (config.t_ft < 1) raise(Errc::bad_config, "window placement needs t_ft >= 1");
    if (s < 1 || s > config.t_sl)
        raise(Errc::bad_config, "s must lie in [1, t_sl = " + std::to_string(config.t_sl) + "]");
    const int K = costs.clients();
    const int begin = config.T + s - config.t_ft;  // 0-based inclusive
    const int end = config.T + s;                  // 0-based exclusive

    double window_cost = 0.0;
    for (int t = begin; t < end; ++t)
        for (int c = 0; c < K; ++c) window_cost += costs.costs[c][t];
    if (window_cost > config.budget_kg + kBudgetTolKg)
        raise(Errc::no_feasible_placement,
              "fine-tuning window ending at s=" + std::to_string(s) + " costs " +
                  fmt17(window_cost) + " kg, over the budget of " + fmt17(config.budget_kg));

    Instance inst;
    inst.costs = &costs;
    inst.limit_col = begin;
    inst.budget = config.budget_kg - window_cost;
    inst.alpha = config.alpha;
    inst.base_util.assign(K, 0.0);
    for (int c = 0; c < K; ++c)
        for (int t = begin; t < end; ++t) inst.base_util[c] += costs.g_max - costs.costs[c][t];

    const Selection sel = solve_instance(inst, config.solver, config.partial_enumeration);
    return assemble(costs, config, sel, inst.limit_col, s);
}

ScheduleMatrix solve_with_finetuning(const CarbonCostMatrix& costs, const ScheduleConfig& config) {
    config.validate();
    if (config.t_ft == 0) return solve_alpha_fair(costs, config);
    check_dims(costs, config);
    std::optional<ScheduleMatrix> best;
    for (int s = 1; s <= config.t_sl; ++s) {
        ScheduleMatrix candidate;
        try {
            candidate = solve_with_window_at(costs, config, s);
        } catch (const Error& e) {
            if (e.code() == Errc::no_feasible_placement) continue;
            throw;
        }
        if (!best || candidate.objective > best->objective) best = std::move(candidate);
    }
    if (!best)
        raise(Errc::no_feasible_placement, "every fine-tuning window exceeds the carbon budget");
    return *best;
}

ScheduleMatrix no_slack_baseline(const CarbonCostMatrix& costs, double budget_kg) {
    if (!(budget_kg >= 0.0)) raise(Errc::bad_config, "budget_kg must be >= 0");
    const int K = costs.clients();
    const int H = costs.horizon;
    ScheduleMatrix m;
    m.a.assign(K, std::vector<uint8_t>(H, 0));
    m.alpha = 1.0;
    m.t_ft = 0;
    double running = 0.0;
    int rounds = 0;
    for (int t = 0; t < H; ++t) {
        double round_cost = 0.0;
        for (int c = 0; c < K; ++c) round_cost += costs.costs[c][t];
        if (running + round_cost > budget_kg + kBudgetTolKg) break;
        for (int c = 0; c < K; ++c) m.a[c][t] = 1;
        running += round_cost;
        ++rounds;
    }
    m.T = rounds;
    m.total_kg = schedule_total_kg(m.a, costs);
    m.objective = objective_value(m.a, costs, 1.0);
    return m;
}

void write_schedule_csv(const ScheduleMatrix& schedule, const std::string& path) {
    std::ofstream out(path);
    if (!out) raise(Errc::io, "cannot open " + path + " for writing");
    out << "client";
    for (int t = 1; t <= schedule.horizon(); ++t) out << ',' << t;
    out << '\n';
    for (int c = 0; c < schedule.clients(); ++c) {
        out << (c + 1);
        for (const uint8_t v : schedule.a[c]) out << ',' << static_cast<int>(v);
        out << '\n';
    }
    if (schedule.s) out << "# s=" << *schedule.s << '\n';
    out << "# total_kg=" << fmt17(schedule.total_kg) << '\n';
    out << "# objective=" << fmt17(schedule.objective) << '\n';
    if (!out) raise(Errc::io, "write failed: " + path);
}

ScheduleMatrix read_schedule_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::file_not_found, path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("client,", 0) != 0)
        raise(Errc::schema, path + ": bad schedule header");
    int horizon = 0;
    for (const char c : line) horizon += (c == ',');
    ScheduleMatrix m;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ss(line);
            std::string hash, kv;
            ss >> hash >> kv;
            const auto eq = kv.find('=');
            if (eq == std::string::npos) raise(Errc::schema, path + ": bad footer '" + line + "'");
            const std::string key = kv.substr(0, eq);
            const std::string value = kv.substr(eq + 1);
            if (key == "s")
                m.s = std::stoi(value);
            else if (key == "total_kg")
                m.total_kg = std::stod(value);
            else if (key == "objective")
                m.objective = std::stod(value);
            else
                raise(Errc::schema, path + ": unknown footer key '" + key + "'");
            continue;
        }
        std::vector<uint8_t> row;
        row.reserve(horizon);
        std::istringstream ss(line);
        std::string field;
        if (!std::getline(ss, field, ',')) raise(Errc::schema, path + ": bad row");
        while (std::getline(ss, field, ',')) {
            if (field != "0" && field != "1")
                raise(Errc::schema, path + ": schedule cells must be 0 or 1");
            row.push_back(field == "1" ? 1 : 0);
        }
        if (static_cast<int>(row.size()) != horizon)
            raise(Errc::schema, path + ": row length does not match header");
        m.a.push_back(std::move(row));
    }
    if (m.a.empty()) raise(Errc::schema, path + ": no client rows");
    return m;
}

}  // namespace carbonfl
