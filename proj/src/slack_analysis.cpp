#include "carbonfl/slack_analysis.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "carbonfl/errors.hpp"
#include "carbonfl/rng.hpp"

namespace carbonfl {

namespace {

double slot_sum(std::span<const double> row, const std::vector<int>& slots_1based) {
    double total = 0.0;
    for (const int s : slots_1based) total += row[s - 1];
    return total;
}

double first_t_sum(std::span<const double> row, int T) {
    double total = 0.0;
    for (int t = 0; t < T; ++t) total += row[t];
    return total;
}

// Cost of a client's T cheapest slots within the window.
double optimized_cost(std::span<const double> row, int T, int t_sl) {
    return slot_sum(row, best_slots_single(row, T, t_sl));
}

std::vector<int> rank_clients(const std::vector<double>& totals, int N) {
    const int K = static_cast<int>(totals.size());
    if (N < 1 || N > K) raise(Errc::bad_n, "N must be in [1, " + std::to_string(K) + "]");
    std::vector<int> order(K);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (totals[a] != totals[b]) return totals[a] < totals[b];
        return a < b;
    });
    order.resize(N);
    std::sort(order.begin(), order.end());
    for (int& c : order) ++c;  // 1-based client ids
    return order;
}

}  // namespace

std::vector<int> best_slots_single(std::span<const double> row, int T, int t_sl) {
    if (T < 1) raise(Errc::window_too_short, "T must be >= 1");
    if (t_sl < 0) raise(Errc::window_too_short, "t_sl must be >= 0");
    const int window = T + t_sl;
    if (window > static_cast<int>(row.size()))
        raise(Errc::window_too_short, "T + t_sl = " + std::to_string(window) +
                                          " exceeds row length " + std::to_string(row.size()));
    std::vector<int> order(window);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (row[a] != row[b]) return row[a] < row[b];
        return a < b;
    });
    order.resize(T);
    std::sort(order.begin(), order.end());
    for (int& s : order) ++s;  // 1-based
    return order;
}

SlackReport savings_single(std::span<const double> row, int client_id, int T, int t_sl) {
    SlackReport rep;
    rep.client_id = client_id;
    rep.t_sl = t_sl;
    rep.chosen_slots = best_slots_single(row, T, t_sl);
    rep.baseline_kg = first_t_sum(row, T);
    if (rep.baseline_kg <= 0.0)
        raise(Errc::zero_baseline, "first-" + std::to_string(T) + " cost total is zero");
    rep.optimized_kg = slot_sum(row, rep.chosen_slots);
    rep.savings_fraction = 1.0 - rep.optimized_kg / rep.baseline_kg;
    return rep;
}

std::vector<int> select_clients_fixed(const CarbonCostMatrix& costs, int N, int T) {
    if (T < 1 || T > costs.horizon) raise(Errc::window_too_short, "T out of range");
    std::vector<double> totals(costs.clients());
    for (int c = 0; c < costs.clients(); ++c) totals[c] = first_t_sum(costs.row(c), T);
    return rank_clients(totals, N);
}

std::vector<int> select_clients_slack(const CarbonCostMatrix& costs, int N, int T, int t_sl) {
    if (T < 1 || T + t_sl > costs.horizon) raise(Errc::window_too_short, "T + t_sl out of range");
    std::vector<double> totals(costs.clients());
    for (int c = 0; c < costs.clients(); ++c) totals[c] = optimized_cost(costs.row(c), T, t_sl);
    return rank_clients(totals, N);
}

SelectionReport savings_multi(const CarbonCostMatrix& costs, int N, int T, int t_sl) {
    SelectionReport rep;
    rep.n = N;
    rep.fixed_set = select_clients_fixed(costs, N, T);
    rep.slack_set = select_clients_slack(costs, N, T, t_sl);
    rep.fixed_kg = 0.0;
    for (const int c : rep.fixed_set) rep.fixed_kg += first_t_sum(costs.row(c - 1), T);
    rep.slack_kg = 0.0;
    for (const int c : rep.slack_set) rep.slack_kg += optimized_cost(costs.row(c - 1), T, t_sl);
    if (rep.fixed_kg <= 0.0) raise(Errc::zero_baseline, "fixed-selection cost total is zero");
    rep.savings_fraction = 1.0 - rep.slack_kg / rep.fixed_kg;
    return rep;
}

SlackSweepResult sweep_slack(const CarbonCostMatrix& costs, int T,
                             const std::vector<int>& t_sl_values,
                             const std::vector<int>& offsets) {
    if (offsets.empty()) raise(Errc::bad_config, "at least one start offset required");
    if (t_sl_values.empty()) raise(Errc::bad_config, "at least one t_sl value required");
    const int K = costs.clients();
    int max_t_sl = 0;
    for (const int t : t_sl_values) max_t_sl = std::max(max_t_sl, t);
    for (const int o : offsets)
        if (o < 0 || o + T + max_t_sl > costs.horizon)
            raise(Errc::offset_out_of_range, "offset " + std::to_string(o) +
                                                 " leaves no room for T + t_sl slots");

    SlackSweepResult out;
    out.t_sl_values = t_sl_values;
    out.offsets = offsets;
    out.savings_single_mean.assign(t_sl_values.size(), std::vector<double>(K, 0.0));
    out.savings_multi_mean.assign(t_sl_values.size(), std::vector<double>(K, 0.0));

    for (const int o : offsets) {
        // View of the cost matrix starting at the offset.
        CarbonCostMatrix shifted;
        shifted.horizon = costs.horizon - o;
        shifted.g_max = costs.g_max;
        for (int c = 0; c < K; ++c)
            shifted.costs.emplace_back(costs.row(c).begin() + o, costs.row(c).end());
        for (size_t ti = 0; ti < t_sl_values.size(); ++ti) {
            const int t_sl = t_sl_values[ti];
            for (int c = 0; c < K; ++c)
                out.savings_single_mean[ti][c] +=
                    savings_single(shifted.row(c), c + 1, T, t_sl).savings_fraction;
            for (int n = 1; n <= K; ++n)
                out.savings_multi_mean[ti][n - 1] +=
                    savings_multi(shifted, n, T, t_sl).savings_fraction;
        }
    }
    const double inv = 1.0 / static_cast<double>(offsets.size());
    for (auto& per_t : out.savings_single_mean)
        for (double& v : per_t) v *= inv;
    for (auto& per_t : out.savings_multi_mean)
        for (double& v : per_t) v *= inv;
    return out;
}

std::vector<int> draw_start_offsets(int max_offset, int count, uint64_t seed) {
    if (max_offset < 0) raise(Errc::offset_out_of_range, "max_offset must be >= 0");
    if (count < 1 || count > max_offset + 1)
        raise(Errc::bad_config, "offset count must be in [1, max_offset + 1]");
    Rng rng(seed, /*stream=*/0x0ff5e7);
    return rng.sample_without_replacement(max_offset + 1, count);
}

}  // namespace carbonfl
