#include "carbonfl/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "carbonfl/errors.hpp"
#include "carbonfl/rng.hpp"

namespace carbonfl {

SelectionStats selection_stats_range(const std::vector<std::vector<uint8_t>>& a, int first,
                                     int last) {
    const int K = static_cast<int>(a.size());
    if (K == 0) raise(Errc::dimension_mismatch, "empty matrix");
    const int H = static_cast<int>(a[0].size());
    if (first < 0 || last > H || first >= last)
        raise(Errc::bad_config, "frequency horizon [" + std::to_string(first) + ", " +
                                    std::to_string(last) + ") is empty or out of range");
    SelectionStats stats;
    stats.pi.assign(K, 0.0);
    for (int c = 0; c < K; ++c) {
        int count = 0;
        for (int t = first; t < last; ++t) count += a[c][t];
        stats.pi[c] = static_cast<double>(count) / static_cast<double>(last - first);
        if (count == 0) stats.zero_frequency_clients.push_back(c + 1);
    }
    if (stats.zero_frequency_clients.empty()) {
        double acc = 0.0;
        for (const double p : stats.pi) acc += (1.0 - p) / p;
        stats.rho_h = acc / K;
    }
    double norm1 = 0.0;
    for (const double p : stats.pi) norm1 += p;
    if (norm1 > 0.0) {
        double tv = 0.0;
        for (const double p : stats.pi) tv += std::abs(1.0 / K - p / norm1);
        stats.tv = 0.5 * tv;
    }
    return stats;
}

SelectionStats selection_stats(const ScheduleMatrix& schedule, FrequencyHorizon horizon) {
    int last;
    if (horizon == FrequencyHorizon::full) {
        last = schedule.horizon();
    } else if (schedule.s) {
        last = schedule.T + *schedule.s - schedule.t_ft;
    } else {
        // All training rounds; an all-zero schedule falls back to the full
        // matrix so the frequencies are well-defined (every pi = 0).
        last = schedule.last_active_slot();
        if (last == 0) last = schedule.horizon();
    }
    return selection_stats_range(schedule.a, 0, last);
}

void ParticipationChain::validate() const {
    if (p01.empty() || p01.size() != p10.size())
        raise(Errc::bad_config, "chain needs matched p01/p10 vectors");
    auto check_pair = [](double a, double b, const std::string& who) {
        if (!(a >= 0.0 && a <= 1.0 && b >= 0.0 && b <= 1.0))
            raise(Errc::bad_config, who + ": probabilities must lie in [0, 1]");
        // lambda2 = 1 - p01 - p10 in [-1, 1); a frozen chain (both zero)
        // never mixes and is rejected.
        if (a + b <= 0.0) raise(Errc::bad_config, who + ": p01 + p10 must be positive");
    };
    for (int c = 0; c < clients(); ++c)
        check_pair(p01[c], p10[c], "client " + std::to_string(c + 1));
    if (!(coupling >= 0.0 && coupling <= 1.0))
        raise(Errc::bad_config, "coupling must lie in [0, 1]");
    if (coupling > 0.0) check_pair(latent_p01, latent_p10, "latent chain");
}

ParticipationChain ParticipationChain::homogeneous(int K, double q, double lambda2,
                                                   double coupling) {
    if (K < 1) raise(Errc::bad_config, "K must be >= 1");
    if (!(q > 0.0 && q < 1.0)) raise(Errc::bad_config, "stationary activity q must lie in (0, 1)");
    if (!(lambda2 >= -1.0 && lambda2 < 1.0))
        raise(Errc::bad_config, "lambda2 must lie in [-1, 1)");
    ParticipationChain chain;
    chain.p01.assign(K, (1.0 - lambda2) * q);
    chain.p10.assign(K, (1.0 - lambda2) * (1.0 - q));
    chain.coupling = coupling;
    chain.latent_p01 = (1.0 - lambda2) * q;
    chain.latent_p10 = (1.0 - lambda2) * (1.0 - q);
    chain.validate();
    return chain;
}

std::vector<std::vector<uint8_t>> mc_generate_schedule(const ParticipationChain& chain, int rounds,
                                                       uint64_t seed) {
    chain.validate();
    if (rounds < 1) raise(Errc::bad_config, "rounds must be >= 1");
    const int K = chain.clients();

    // Latent chain first; clients may copy its state.
    std::vector<uint8_t> latent(rounds, 0);
    if (chain.coupling > 0.0) {
        Rng rng(seed, /*stream=*/static_cast<uint64_t>(K) + 1);
        const double q = chain.latent_p01 / (chain.latent_p01 + chain.latent_p10);
        uint8_t state = rng.next_unit() < q ? 1 : 0;
        latent[0] = state;
        for (int t = 1; t < rounds; ++t) {
            const double flip = state ? chain.latent_p10 : chain.latent_p01;
            if (rng.next_unit() < flip) state ^= 1;
            latent[t] = state;
        }
    }

    std::vector<std::vector<uint8_t>> a(K, std::vector<uint8_t>(rounds, 0));
    for (int c = 0; c < K; ++c) {
        Rng rng(seed, static_cast<uint64_t>(c));
        uint8_t state = rng.next_unit() < chain.stationary_activity(c) ? 1 : 0;
        a[c][0] = chain.coupling > 0.0 && rng.next_unit() < chain.coupling ? latent[0] : state;
        state = a[c][0];
        for (int t = 1; t < rounds; ++t) {
            const double flip = state ? chain.p10[c] : chain.p01[c];
            uint8_t next = state;
            if (rng.next_unit() < flip) next ^= 1;
            if (chain.coupling > 0.0 && rng.next_unit() < chain.coupling) next = latent[t];
            a[c][t] = next;
            state = next;
        }
    }
    return a;
}

CorrelationEstimate estimate_correlation(const std::vector<std::vector<uint8_t>>& a) {
    const int K = static_cast<int>(a.size());
    if (K == 0) raise(Errc::dimension_mismatch, "empty matrix");
    const int H = static_cast<int>(a[0].size());
    if (H < 2) raise(Errc::dimension_mismatch, "need at least 2 columns");

    CorrelationEstimate est;
    double acc = 0.0;
    for (int c = 0; c < K; ++c) {
        int n01 = 0, n00 = 0, n10 = 0, n11 = 0;
        for (int t = 1; t < H; ++t) {
            const int prev = a[c][t - 1], cur = a[c][t];
            if (prev == 0)
                (cur ? n01 : n00) += 1;
            else
                (cur ? n11 : n10) += 1;
        }
        if (n01 + n10 == 0) {
            // Constant row: the chain never mixes, lambda2 := 1 by convention.
            est.degenerate_clients.push_back(c + 1);
            acc += 1.0;
            continue;
        }
        const double p01 = (n01 + 1.0) / (n00 + n01 + 2.0);
        const double p10 = (n10 + 1.0) / (n10 + n11 + 2.0);
        acc += std::abs(1.0 - p01 - p10);
    }
    est.rho_t = acc / K;

    // Lumped active-count process on {0..K}: a tractable surrogate for the
    // 2^K-state joint chain, estimable from a single trajectory.
    const int S = K + 1;
    Eigen::MatrixXd counts = Eigen::MatrixXd::Ones(S, S);  // add-one smoothing
    int prev = 0;
    for (int c = 0; c < K; ++c) prev += a[c][0];
    for (int t = 1; t < H; ++t) {
        int cur = 0;
        for (int c = 0; c < K; ++c) cur += a[c][t];
        counts(prev, cur) += 1.0;
        prev = cur;
    }
    const Eigen::MatrixXd P = (counts.array().colwise() / counts.rowwise().sum().array()).matrix();
    Eigen::EigenSolver<Eigen::MatrixXd> solver(P, /*computeEigenvectors=*/false);
    std::vector<double> moduli(S);
    for (int i = 0; i < S; ++i) moduli[i] = std::abs(solver.eigenvalues()[i]);
    std::sort(moduli.begin(), moduli.end(), std::greater<double>());
    est.rho_ts = moduli.size() > 1 ? moduli[1] : 0.0;
    return est;
}

void write_stats_csv(const SelectionStats& stats, const CorrelationEstimate* correlation,
                     const std::string& path) {
    std::ofstream out(path);
    if (!out) raise(Errc::io, "cannot open " + path + " for writing");
    char buf[40];
    const auto fmt = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.12g", v);
        return std::string(buf);
    };
    out << "stat,client,value\n";
    for (size_t c = 0; c < stats.pi.size(); ++c)
        out << "pi," << (c + 1) << ',' << fmt(stats.pi[c]) << '\n';
    if (stats.rho_h) out << "rho_h,," << fmt(*stats.rho_h) << '\n';
    if (stats.tv) out << "tv,," << fmt(*stats.tv) << '\n';
    for (const int c : stats.zero_frequency_clients) out << "zero_frequency," << c << ",1\n";
    if (correlation) {
        out << "rho_t,," << fmt(correlation->rho_t) << '\n';
        out << "rho_ts,," << fmt(correlation->rho_ts) << '\n';
        for (const int c : correlation->degenerate_clients) out << "degenerate," << c << ",1\n";
    }
    if (!out) raise(Errc::io, "write failed: " + path);
}

}  // namespace carbonfl
