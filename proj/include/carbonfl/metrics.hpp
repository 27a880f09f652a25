#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "carbonfl/scheduler.hpp"

namespace carbonfl {

/// Selection-frequency statistics of a schedule. rho_h is undefined
/// (nullopt) when any client is never selected in the horizon; pi and tv
/// are still populated. tv is undefined only for the all-zero schedule.
struct SelectionStats {
    std::vector<double> pi;
    std::optional<double> rho_h;
    std::optional<double> tv;
    std::vector<int> zero_frequency_clients;  // 1-based
};

enum class FrequencyHorizon { pre_finetune, full };

/// pi over slot columns [first, last) of a raw binary matrix.
SelectionStats selection_stats_range(const std::vector<std::vector<uint8_t>>& a, int first,
                                     int last);

/// pre_finetune covers the rounds aggregated with U-FedAvg: everything
/// before the fine-tuning window, or all training rounds when no window
/// exists. full covers the whole matrix horizon.
SelectionStats selection_stats(const ScheduleMatrix& schedule, FrequencyHorizon horizon);

/// Per-client two-state participation chains, optionally coupled through
/// a shared latent chain to induce spatial correlation.
struct ParticipationChain {
    std::vector<double> p01;  // inactive -> active
    std::vector<double> p10;  // active -> inactive
    double coupling = 0.0;    // probability of copying the latent state
    double latent_p01 = 0.0;
    double latent_p10 = 0.0;

    int clients() const { return static_cast<int>(p01.size()); }
    double lambda2(int client) const { return 1.0 - p01[client] - p10[client]; }
    double stationary_activity(int client) const {
        return p01[client] / (p01[client] + p10[client]);
    }
    void validate() const;

    /// All clients (and the latent chain) share stationary activity q and
    /// second eigenvalue lambda2: p01 = (1-lambda2)q, p10 = (1-lambda2)(1-q).
    static ParticipationChain homogeneous(int K, double q, double lambda2, double coupling = 0.0);
};

/// Samples a K x rounds binary participation matrix. Each client draws
/// from its own counter-based stream keyed on (seed, client), so parallel
/// generation reproduces the sequential matrix exactly.
std::vector<std::vector<uint8_t>> mc_generate_schedule(const ParticipationChain& chain, int rounds,
                                                       uint64_t seed);

struct CorrelationEstimate {
    double rho_t = 0.0;   // mean per-client |1 - p01_hat - p10_hat|
    double rho_ts = 0.0;  // SLEM of the lumped active-count chain
    std::vector<int> degenerate_clients;  // 1-based, constant rows (lambda2 := 1)
};

CorrelationEstimate estimate_correlation(const std::vector<std::vector<uint8_t>>& a);

/// Flat CSV `stat,client,value`; per-client stats carry the client id,
/// aggregates leave the column empty.
void write_stats_csv(const SelectionStats& stats, const CorrelationEstimate* correlation,
                     const std::string& path);

}  // namespace carbonfl
