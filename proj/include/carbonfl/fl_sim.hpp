#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "carbonfl/ci_traces.hpp"
#include "carbonfl/scheduler.hpp"

namespace carbonfl {

struct Dataset {
    int feature_dim = 0;
    int num_classes = 0;
    std::vector<double> x;  // row-major, size() * feature_dim
    std::vector<int> y;

    int size() const { return static_cast<int>(y.size()); }
    std::span<const double> sample(int i) const {
        return {x.data() + static_cast<size_t>(i) * feature_dim, static_cast<size_t>(feature_dim)};
    }
};

/// Gaussian mixture with one spherical unit-variance cluster per class.
/// Class means sit separation apart (axis-aligned when num_classes <=
/// feature_dim, random directions otherwise). Deterministic in the seed.
Dataset make_synthetic_task(int K, int num_classes, int feature_dim, int samples_per_class,
                            uint64_t seed, double separation = 6.0);

/// Stratified split; the test side receives round(test_fraction * n_y)
/// samples of each class y.
std::pair<Dataset, Dataset> split_train_test(const Dataset& data, double test_fraction,
                                             uint64_t seed);

/// Per-class proportions from Dirichlet(beta * 1_K), largest-remainder
/// rounding, bounded re-draw (<= 100 attempts) if any client ends empty.
std::vector<std::vector<int>> dirichlet_partition(const Dataset& data, int K, double beta,
                                                  uint64_t seed);

/// Reads the big-endian IDX pair used by the MNIST distribution (magic
/// 0x00000803 images / 0x00000801 labels); pixels scaled to [0, 1].
Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path);

enum class Arch { softmax_regression, mlp1 };

Arch parse_arch(const std::string& name);
const char* arch_name(Arch arch);

struct FlConfig {
    int tau = 5;
    double eta = 0.03162277660168379;  // 10^-1.5
    int batch_size = 128;
    uint64_t seed = 1;
    double dirichlet_beta = 0.5;
    int eval_every = 1;

    void validate() const;
};

struct FlTask {
    Arch arch = Arch::softmax_regression;
    int hidden_units = 128;  // mlp1 only
    Dataset train;
    Dataset test;
    std::vector<std::vector<int>> partitions;  // indices into train

    int clients() const { return static_cast<int>(partitions.size()); }
    int feature_dim() const { return train.feature_dim; }
    int num_classes() const { return train.num_classes; }
    int param_count() const;
    /// Zero vector for softmax regression; seeded scaled-normal init for
    /// the MLP.
    std::vector<double> initial_theta(uint64_t seed) const;
};

/// Assembles a task from generated data: split, partition, validate.
FlTask build_synthetic_fl_task(int K, int num_classes, int feature_dim, int samples_per_class,
                               double separation, double dirichlet_beta, uint64_t seed,
                               Arch arch = Arch::softmax_regression, int hidden_units = 128);

/// Mean cross-entropy over the index set; accumulates the gradient into
/// grad when non-null. Throws NonFiniteLoss if the loss diverges.
double loss_and_grad(Arch arch, int feature_dim, int num_classes, int hidden_units,
                     std::span<const double> theta, const Dataset& data,
                     std::span<const int> indices, std::vector<double>* grad);

/// tau local SGD steps with without-replacement minibatches (reshuffled
/// per epoch); returns theta - theta_after. Deterministic in
/// (round_seed, client).
std::vector<double> local_update(const FlTask& task, std::span<const double> theta, int client,
                                 const FlConfig& config, uint64_t round_seed);

/// Unweighted mean of the active clients' updates.
std::vector<double> fedavg_aggregate(const std::vector<std::vector<double>>& deltas);

/// (1/K) sum over active clients of delta_c / pi_c. deltas[i] pairs with
/// active[i] (0-based client index).
std::vector<double> ufedavg_aggregate(const std::vector<std::vector<double>>& deltas,
                                      const std::vector<int>& active, std::span<const double> pi,
                                      int K);

std::pair<double, double> evaluate(Arch arch, int feature_dim, int num_classes, int hidden_units,
                                   std::span<const double> theta, const Dataset& test);
std::pair<double, double> evaluate(const FlTask& task, std::span<const double> theta);

struct RoundRecord {
    int round = 0;  // 1-based
    int active_count = 0;
    double aggregate_norm = 0.0;
    double cum_kg = 0.0;
    double test_acc = 0.0;
    double test_loss = 0.0;
};

struct TrainingRun {
    std::vector<RoundRecord> rounds;
    std::vector<double> theta;
    double total_kg = 0.0;
    double final_test_acc = 0.0;
    double final_test_loss = 0.0;
};

/// Executes the schedule: active clients run local SGD, aggregation is
/// U-FedAvg outside the fine-tuning window and FedAvg inside it, rounds
/// with no active client leave the model untouched, emissions accumulate
/// per executed selection.
TrainingRun run_training(const FlTask& task, const ScheduleMatrix& schedule,
                         const CarbonCostMatrix& costs, const FlConfig& config);

/// CSV `round,active_count,cum_kg,test_acc,test_loss`.
void write_run_csv(const TrainingRun& run, const std::string& path);

}  // namespace carbonfl
