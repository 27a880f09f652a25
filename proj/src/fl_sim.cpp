#include "carbonfl/fl_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "carbonfl/errors.hpp"
#include "carbonfl/metrics.hpp"
#include "carbonfl/rng.hpp"

namespace carbonfl {

namespace {

constexpr uint64_t kMeansStream = 0xC1A55;
constexpr uint64_t kSplitStream = 0x5711;
constexpr uint64_t kInitStream = 0x1217;

double big_endian_u32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) raise(Errc::schema, path + ": truncated IDX file");
    return static_cast<double>((uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) |
                               (uint32_t(b[2]) << 8) | uint32_t(b[3]));
}

}  // namespace

Dataset make_synthetic_task(int K, int num_classes, int feature_dim, int samples_per_class,
                            uint64_t seed, double separation) {
    if (K < 1 || num_classes < 2 || feature_dim < 1 || samples_per_class < 1)
        raise(Errc::bad_shape, "need K >= 1, classes >= 2, feature_dim >= 1, samples >= 1");
    if (num_classes * samples_per_class < K)
        raise(Errc::bad_shape, "fewer samples than clients");
    if (!(separation >= 0.0)) raise(Errc::bad_shape, "separation must be >= 0");

    std::vector<std::vector<double>> means(num_classes, std::vector<double>(feature_dim, 0.0));
    if (num_classes <= feature_dim) {
        for (int k = 0; k < num_classes; ++k) means[k][k] = separation;
    } else {
        Rng rng(seed, kMeansStream);
        for (auto& mean : means) {
            double norm2 = 0.0;
            for (double& v : mean) {
                v = rng.next_normal();
                norm2 += v * v;
            }
            const double scale = separation / std::sqrt(std::max(norm2, 1e-12));
            for (double& v : mean) v *= scale;
        }
    }

    Dataset data;
    data.feature_dim = feature_dim;
    data.num_classes = num_classes;
    data.x.reserve(static_cast<size_t>(num_classes) * samples_per_class * feature_dim);
    data.y.reserve(static_cast<size_t>(num_classes) * samples_per_class);
    for (int k = 0; k < num_classes; ++k) {
        Rng rng(seed, 1000 + static_cast<uint64_t>(k));
        for (int i = 0; i < samples_per_class; ++i) {
            for (int f = 0; f < feature_dim; ++f) data.x.push_back(means[k][f] + rng.next_normal());
            data.y.push_back(k);
        }
    }
    return data;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& data, double test_fraction,
                                             uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0))
        raise(Errc::bad_config, "test_fraction must lie in [0, 1)");
    Dataset train, test;
    train.feature_dim = test.feature_dim = data.feature_dim;
    train.num_classes = test.num_classes = data.num_classes;
    Rng rng(seed, kSplitStream);
    for (int k = 0; k < data.num_classes; ++k) {
        std::vector<int> idx;
        for (int i = 0; i < data.size(); ++i)
            if (data.y[i] == k) idx.push_back(i);
        rng.shuffle(idx);
        const int n_test = static_cast<int>(std::lround(test_fraction * idx.size()));
        for (int j = 0; j < static_cast<int>(idx.size()); ++j) {
            Dataset& dst = j < n_test ? test : train;
            const auto s = data.sample(idx[j]);
            dst.x.insert(dst.x.end(), s.begin(), s.end());
            dst.y.push_back(k);
        }
    }
    return {std::move(train), std::move(test)};
}

std::vector<std::vector<int>> dirichlet_partition(const Dataset& data, int K, double beta,
                                                  uint64_t seed) {
    if (!(beta > 0.0)) raise(Errc::bad_config, "beta must be > 0");
    if (K < 1) raise(Errc::bad_config, "K must be >= 1");
    if (data.size() < K) raise(Errc::partition_failure, "fewer samples than clients");

    std::vector<std::vector<int>> by_class(data.num_classes);
    for (int i = 0; i < data.size(); ++i) by_class[data.y[i]].push_back(i);

    for (int attempt = 0; attempt < 100; ++attempt) {
        Rng rng(seed, 2000 + static_cast<uint64_t>(attempt));
        std::vector<std::vector<int>> parts(K);
        for (int k = 0; k < data.num_classes; ++k) {
            if (by_class[k].empty()) continue;
            std::vector<int> idx = by_class[k];
            rng.shuffle(idx);
            const int n = static_cast<int>(idx.size());

            std::vector<double> p(K);
            double total = 0.0;
            for (int c = 0; c < K; ++c) {
                p[c] = rng.next_gamma(beta);
                total += p[c];
            }
            // Largest-remainder rounding of the quotas n * p_c.
            std::vector<int> count(K);
            std::vector<std::pair<double, int>> frac(K);
            int assigned = 0;
            for (int c = 0; c < K; ++c) {
                const double quota = n * (total > 0.0 ? p[c] / total : 1.0 / K);
                count[c] = static_cast<int>(std::floor(quota));
                frac[c] = {quota - count[c], c};
                assigned += count[c];
            }
            std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
            });
            for (int r = 0; r < n - assigned; ++r) ++count[frac[r].second];

            int pos = 0;
            for (int c = 0; c < K; ++c) {
                for (int j = 0; j < count[c]; ++j) parts[c].push_back(idx[pos++]);
            }
        }
        bool ok = true;
        for (const auto& part : parts) ok = ok && !part.empty();
        if (ok) {
            for (auto& part : parts) std::sort(part.begin(), part.end());
            return parts;
        }
    }
    raise(Errc::partition_failure, "could not produce nonempty clients in 100 attempts");
}

Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) raise(Errc::file_not_found, images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) raise(Errc::file_not_found, labels_path);

    if (big_endian_u32(img, images_path) != 0x00000803)
        raise(Errc::schema, images_path + ": bad IDX image magic");
    const int n = static_cast<int>(big_endian_u32(img, images_path));
    const int rows = static_cast<int>(big_endian_u32(img, images_path));
    const int cols = static_cast<int>(big_endian_u32(img, images_path));
    if (big_endian_u32(lab, labels_path) != 0x00000801)
        raise(Errc::schema, labels_path + ": bad IDX label magic");
    if (static_cast<int>(big_endian_u32(lab, labels_path)) != n)
        raise(Errc::schema, "image/label counts differ");

    Dataset data;
    data.feature_dim = rows * cols;
    std::vector<unsigned char> pixels(static_cast<size_t>(n) * data.feature_dim);
    if (!img.read(reinterpret_cast<char*>(pixels.data()), pixels.size()))
        raise(Errc::schema, images_path + ": truncated pixel data");
    std::vector<unsigned char> labels(n);
    if (!lab.read(reinterpret_cast<char*>(labels.data()), labels.size()))
        raise(Errc::schema, labels_path + ": truncated label data");

    data.x.resize(pixels.size());
    for (size_t i = 0; i < pixels.size(); ++i) data.x[i] = pixels[i] / 255.0;
    data.y.assign(labels.begin(), labels.end());
    int max_label = 0;
    for (const int y : data.y) max_label = std::max(max_label, y);
    data.num_classes = std::max(2, max_label + 1);
    return data;
}

Arch parse_arch(const std::string& name) {
    if (name == "softmax_regression") return Arch::softmax_regression;
    if (name == "mlp1") return Arch::mlp1;
    raise(Errc::bad_config, "unknown architecture '" + name + "'");
}

const char* arch_name(Arch arch) {
    return arch == Arch::softmax_regression ? "softmax_regression" : "mlp1";
}

void FlConfig::validate() const {
    if (tau < 1) raise(Errc::bad_config, "tau must be >= 1");
    if (!(eta > 0.0)) raise(Errc::bad_config, "eta must be > 0");
    if (batch_size < 1) raise(Errc::bad_config, "batch_size must be >= 1");
    if (!(dirichlet_beta > 0.0)) raise(Errc::bad_config, "dirichlet_beta must be > 0");
    if (eval_every < 1) raise(Errc::bad_config, "eval_every must be >= 1");
}

int FlTask::param_count() const {
    const int F = feature_dim(), C = num_classes();
    if (arch == Arch::softmax_regression) return C * F + C;
    return hidden_units * F + hidden_units + C * hidden_units + C;
}

std::vector<double> FlTask::initial_theta(uint64_t seed) const {
    std::vector<double> theta(param_count(), 0.0);
    if (arch == Arch::mlp1) {
        Rng rng(seed, kInitStream);
        const int F = feature_dim(), C = num_classes(), h = hidden_units;
        const double s1 = std::sqrt(2.0 / F), s2 = std::sqrt(2.0 / h);
        for (int i = 0; i < h * F; ++i) theta[i] = s1 * rng.next_normal();
        for (int i = 0; i < C * h; ++i) theta[h * F + h + i] = s2 * rng.next_normal();
    }
    return theta;
}

FlTask build_synthetic_fl_task(int K, int num_classes, int feature_dim, int samples_per_class,
                               double separation, double dirichlet_beta, uint64_t seed, Arch arch,
                               int hidden_units) {
    FlTask task;
    task.arch = arch;
    task.hidden_units = hidden_units;
    const Dataset all =
        make_synthetic_task(K, num_classes, feature_dim, samples_per_class, seed, separation);
    auto [train, test] = split_train_test(all, 0.2, seed);
    task.train = std::move(train);
    task.test = std::move(test);
    task.partitions = dirichlet_partition(task.train, K, dirichlet_beta, seed);
    return task;
}

double loss_and_grad(Arch arch, int feature_dim, int num_classes, int hidden_units,
                     std::span<const double> theta, const Dataset& data,
                     std::span<const int> indices, std::vector<double>* grad) {
    if (indices.empty()) raise(Errc::bad_config, "empty index set");
    const int F = feature_dim, C = num_classes, h = hidden_units;
    if (grad) grad->assign(theta.size(), 0.0);

    double loss = 0.0;
    std::vector<double> logits(C), probs(C);
    std::vector<double> z1, a1, dz1;
    if (arch == Arch::mlp1) {
        z1.resize(h);
        a1.resize(h);
        dz1.resize(h);
    }

    for (const int i : indices) {
        const auto x = data.sample(i);
        const int label = data.y[i];

        if (arch == Arch::softmax_regression) {
            // theta = [W (C x F), b (C)]
            for (int k = 0; k < C; ++k) {
                double v = theta[C * F + k];
                const double* w = theta.data() + static_cast<size_t>(k) * F;
                for (int f = 0; f < F; ++f) v += w[f] * x[f];
                logits[k] = v;
            }
        } else {
            // theta = [W1 (h x F), b1 (h), W2 (C x h), b2 (C)]
            const double* W1 = theta.data();
            const double* b1 = theta.data() + static_cast<size_t>(h) * F;
            const double* W2 = b1 + h;
            const double* b2 = W2 + static_cast<size_t>(C) * h;
            for (int j = 0; j < h; ++j) {
                double v = b1[j];
                const double* w = W1 + static_cast<size_t>(j) * F;
                for (int f = 0; f < F; ++f) v += w[f] * x[f];
                z1[j] = v;
                a1[j] = v > 0.0 ? v : 0.0;
            }
            for (int k = 0; k < C; ++k) {
                double v = b2[k];
                const double* w = W2 + static_cast<size_t>(k) * h;
                for (int j = 0; j < h; ++j) v += w[j] * a1[j];
                logits[k] = v;
            }
        }

        double max_logit = logits[0];
        for (int k = 1; k < C; ++k) max_logit = std::max(max_logit, logits[k]);
        double denom = 0.0;
        for (int k = 0; k < C; ++k) {
            probs[k] = std::exp(logits[k] - max_logit);
            denom += probs[k];
        }
        for (int k = 0; k < C; ++k) probs[k] /= denom;
        loss += -(logits[label] - max_logit - std::log(denom));

        if (!grad) continue;
        if (arch == Arch::softmax_regression) {
            for (int k = 0; k < C; ++k) {
                const double d = probs[k] - (k == label ? 1.0 : 0.0);
                double* gw = grad->data() + static_cast<size_t>(k) * F;
                for (int f = 0; f < F; ++f) gw[f] += d * x[f];
                (*grad)[static_cast<size_t>(C) * F + k] += d;
            }
        } else {
            const double* W2 = theta.data() + static_cast<size_t>(h) * F + h;
            double* gW1 = grad->data();
            double* gb1 = grad->data() + static_cast<size_t>(h) * F;
            double* gW2 = gb1 + h;
            double* gb2 = gW2 + static_cast<size_t>(C) * h;
            std::fill(dz1.begin(), dz1.end(), 0.0);
            for (int k = 0; k < C; ++k) {
                const double d = probs[k] - (k == label ? 1.0 : 0.0);
                double* gw = gW2 + static_cast<size_t>(k) * h;
                const double* w = W2 + static_cast<size_t>(k) * h;
                for (int j = 0; j < h; ++j) {
                    gw[j] += d * a1[j];
                    dz1[j] += d * w[j];
                }
                gb2[k] += d;
            }
            for (int j = 0; j < h; ++j) {
                if (z1[j] <= 0.0) continue;
                double* gw = gW1 + static_cast<size_t>(j) * F;
                for (int f = 0; f < F; ++f) gw[f] += dz1[j] * x[f];
                gb1[j] += dz1[j];
            }
        }
    }

    const double inv = 1.0 / static_cast<double>(indices.size());
    loss *= inv;
    if (grad)
        for (double& g : *grad) g *= inv;
    if (!std::isfinite(loss)) raise(Errc::non_finite_loss, "loss diverged");
    return loss;
}

std::vector<double> local_update(const FlTask& task, std::span<const double> theta, int client,
                                 const FlConfig& config, uint64_t round_seed) {
    if (config.tau < 1) raise(Errc::bad_config, "tau must be >= 1");
    if (config.batch_size < 1) raise(Errc::bad_config, "batch_size must be >= 1");
    const std::vector<int>& part = task.partitions[client];
    const int n = static_cast<int>(part.size());
    const int b = std::min(config.batch_size, n);

    Rng rng(round_seed, static_cast<uint64_t>(client));
    std::vector<int> order = part;
    rng.shuffle(order);
    int pos = 0;

    std::vector<double> theta_local(theta.begin(), theta.end());
    std::vector<double> grad;
    for (int l = 0; l < config.tau; ++l) {
        if (pos + b > n) {
            rng.shuffle(order);
            pos = 0;
        }
        loss_and_grad(task.arch, task.feature_dim(), task.num_classes(), task.hidden_units,
                      theta_local, task.train, std::span<const int>(order).subspan(pos, b), &grad);
        pos += b;
        for (size_t j = 0; j < theta_local.size(); ++j) theta_local[j] -= config.eta * grad[j];
    }
    std::vector<double> delta(theta.size());
    for (size_t j = 0; j < delta.size(); ++j) delta[j] = theta[j] - theta_local[j];
    return delta;
}

std::vector<double> fedavg_aggregate(const std::vector<std::vector<double>>& deltas) {
    if (deltas.empty()) raise(Errc::empty_active_set, "no updates to aggregate");
    std::vector<double> out(deltas[0].size(), 0.0);
    for (const auto& d : deltas) {
        if (d.size() != out.size()) raise(Errc::dimension_mismatch, "update sizes differ");
        for (size_t j = 0; j < out.size(); ++j) out[j] += d[j];
    }
    const double inv = 1.0 / static_cast<double>(deltas.size());
    for (double& v : out) v *= inv;
    return out;
}

std::vector<double> ufedavg_aggregate(const std::vector<std::vector<double>>& deltas,
                                      const std::vector<int>& active, std::span<const double> pi,
                                      int K) {
    if (deltas.empty() || deltas.size() != active.size())
        raise(Errc::empty_active_set, "active set and updates must align and be nonempty");
    std::vector<double> out(deltas[0].size(), 0.0);
    for (size_t i = 0; i < deltas.size(); ++i) {
        const int c = active[i];
        if (!(pi[c] > 0.0))
            raise(Errc::zero_frequency_active,
                  "client " + std::to_string(c + 1) + " is active but has pi = 0");
        const double w = 1.0 / pi[c];
        if (deltas[i].size() != out.size()) raise(Errc::dimension_mismatch, "update sizes differ");
        for (size_t j = 0; j < out.size(); ++j) out[j] += w * deltas[i][j];
    }
    const double inv = 1.0 / static_cast<double>(K);
    for (double& v : out) v *= inv;
    return out;
}

std::pair<double, double> evaluate(Arch arch, int feature_dim, int num_classes, int hidden_units,
                                   std::span<const double> theta, const Dataset& test) {
    if (test.size() == 0) raise(Errc::empty_test_set, "test set is empty");
    std::vector<int> all(test.size());
    std::iota(all.begin(), all.end(), 0);
    const double loss =
        loss_and_grad(arch, feature_dim, num_classes, hidden_units, theta, test, all, nullptr);

    // Accuracy: recompute logits per sample; argmax ties go to the lowest
    // class index.
    int correct = 0;
    std::vector<double> logits(num_classes);
    const int F = feature_dim, C = num_classes, h = hidden_units;
    std::vector<double> a1(arch == Arch::mlp1 ? h : 0);
    for (int i = 0; i < test.size(); ++i) {
        const auto x = test.sample(i);
        if (arch == Arch::softmax_regression) {
            for (int k = 0; k < C; ++k) {
                double v = theta[static_cast<size_t>(C) * F + k];
                const double* w = theta.data() + static_cast<size_t>(k) * F;
                for (int f = 0; f < F; ++f) v += w[f] * x[f];
                logits[k] = v;
            }
        } else {
            const double* W1 = theta.data();
            const double* b1 = theta.data() + static_cast<size_t>(h) * F;
            const double* W2 = b1 + h;
            const double* b2 = W2 + static_cast<size_t>(C) * h;
            for (int j = 0; j < h; ++j) {
                double v = b1[j];
                const double* w = W1 + static_cast<size_t>(j) * F;
                for (int f = 0; f < F; ++f) v += w[f] * x[f];
                a1[j] = v > 0.0 ? v : 0.0;
            }
            for (int k = 0; k < C; ++k) {
                double v = b2[k];
                const double* w = W2 + static_cast<size_t>(k) * h;
                for (int j = 0; j < h; ++j) v += w[j] * a1[j];
                logits[k] = v;
            }
        }
        int best = 0;
        for (int k = 1; k < C; ++k)
            if (logits[k] > logits[best]) best = k;
        correct += best == test.y[i];
    }
    return {static_cast<double>(correct) / test.size(), loss};
}

std::pair<double, double> evaluate(const FlTask& task, std::span<const double> theta) {
    return evaluate(task.arch, task.feature_dim(), task.num_classes(), task.hidden_units, theta,
                    task.test);
}

TrainingRun run_training(const FlTask& task, const ScheduleMatrix& schedule,
                         const CarbonCostMatrix& costs, const FlConfig& config) {
    config.validate();
    const int K = task.clients();
    if (schedule.clients() != K || costs.clients() != K)
        raise(Errc::schedule_cost_mismatch, "client counts differ between task/schedule/costs");
    if (schedule.horizon() > costs.horizon)
        raise(Errc::schedule_cost_mismatch, "schedule horizon exceeds cost horizon");
    for (const auto& part : task.partitions)
        if (part.empty()) raise(Errc::bad_config, "every client needs at least one sample");

    const int rounds_to_run = schedule.training_rounds();

    // Selection frequencies over the U-FedAvg phase. Clients first active
    // inside the fine-tuning window never hit the 1/pi reweighting.
    const int pre_len = schedule.s ? schedule.T + *schedule.s - schedule.t_ft : rounds_to_run;
    std::vector<double> pi(K, 1.0);
    if (pre_len >= 1) pi = selection_stats_range(schedule.a, 0, pre_len).pi;

    TrainingRun run;
    run.theta = task.initial_theta(config.seed);
    double cum_kg = 0.0;
    double last_acc = 0.0, last_loss = 0.0;
    bool evaluated = false;

    for (int t = 1; t <= rounds_to_run; ++t) {
        std::vector<int> active;
        for (int c = 0; c < K; ++c)
            if (schedule.a[c][t - 1]) active.push_back(c);

        double agg_norm = 0.0;
        if (!active.empty()) {
            std::vector<std::vector<double>> deltas;
            deltas.reserve(active.size());
            const uint64_t round_seed = hash_combine(config.seed, static_cast<uint64_t>(t));
            for (const int c : active)
                deltas.push_back(local_update(task, run.theta, c, config, round_seed));
            const std::vector<double> agg = schedule.in_finetune_window(t)
                                                ? fedavg_aggregate(deltas)
                                                : ufedavg_aggregate(deltas, active, pi, K);
            for (size_t j = 0; j < run.theta.size(); ++j) {
                run.theta[j] -= agg[j];
                agg_norm += agg[j] * agg[j];
            }
            agg_norm = std::sqrt(agg_norm);
            if (!std::isfinite(agg_norm))
                raise(Errc::non_finite_loss, "aggregate diverged at round " + std::to_string(t));
        }
        for (int c = 0; c < K; ++c)
            if (schedule.a[c][t - 1]) cum_kg += costs.costs[c][t - 1];

        if (t % config.eval_every == 0 || t == rounds_to_run) {
            std::tie(last_acc, last_loss) = evaluate(task, run.theta);
            evaluated = true;
        }
        run.rounds.push_back({t, static_cast<int>(active.size()), agg_norm, cum_kg, last_acc,
                              last_loss});
    }
    if (!evaluated) std::tie(last_acc, last_loss) = evaluate(task, run.theta);
    run.total_kg = cum_kg;
    run.final_test_acc = last_acc;
    run.final_test_loss = last_loss;
    return run;
}

void write_run_csv(const TrainingRun& run, const std::string& path) {
    std::ofstream out(path);
    if (!out) raise(Errc::io, "cannot open " + path + " for writing");
    char buf[40];
    const auto fmt = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    out << "round,active_count,cum_kg,test_acc,test_loss\n";
    for (const auto& r : run.rounds)
        out << r.round << ',' << r.active_count << ',' << fmt(r.cum_kg) << ',' << fmt(r.test_acc)
            << ',' << fmt(r.test_loss) << '\n';
    if (!out) raise(Errc::io, "write failed: " + path);
}

}  // namespace carbonfl
