#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "carbonfl/errors.hpp"
#include "carbonfl/fl_sim.hpp"
#include "carbonfl/metrics.hpp"
#include "carbonfl/rng.hpp"

using namespace carbonfl;
namespace fs = std::filesystem;

namespace {

CarbonCostMatrix uniform_costs(int K, int H, double value) {
    CarbonCostMatrix m;
    m.costs.assign(K, std::vector<double>(H, value));
    m.g_max = value;
    m.horizon = H;
    return m;
}

ScheduleMatrix schedule_from(std::vector<std::vector<uint8_t>> a, int T, int t_ft,
                             std::optional<int> s) {
    ScheduleMatrix sched;
    sched.a = std::move(a);
    sched.T = T;
    sched.t_ft = t_ft;
    sched.s = s;
    return sched;
}

double theta_norm(const std::vector<double>& v) {
    double n = 0;
    for (const double x : v) n += x * x;
    return std::sqrt(n);
}

}  // namespace

TEST_CASE("make_synthetic_task") {
    SUBCASE("deterministic in the seed") {
        const auto a = make_synthetic_task(4, 3, 8, 20, 99);
        const auto b = make_synthetic_task(4, 3, 8, 20, 99);
        CHECK(a.x == b.x);
        CHECK(a.y == b.y);
        CHECK(a.x != make_synthetic_task(4, 3, 8, 20, 100).x);
    }
    SUBCASE("bad shapes") {
        CHECK_THROWS_AS(make_synthetic_task(4, 3, 8, 0, 1), Error);
        CHECK_THROWS_AS(make_synthetic_task(4, 1, 8, 10, 1), Error);
        CHECK_THROWS_AS(make_synthetic_task(0, 3, 8, 10, 1), Error);
        CHECK_THROWS_AS(make_synthetic_task(50, 2, 8, 1, 1), Error);
    }
    SUBCASE("widely separated classes train to > 99% accuracy") {
        FlTask task = build_synthetic_fl_task(3, 2, 10, 120, /*separation=*/10.0,
                                              /*beta=*/1.0, /*seed=*/7);
        FlConfig cfg;
        cfg.tau = 5;
        cfg.eta = 0.1;
        cfg.batch_size = 64;
        cfg.seed = 7;
        const int T = 30;
        ScheduleMatrix full = schedule_from(
            std::vector<std::vector<uint8_t>>(3, std::vector<uint8_t>(T, 1)), T, 0, std::nullopt);
        const auto costs = uniform_costs(3, T, 0.0);
        const auto run = run_training(task, full, costs, cfg);
        CHECK(run.final_test_acc > 0.99);
    }
}

TEST_CASE("split_train_test is a stratified partition of the data") {
    const auto all = make_synthetic_task(4, 3, 6, 50, 5);
    const auto [train, test] = split_train_test(all, 0.2, 5);
    CHECK(train.size() + test.size() == all.size());
    for (int k = 0; k < 3; ++k) {
        const auto count = [&](const Dataset& d) {
            return std::count(d.y.begin(), d.y.end(), k);
        };
        CHECK(count(test) == 10);
        CHECK(count(train) == 40);
    }
}

TEST_CASE("dirichlet_partition") {
    const auto data = make_synthetic_task(7, 4, 5, 100, 3);
    SUBCASE("partitions are disjoint and cover the dataset") {
        const auto parts = dirichlet_partition(data, 7, 0.1, 21);
        std::set<int> seen;
        size_t total = 0;
        for (const auto& p : parts) {
            CHECK(!p.empty());
            total += p.size();
            seen.insert(p.begin(), p.end());
        }
        CHECK(total == static_cast<size_t>(data.size()));
        CHECK(seen.size() == total);
    }
    SUBCASE("huge beta approaches a uniform class mix") {
        const auto parts = dirichlet_partition(data, 4, 1e6, 33);
        for (const auto& p : parts) {
            std::vector<int> hist(4, 0);
            for (const int i : p) ++hist[data.y[i]];
            for (const int h : hist)
                CHECK(std::abs(h / static_cast<double>(p.size()) - 0.25) < 0.05);
        }
    }
    SUBCASE("K = 1 receives everything") {
        const auto parts = dirichlet_partition(data, 1, 0.5, 3);
        CHECK(parts.size() == 1);
        CHECK(parts[0].size() == static_cast<size_t>(data.size()));
    }
    SUBCASE("bad beta") { CHECK_THROWS_AS(dirichlet_partition(data, 2, 0.0, 1), Error); }
}

TEST_CASE("gradients") {
    const auto data = make_synthetic_task(2, 3, 6, 30, 17, 2.0);
    std::vector<int> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);

    for (const Arch arch : {Arch::softmax_regression, Arch::mlp1}) {
        const int hidden = 16;
        const int params = arch == Arch::softmax_regression ? 3 * 6 + 3 : 16 * 6 + 16 + 3 * 16 + 3;
        Rng rng(4242, 0);
        std::vector<double> theta(params);
        for (double& v : theta) v = 0.5 * rng.next_normal();

        std::vector<double> grad;
        loss_and_grad(arch, 6, 3, hidden, theta, data, idx, &grad);

        // Central finite differences on 20 random coordinates.
        for (int probe = 0; probe < 20; ++probe) {
            const size_t j = rng.next_below(params);
            const double h = 1e-6 * std::max(1.0, std::abs(theta[j]));
            std::vector<double> tp = theta, tm = theta;
            tp[j] += h;
            tm[j] -= h;
            const double lp = loss_and_grad(arch, 6, 3, hidden, tp, data, idx, nullptr);
            const double lm = loss_and_grad(arch, 6, 3, hidden, tm, data, idx, nullptr);
            const double fd = (lp - lm) / (2.0 * h);
            const double scale = std::max({1e-8, std::abs(fd), std::abs(grad[j])});
            CHECK(std::abs(grad[j] - fd) / scale < 1e-5);
        }
    }
}

TEST_CASE("local_update") {
    FlTask task = build_synthetic_fl_task(2, 3, 6, 40, 4.0, 1.0, 11);
    const std::vector<double> theta = task.initial_theta(11);

    SUBCASE("eta = 0 returns the zero update") {
        FlConfig cfg;
        cfg.eta = 0.0;
        cfg.tau = 3;
        cfg.batch_size = 8;
        const auto delta = local_update(task, theta, 0, cfg, 5);
        for (const double v : delta) CHECK(v == 0.0);
    }
    SUBCASE("single full-batch step equals eta times the local gradient") {
        FlConfig cfg;
        cfg.eta = 0.05;
        cfg.tau = 1;
        cfg.batch_size = 1 << 20;
        const auto delta = local_update(task, theta, 1, cfg, 5);
        std::vector<double> grad;
        loss_and_grad(task.arch, task.feature_dim(), task.num_classes(), task.hidden_units, theta,
                      task.train, task.partitions[1], &grad);
        REQUIRE(delta.size() == grad.size());
        for (size_t j = 0; j < grad.size(); ++j)
            CHECK(delta[j] == doctest::Approx(cfg.eta * grad[j]).epsilon(1e-12));
    }
    SUBCASE("deterministic in (round_seed, client)") {
        FlConfig cfg;
        cfg.eta = 0.1;
        cfg.tau = 4;
        cfg.batch_size = 8;
        CHECK(local_update(task, theta, 0, cfg, 9) == local_update(task, theta, 0, cfg, 9));
        CHECK(local_update(task, theta, 0, cfg, 9) != local_update(task, theta, 0, cfg, 10));
        CHECK(local_update(task, theta, 0, cfg, 9) != local_update(task, theta, 1, cfg, 9));
    }
}

TEST_CASE("aggregation") {
    SUBCASE("single client passes through") {
        const std::vector<std::vector<double>> deltas = {{1.0, -2.0, 3.0}};
        CHECK(fedavg_aggregate(deltas) == deltas[0]);
    }
    SUBCASE("opposite updates cancel") {
        const std::vector<std::vector<double>> deltas = {{1.0, -2.0}, {-1.0, 2.0}};
        CHECK(fedavg_aggregate(deltas) == std::vector<double>{0.0, 0.0});
    }
    SUBCASE("mean matches an independent recomputation") {
        Rng rng(3, 0);
        std::vector<std::vector<double>> deltas(7, std::vector<double>(5));
        for (auto& d : deltas)
            for (double& v : d) v = rng.next_normal();
        const auto agg = fedavg_aggregate(deltas);
        for (int j = 0; j < 5; ++j) {
            double sum = 0.0;
            for (const auto& d : deltas) sum += d[j];
            CHECK(agg[j] == doctest::Approx(sum / 7.0).epsilon(1e-15));
        }
    }
    SUBCASE("empty active set") {
        CHECK_THROWS_AS(fedavg_aggregate({}), Error);
    }
    SUBCASE("ufedavg with pi = 1 and full participation equals fedavg bitwise") {
        Rng rng(4, 0);
        std::vector<std::vector<double>> deltas(5, std::vector<double>(8));
        for (auto& d : deltas)
            for (double& v : d) v = rng.next_normal();
        std::vector<int> active = {0, 1, 2, 3, 4};
        const std::vector<double> pi(5, 1.0);
        CHECK(ufedavg_aggregate(deltas, active, pi, 5) == fedavg_aggregate(deltas));
    }
    SUBCASE("single active client is scaled by 1/(K pi)") {
        const std::vector<std::vector<double>> deltas = {{2.0, 4.0}};
        const std::vector<double> pi = {0.5, 1.0};
        const auto agg = ufedavg_aggregate(deltas, {0}, pi, 2);
        CHECK(agg[0] == doctest::Approx(2.0 / (2 * 0.5)).epsilon(1e-15));
        CHECK(agg[1] == doctest::Approx(4.0 / (2 * 0.5)).epsilon(1e-15));
    }
    SUBCASE("active client with pi = 0 is an error") {
        const std::vector<std::vector<double>> deltas = {{1.0}};
        const std::vector<double> pi = {0.0};
        CHECK_THROWS_AS(ufedavg_aggregate(deltas, {0}, pi, 1), Error);
    }
    SUBCASE("Bernoulli participation is unbiased") {
        Rng rng(8, 0);
        const int K = 6, d = 10;
        std::vector<std::vector<double>> deltas(K, std::vector<double>(d));
        for (auto& dd : deltas)
            for (double& v : dd) v = rng.next_normal();
        std::vector<double> pi(K);
        for (double& p : pi) p = 0.2 + 0.8 * rng.next_unit();

        std::vector<double> full(d, 0.0);
        for (const auto& dd : deltas)
            for (int j = 0; j < d; ++j) full[j] += dd[j] / K;

        std::vector<double> mean(d, 0.0);
        const int draws = 100000;
        for (int it = 0; it < draws; ++it) {
            std::vector<int> active;
            std::vector<std::vector<double>> picked;
            for (int c = 0; c < K; ++c) {
                if (rng.next_unit() < pi[c]) {
                    active.push_back(c);
                    picked.push_back(deltas[c]);
                }
            }
            if (active.empty()) continue;
            const auto agg = ufedavg_aggregate(picked, active, pi, K);
            for (int j = 0; j < d; ++j) mean[j] += agg[j];
        }
        double err = 0.0, ref = 0.0;
        for (int j = 0; j < d; ++j) {
            const double m = mean[j] / draws;
            err += (m - full[j]) * (m - full[j]);
            ref += full[j] * full[j];
        }
        CHECK(std::sqrt(err) / std::sqrt(ref) < 0.01);
    }
}

TEST_CASE("evaluate") {
    SUBCASE("empty test set") {
        FlTask task = build_synthetic_fl_task(2, 2, 4, 20, 6.0, 1.0, 2);
        task.test = Dataset{4, 2, {}, {}};
        CHECK_THROWS_AS(evaluate(task, task.initial_theta(1)), Error);
    }
    SUBCASE("random parameters score near chance on a balanced set") {
        const auto data = make_synthetic_task(2, 4, 6, 250, 77, 0.0);
        Rng rng(1, 0);
        std::vector<double> theta(4 * 6 + 4);
        for (double& v : theta) v = rng.next_normal();
        const auto [acc, loss] = evaluate(Arch::softmax_regression, 6, 4, 0, theta, data);
        // 1000 samples, chance 0.25, 3 sigma ~ 0.041.
        CHECK(std::abs(acc - 0.25) < 0.05);
        CHECK(loss > 0.0);
    }
    SUBCASE("loss matches an independent recomputation") {
        const auto data = make_synthetic_task(2, 3, 4, 20, 13, 2.0);
        Rng rng(2, 0);
        std::vector<double> theta(3 * 4 + 3);
        for (double& v : theta) v = rng.next_normal();
        const auto [acc, loss] = evaluate(Arch::softmax_regression, 4, 3, 0, theta, data);
        double expect = 0.0;
        for (int i = 0; i < data.size(); ++i) {
            const auto x = data.sample(i);
            std::vector<double> logits(3);
            for (int k = 0; k < 3; ++k) {
                logits[k] = theta[12 + k];
                for (int f = 0; f < 4; ++f) logits[k] += theta[k * 4 + f] * x[f];
            }
            double denom = 0.0;
            for (const double l : logits) denom += std::exp(l);
            expect += std::log(denom) - logits[data.y[i]];
        }
        expect /= data.size();
        CHECK(std::abs(loss - expect) < 1e-12);
    }
}

TEST_CASE("run_training") {
    FlTask task = build_synthetic_fl_task(3, 3, 8, 60, 3.0, 0.5, 19);
    FlConfig cfg;
    cfg.tau = 3;
    cfg.eta = 0.05;
    cfg.batch_size = 16;
    cfg.seed = 19;

    SUBCASE("all-zero schedule leaves the model untouched") {
        const auto sched = schedule_from(
            std::vector<std::vector<uint8_t>>(3, std::vector<uint8_t>(10, 0)), 10, 0,
            std::nullopt);
        const auto run = run_training(task, sched, uniform_costs(3, 10, 0.1), cfg);
        CHECK(run.rounds.empty());
        CHECK(run.total_kg == 0.0);
        CHECK(run.theta == task.initial_theta(cfg.seed));
    }
    SUBCASE("full participation with pi = 1 matches a plain FedAvg loop bitwise") {
        const int T = 8;
        const auto sched = schedule_from(
            std::vector<std::vector<uint8_t>>(3, std::vector<uint8_t>(T, 1)), T, 0, std::nullopt);
        const auto run = run_training(task, sched, uniform_costs(3, T, 0.2), cfg);

        // Reference loop: plain FedAvg, same seeds.
        std::vector<double> theta = task.initial_theta(cfg.seed);
        for (int t = 1; t <= T; ++t) {
            std::vector<std::vector<double>> deltas;
            for (int c = 0; c < 3; ++c)
                deltas.push_back(
                    local_update(task, theta, c, cfg, hash_combine(cfg.seed, uint64_t(t))));
            const auto agg = fedavg_aggregate(deltas);
            for (size_t j = 0; j < theta.size(); ++j) theta[j] -= agg[j];
        }
        CHECK(run.theta == theta);
    }
    SUBCASE("emission accounting matches the schedule total exactly") {
        CarbonCostMatrix costs = uniform_costs(3, 12, 0.0);
        Rng rng(77, 0);
        for (auto& row : costs.costs)
            for (double& v : row) v = 0.05 + 0.3 * rng.next_unit();
        costs.g_max = 0.4;
        std::vector<std::vector<uint8_t>> a(3, std::vector<uint8_t>(12, 0));
        for (auto& row : a)
            for (auto& v : row) v = rng.next_unit() < 0.5 ? 1 : 0;
        a[0][11] = 1;  // keep the last column active
        auto sched = schedule_from(a, 12, 0, std::nullopt);
        sched.total_kg = schedule_total_kg(sched.a, costs);
        const auto run = run_training(task, sched, costs, cfg);
        CHECK(run.total_kg == sched.total_kg);
        CHECK(run.rounds.back().cum_kg == sched.total_kg);
    }
    SUBCASE("fine-tuning window switches to FedAvg and runs to T + s") {
        // Window: slots 9..10 (T=6, s=4, t_ft=2); tail beyond stays empty.
        std::vector<std::vector<uint8_t>> a(3, std::vector<uint8_t>(12, 0));
        for (int c = 0; c < 3; ++c) {
            for (int t = 0; t < 8; ++t) a[c][t] = (t % 3 == c) ? 1 : 0;
            a[c][8] = a[c][9] = 1;
        }
        auto sched = schedule_from(a, 6, 2, 4);
        const auto run = run_training(task, sched, uniform_costs(3, 12, 0.1), cfg);
        CHECK(run.rounds.size() == 10);
        CHECK(run.rounds.back().active_count == 3);
    }
    SUBCASE("bit-for-bit reproducible") {
        const int T = 6;
        const auto sched = schedule_from(
            std::vector<std::vector<uint8_t>>(3, std::vector<uint8_t>(T, 1)), T, 0, std::nullopt);
        const auto r1 = run_training(task, sched, uniform_costs(3, T, 0.2), cfg);
        const auto r2 = run_training(task, sched, uniform_costs(3, T, 0.2), cfg);
        CHECK(r1.theta == r2.theta);
        CHECK(r1.final_test_acc == r2.final_test_acc);
    }
    SUBCASE("client count mismatch") {
        const auto sched = schedule_from(
            std::vector<std::vector<uint8_t>>(2, std::vector<uint8_t>(5, 1)), 5, 0, std::nullopt);
        CHECK_THROWS_AS(run_training(task, sched, uniform_costs(2, 5, 0.1), cfg), Error);
    }
}

TEST_CASE("IDX ingestion") {
    const auto dir = fs::temp_directory_path() / "carbonfl_test_idx";
    fs::create_directories(dir);
    const auto img_path = (dir / "imgs.idx").string();
    const auto lab_path = (dir / "labs.idx").string();

    const auto put_u32 = [](std::ofstream& out, uint32_t v) {
        const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                    static_cast<unsigned char>(v >> 16),
                                    static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v)};
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    {
        std::ofstream img(img_path, std::ios::binary);
        put_u32(img, 0x00000803);
        put_u32(img, 3);  // samples
        put_u32(img, 2);  // rows
        put_u32(img, 2);  // cols
        const unsigned char pixels[12] = {0, 255, 128, 64, 10, 20, 30, 40, 250, 240, 230, 220};
        img.write(reinterpret_cast<const char*>(pixels), sizeof(pixels));
        std::ofstream lab(lab_path, std::ios::binary);
        put_u32(lab, 0x00000801);
        put_u32(lab, 3);
        const unsigned char labels[3] = {0, 1, 1};
        lab.write(reinterpret_cast<const char*>(labels), sizeof(labels));
    }
    const Dataset data = load_idx_dataset(img_path, lab_path);
    CHECK(data.size() == 3);
    CHECK(data.feature_dim == 4);
    CHECK(data.x[0] == 0.0);
    CHECK(data.x[1] == 1.0);
    CHECK(data.x[2] == doctest::Approx(128.0 / 255.0));
    CHECK(data.y == std::vector<int>{0, 1, 1});

    // Bad magic is a schema error.
    {
        std::ofstream img(img_path, std::ios::binary);
        put_u32(img, 0x00000777);
    }
    CHECK_THROWS_AS(load_idx_dataset(img_path, lab_path), Error);
}

TEST_CASE("run CSV writer") {
    TrainingRun run;
    run.rounds = {{1, 3, 0.5, 0.1, 0.8, 0.6}, {2, 0, 0.0, 0.1, 0.8, 0.6}};
    const auto dir = fs::temp_directory_path() / "carbonfl_test_run";
    fs::create_directories(dir);
    const auto path = (dir / "run.csv").string();
    write_run_csv(run, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "round,active_count,cum_kg,test_acc,test_loss");
    std::getline(in, line);
    CHECK(line.rfind("1,3,", 0) == 0);
}
