// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "actpart/actpart.hpp"

using namespace actpart;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kGradientRelTol = 1e-4;
constexpr double kGradientFloor = 1e-6;
constexpr double kFdStep = 1e-5;
constexpr double kGradientSeconds = 10.0;
constexpr double kRankLossTol = 1e-12;
constexpr double kFixtureTol = 1e-12;
constexpr double kModularRatio = 0.5;
constexpr std::size_t kMinPool = 2, kMaxPool = 6, kPoolRunsNeeded = 2;
constexpr double kGateAccuracy = 0.9;
constexpr double kProportionTol = 1e-9;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int number, const std::string& name, const std::function<Outcome()>& check) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::printf("%s %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", number, name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "actpart_acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + ACTPART_CLI_PATH + "\" " + args;
    return std::system(cmd.c_str());
}

Dataset random_dataset(std::size_t n, std::size_t in, std::size_t out, Rng& rng) {
    Dataset d;
    d.features = Matrix(n, in);
    d.labels = Matrix(n, out);
    for (auto& v : d.features.values) v = rng.uniform(-1, 1);
    for (auto& v : d.labels.values) v = rng.uniform(-1, 1);
    return d;
}

/// Forward pass written directly from the flat parameter layout.
std::vector<double> reference_forward(const Network& net, std::vector<double> a) {
    const auto& sizes = net.architecture.layer_sizes;
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const std::size_t fan_in = sizes[l], fan_out = sizes[l + 1];
        std::vector<double> z(fan_out);
        for (std::size_t o = 0; o < fan_out; ++o) {
            double s = net.params[offset + fan_in * fan_out + o];
            for (std::size_t i = 0; i < fan_in; ++i) s += net.params[offset + o * fan_in + i] * a[i];
            z[o] = l + 2 < sizes.size() ? std::tanh(s) : s;
        }
        offset += fan_in * fan_out + fan_out;
        a = std::move(z);
    }
    return a;
}

Assignment table(std::vector<ModelId> ids, const std::vector<std::vector<double>>& rows) {
    Assignment a;
    a.model_ids = std::move(ids);
    a.losses = Matrix(rows.size(), a.model_ids.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 0; c < a.model_ids.size(); ++c) {
            a.losses(i, c) = rows[i][c];
            if (rows[i][c] < rows[i][best]) best = c;
        }
        a.winner_column.push_back(best);
        a.winner.push_back(a.model_ids[best]);
    }
    return a;
}

std::size_t sum(const std::vector<std::size_t>& xs) { return std::accumulate(xs.begin(), xs.end(), std::size_t{0}); }

// ---------------------------------------------------------------------------

Outcome gradient_oracle() {
    Rng rng(101);
    double worst = 0.0;
    const auto start = std::chrono::steady_clock::now();
    for (int k = 0; k < 20; ++k) {
        Architecture arch;
        arch.layer_sizes.push_back(1 + rng.index(3));
        const std::size_t hidden = 1 + rng.index(3);
        for (std::size_t h = 0; h < hidden; ++h) arch.layer_sizes.push_back(2 + rng.index(4));
        arch.layer_sizes.push_back(1 + rng.index(2));
        auto net = init_network(arch, 0.001, rng.next());
        const auto data = random_dataset(8, arch.input_dim(), arch.output_dim(), rng);
        const auto idx = all_indices(data.size());
        const auto grad = loss_gradient(net, data, idx);
        for (std::size_t p = 0; p < grad.size(); ++p) {
            const double keep = net.params[p];
            net.params[p] = keep + kFdStep;
            const double up = dataset_loss(net, data, idx);
            net.params[p] = keep - kFdStep;
            const double down = dataset_loss(net, data, idx);
            net.params[p] = keep;
            const double fd = (up - down) / (2 * kFdStep);
            worst = std::max(worst, std::abs(fd - grad[p]) / std::max({std::abs(fd), std::abs(grad[p]), kGradientFloor}));
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {worst < kGradientRelTol && secs < kGradientSeconds,
            "worst relative error " + fmt(worst) + " over 20 networks in " + fmt(secs) + " s"};
}

Outcome ranking_oracle() {
    Rng rng(202);
    std::size_t mismatches = 0;
    double worst = 0.0;
    for (int k = 0; k < 10; ++k) {
        const auto data = random_dataset(50, 2, 1, rng);
        ModelPool pool;
        for (int m = 0; m < 3; ++m) {
            const auto s = sample_hyperparams({}, rng);
            pool.add(init_network(s.architecture(2, 1), s.learning_rate, rng.next()), s);
        }
        const auto a = rank_predictions(pool, data);
        for (std::size_t i = 0; i < data.size(); ++i) {
            ModelId best_id = 0;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < pool.models.size(); ++c) {
                const auto y = reference_forward(pool.models[c].network, {data.features(i, 0), data.features(i, 1)});
                const double loss = (y[0] - data.labels(i, 0)) * (y[0] - data.labels(i, 0));
                worst = std::max(worst, std::abs(loss - a.losses(i, c)));
                if (loss < best || (loss == best && pool.models[c].id < best_id)) {
                    best = loss;
                    best_id = pool.models[c].id;
                }
            }
            if (best_id != a.winner[i]) ++mismatches;
        }
    }
    return {mismatches == 0 && worst <= kRankLossTol,
            std::to_string(mismatches) + " winner mismatches in 500 points, max loss difference " + fmt(worst)};
}

Outcome lifecycle_oracles() {
    std::vector<std::string> bad;
    const std::vector<double> losses{1, 1, 1, 1, 10};
    const auto lb = compute_loss_bound(losses);
    if (std::abs(lb.bound - 6.4) > kFixtureTol || lb.candidates != std::vector<std::size_t>{4}) bad.push_back("loss bound");
    if (std::abs(replacability(table({0, 1}, {{1, 2}, {1, 3}, {4, 1}}), 0) - 2.0) > kFixtureTol) bad.push_back("table 2.0");
    if (std::abs(replacability(table({0, 1}, std::vector<std::vector<double>>(10, {1.0, 1.1})), 0) - 1.1) > kFixtureTol)
        bad.push_back("1.1 case");

    // clone of a trained network
    Rng rng(303);
    auto data = random_dataset(80, 1, 1, rng);
    for (std::size_t i = 0; i < data.size(); ++i) data.labels(i, 0) = std::sin(3 * data.features(i, 0));
    auto net = init_network({{1, 6, 1}}, 0.005, 9);
    for (int e = 0; e < 50; ++e) train_epoch(net, data, all_indices(data.size()), {16, 1});
    ModelPool pool;
    pool.add(net, {});
    const ModelId clone = pool.add(net, {});
    const auto drop = drop_redundant(pool, rank_predictions(pool, data), 1.8);
    if (!drop || drop->model_id != clone || pool.size() != 1) bad.push_back("clone not dropped");

    // sole model
    const auto again = drop_redundant(pool, rank_predictions(pool, data), 1e9);
    if (again || pool.size() != 1) bad.push_back("sole model dropped");

    return {bad.empty(), bad.empty() ? "bound 6.4, replacability 2.0 and 1.1, clone dropped, sole model kept"
                                     : "failed: " + [&] { std::string s; for (auto& b : bad) s += b + "; "; return s; }()};
}

Outcome desk_reproduction(const ComparisonReport& anomaly, const ComparisonReport& wave) {
    const double ra = anomaly.modular_mean_loss / anomaly.single_mean_loss;
    const double rw = wave.modular_mean_loss / wave.single_mean_loss;
    return {ra <= kModularRatio && rw <= kModularRatio,
            "modular/single mean loss: anomaly-crest " + fmt(ra) + " (" + fmt(anomaly.modular_mean_loss) + " vs " +
                fmt(anomaly.single_mean_loss) + "), wave-climb " + fmt(rw) + " (" + fmt(wave.modular_mean_loss) +
                " vs " + fmt(wave.single_mean_loss) + ")"};
}

Outcome pattern_count(const ComparisonReport& anomaly) {
    std::size_t ok = 0;
    std::string sizes;
    for (const auto& r : anomaly.runs) {
        if (r.final_pool_size >= kMinPool && r.final_pool_size <= kMaxPool) ++ok;
        sizes += (sizes.empty() ? "" : ",") + std::to_string(r.final_pool_size);
    }
    return {ok >= kPoolRunsNeeded, "final pool sizes " + sizes + " (" + std::to_string(ok) + " in range)"};
}

Outcome boundary_accuracy(const ComparisonReport& anomaly, const ComparisonReport& wave) {
    double lowest = 1.0;
    for (const auto* rep : {&anomaly, &wave})
        for (const auto& r : rep->runs) lowest = std::min(lowest, r.gate_accuracy);
    Matrix x(4, 1);
    x.values = {-2, -1, 1, 2};
    const std::vector<ModelId> y{3, 3, 8, 8};
    const double separable = training_accuracy(fit_boundary(x, y), x, y);
    return {lowest >= kGateAccuracy && separable == 1.0,
            "lowest desk accuracy " + fmt(lowest) + ", separable fixture " + fmt(separable)};
}

Outcome performance_exact() {
    const double a = performance_value(100, 80), b = performance_value(100, 120);
    return {a == 20.0 && b == -20.0, "(100,80) -> " + fmt(a) + ", (100,120) -> " + fmt(b)};
}

Outcome budget_fairness(const std::vector<const ComparisonReport*>& reports) {
    std::size_t runs = 0, violations = 0;
    for (const auto* rep : reports)
        for (const auto& r : rep->runs) {
            ++runs;
            if (r.single_param_count > sum(r.expert_param_counts)) ++violations;
            const double total = std::accumulate(r.partition_proportions.begin(), r.partition_proportions.end(), 0.0);
            if (std::abs(total - 1.0) > kProportionTol) ++violations;
        }
    return {runs > 0 && violations == 0,
            std::to_string(violations) + " violations in " + std::to_string(runs) + " runs"};
}

Outcome determinism(const fs::path& first, const fs::path& second) {
    const auto a = slurp(first / "report.json"), b = slurp(second / "report.json");
    return {!a.empty() && a == b, "two CLI executions, " + std::to_string(a.size()) + " bytes, " +
                                      (a == b ? "identical" : "different")};
}

Outcome external_csv(int exit_code, const fs::path& dir, std::size_t repeats) {
    if (exit_code != 0) return {false, "compare exited with " + std::to_string(exit_code)};
    const auto r = load_report(dir / "report.json");
    const bool shaped = r.runs.size() == repeats && r.performance_values.size() == repeats &&
                        std::isfinite(r.modular_mean_loss) && std::isfinite(r.single_mean_loss) &&
                        fs::file_size(dir / "runs.csv") > 0 && slurp(dir / "histogram.svg").find("<svg") != std::string::npos;
    return {shaped, std::to_string(r.runs.size()) + " runs, modular " + fmt(r.modular_mean_loss) + ", single " +
                        fmt(r.single_mean_loss)};
}

}  // namespace

int main() {
    const fs::path dir = scratch();

    report(1, "gradient oracle", gradient_oracle);
    report(2, "ranking brute force", ranking_oracle);
    report(3, "lifecycle oracles", lifecycle_oracles);

    // Desk-scale runs shared by criteria 4, 5, 6, 8 and 9.
    const std::string desk = " --profile desk --quiet";
    const int first = run_cli("compare --function anomaly-crest" + desk + " --out \"" + (dir / "anomaly_a").string() + "\"");
    const int second = run_cli("compare --function anomaly-crest" + desk + " --out \"" + (dir / "anomaly_b").string() + "\"");
    ComparisonReport anomaly, wave;
    bool desk_ok = first == 0 && second == 0;
    try {
        anomaly = load_report(dir / "anomaly_a" / "report.json");
        const auto cfg = desk_profile();
        wave = compare(gen_wave_climb(cfg.points, cfg.noise, cfg.master_seed), cfg);
    } catch (const std::exception& e) {
        std::printf("desk runs failed: %s\n", e.what());
        desk_ok = false;
    }
    auto desk_guard = [&](auto f) {
        return [=, &anomaly, &wave]() -> Outcome {
            if (!desk_ok) return {false, "desk runs did not complete"};
            return f(anomaly, wave);
        };
    };

    report(4, "desk reproduction", desk_guard([](auto& a, auto& w) { return desk_reproduction(a, w); }));
    report(5, "pattern count", desk_guard([](auto& a, auto&) { return pattern_count(a); }));
    report(6, "boundary accuracy", desk_guard([](auto& a, auto& w) { return boundary_accuracy(a, w); }));
    report(7, "performance metric", performance_exact);

    const std::string energy = std::string(ACTPART_TEST_DATA_DIR) + "/energy_shaped.csv";
    const fs::path energy_out = dir / "energy";
    const int energy_exit = run_cli("compare --data \"" + energy +
                                    "\" --features X1,X2,X3,X4,X5,X6,X7,X8 --labels Y1,Y2 --profile paper --quiet --out \"" +
                                    energy_out.string() + "\"");
    ComparisonReport energy_report;
    if (energy_exit == 0) energy_report = load_report(energy_out / "report.json");

    report(8, "budget fairness", [&] { return budget_fairness({&anomaly, &wave, &energy_report}); });
    report(9, "determinism", [&] { return determinism(dir / "anomaly_a", dir / "anomaly_b"); });
    report(10, "external CSV under paper profile",
           [&] { return external_csv(energy_exit, energy_out, paper_profile().repeats); });

    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
