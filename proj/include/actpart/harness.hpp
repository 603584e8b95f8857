#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "actpart/core.hpp"
#include "actpart/data.hpp"
#include "actpart/hyper_search.hpp"
#include "actpart/modular.hpp"
#include "actpart/partition.hpp"
#include "json.hpp"

namespace actpart {

/// Everything one modular-vs-single comparison needs.
struct ExperimentConfig {
    std::string profile = "paper";
    std::size_t points = 10000;
    double noise = 0.01;
    std::size_t repeats = 10;
    std::uint64_t master_seed = 42;
    double split_ratio = 0.8;
    double validation_fraction = 0.2;
    std::size_t modular_epochs = 500;
    PartitionConfig partition;

    void validate() const {
        require(repeats >= 1, "repeats must be at least 1");
        require(modular_epochs >= 1, "modular_epochs must be at least 1");
        require(partition.bounds.search_runs >= 1, "search_runs must be at least 1");
        partition.validate();
    }
};

/// Settings used in the original experiments.
inline ExperimentConfig paper_profile() {
    ExperimentConfig c;
    c.profile = "paper";
    return c;
}

/// Reduced settings that finish in minutes on one core.
inline ExperimentConfig desk_profile() {
    ExperimentConfig c;
    c.profile = "desk";
    c.points = 2000;
    c.partition.epochs = 300;
    c.partition.bounds.search_runs = 20;
    c.repeats = 3;
    return c;
}

inline ExperimentConfig profile_by_name(const std::string& name) {
    if (name == "paper") return paper_profile();
    if (name == "desk") return desk_profile();
    throw Error("unknown profile '" + name + "' (expected paper or desk)");
}

namespace detail {

inline std::string trim_copy(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_value(const std::string& key, const std::string& value) {
    std::istringstream is(value);
    T v{};
    is >> v;
    require(!is.fail() && is.eof(), "invalid value '" + value + "' for key '" + key + "'");
    if constexpr (std::is_unsigned_v<T>) require(value.find('-') == std::string::npos, "negative value for '" + key + "'");
    return v;
}

}  // namespace detail

/// Names accepted by apply_setting, in documentation order.
inline const std::vector<std::string>& setting_keys() {
    static const std::vector<std::string> keys{
        "points",         "noise",           "repeats",           "master_seed",
        "split_ratio",    "validation_fraction", "epochs",        "initial_models",
        "adding_check_period", "dropping_check_period", "dropping_threshold", "candidate_epochs",
        "batch_size",     "modular_epochs",  "search_runs",       "min_layers",
        "max_layers",     "min_neurons",     "max_neurons",       "min_learning_rate",
        "max_learning_rate", "svm_c",        "svm_gamma"};
    return keys;
}

inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value) {
    using detail::parse_value;
    auto& p = c.partition;
    if (key == "points") c.points = parse_value<std::size_t>(key, value);
    else if (key == "noise") c.noise = parse_value<double>(key, value);
    else if (key == "repeats") c.repeats = parse_value<std::size_t>(key, value);
    else if (key == "master_seed") c.master_seed = parse_value<std::uint64_t>(key, value);
    else if (key == "split_ratio") c.split_ratio = parse_value<double>(key, value);
    else if (key == "validation_fraction") c.validation_fraction = parse_value<double>(key, value);
    else if (key == "epochs") p.epochs = parse_value<std::size_t>(key, value);
    else if (key == "initial_models") p.initial_models = parse_value<std::size_t>(key, value);
    else if (key == "adding_check_period") p.adding_check_period = parse_value<std::size_t>(key, value);
    else if (key == "dropping_check_period") p.dropping_check_period = parse_value<std::size_t>(key, value);
    else if (key == "dropping_threshold") p.dropping_threshold = parse_value<double>(key, value);
    else if (key == "candidate_epochs") p.candidate_epochs = parse_value<std::size_t>(key, value);
    else if (key == "batch_size") p.train.batch_size = parse_value<std::size_t>(key, value);
    else if (key == "modular_epochs") c.modular_epochs = parse_value<std::size_t>(key, value);
    else if (key == "search_runs") p.bounds.search_runs = parse_value<std::size_t>(key, value);
    else if (key == "min_layers") p.bounds.min_layers = parse_value<int>(key, value);
    else if (key == "max_layers") p.bounds.max_layers = parse_value<int>(key, value);
    else if (key == "min_neurons") p.bounds.min_neurons = parse_value<int>(key, value);
    else if (key == "max_neurons") p.bounds.max_neurons = parse_value<int>(key, value);
    else if (key == "min_learning_rate") p.bounds.min_learning_rate = parse_value<double>(key, value);
    else if (key == "max_learning_rate") p.bounds.max_learning_rate = parse_value<double>(key, value);
    else if (key == "svm_c") p.svm.c = parse_value<double>(key, value);
    else if (key == "svm_gamma") p.svm.gamma = parse_value<double>(key, value);
    else throw Error("unknown config key '" + key + "'");
}

/// Flat `key = value` lines; blank lines and `#` comments are ignored.
inline void apply_config_text(ExperimentConfig& c, const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim_copy(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        require(eq != std::string::npos, "config line " + std::to_string(number) + ": expected key = value");
        apply_setting(c, detail::trim_copy(line.substr(0, eq)), detail::trim_copy(line.substr(eq + 1)));
    }
}

inline void apply_config_file(ExperimentConfig& c, const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_text(c, ss.str());
}

// ---------------------------------------------------------------------------
// Metrics

/// Percentage loss reduction of `modular_loss` relative to `single_mean_loss`.
inline double performance_value(double single_mean_loss, double modular_loss) {
    require(single_mean_loss > 0.0, "performance_value: single-model mean loss must be positive");
    return 100.0 * (single_mean_loss - modular_loss) / single_mean_loss;
}

struct RunRecord {
    std::uint64_t seed = 0;
    double modular_test_loss = 0.0;
    double single_test_loss = 0.0;
    std::size_t expert_count = 0;
    std::vector<double> expert_learning_rates;
    std::vector<std::size_t> expert_param_counts;
    std::vector<double> partition_proportions;
    std::size_t single_param_count = 0;
    std::vector<std::size_t> single_architecture;
    double single_learning_rate = 0.0;
    double gate_accuracy = 0.0;
    std::size_t final_pool_size = 0;

    friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

struct RunAnalysis {
    std::size_t n_experts = 0;
    double lr_variance = 0.0;
    double param_count_variance = 0.0;
    double partition_proportion_variance = 0.0;
};

/// Population variances over the run's experts.
inline RunAnalysis analysis_metrics(const RunRecord& run) {
    RunAnalysis a;
    a.n_experts = run.expert_count;
    if (run.expert_count == 0) return a;
    std::vector<double> counts(run.expert_param_counts.begin(), run.expert_param_counts.end());
    a.lr_variance = population_variance(run.expert_learning_rates);
    a.param_count_variance = population_variance(counts);
    a.partition_proportion_variance = population_variance(run.partition_proportions);
    return a;
}

struct ComparisonReport {
    std::string dataset;
    std::string profile;
    std::uint64_t master_seed = 0;
    std::vector<RunRecord> runs;
    double modular_mean_loss = 0.0;
    double single_mean_loss = 0.0;
    /// One entry per run, relative to the single-model mean loss.
    std::vector<double> performance_values;

    friend bool operator==(const ComparisonReport&, const ComparisonReport&) = default;
};

inline void finalize(ComparisonReport& report) {
    report.performance_values.clear();
    if (report.runs.empty()) return;
    double m = 0.0, s = 0.0;
    for (const auto& r : report.runs) {
        m += r.modular_test_loss;
        s += r.single_test_loss;
    }
    report.modular_mean_loss = m / static_cast<double>(report.runs.size());
    report.single_mean_loss = s / static_cast<double>(report.runs.size());
    if (report.single_mean_loss > 0.0)
        for (const auto& r : report.runs)
            report.performance_values.push_back(performance_value(report.single_mean_loss, r.modular_test_loss));
}

/// Thrown when a run fails; carries the runs completed so far.
class CompareFailure : public Error {
public:
    CompareFailure(const std::string& what, ComparisonReport partial) : Error(what), partial_(std::move(partial)) {}
    const ComparisonReport& partial() const { return partial_; }

private:
    ComparisonReport partial_;
};

using ProgressFn = std::function<void(const std::string&)>;

/// One repeat: split, partition, train the modular model, then the
/// budget-matched single model, and score both on the test split.
inline RunRecord compare_run(const Dataset& raw, const ExperimentConfig& config, std::uint64_t seed,
                             const ProgressFn& progress = {}) {
    auto note = [&](const std::string& s) { if (progress) progress(s); };
    const SplitPair parts = split(raw, config.split_ratio, seed);

    PartitionConfig pc = config.partition;
    pc.master_seed = seed;
    const PartitionResult partitioning = run_partitioning(parts.train, pc);
    note("partitioning done: " + std::to_string(partitioning.partition_count()) + " partitions");

    ModularConfig mc;
    mc.bounds = config.partition.bounds;
    mc.search_runs = config.partition.bounds.search_runs;
    mc.train = TrainConfig{config.partition.train.batch_size, config.modular_epochs};
    mc.validation_fraction = config.validation_fraction;
    mc.seed = seed;
    const ModularModel modular = train_modular(partitioning, parts.train, mc);
    note("modular model trained: " + std::to_string(modular.total_params) + " parameters");

    SearchConfig sc;
    sc.bounds = mc.bounds;
    sc.runs = mc.search_runs;
    sc.train = mc.train;
    sc.seed = seed;
    sc.budget = single_model_budget(modular);
    const auto holdout = holdout_split(all_indices(parts.train.size()), config.validation_fraction, seed);
    const auto single = random_search(parts.train.subset(holdout.train), parts.train.subset(holdout.validation), sc);
    note("single model trained: " + std::to_string(single.best_network.params.size()) + " parameters");

    RunRecord r;
    r.seed = seed;
    r.modular_test_loss = evaluate_loss(modular, parts.test);
    r.single_test_loss = evaluate_loss(single.best_network, parts.test);
    r.expert_count = modular.experts.size();
    for (const auto& [id, e] : modular.experts) {
        r.expert_learning_rates.push_back(e.hyperparams.learning_rate);
        r.expert_param_counts.push_back(e.network.params.size());
        r.partition_proportions.push_back(static_cast<double>(partitioning.partitions.at(id).size()) /
                                          static_cast<double>(parts.train.size()));
    }
    r.single_param_count = single.best_network.params.size();
    r.single_architecture = single.best_network.architecture.layer_sizes;
    r.single_learning_rate = single.best_network.learning_rate;
    r.gate_accuracy = training_accuracy(partitioning.boundary, parts.train.features, partitioning.final_assignment.winner);
    r.final_pool_size = partitioning.pool.size();
    return r;
}

/// Repeated modular-vs-single comparison; run i uses seed master_seed + i.
inline ComparisonReport compare(const Dataset& raw, const ExperimentConfig& config, const ProgressFn& progress = {}) {
    config.validate();
    ComparisonReport report;
    report.dataset = raw.provenance;
    report.profile = config.profile;
    report.master_seed = config.master_seed;
    for (std::size_t i = 0; i < config.repeats; ++i) {
        const std::uint64_t seed = config.master_seed + i;
        try {
            report.runs.push_back(compare_run(raw, config, seed, progress));
        } catch (const std::exception& e) {
            finalize(report);
            throw CompareFailure("run " + std::to_string(i) + " failed: " + e.what(), report);
        }
        if (progress)
            progress("run " + std::to_string(i + 1) + "/" + std::to_string(config.repeats) +
                     ": modular " + detail::format_double(report.runs.back().modular_test_loss) +
                     ", single " + detail::format_double(report.runs.back().single_test_loss));
    }
    finalize(report);
    return report;
}

// ---------------------------------------------------------------------------
// Report emission

inline void to_json(nlohmann::json& j, const RunRecord& r) {
    j = nlohmann::json{{"seed", r.seed},
                       {"modular_test_loss", r.modular_test_loss},
                       {"single_test_loss", r.single_test_loss},
                       {"expert_count", r.expert_count},
                       {"expert_learning_rates", r.expert_learning_rates},
                       {"expert_param_counts", r.expert_param_counts},
                       {"partition_proportions", r.partition_proportions},
                       {"single_param_count", r.single_param_count},
                       {"single_architecture", r.single_architecture},
                       {"single_learning_rate", r.single_learning_rate},
                       {"gate_accuracy", r.gate_accuracy},
                       {"final_pool_size", r.final_pool_size}};
}

inline void from_json(const nlohmann::json& j, RunRecord& r) {
    j.at("seed").get_to(r.seed);
    j.at("modular_test_loss").get_to(r.modular_test_loss);
    j.at("single_test_loss").get_to(r.single_test_loss);
    j.at("expert_count").get_to(r.expert_count);
    j.at("expert_learning_rates").get_to(r.expert_learning_rates);
    j.at("expert_param_counts").get_to(r.expert_param_counts);
    j.at("partition_proportions").get_to(r.partition_proportions);
    j.at("single_param_count").get_to(r.single_param_count);
    j.at("single_architecture").get_to(r.single_architecture);
    j.at("single_learning_rate").get_to(r.single_learning_rate);
    j.at("gate_accuracy").get_to(r.gate_accuracy);
    j.at("final_pool_size").get_to(r.final_pool_size);
}

inline void to_json(nlohmann::json& j, const ComparisonReport& r) {
    j = nlohmann::json{{"dataset", r.dataset},
                       {"profile", r.profile},
                       {"master_seed", r.master_seed},
                       {"modular_mean_loss", r.modular_mean_loss},
                       {"single_mean_loss", r.single_mean_loss},
                       {"performance_values", r.performance_values},
                       {"runs", r.runs}};
}

inline void from_json(const nlohmann::json& j, ComparisonReport& r) {
    j.at("dataset").get_to(r.dataset);
    j.at("profile").get_to(r.profile);
    j.at("master_seed").get_to(r.master_seed);
    j.at("modular_mean_loss").get_to(r.modular_mean_loss);
    j.at("single_mean_loss").get_to(r.single_mean_loss);
    j.at("performance_values").get_to(r.performance_values);
    j.at("runs").get_to(r.runs);
}

struct Histogram {
    std::vector<double> edges;  // bins + 1 entries
    std::vector<std::size_t> modular_counts;
    std::vector<std::size_t> single_counts;
};

/// Shared bins spanning the pooled min..max; the last bin is closed.
inline Histogram make_histogram(std::span<const double> modular, std::span<const double> single, std::size_t bins = 10) {
    require(bins >= 1, "histogram needs at least one bin");
    require(!modular.empty() || !single.empty(), "histogram of no values");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : modular) { lo = std::min(lo, v); hi = std::max(hi, v); }
    for (double v : single) { lo = std::min(lo, v); hi = std::max(hi, v); }
    if (hi == lo) {
        const double pad = lo == 0.0 ? 0.5 : std::abs(lo) * 0.5;
        lo -= pad;
        hi += pad;
    }
    Histogram h;
    for (std::size_t b = 0; b <= bins; ++b)
        h.edges.push_back(b == bins ? hi : lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins));
    h.modular_counts.assign(bins, 0);
    h.single_counts.assign(bins, 0);
    auto bin_of = [&](double v) {
        const auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
        return std::min(b, bins - 1);
    };
    for (double v : modular) ++h.modular_counts[bin_of(v)];
    for (double v : single) ++h.single_counts[bin_of(v)];
    return h;
}

inline std::string histogram_svg(const Histogram& h, const std::string& title) {
    constexpr double width = 640, height = 400, left = 60, right = 20, top = 40, bottom = 50;
    const std::size_t bins = h.modular_counts.size();
    std::size_t peak = 1;
    for (std::size_t b = 0; b < bins; ++b) peak = std::max({peak, h.modular_counts[b], h.single_counts[b]});
    const double plot_w = width - left - right, plot_h = height - top - bottom;
    const double bin_w = plot_w / static_cast<double>(bins);
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    auto bar = [&](std::size_t b, std::size_t count, const char* colour) {
        const double bh = plot_h * static_cast<double>(count) / static_cast<double>(peak);
        svg << "<rect x=\"" << left + bin_w * static_cast<double>(b) + 1 << "\" y=\"" << top + plot_h - bh
            << "\" width=\"" << bin_w - 2 << "\" height=\"" << bh << "\" fill=\"" << colour
            << "\" fill-opacity=\"0.55\"/>\n";
    };
    for (std::size_t b = 0; b < bins; ++b) {
        bar(b, h.single_counts[b], "#d62728");
        bar(b, h.modular_counts[b], "#1f77b4");
    }
    svg << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
        << top + plot_h << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
        << "\" stroke=\"black\"/>\n";
    for (std::size_t b = 0; b <= bins; b += std::max<std::size_t>(1, bins / 5)) {
        char label[32];
        std::snprintf(label, sizeof(label), "%.3g", h.edges[b]);
        svg << "<text x=\"" << left + bin_w * static_cast<double>(b) << "\" y=\"" << top + plot_h + 16
            << "\" text-anchor=\"middle\" font-size=\"10\">" << label << "</text>\n";
    }
    svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 10
        << "\" text-anchor=\"middle\" font-size=\"12\">test loss</text>\n"
        << "<text x=\"16\" y=\"" << top + plot_h / 2 << "\" font-size=\"12\" transform=\"rotate(-90 16 "
        << top + plot_h / 2 << ")\" text-anchor=\"middle\">count</text>\n"
        << "<text x=\"" << left + 10 << "\" y=\"" << top + 14 << "\" font-size=\"11\" fill=\"#1f77b4\">modular</text>\n"
        << "<text x=\"" << left + 70 << "\" y=\"" << top + 14 << "\" font-size=\"11\" fill=\"#d62728\">single</text>\n"
        << "</svg>\n";
    return svg.str();
}

struct EmittedFiles {
    std::filesystem::path report_json;
    std::filesystem::path runs_csv;
    std::filesystem::path histogram_svg;
};

/// Writes report.json, runs.csv and histogram.svg into `out_dir`.
inline EmittedFiles emit_report(const ComparisonReport& report, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    require(!ec && std::filesystem::is_directory(out_dir), "cannot create output directory " + out_dir.string());
    EmittedFiles files{out_dir / "report.json", out_dir / "runs.csv", out_dir / "histogram.svg"};
    auto open = [](const std::filesystem::path& p) {
        std::ofstream f(p);
        require(f.good(), "cannot write " + p.string());
        return f;
    };
    {
        auto f = open(files.report_json);
        f << nlohmann::json(report).dump(2) << "\n";
        require(f.good(), "failed writing " + files.report_json.string());
    }
    {
        auto f = open(files.runs_csv);
        f << "seed,modular_test_loss,single_test_loss,performance_value,expert_count,modular_params,single_params,"
             "gate_accuracy,final_pool_size\n";
        for (std::size_t i = 0; i < report.runs.size(); ++i) {
            const auto& r = report.runs[i];
            std::size_t modular_params = 0;
            for (auto p : r.expert_param_counts) modular_params += p;
            f << r.seed << ',' << detail::format_double(r.modular_test_loss) << ','
              << detail::format_double(r.single_test_loss) << ','
              << (i < report.performance_values.size() ? detail::format_double(report.performance_values[i]) : "")
              << ',' << r.expert_count << ',' << modular_params << ',' << r.single_param_count << ','
              << detail::format_double(r.gate_accuracy) << ',' << r.final_pool_size << '\n';
        }
        require(f.good(), "failed writing " + files.runs_csv.string());
    }
    {
        std::vector<double> m, s;
        for (const auto& r : report.runs) {
            m.push_back(r.modular_test_loss);
            s.push_back(r.single_test_loss);
        }
        auto f = open(files.histogram_svg);
        if (!m.empty()) f << histogram_svg(make_histogram(m, s), report.dataset + " test losses");
        require(f.good(), "failed writing " + files.histogram_svg.string());
    }
    return files;
}

inline ComparisonReport load_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open report " + path.string());
    try {
        return nlohmann::json::parse(in).get<ComparisonReport>();
    } catch (const nlohmann::json::exception& e) {
        throw Error("malformed report " + path.string() + ": " + e.what());
    }
}

}  // namespace actpart
