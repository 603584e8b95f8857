#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "actpart/actpart.hpp"

using namespace actpart;

namespace {

struct Overrides {
    std::optional<std::string> config_path;
    std::map<std::string, std::string> values;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key = value config file");
        for (const auto& key : setting_keys()) cmd->add_option("--" + key, values[key], "override '" + key + "'");
    }

    /// File settings first, then flags.
    void apply(ExperimentConfig& c) const {
        if (config_path) apply_config_file(c, *config_path);
        for (const auto& [key, value] : values)
            if (!value.empty()) apply_setting(c, key, value);
        c.validate();
    }
};

struct Columns {
    std::vector<std::string> features;
    std::vector<std::string> labels;

    void attach(CLI::App* cmd) {
        cmd->add_option("--features", features, "feature columns (default: all but the last)")->delimiter(',');
        cmd->add_option("--labels", labels, "label columns (default: the last)")->delimiter(',');
    }

    Dataset load(const std::string& path) const {
        auto f = features;
        auto l = labels;
        if (f.empty() || l.empty()) {
            auto header = csv_header(path);
            require(header.size() >= 2, path + ": need at least two columns");
            if (l.empty()) l = {header.back()};
            if (f.empty())
                for (const auto& h : header)
                    if (std::ranges::find(l, h) == l.end()) f.push_back(h);
        }
        auto loaded = load_csv(path, f, l);
        if (loaded.dropped_rows > 0)
            std::cerr << "dropped " << loaded.dropped_rows << " rows with missing values\n";
        return std::move(loaded.dataset);
    }
};

Dataset generate(const std::string& function, std::size_t n, double noise, std::uint64_t seed) {
    if (function == "anomaly-crest") return gen_anomaly_crest(n, noise, seed);
    if (function == "wave-climb") return gen_wave_climb(n, noise, seed);
    throw Error("unknown function '" + function + "' (expected anomaly-crest or wave-climb)");
}

void print_analysis(const ComparisonReport& report) {
    std::printf("dataset %s, profile %s, master seed %llu\n", report.dataset.c_str(), report.profile.c_str(),
                static_cast<unsigned long long>(report.master_seed));
    std::printf("%-6s %8s %14s %14s %14s %14s %14s %10s\n", "seed", "experts", "lr_var", "params_var",
                "proportion_var", "modular_loss", "single_loss", "perf_%");
    for (std::size_t i = 0; i < report.runs.size(); ++i) {
        const auto& r = report.runs[i];
        const auto a = analysis_metrics(r);
        const double perf = i < report.performance_values.size() ? report.performance_values[i] : 0.0;
        std::printf("%-6llu %8zu %14.6g %14.6g %14.6g %14.6g %14.6g %10.2f\n", static_cast<unsigned long long>(r.seed),
                    a.n_experts, a.lr_variance, a.param_count_variance, a.partition_proportion_variance,
                    r.modular_test_loss, r.single_test_loss, perf);
    }
    std::printf("mean modular loss %.6g, mean single loss %.6g\n", report.modular_mean_loss, report.single_mean_loss);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Active partitioning of a regression dataset with competing networks"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset to CSV");
    std::string function;
    std::size_t n = 10000;
    double noise = 0.01;
    std::uint64_t seed = 0;
    std::string gen_out;
    gen->add_option("--function", function, "anomaly-crest or wave-climb")->required();
    gen->add_option("--n", n, "number of points");
    gen->add_option("--noise", noise, "label noise standard deviation");
    gen->add_option("--seed", seed, "generator seed");
    gen->add_option("--out", gen_out, "output CSV")->required();

    auto* part = app.add_subcommand("partition", "run active partitioning on a CSV and write the result JSON");
    std::string part_data, part_out;
    Columns part_columns;
    Overrides part_overrides;
    part->add_option("--data", part_data, "input CSV")->required();
    part->add_option("--out", part_out, "result JSON")->required();
    part_columns.attach(part);
    part_overrides.attach(part);

    auto* cmp = app.add_subcommand("compare", "repeated modular vs single-model comparison");
    std::string cmp_data, cmp_function, profile = "paper", cmp_out;
    bool quiet = false;
    Columns cmp_columns;
    Overrides cmp_overrides;
    auto* data_opt = cmp->add_option("--data", cmp_data, "input CSV");
    cmp->add_option("--function", cmp_function, "synthetic function instead of a CSV")->excludes(data_opt);
    cmp->add_option("--profile", profile, "paper or desk");
    cmp->add_option("--out", cmp_out, "output directory")->required();
    cmp->add_flag("--quiet", quiet, "no progress output");
    cmp_columns.attach(cmp);
    cmp_overrides.attach(cmp);

    auto* analyze = app.add_subcommand("analyze", "print per-run analysis metrics of a report");
    std::string report_path;
    analyze->add_option("--report", report_path, "report.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*gen) {
            const auto d = generate(function, n, noise, seed);
            write_csv(gen_out, d, {"x"}, {"y"});
        } else if (*part) {
            ExperimentConfig cfg = paper_profile();
            part_overrides.apply(cfg);
            const auto data = fit_apply_scaler(part_columns.load(part_data));
            const auto result = run_partitioning(data, cfg.partition);
            for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
            std::ofstream out(part_out);
            require(out.good(), "cannot write " + part_out);
            out << to_json(result).dump(2) << "\n";
            require(out.good(), "failed writing " + part_out);
        } else if (*cmp) {
            ExperimentConfig cfg = profile_by_name(profile);
            cmp_overrides.apply(cfg);
            Dataset data;
            if (!cmp_data.empty()) data = cmp_columns.load(cmp_data);
            else {
                require(!cmp_function.empty(), "compare needs --data or --function");
                data = generate(cmp_function, cfg.points, cfg.noise, cfg.master_seed);
            }
            ProgressFn progress;
            if (!quiet) progress = [](const std::string& msg) { std::cerr << msg << "\n"; };
            try {
                const auto report = compare(data, cfg, progress);
                const auto files = emit_report(report, cmp_out);
                if (!quiet) std::cerr << "wrote " << files.report_json.string() << "\n";
            } catch (const CompareFailure& e) {
                emit_report(e.partial(), cmp_out);
                throw;
            }
        } else if (*analyze) {
            print_analysis(load_report(report_path));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
