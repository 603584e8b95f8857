#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "actpart/core.hpp"

namespace actpart {

struct ColumnRange {
    double min = 0.0;
    double max = 0.0;

    friend bool operator==(const ColumnRange&, const ColumnRange&) = default;
};

/// Per-column affine map sending [min, max] onto [-1, 1]. Constant columns
/// map to 0.
struct Scaler {
    std::vector<ColumnRange> features;
    std::vector<ColumnRange> labels;

    static double forward(double v, const ColumnRange& r) {
        const double span = r.max - r.min;
        if (span == 0.0) return 0.0;
        return 2.0 * (v - r.min) / span - 1.0;
    }

    static double inverse(double v, const ColumnRange& r) {
        const double span = r.max - r.min;
        if (span == 0.0) return r.min;
        return (v + 1.0) * 0.5 * span + r.min;
    }

    friend bool operator==(const Scaler&, const Scaler&) = default;
};

/// Feature/label matrices plus the scaling metadata and a provenance tag.
struct Dataset {
    Matrix features;
    Matrix labels;
    std::optional<Scaler> scaler;
    std::string provenance;

    std::size_t size() const { return features.rows; }
    std::size_t feature_dim() const { return features.cols; }
    std::size_t label_dim() const { return labels.cols; }

    Dataset subset(std::span<const std::size_t> indices) const {
        Dataset out;
        out.features = Matrix(indices.size(), feature_dim());
        out.labels = Matrix(indices.size(), label_dim());
        for (std::size_t k = 0; k < indices.size(); ++k) {
            require(indices[k] < size(), "subset index out of range");
            std::ranges::copy(features.row(indices[k]), out.features.row(k).begin());
            std::ranges::copy(labels.row(indices[k]), out.labels.row(k).begin());
        }
        out.scaler = scaler;
        out.provenance = provenance;
        return out;
    }
};

// ---------------------------------------------------------------------------
// Synthetic generators. Targets are noiseless functions of x on [0, 10].

inline double anomaly_crest(double x) {
    if (x < 2.5) return 0.2 * x;
    if (x < 4.0) {
        const double z = (x - 3.25) / 0.15;
        return 0.2 * x + 2.0 * std::exp(-z * z);
    }
    if (x < 7.0) {
        const double z = (x - 5.5) / 1.5;
        return 0.8 * (1.0 - z * z) + 0.5;
    }
    return 0.3 * std::sin(4.0 * std::numbers::pi * x);
}

inline double wave_climb(double x) {
    if (x < 3.0) return 0.5 * std::sin(std::numbers::pi * x);
    if (x < 6.0) return 1.5 * std::sin(2.0 * std::numbers::pi * x);
    return 0.2 * (x - 6.0) * (x - 6.0);
}

namespace detail {

template <class F>
Dataset generate(F&& target, std::size_t n, double noise_sd, std::uint64_t seed, std::string name) {
    require(n >= 4, "generator needs at least 4 points");
    require(noise_sd >= 0.0, "noise_sd must be non-negative");
    Rng rng(seed);
    Dataset d;
    d.features = Matrix(n, 1);
    d.labels = Matrix(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = rng.uniform(0.0, 10.0);
        d.features(i, 0) = x;
        d.labels(i, 0) = target(x) + (noise_sd > 0.0 ? noise_sd * rng.normal() : 0.0);
    }
    d.provenance = std::move(name);
    return d;
}

}  // namespace detail

inline Dataset gen_anomaly_crest(std::size_t n = 10000, double noise_sd = 0.01, std::uint64_t seed = 0) {
    return detail::generate(anomaly_crest, n, noise_sd, seed, "anomaly-crest");
}

inline Dataset gen_wave_climb(std::size_t n = 10000, double noise_sd = 0.01, std::uint64_t seed = 0) {
    return detail::generate(wave_climb, n, noise_sd, seed, "wave-climb");
}

// ---------------------------------------------------------------------------
// CSV

struct CsvLoad {
    Dataset dataset;
    std::size_t dropped_rows = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
        s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            cells.push_back(trim(line.substr(start)));
            return cells;
        }
        cells.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
}

inline bool is_missing(std::string_view cell) {
    return cell.empty() || cell == "?" || cell == "NA" || cell == "nan" || cell == "NaN";
}

inline std::optional<double> parse_double(std::string_view cell) {
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace detail

/// Column names from the header row of a CSV file.
inline std::vector<std::string> csv_header(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open " + path);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), path + ": missing header row");
    const auto cells = detail::split_commas(line);
    return {cells.begin(), cells.end()};
}

/// Reads a comma-separated file with a header row. Rows with a missing cell
/// in any selected column are dropped and counted. The result is unscaled.
inline CsvLoad load_csv(const std::string& path, const std::vector<std::string>& feature_columns,
                        const std::vector<std::string>& label_columns) {
    require(!feature_columns.empty(), "no feature columns selected");
    require(!label_columns.empty(), "no label columns selected");
    std::ifstream in(path);
    require(in.good(), "cannot open " + path);

    std::string line;
    require(static_cast<bool>(std::getline(in, line)), path + ": missing header row");
    const auto header = detail::split_commas(line);
    std::vector<std::string> names(header.begin(), header.end());

    auto locate = [&](const std::string& col) {
        const auto it = std::ranges::find(names, col);
        require(it != names.end(), path + ": no column named '" + col + "'");
        return static_cast<std::size_t>(it - names.begin());
    };
    std::vector<std::size_t> fcols, lcols;
    for (const auto& c : feature_columns) fcols.push_back(locate(c));
    for (const auto& c : label_columns) lcols.push_back(locate(c));

    std::vector<double> fvals, lvals;
    CsvLoad out;
    std::size_t row_number = 1;
    while (std::getline(in, line)) {
        ++row_number;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_commas(line);
        bool missing = false;
        auto read = [&](std::size_t col, std::vector<double>& sink) {
            if (col >= cells.size() || detail::is_missing(cells[col])) {
                missing = true;
                return;
            }
            const auto v = detail::parse_double(cells[col]);
            require(v.has_value(), path + ": non-numeric cell at row " + std::to_string(row_number) +
                                       ", column '" + names[col] + "'");
            sink.push_back(*v);
        };
        const std::size_t fmark = fvals.size(), lmark = lvals.size();
        for (auto c : fcols) read(c, fvals);
        for (auto c : lcols) read(c, lvals);
        if (missing) {
            fvals.resize(fmark);
            lvals.resize(lmark);
            ++out.dropped_rows;
        }
    }
    const std::size_t n = fvals.size() / fcols.size();
    require(n > 0, path + ": no complete data rows");
    out.dataset.features = Matrix(n, fcols.size());
    out.dataset.features.values = std::move(fvals);
    out.dataset.labels = Matrix(n, lcols.size());
    out.dataset.labels.values = std::move(lvals);
    out.dataset.provenance = path;
    return out;
}

/// Writes features then labels with shortest round-trip decimal formatting.
inline void write_csv(const std::string& path, const Dataset& data, const std::vector<std::string>& feature_names,
                      const std::vector<std::string>& label_names) {
    require(feature_names.size() == data.feature_dim(), "feature name count mismatch");
    require(label_names.size() == data.label_dim(), "label name count mismatch");
    std::ofstream out(path);
    require(out.good(), "cannot write " + path);
    bool first = true;
    for (const auto& n : feature_names) { out << (first ? "" : ",") << n; first = false; }
    for (const auto& n : label_names) out << "," << n;
    out << "\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t j = 0; j < data.feature_dim(); ++j)
            out << (j ? "," : "") << detail::format_double(data.features(i, j));
        for (std::size_t j = 0; j < data.label_dim(); ++j) out << "," << detail::format_double(data.labels(i, j));
        out << "\n";
    }
    require(out.good(), "failed writing " + path);
}

// ---------------------------------------------------------------------------
// Scaling and splitting

inline Scaler fit_scaler(const Dataset& data) {
    require(data.size() >= 1, "cannot fit scaler on empty dataset");
    auto ranges = [](const Matrix& m) {
        std::vector<ColumnRange> r(m.cols, ColumnRange{m(0, 0), m(0, 0)});
        for (std::size_t j = 0; j < m.cols; ++j) r[j] = {m(0, j), m(0, j)};
        for (std::size_t i = 1; i < m.rows; ++i)
            for (std::size_t j = 0; j < m.cols; ++j) {
                r[j].min = std::min(r[j].min, m(i, j));
                r[j].max = std::max(r[j].max, m(i, j));
            }
        return r;
    };
    return Scaler{ranges(data.features), ranges(data.labels)};
}

inline Dataset apply_scaler(const Dataset& data, const Scaler& scaler) {
    require(scaler.features.size() == data.feature_dim() && scaler.labels.size() == data.label_dim(),
            "scaler does not match dataset dimensions");
    Dataset out = data;
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t j = 0; j < data.feature_dim(); ++j)
            out.features(i, j) = Scaler::forward(data.features(i, j), scaler.features[j]);
        for (std::size_t j = 0; j < data.label_dim(); ++j)
            out.labels(i, j) = Scaler::forward(data.labels(i, j), scaler.labels[j]);
    }
    out.scaler = scaler;
    return out;
}

/// Maps scaled values back to the original units using the stored scaler.
inline Dataset invert_scaler(const Dataset& scaled) {
    require(scaled.scaler.has_value(), "dataset carries no scaler");
    const Scaler& s = *scaled.scaler;
    Dataset out = scaled;
    for (std::size_t i = 0; i < scaled.size(); ++i) {
        for (std::size_t j = 0; j < scaled.feature_dim(); ++j)
            out.features(i, j) = Scaler::inverse(scaled.features(i, j), s.features[j]);
        for (std::size_t j = 0; j < scaled.label_dim(); ++j)
            out.labels(i, j) = Scaler::inverse(scaled.labels(i, j), s.labels[j]);
    }
    out.scaler.reset();
    return out;
}

inline Dataset fit_apply_scaler(const Dataset& data) { return apply_scaler(data, fit_scaler(data)); }

struct SplitPair {
    Dataset train;
    Dataset test;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
    double ratio = 0.8;
    std::uint64_t seed = 0;
};

/// Seeded shuffle; the first ceil(ratio * n) points train. The scaler is
/// fitted on the training part and applied to both parts.
inline SplitPair split(const Dataset& data, double ratio = 0.8, std::uint64_t seed = 0) {
    require(ratio > 0.0 && ratio < 1.0, "split ratio must lie in (0, 1)");
    require(data.size() >= 2, "split needs at least 2 points");
    const auto n = data.size();
    const auto n_train = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n)));
    require(n_train < n, "split leaves the test set empty");

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    SplitPair out;
    out.ratio = ratio;
    out.seed = seed;
    out.train_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    const Dataset raw_train = data.subset(out.train_indices);
    const Scaler scaler = fit_scaler(raw_train);
    out.train = apply_scaler(raw_train, scaler);
    out.test = apply_scaler(data.subset(out.test_indices), scaler);
    return out;
}

}  // namespace actpart
