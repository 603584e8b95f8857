#pragma once

#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "actpart/core.hpp"
#include "actpart/data.hpp"
#include "actpart/nn.hpp"

namespace actpart {

/// Search space for network shape and learning rate. `min_layers` and
/// `max_layers` count affine layers, so a 2-layer network has one hidden
/// layer.
struct HyperBounds {
    int min_layers = 2;
    int max_layers = 6;
    int min_neurons = 4;
    int max_neurons = 10;
    double min_learning_rate = 0.0001;
    double max_learning_rate = 0.005;
    std::size_t search_runs = 100;

    void validate() const {
        require(min_layers >= 2 && min_layers <= max_layers, "layer bounds must satisfy 2 <= min <= max");
        require(min_neurons >= 1 && min_neurons <= max_neurons, "neuron bounds must satisfy 1 <= min <= max");
        require(min_learning_rate > 0.0 && min_learning_rate <= max_learning_rate,
                "learning rate bounds must satisfy 0 < min <= max");
    }
};

struct HyperSample {
    std::vector<std::size_t> hidden_widths;
    double learning_rate = 0.001;

    std::size_t layers() const { return hidden_widths.size() + 1; }

    Architecture architecture(std::size_t input_dim, std::size_t output_dim) const {
        Architecture a;
        a.layer_sizes.push_back(input_dim);
        a.layer_sizes.insert(a.layer_sizes.end(), hidden_widths.begin(), hidden_widths.end());
        a.layer_sizes.push_back(output_dim);
        return a;
    }

    friend bool operator==(const HyperSample&, const HyperSample&) = default;
};

inline bool within(const HyperSample& s, const HyperBounds& b) {
    if (static_cast<int>(s.layers()) < b.min_layers || static_cast<int>(s.layers()) > b.max_layers) return false;
    for (auto w : s.hidden_widths)
        if (static_cast<int>(w) < b.min_neurons || static_cast<int>(w) > b.max_neurons) return false;
    return s.learning_rate >= b.min_learning_rate && s.learning_rate <= b.max_learning_rate;
}

/// Layer count uniform, each hidden width independently uniform, learning
/// rate log-uniform.
inline HyperSample sample_hyperparams(const HyperBounds& bounds, Rng& rng) {
    bounds.validate();
    HyperSample s;
    const int layers = rng.integer(bounds.min_layers, bounds.max_layers);
    for (int l = 1; l < layers; ++l)
        s.hidden_widths.push_back(static_cast<std::size_t>(rng.integer(bounds.min_neurons, bounds.max_neurons)));
    if (bounds.min_learning_rate == bounds.max_learning_rate) {
        s.learning_rate = bounds.min_learning_rate;
    } else {
        const double lo = std::log(bounds.min_learning_rate), hi = std::log(bounds.max_learning_rate);
        s.learning_rate = std::clamp(std::exp(rng.uniform(lo, hi)), bounds.min_learning_rate, bounds.max_learning_rate);
    }
    return s;
}

/// Widths of the smallest network inside the bounds.
inline std::vector<std::size_t> minimal_widths(const HyperBounds& b) {
    return std::vector<std::size_t>(static_cast<std::size_t>(b.min_layers - 1), static_cast<std::size_t>(b.min_neurons));
}

/// Hidden widths of the in-bounds architecture with the most parameters not
/// exceeding `budget`; ties resolve to the first in (depth, lexicographic)
/// order. Empty optional when nothing fits.
inline std::optional<std::vector<std::size_t>> largest_admissible(const HyperBounds& b, std::size_t input_dim,
                                                                  std::size_t output_dim, std::size_t budget) {
    std::optional<std::vector<std::size_t>> best;
    std::size_t best_count = 0;
    for (int layers = b.min_layers; layers <= b.max_layers; ++layers) {
        std::vector<std::size_t> w(static_cast<std::size_t>(layers - 1), static_cast<std::size_t>(b.min_neurons));
        while (true) {
            HyperSample s{w, b.min_learning_rate};
            const auto n = param_count(s.architecture(input_dim, output_dim));
            if (n <= budget && (!best || n > best_count)) {
                best = w;
                best_count = n;
            }
            // odometer increment, last position fastest
            std::size_t pos = w.size();
            while (pos > 0 && w[pos - 1] == static_cast<std::size_t>(b.max_neurons)) {
                w[pos - 1] = static_cast<std::size_t>(b.min_neurons);
                --pos;
            }
            if (pos == 0) break;
            ++w[pos - 1];
        }
    }
    return best;
}

struct SearchConfig {
    HyperBounds bounds;
    std::size_t runs = 100;
    TrainConfig train;
    std::uint64_t seed = 0;
    /// Upper bound on param_count, when set.
    std::optional<std::size_t> budget;
};

struct SearchRun {
    HyperSample sample;
    std::size_t params = 0;
    double validation_loss = 0.0;
};

struct SearchResult {
    HyperSample best_sample;
    Network best_network;
    double best_validation_loss = std::numeric_limits<double>::infinity();
    std::vector<SearchRun> runs;
    std::vector<std::string> warnings;
};

inline constexpr int kBudgetResampleAttempts = 1000;

/// Draws a sample respecting `config.budget`: rejection sampling first, then
/// the largest admissible architecture, then the minimal one with a warning.
inline HyperSample sample_within_budget(const SearchConfig& config, std::size_t input_dim, std::size_t output_dim,
                                        Rng& rng, std::vector<std::string>& warnings) {
    HyperSample s = sample_hyperparams(config.bounds, rng);
    if (!config.budget) return s;
    const auto fits = [&](const HyperSample& h) {
        return param_count(h.architecture(input_dim, output_dim)) <= *config.budget;
    };
    for (int attempt = 0; attempt < kBudgetResampleAttempts && !fits(s); ++attempt)
        s = sample_hyperparams(config.bounds, rng);
    if (fits(s)) return s;
    if (auto w = largest_admissible(config.bounds, input_dim, output_dim, *config.budget)) {
        s.hidden_widths = *w;
        return s;
    }
    s.hidden_widths = minimal_widths(config.bounds);
    warnings.push_back("no architecture within bounds fits budget " + std::to_string(*config.budget) +
                       "; using minimal architecture " + to_string(s.architecture(input_dim, output_dim)));
    return s;
}

/// Trains `config.runs` independently sampled networks on `train` and keeps
/// the one with the lowest loss on `validation`.
inline SearchResult random_search(const Dataset& train, const Dataset& validation, const SearchConfig& config) {
    require(config.runs >= 1, "random search needs at least one run");
    require(train.size() > 0 && validation.size() > 0, "random search needs non-empty train and validation sets");
    require(train.feature_dim() == validation.feature_dim() && train.label_dim() == validation.label_dim(),
            "train and validation dimensions differ");
    config.bounds.validate();
    Rng rng(config.seed);
    SearchResult result;
    const auto train_idx = all_indices(train.size());
    for (std::size_t r = 0; r < config.runs; ++r) {
        const HyperSample s = sample_within_budget(config, train.feature_dim(), train.label_dim(), rng, result.warnings);
        const std::uint64_t net_seed = rng.next();
        Network net = init_network(s.architecture(train.feature_dim(), train.label_dim()), s.learning_rate, net_seed);
        for (std::size_t e = 0; e < config.train.epochs; ++e) train_pass(net, train, train_idx, config.train);
        const double loss = dataset_loss(net, validation);
        result.runs.push_back({s, net.params.size(), loss});
        if (r == 0 || loss < result.best_validation_loss) {
            result.best_validation_loss = loss;
            result.best_sample = s;
            result.best_network = std::move(net);
        }
    }
    return result;
}

/// CSV log: run, layers, widths, learning_rate, params, validation_loss.
inline void write_search_log(std::ostream& out, const SearchResult& result) {
    out << "run,layers,hidden_widths,learning_rate,params,validation_loss\n";
    for (std::size_t r = 0; r < result.runs.size(); ++r) {
        const auto& run = result.runs[r];
        std::string widths;
        for (std::size_t k = 0; k < run.sample.hidden_widths.size(); ++k)
            widths += (k ? "-" : "") + std::to_string(run.sample.hidden_widths[k]);
        out << r << ',' << run.sample.layers() << ',' << widths << ',' << detail::format_double(run.sample.learning_rate)
            << ',' << run.params << ',' << detail::format_double(run.validation_loss) << '\n';
    }
}

template <class Model>
    requires requires(const Model& m) {
        { m.total_params } -> std::convertible_to<std::size_t>;
    }
std::size_t single_model_budget(const Model& modular) {
    return modular.total_params;
}

inline void to_json(nlohmann::json& j, const HyperSample& s) {
    j = nlohmann::json{{"hidden_widths", s.hidden_widths}, {"learning_rate", s.learning_rate}};
}

inline void from_json(const nlohmann::json& j, HyperSample& s) {
    s.hidden_widths = j.at("hidden_widths").get<std::vector<std::size_t>>();
    s.learning_rate = j.at("learning_rate").get<double>();
}

}  // namespace actpart
