#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "actpart/core.hpp"
#include "actpart/data.hpp"
#include "json.hpp"

namespace actpart {

/// Layer widths from input to output: {input, hidden..., output}.
struct Architecture {
    std::vector<std::size_t> layer_sizes;

    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t output_dim() const { return layer_sizes.back(); }
    /// Number of affine layers (hidden layers + output layer).
    std::size_t depth() const { return layer_sizes.size() - 1; }

    void validate() const {
        require(layer_sizes.size() >= 3, "architecture needs at least one hidden layer");
        for (auto w : layer_sizes) require(w >= 1, "architecture layer widths must be positive");
    }

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

inline std::string to_string(const Architecture& a) {
    std::string s = "[";
    for (std::size_t i = 0; i < a.layer_sizes.size(); ++i)
        s += (i ? "," : "") + std::to_string(a.layer_sizes[i]);
    return s + "]";
}

/// Weights plus biases over all affine layers.
inline std::size_t param_count(const Architecture& arch) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < arch.layer_sizes.size(); ++l)
        n += arch.layer_sizes[l] * arch.layer_sizes[l + 1] + arch.layer_sizes[l + 1];
    return n;
}

struct AdamState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::uint64_t step = 0;

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

struct TrainConfig {
    std::size_t batch_size = 16;
    std::size_t epochs = 500;
};

/// Feedforward network: tanh hidden layers, affine output, trained by Adam.
///
/// Parameters are stored flat. For each affine layer the block holds the
/// weight matrix (fan_out x fan_in, row-major) followed by its bias vector.
/// The network owns the rng used to shuffle its mini-batches.
struct Network {
    Architecture architecture;
    std::vector<double> params;
    AdamState adam;
    double learning_rate = 0.001;
    std::uint64_t seed = 0;
    Rng rng;

    std::size_t input_dim() const { return architecture.input_dim(); }
    std::size_t output_dim() const { return architecture.output_dim(); }

    friend bool operator==(const Network&, const Network&) = default;
};

inline Network init_network(const Architecture& arch, double learning_rate, std::uint64_t seed) {
    arch.validate();
    require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning rate must be positive");
    Network net;
    net.architecture = arch;
    net.learning_rate = learning_rate;
    net.seed = seed;
    net.rng = Rng(seed);
    net.params.reserve(param_count(arch));
    for (std::size_t l = 0; l < arch.depth(); ++l) {
        const std::size_t fan_in = arch.layer_sizes[l], fan_out = arch.layer_sizes[l + 1];
        const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t k = 0; k < fan_in * fan_out; ++k) net.params.push_back(net.rng.uniform(-limit, limit));
        net.params.insert(net.params.end(), fan_out, 0.0);
    }
    net.adam.first_moment.assign(net.params.size(), 0.0);
    net.adam.second_moment.assign(net.params.size(), 0.0);
    return net;
}

/// Scratch buffers for forward/backward passes, reusable across calls.
struct Workspace {
    std::vector<std::vector<double>> activations;
    std::vector<double> delta;
    std::vector<double> next_delta;

    void prepare(const Architecture& arch) {
        if (activations.size() != arch.layer_sizes.size()) activations.resize(arch.layer_sizes.size());
        for (std::size_t l = 0; l < arch.layer_sizes.size(); ++l) activations[l].resize(arch.layer_sizes[l]);
    }
};

/// Forward pass into `ws`; returns a view of the output layer.
inline std::span<const double> forward(const Network& net, std::span<const double> input, Workspace& ws) {
    const auto& sizes = net.architecture.layer_sizes;
    require(input.size() == sizes.front(), "input dimension mismatch: expected " + std::to_string(sizes.front()) +
                                               ", got " + std::to_string(input.size()));
    ws.prepare(net.architecture);
    std::ranges::copy(input, ws.activations[0].begin());
    const double* p = net.params.data();
    const std::size_t last = sizes.size() - 2;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const std::size_t fan_in = sizes[l], fan_out = sizes[l + 1];
        const double* in = ws.activations[l].data();
        double* out = ws.activations[l + 1].data();
        const double* bias = p + fan_in * fan_out;
        for (std::size_t i = 0; i < fan_out; ++i) {
            const double* w = p + i * fan_in;
            double z = bias[i];
            for (std::size_t j = 0; j < fan_in; ++j) z += w[j] * in[j];
            out[i] = (l == last) ? z : std::tanh(z);
        }
        p += fan_in * fan_out + fan_out;
    }
    return ws.activations.back();
}

inline std::vector<double> forward(const Network& net, std::span<const double> input) {
    Workspace ws;
    const auto out = forward(net, input, ws);
    return {out.begin(), out.end()};
}

/// Mean over output dimensions of the squared error for one point.
inline double point_loss(std::span<const double> prediction, std::span<const double> target) {
    require(prediction.size() == target.size() && !target.empty(), "prediction/target dimension mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < target.size(); ++k) {
        const double e = prediction[k] - target[k];
        s += e * e;
    }
    return s / static_cast<double>(target.size());
}

/// Mean over points of the per-point mean squared error.
inline double mse_loss(const Matrix& predictions, const Matrix& targets) {
    require(predictions.rows > 0, "mse_loss of empty input");
    require(predictions.rows == targets.rows && predictions.cols == targets.cols,
            "mse_loss: predictions and targets differ in shape");
    double s = 0.0;
    for (std::size_t i = 0; i < predictions.rows; ++i) s += point_loss(predictions.row(i), targets.row(i));
    return s / static_cast<double>(predictions.rows);
}

/// MSE of `net` over the selected points of `data`.
inline double dataset_loss(const Network& net, const Dataset& data, std::span<const std::size_t> indices) {
    require(!indices.empty(), "loss over empty point set");
    Workspace ws;
    double s = 0.0;
    for (auto i : indices) s += point_loss(forward(net, data.features.row(i), ws), data.labels.row(i));
    return s / static_cast<double>(indices.size());
}

inline double dataset_loss(const Network& net, const Dataset& data) {
    require(data.size() > 0, "loss over empty dataset");
    Workspace ws;
    double s = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i)
        s += point_loss(forward(net, data.features.row(i), ws), data.labels.row(i));
    return s / static_cast<double>(data.size());
}

/// Adds d(point loss)/d(params) for one point to `grad`, scaled by `scale`.
inline void accumulate_gradient(const Network& net, std::span<const double> input, std::span<const double> target,
                                double scale, std::span<double> grad, Workspace& ws) {
    const auto& sizes = net.architecture.layer_sizes;
    require(target.size() == sizes.back(), "target dimension mismatch");
    const auto out = forward(net, input, ws);
    const std::size_t m = out.size();
    ws.delta.resize(m);
    for (std::size_t k = 0; k < m; ++k) ws.delta[k] = scale * 2.0 * (out[k] - target[k]) / static_cast<double>(m);

    std::size_t offset = net.params.size();
    for (std::size_t l = sizes.size() - 1; l-- > 0;) {
        const std::size_t fan_in = sizes[l], fan_out = sizes[l + 1];
        offset -= fan_in * fan_out + fan_out;
        const double* w = net.params.data() + offset;
        double* gw = grad.data() + offset;
        double* gb = gw + fan_in * fan_out;
        const double* in = ws.activations[l].data();
        for (std::size_t i = 0; i < fan_out; ++i) {
            const double d = ws.delta[i];
            gb[i] += d;
            double* row = gw + i * fan_in;
            for (std::size_t j = 0; j < fan_in; ++j) row[j] += d * in[j];
        }
        if (l == 0) break;
        ws.next_delta.assign(fan_in, 0.0);
        for (std::size_t i = 0; i < fan_out; ++i) {
            const double d = ws.delta[i];
            const double* row = w + i * fan_in;
            for (std::size_t j = 0; j < fan_in; ++j) ws.next_delta[j] += row[j] * d;
        }
        for (std::size_t j = 0; j < fan_in; ++j) ws.next_delta[j] *= 1.0 - in[j] * in[j];
        std::swap(ws.delta, ws.next_delta);
    }
}

/// Gradient of the MSE over the selected points.
inline std::vector<double> loss_gradient(const Network& net, const Dataset& data,
                                         std::span<const std::size_t> indices) {
    require(!indices.empty(), "gradient over empty point set");
    std::vector<double> grad(net.params.size(), 0.0);
    Workspace ws;
    const double scale = 1.0 / static_cast<double>(indices.size());
    for (auto i : indices) accumulate_gradient(net, data.features.row(i), data.labels.row(i), scale, grad, ws);
    return grad;
}

/// One Adam update with bias correction. An all-zero gradient leaves the
/// network (parameters and optimizer state) untouched.
inline void adam_step(Network& net, std::span<const double> grad) {
    require(grad.size() == net.params.size(), "gradient shape does not match parameters");
    if (std::ranges::all_of(grad, [](double g) { return g == 0.0; })) return;
    auto& st = net.adam;
    ++st.step;
    const double t = static_cast<double>(st.step);
    const double c1 = 1.0 - std::pow(kAdamBeta1, t);
    const double c2 = 1.0 - std::pow(kAdamBeta2, t);
    for (std::size_t k = 0; k < grad.size(); ++k) {
        const double g = grad[k];
        st.first_moment[k] = kAdamBeta1 * st.first_moment[k] + (1.0 - kAdamBeta1) * g;
        st.second_moment[k] = kAdamBeta2 * st.second_moment[k] + (1.0 - kAdamBeta2) * g * g;
        const double mhat = st.first_moment[k] / c1;
        const double vhat = st.second_moment[k] / c2;
        net.params[k] -= net.learning_rate * mhat / (std::sqrt(vhat) + kAdamEpsilon);
    }
}

/// One shuffled pass over the selected points in mini-batches; no loss
/// evaluation. Empty selections are a no-op.
inline void train_pass(Network& net, const Dataset& data, std::span<const std::size_t> indices,
                       const TrainConfig& config) {
    require(config.batch_size >= 1, "batch size must be at least 1");
    if (indices.empty()) return;
    std::vector<std::size_t> order(indices.begin(), indices.end());
    net.rng.shuffle(order);
    std::vector<double> grad(net.params.size());
    Workspace ws;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t stop = std::min(order.size(), start + config.batch_size);
        std::ranges::fill(grad, 0.0);
        const double scale = 1.0 / static_cast<double>(stop - start);
        for (std::size_t k = start; k < stop; ++k)
            accumulate_gradient(net, data.features.row(order[k]), data.labels.row(order[k]), scale, grad, ws);
        adam_step(net, grad);
    }
}

/// Trains one epoch and returns the MSE over the points afterwards, or
/// nullopt for an empty selection (the network is left unchanged).
inline std::optional<double> train_epoch(Network& net, const Dataset& data, std::span<const std::size_t> indices,
                                         const TrainConfig& config) {
    if (indices.empty()) return std::nullopt;
    train_pass(net, data, indices, config);
    return dataset_loss(net, data, indices);
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const Architecture& a) { j = a.layer_sizes; }
inline void from_json(const nlohmann::json& j, Architecture& a) { a.layer_sizes = j.get<std::vector<std::size_t>>(); }

inline void to_json(nlohmann::json& j, const Network& net) {
    j = nlohmann::json{{"architecture", net.architecture},
                       {"learning_rate", net.learning_rate},
                       {"seed", net.seed},
                       {"params", net.params},
                       {"adam",
                        {{"step", net.adam.step},
                         {"first_moment", net.adam.first_moment},
                         {"second_moment", net.adam.second_moment}}},
                       {"rng_state", net.rng.state()}};
}

inline void from_json(const nlohmann::json& j, Network& net) {
    net.architecture = j.at("architecture").get<Architecture>();
    net.architecture.validate();
    net.learning_rate = j.at("learning_rate").get<double>();
    net.seed = j.at("seed").get<std::uint64_t>();
    net.params = j.at("params").get<std::vector<double>>();
    require(net.params.size() == param_count(net.architecture), "serialized parameter count mismatch");
    if (j.contains("adam")) {
        const auto& a = j.at("adam");
        net.adam.step = a.at("step").get<std::uint64_t>();
        net.adam.first_moment = a.at("first_moment").get<std::vector<double>>();
        net.adam.second_moment = a.at("second_moment").get<std::vector<double>>();
        require(net.adam.first_moment.size() == net.params.size() &&
                    net.adam.second_moment.size() == net.params.size(),
                "serialized optimizer state shape mismatch");
    } else {
        net.adam = AdamState{std::vector<double>(net.params.size()), std::vector<double>(net.params.size()), 0};
    }
    net.rng = Rng(net.seed);
    if (j.contains("rng_state")) net.rng.set_state(j.at("rng_state").get<std::string>());
}

}  // namespace actpart
