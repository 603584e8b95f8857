#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "actpart/boundary.hpp"
#include "actpart/core.hpp"
#include "actpart/data.hpp"
#include "actpart/hyper_search.hpp"
#include "actpart/nn.hpp"
#include "actpart/partition.hpp"
#include "json.hpp"

namespace actpart {

struct HoldoutSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

/// Seeded shuffle of `indices`; the last `fraction` (at least one point)
/// becomes validation. Fewer than 5 points are used for both roles.
inline HoldoutSplit holdout_split(std::span<const std::size_t> indices, double fraction, std::uint64_t seed) {
    require(!indices.empty(), "holdout_split: no points");
    require(fraction > 0.0 && fraction < 1.0, "validation fraction must lie in (0, 1)");
    HoldoutSplit out;
    std::vector<std::size_t> order(indices.begin(), indices.end());
    if (order.size() < 5) {
        out.train = order;
        out.validation = std::move(order);
        return out;
    }
    Rng rng(seed);
    rng.shuffle(order);
    const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(fraction * static_cast<double>(order.size()))));
    const auto cut = static_cast<std::ptrdiff_t>(order.size() - n_val);
    out.train.assign(order.begin(), order.begin() + cut);
    out.validation.assign(order.begin() + cut, order.end());
    return out;
}

struct ExpertSpec {
    ModelId partition_id = 0;
    HyperSample hyperparams;
    Network network;
    /// Dataset rows the expert was trained on.
    std::vector<std::size_t> train_points;
    double validation_loss = 0.0;
};

struct ModularModel {
    std::map<ModelId, ExpertSpec> experts;
    BoundaryClassifier gate;
    std::size_t total_params = 0;
};

struct ModularConfig {
    HyperBounds bounds;
    std::size_t search_runs = 100;
    TrainConfig train{16, 500};
    double validation_fraction = 0.2;
    std::uint64_t seed = 0;
};

/// Best network of a random search over one partition, trained from scratch
/// on that partition's points only.
inline ExpertSpec train_expert(ModelId partition_id, std::span<const std::size_t> points, const Dataset& data,
                               const ModularConfig& config, std::uint64_t seed) {
    const auto holdout = holdout_split(points, config.validation_fraction, seed);
    SearchConfig search;
    search.bounds = config.bounds;
    search.runs = config.search_runs;
    search.train = config.train;
    search.seed = seed;
    auto found = random_search(data.subset(holdout.train), data.subset(holdout.validation), search);
    return ExpertSpec{partition_id, std::move(found.best_sample), std::move(found.best_network), holdout.train,
                      found.best_validation_loss};
}

/// One expert per partition of `partitions`, gated by `gate`.
inline ModularModel train_modular(const std::map<ModelId, std::vector<std::size_t>>& partitions,
                                  const BoundaryClassifier& gate, const Dataset& data, const ModularConfig& config) {
    require(!partitions.empty(), "train_modular: no partitions");
    ModularModel model;
    model.gate = gate;
    Rng rng(config.seed);
    for (const auto& [id, points] : partitions) {
        require(!points.empty(), "train_modular: partition " + std::to_string(id) + " is empty");
        for (auto i : points) require(i < data.size(), "train_modular: partition index outside dataset");
        auto expert = train_expert(id, points, data, config, rng.next());
        model.total_params += expert.network.params.size();
        model.experts.emplace(id, std::move(expert));
    }
    for (auto id : gate.classes)
        require(model.experts.contains(id), "train_modular: gate class " + std::to_string(id) + " has no partition");
    return model;
}

inline ModularModel train_modular(const PartitionResult& result, const Dataset& data, const ModularConfig& config) {
    return train_modular(result.partitions, result.boundary, data, config);
}

/// Hard routing: the gate picks one expert, whose output is returned as is.
inline std::vector<double> predict_modular(const ModularModel& model, std::span<const double> feature) {
    const ModelId id = classify(model.gate, feature);
    const auto it = model.experts.find(id);
    require(it != model.experts.end(), "predict_modular: gate selected partition " + std::to_string(id) +
                                           " which has no expert");
    return forward(it->second.network, feature);
}

inline double evaluate_loss(const ModularModel& model, const Dataset& test) {
    require(test.size() > 0, "evaluate_loss: empty test set");
    double s = 0.0;
    for (std::size_t i = 0; i < test.size(); ++i)
        s += point_loss(predict_modular(model, test.features.row(i)), test.labels.row(i));
    return s / static_cast<double>(test.size());
}

inline double evaluate_loss(const Network& net, const Dataset& test) {
    require(test.size() > 0, "evaluate_loss: empty test set");
    return dataset_loss(net, test);
}

inline nlohmann::json to_json(const ModularModel& model) {
    nlohmann::json experts = nlohmann::json::array();
    for (const auto& [id, e] : model.experts)
        experts.push_back({{"partition_id", id},
                           {"hyperparams", e.hyperparams},
                           {"validation_loss", e.validation_loss},
                           {"train_points", e.train_points.size()},
                           {"network", e.network}});
    return nlohmann::json{{"gate", model.gate}, {"total_params", model.total_params}, {"experts", experts}};
}

inline ModularModel modular_from_json(const nlohmann::json& j) {
    ModularModel model;
    model.gate = j.at("gate").get<BoundaryClassifier>();
    for (const auto& je : j.at("experts")) {
        ExpertSpec e;
        e.partition_id = je.at("partition_id").get<ModelId>();
        e.hyperparams = je.at("hyperparams").get<HyperSample>();
        e.validation_loss = je.at("validation_loss").get<double>();
        e.network = je.at("network").get<Network>();
        model.total_params += e.network.params.size();
        model.experts.emplace(e.partition_id, std::move(e));
    }
    require(model.total_params == j.at("total_params").get<std::size_t>(), "serialized total_params mismatch");
    return model;
}

}  // namespace actpart
