#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "actpart/boundary.hpp"
#include "actpart/competition.hpp"
#include "actpart/core.hpp"
#include "actpart/hyper_search.hpp"
#include "actpart/lifecycle.hpp"
#include "json.hpp"

namespace actpart {

struct PartitionConfig {
    std::size_t epochs = 1000;
    std::size_t initial_models = 10;
    /// Epochs between adding checks; 0 disables adding.
    std::size_t adding_check_period = 1;
    /// Epochs between dropping checks; 0 disables dropping.
    std::size_t dropping_check_period = 1;
    double dropping_threshold = 1.8;
    std::size_t candidate_epochs = 100;
    std::uint64_t master_seed = 0;
    TrainConfig train;
    HyperBounds bounds;
    SvmParams svm;

    void validate() const {
        require(epochs >= 1, "partitioning needs at least one epoch");
        require(initial_models >= 1, "partitioning needs at least one initial model");
        require(dropping_threshold > 1.0, "dropping threshold must exceed 1");
        require(train.batch_size >= 1, "batch size must be at least 1");
        bounds.validate();
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    std::size_t pool_size = 0;
    /// Mean best-prediction loss of the ranking that assigned the awards.
    double mean_loss = 0.0;
};

struct LifecycleEvent {
    std::size_t epoch = 0;
    enum class Kind { Add, Drop } kind = Kind::Add;
    ModelId model_id = 0;
    double old_loss = 0.0;
    double new_loss = 0.0;
    double replacability = 0.0;
};

struct PartitionResult {
    Assignment final_assignment;
    std::map<ModelId, std::vector<std::size_t>> partitions;
    BoundaryClassifier boundary;
    ModelPool pool;
    std::vector<EpochRecord> history;
    std::vector<LifecycleEvent> events;
    std::vector<std::string> warnings;

    std::size_t partition_count() const { return partitions.size(); }
};

/// Called after each epoch's training with the award ranking and the pool.
using EpochObserver = std::function<void(std::size_t epoch, const Assignment& awards, const ModelPool& pool)>;

/// Competition among a heterogeneous pool with periodic adding and dropping.
/// Partitions are the points each surviving model wins after the final
/// epoch; a boundary classifier is fitted on them.
inline PartitionResult run_partitioning(const Dataset& data, const PartitionConfig& config,
                                        const EpochObserver& observer = {}) {
    config.validate();
    require(data.size() > 0, "run_partitioning: empty dataset");
    PartitionResult result;
    Rng rng(config.master_seed);

    std::size_t initial = config.initial_models;
    if (initial > data.size()) {
        initial = data.size();
        result.warnings.push_back("dataset has fewer points than initial models; starting with " +
                                  std::to_string(initial) + " models");
    }
    for (std::size_t k = 0; k < initial; ++k) {
        HyperSample hyper = sample_hyperparams(config.bounds, rng);
        const std::uint64_t seed = rng.next();
        Network net = init_network(hyper.architecture(data.feature_dim(), data.label_dim()), hyper.learning_rate, seed);
        result.pool.add(std::move(net), std::move(hyper));
    }

    const AddSettings add_settings{config.bounds, config.train, config.candidate_epochs};
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const Assignment awards = competition_epoch(result.pool, data, config.train);
        const auto best = awards.best_losses();
        result.history.push_back({epoch, result.pool.size(), mean(best)});
        if (observer) observer(epoch, awards, result.pool);

        const bool adding = config.adding_check_period > 0 && epoch % config.adding_check_period == 0;
        const bool dropping = config.dropping_check_period > 0 && epoch % config.dropping_check_period == 0;
        if (!adding && !dropping) continue;

        // A model added here is absent from `current`, so it is exempt from
        // the dropping check of the same epoch.
        const Assignment current = rank_predictions(result.pool, data);
        if (adding) {
            const auto proposal = propose_model(result.pool, current, data, add_settings, rng);
            if (proposal.accepted) {
                LifecycleEvent ev{epoch, LifecycleEvent::Kind::Add, *proposal.model_id};
                ev.old_loss = proposal.old_loss;
                ev.new_loss = proposal.new_loss;
                result.events.push_back(ev);
            }
        }
        if (dropping) {
            if (const auto dropped = drop_redundant(result.pool, current, config.dropping_threshold)) {
                LifecycleEvent ev{epoch, LifecycleEvent::Kind::Drop, dropped->model_id};
                ev.replacability = dropped->replacability;
                result.events.push_back(ev);
            }
        }
    }

    result.final_assignment = rank_predictions(result.pool, data);
    for (std::size_t i = 0; i < data.size(); ++i) result.partitions[result.final_assignment.winner[i]].push_back(i);
    SvmParams svm = config.svm;
    svm.selection_seed = config.master_seed;
    result.boundary = fit_boundary(data.features, result.final_assignment.winner, svm);
    return result;
}

// ---------------------------------------------------------------------------
// JSON

inline const char* to_string(LifecycleEvent::Kind k) { return k == LifecycleEvent::Kind::Add ? "add" : "drop"; }

inline nlohmann::json to_json(const PartitionResult& r) {
    nlohmann::json history = nlohmann::json::array();
    for (const auto& h : r.history)
        history.push_back({{"epoch", h.epoch}, {"pool_size", h.pool_size}, {"mean_loss", h.mean_loss}});
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : r.events) {
        nlohmann::json j{{"epoch", e.epoch}, {"kind", to_string(e.kind)}, {"model_id", e.model_id}};
        if (e.kind == LifecycleEvent::Kind::Add) {
            j["old_loss"] = e.old_loss;
            j["new_loss"] = e.new_loss;
        } else {
            j["replacability"] = e.replacability;
        }
        events.push_back(std::move(j));
    }
    nlohmann::json models = nlohmann::json::array();
    for (const auto& m : r.pool.models)
        models.push_back({{"model_id", m.id}, {"hyperparams", m.hyperparams}, {"network", m.network}});
    nlohmann::json sizes = nlohmann::json::object();
    for (const auto& [id, pts] : r.partitions) sizes[std::to_string(id)] = pts.size();
    return nlohmann::json{{"partition_ids", r.final_assignment.winner},
                          {"partition_sizes", sizes},
                          {"history", history},
                          {"events", events},
                          {"models", models},
                          {"boundary", r.boundary},
                          {"warnings", r.warnings}};
}

}  // namespace actpart
