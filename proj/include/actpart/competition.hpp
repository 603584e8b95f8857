#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "actpart/core.hpp"
#include "actpart/data.hpp"
#include "actpart/hyper_search.hpp"
#include "actpart/nn.hpp"

namespace actpart {

struct PoolMember {
    ModelId id = 0;
    Network network;
    HyperSample hyperparams;
};

/// Competing models ordered by id. Ids increase strictly and are never reused.
struct ModelPool {
    std::vector<PoolMember> models;
    ModelId next_id = 0;

    std::size_t size() const { return models.size(); }

    ModelId add(Network net, HyperSample hyper) {
        const ModelId id = next_id++;
        models.push_back({id, std::move(net), std::move(hyper)});
        return id;
    }

    const PoolMember* find(ModelId id) const {
        const auto it = std::ranges::find(models, id, &PoolMember::id);
        return it == models.end() ? nullptr : &*it;
    }

    void remove(ModelId id) {
        require(models.size() > 1, "cannot remove the last model of a pool");
        const auto it = std::ranges::find(models, id, &PoolMember::id);
        require(it != models.end(), "unknown model id " + std::to_string(id));
        models.erase(it);
    }
};

/// Scoreboard of one ranking: per-point, per-model losses (columns follow
/// `model_ids`) and the per-point winner.
struct Assignment {
    std::vector<ModelId> model_ids;
    Matrix losses;
    std::vector<ModelId> winner;
    std::vector<std::size_t> winner_column;

    std::size_t points() const { return winner.size(); }

    double best_loss(std::size_t point) const { return losses(point, winner_column[point]); }

    std::vector<double> best_losses() const {
        std::vector<double> out(points());
        for (std::size_t i = 0; i < points(); ++i) out[i] = best_loss(i);
        return out;
    }

    std::size_t column_of(ModelId id) const {
        const auto it = std::ranges::find(model_ids, id);
        require(it != model_ids.end(), "model id " + std::to_string(id) + " not in assignment");
        return static_cast<std::size_t>(it - model_ids.begin());
    }

    std::vector<std::size_t> won_points(ModelId id) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < points(); ++i)
            if (winner[i] == id) out.push_back(i);
        return out;
    }
};

/// Every model predicts every point; the smallest per-point loss wins, ties
/// going to the lowest model id.
inline Assignment rank_predictions(const ModelPool& pool, const Dataset& data) {
    require(pool.size() > 0, "rank_predictions: empty pool");
    require(data.size() > 0, "rank_predictions: empty dataset");
    Assignment a;
    a.losses = Matrix(data.size(), pool.size());
    Workspace ws;
    for (std::size_t c = 0; c < pool.size(); ++c) {
        const auto& m = pool.models[c];
        require(m.network.input_dim() == data.feature_dim() && m.network.output_dim() == data.label_dim(),
                "rank_predictions: model " + std::to_string(m.id) + " does not match dataset dimensions");
        a.model_ids.push_back(m.id);
        for (std::size_t i = 0; i < data.size(); ++i)
            a.losses(i, c) = point_loss(forward(m.network, data.features.row(i), ws), data.labels.row(i));
    }
    a.winner.resize(data.size());
    a.winner_column.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < pool.size(); ++c) {
            const double l = a.losses(i, c), b = a.losses(i, best);
            if (l < b || (l == b && a.model_ids[c] < a.model_ids[best])) best = c;
        }
        a.winner_column[i] = best;
        a.winner[i] = a.model_ids[best];
    }
    return a;
}

/// Ranks, then trains every model for one epoch on exactly the points it
/// won. Returns the ranking the awards were based on.
inline Assignment competition_epoch(ModelPool& pool, const Dataset& data, const TrainConfig& train) {
    Assignment a = rank_predictions(pool, data);
    for (auto& m : pool.models) train_pass(m.network, data, a.won_points(m.id), train);
    return a;
}

}  // namespace actpart
