#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "actpart/competition.hpp"
#include "actpart/core.hpp"
#include "actpart/hyper_search.hpp"
#include "actpart/nn.hpp"

namespace actpart {

struct LossBound {
    double bound = 0.0;
    std::vector<std::size_t> candidates;
};

/// bound = mean + population standard deviation; candidates are the points
/// strictly above it.
inline LossBound compute_loss_bound(std::span<const double> best_losses) {
    require(!best_losses.empty(), "compute_loss_bound: no losses");
    LossBound out;
    out.bound = mean(best_losses) + std::sqrt(population_variance(best_losses));
    for (std::size_t i = 0; i < best_losses.size(); ++i)
        if (best_losses[i] > out.bound) out.candidates.push_back(i);
    return out;
}

struct AddSettings {
    HyperBounds bounds;
    TrainConfig train;
    std::size_t candidate_epochs = 100;
};

struct AddProposal {
    double loss_bound = 0.0;
    std::vector<std::size_t> candidate_points;
    double old_loss = 0.0;
    double new_loss = std::numeric_limits<double>::infinity();
    bool accepted = false;
    std::optional<ModelId> model_id;
};

/// Trains a fresh network on the poorly predicted points of `assignment` and
/// adds it to the pool when it beats the pool's mean loss on those points.
inline AddProposal propose_model(ModelPool& pool, const Assignment& assignment, const Dataset& data,
                                 const AddSettings& settings, Rng& rng) {
    require(assignment.points() == data.size(), "propose_model: assignment does not match dataset");
    const auto best = assignment.best_losses();
    auto bound = compute_loss_bound(best);
    AddProposal p;
    p.loss_bound = bound.bound;
    p.candidate_points = std::move(bound.candidates);
    if (p.candidate_points.empty()) return p;

    double old_sum = 0.0;
    for (auto i : p.candidate_points) old_sum += best[i];
    p.old_loss = old_sum / static_cast<double>(p.candidate_points.size());

    HyperSample hyper = sample_hyperparams(settings.bounds, rng);
    const std::uint64_t seed = rng.next();
    Network candidate = init_network(hyper.architecture(data.feature_dim(), data.label_dim()), hyper.learning_rate, seed);
    for (std::size_t e = 0; e < settings.candidate_epochs; ++e)
        train_pass(candidate, data, p.candidate_points, settings.train);
    p.new_loss = dataset_loss(candidate, data, p.candidate_points);
    p.accepted = p.new_loss < p.old_loss;
    if (p.accepted) p.model_id = pool.add(std::move(candidate), std::move(hyper));
    return p;
}

/// Ratio of the summed best-prediction loss without `id` (its points fall to
/// their runner-up) to the summed loss with every model. +inf for a sole
/// model.
inline double replacability(const Assignment& assignment, ModelId id) {
    const std::size_t col = assignment.column_of(id);
    if (assignment.model_ids.size() < 2) return std::numeric_limits<double>::infinity();
    double with_all = 0.0, without = 0.0;
    for (std::size_t i = 0; i < assignment.points(); ++i) {
        const double best = assignment.best_loss(i);
        with_all += best;
        if (assignment.winner_column[i] != col) {
            without += best;
            continue;
        }
        double second = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < assignment.model_ids.size(); ++c)
            if (c != col) second = std::min(second, assignment.losses(i, c));
        without += second;
    }
    if (with_all == 0.0) return without == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    return without / with_all;
}

struct ReplacabilityReport {
    std::map<ModelId, double> replacability;
    double loss_with_all = 0.0;
};

inline ReplacabilityReport replacability_report(const Assignment& assignment) {
    ReplacabilityReport r;
    for (std::size_t i = 0; i < assignment.points(); ++i) r.loss_with_all += assignment.best_loss(i);
    for (auto id : assignment.model_ids) r.replacability[id] = replacability(assignment, id);
    return r;
}

struct DropEvent {
    ModelId model_id = 0;
    double replacability = 0.0;
};

/// Removes the single most redundant model (lowest replacability below
/// `threshold`; ties drop the higher id). Never empties the pool. Models not
/// present in `assignment` are not considered.
inline std::optional<DropEvent> drop_redundant(ModelPool& pool, const Assignment& assignment, double threshold) {
    require(threshold > 1.0, "dropping threshold must exceed 1");
    if (pool.size() < 2) return std::nullopt;
    const auto report = replacability_report(assignment);
    std::optional<DropEvent> worst;
    for (const auto& [id, r] : report.replacability) {
        if (!pool.find(id) || !(r < threshold)) continue;
        if (!worst || r <= worst->replacability) worst = DropEvent{id, r};
    }
    if (worst) pool.remove(worst->model_id);
    return worst;
}

}  // namespace actpart
