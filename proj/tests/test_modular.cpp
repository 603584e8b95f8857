#include <gtest/gtest.h>

#include <algorithm>

#include "actpart/modular.hpp"

using namespace actpart;

namespace {

/// Two linear regimes split at x = 0, scaled to [-1, 1] already.
Dataset two_lines(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset d;
    d.features = Matrix(n, 1);
    d.labels = Matrix(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = rng.uniform(-1, 1);
        d.features(i, 0) = x;
        d.labels(i, 0) = x < 0 ? 0.8 * x + 0.5 : -0.6 * x + 0.2;
    }
    return d;
}

std::map<ModelId, std::vector<std::size_t>> split_at_zero(const Dataset& d) {
    std::map<ModelId, std::vector<std::size_t>> parts;
    for (std::size_t i = 0; i < d.size(); ++i) parts[d.features(i, 0) < 0 ? 3 : 7].push_back(i);
    return parts;
}

BoundaryClassifier gate_for(const Dataset& d, const std::map<ModelId, std::vector<std::size_t>>& parts) {
    std::vector<ModelId> labels(d.size());
    for (const auto& [id, pts] : parts)
        for (auto i : pts) labels[i] = id;
    return fit_boundary(d.features, labels);
}

ModularConfig quick(std::size_t runs, std::size_t epochs) {
    ModularConfig c;
    c.search_runs = runs;
    c.train.epochs = epochs;
    c.seed = 5;
    return c;
}

}  // namespace

TEST(HoldoutSplit, DisjointCoveringAndSmallFallback) {
    const auto idx = all_indices(50);
    const auto h = holdout_split(idx, 0.2, 3);
    EXPECT_EQ(h.validation.size(), 10u);
    EXPECT_EQ(h.train.size(), 40u);
    auto all = h.train;
    all.insert(all.end(), h.validation.begin(), h.validation.end());
    std::ranges::sort(all);
    EXPECT_EQ(all, idx);
    const std::vector<std::size_t> tiny{4, 9, 2};
    const auto t = holdout_split(tiny, 0.2, 3);
    EXPECT_EQ(t.train, tiny);
    EXPECT_EQ(t.validation, tiny);
}

TEST(TrainModular, SinglePartitionIsOneExpert) {
    const auto d = two_lines(60, 1);
    std::map<ModelId, std::vector<std::size_t>> parts{{4, all_indices(d.size())}};
    const auto model = train_modular(parts, gate_for(d, parts), d, quick(2, 20));
    ASSERT_EQ(model.experts.size(), 1u);
    const auto& expert = model.experts.at(4).network;
    Rng rng(2);
    for (int k = 0; k < 50; ++k) {
        const std::vector<double> x{rng.uniform(-2, 2)};
        EXPECT_EQ(predict_modular(model, x), forward(expert, x));
    }
}

TEST(TrainModular, CleanRegimesGetNearZeroLossExperts) {
    const auto d = two_lines(400, 2);
    const auto parts = split_at_zero(d);
    const auto model = train_modular(parts, gate_for(d, parts), d, quick(3, 500));
    for (const auto& [id, pts] : parts) EXPECT_LT(dataset_loss(model.experts.at(id).network, d, pts), 1e-3) << id;
}

TEST(TrainModular, TotalParamsAndTrainingPointsStayInPartition) {
    const auto d = two_lines(120, 3);
    const auto parts = split_at_zero(d);
    auto cfg = quick(2, 10);
    cfg.bounds = HyperBounds{2, 2, 4, 4, 0.001, 0.001, 2};
    const auto model = train_modular(parts, gate_for(d, parts), d, cfg);
    EXPECT_EQ(model.total_params, 2 * param_count({{1, 4, 1}}));
    std::size_t sum = 0;
    for (const auto& [id, e] : model.experts) {
        sum += param_count(e.network.architecture);
        const auto& own = parts.at(id);
        for (auto i : e.train_points) EXPECT_NE(std::ranges::find(own, i), own.end());
    }
    EXPECT_EQ(sum, model.total_params);
    EXPECT_EQ(single_model_budget(model), model.total_params);
}

TEST(PredictModular, ComposesGateAndExperts) {
    const auto d = two_lines(100, 4);
    const auto parts = split_at_zero(d);
    const auto model = train_modular(parts, gate_for(d, parts), d, quick(1, 5));
    Rng rng(6);
    for (int k = 0; k < 100; ++k) {
        const std::vector<double> x{rng.uniform(-1, 1)};
        const ModelId id = classify(model.gate, x);
        EXPECT_EQ(predict_modular(model, x), forward(model.experts.at(id).network, x));
    }
    // deep inside each partition the gate picks that partition's expert
    EXPECT_EQ(predict_modular(model, std::vector<double>{-0.9}), forward(model.experts.at(3).network, std::vector<double>{-0.9}));
    EXPECT_EQ(predict_modular(model, std::vector<double>{0.9}), forward(model.experts.at(7).network, std::vector<double>{0.9}));
}

TEST(PredictModular, GateWithoutExpertIsRejected) {
    const auto d = two_lines(40, 5);
    std::map<ModelId, std::vector<std::size_t>> parts{{1, all_indices(d.size())}};
    auto model = train_modular(parts, gate_for(d, parts), d, quick(1, 2));
    model.gate.classes = {2};
    EXPECT_THROW(predict_modular(model, std::vector<double>{0.0}), Error);
}

TEST(TrainModular, GateClassWithoutPartitionIsRejected) {
    const auto d = two_lines(40, 5);
    const auto parts = split_at_zero(d);
    std::map<ModelId, std::vector<std::size_t>> only_one{{3, parts.at(3)}};
    EXPECT_THROW(train_modular(only_one, gate_for(d, parts), d, quick(1, 2)), Error);
}

TEST(EvaluateLoss, Identities) {
    const auto d = two_lines(50, 7);
    std::map<ModelId, std::vector<std::size_t>> parts{{1, all_indices(d.size())}};
    auto model = train_modular(parts, gate_for(d, parts), d, quick(1, 2));

    // perfect predictor: labels replaced by the model's own outputs
    Dataset perfect = d;
    for (std::size_t i = 0; i < d.size(); ++i) perfect.labels(i, 0) = predict_modular(model, d.features.row(i))[0];
    EXPECT_EQ(evaluate_loss(model, perfect), 0.0);

    Network zero = init_network({{1, 3, 1}}, 0.001, 1);
    std::ranges::fill(zero.params, 0.0);
    Dataset zeros = d;
    std::ranges::fill(zeros.labels.values, 0.0);
    EXPECT_EQ(evaluate_loss(zero, zeros), 0.0);

    Dataset centred = d;
    Rng rng(8);
    for (auto& v : centred.labels.values) v = rng.normal();
    const double m = mean(centred.labels.values);
    for (auto& v : centred.labels.values) v -= m;
    EXPECT_NEAR(evaluate_loss(zero, centred), population_variance(centred.labels.values), 1e-12);

    EXPECT_THROW(evaluate_loss(zero, Dataset{}), Error);
    EXPECT_THROW(evaluate_loss(model, Dataset{}), Error);
}

TEST(ModularJson, RoundTripPredictsIdentically) {
    const auto d = two_lines(80, 9);
    const auto parts = split_at_zero(d);
    const auto model = train_modular(parts, gate_for(d, parts), d, quick(1, 5));
    const auto back = modular_from_json(nlohmann::json::parse(to_json(model).dump()));
    EXPECT_EQ(back.total_params, model.total_params);
    Rng rng(1);
    for (int k = 0; k < 200; ++k) {
        const std::vector<double> x{rng.uniform(-1.2, 1.2)};
        EXPECT_EQ(predict_modular(back, x), predict_modular(model, x));
    }
}
