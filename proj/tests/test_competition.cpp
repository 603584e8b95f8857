#include <gtest/gtest.h>

#include <limits>

#include "actpart/competition.hpp"

using namespace actpart;

namespace {

Dataset random_points(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset d;
    d.features = Matrix(n, 1);
    d.labels = Matrix(n, 1);
    for (auto& v : d.features.values) v = rng.uniform(-1, 1);
    for (auto& v : d.labels.values) v = rng.uniform(-1, 1);
    return d;
}

ModelPool random_pool(std::size_t k, std::uint64_t seed) {
    ModelPool pool;
    Rng rng(seed);
    for (std::size_t m = 0; m < k; ++m) {
        HyperSample s = sample_hyperparams({}, rng);
        pool.add(init_network(s.architecture(1, 1), s.learning_rate, rng.next()), s);
    }
    return pool;
}

/// Network whose output is the constant `c` for every input.
Network constant_net(double c) {
    auto net = init_network({{1, 1, 1}}, 0.001, 0);
    net.params = {0.0, 0.0, 0.0, c};
    return net;
}

}  // namespace

TEST(RankPredictions, SingleModelWinsEverything) {
    const auto data = random_points(20, 1);
    const auto pool = random_pool(1, 2);
    const auto a = rank_predictions(pool, data);
    for (auto w : a.winner) EXPECT_EQ(w, pool.models[0].id);
}

TEST(RankPredictions, SmallerErrorWins) {
    Dataset data;
    data.features = Matrix(1, 1, 0.0);
    data.labels = Matrix(1, 1, 1.0);
    ModelPool pool;
    pool.add(constant_net(0.5), {});
    const auto b = pool.add(constant_net(0.9), {});
    EXPECT_EQ(rank_predictions(pool, data).winner[0], b);
}

TEST(RankPredictions, TiesGoToLowestId) {
    Dataset data;
    data.features = Matrix(3, 1, 0.0);
    data.labels = Matrix(3, 1, 1.0);
    ModelPool pool;
    const auto first = pool.add(constant_net(0.5), {});
    pool.add(constant_net(0.5), {});
    pool.add(constant_net(1.5), {});
    for (auto w : rank_predictions(pool, data).winner) EXPECT_EQ(w, first);
}

TEST(RankPredictions, MatchesExhaustiveRecomputation) {
    for (std::uint64_t trial = 0; trial < 5; ++trial) {
        const auto data = random_points(50, 100 + trial);
        const auto pool = random_pool(3, 200 + trial);
        const auto a = rank_predictions(pool, data);
        for (std::size_t i = 0; i < data.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            ModelId best_id = 0;
            for (const auto& m : pool.models) {
                const double y = forward(m.network, data.features.row(i))[0];
                const double e = (y - data.labels(i, 0)) * (y - data.labels(i, 0));
                EXPECT_EQ(a.losses(i, a.column_of(m.id)), e);
                if (e < best) { best = e; best_id = m.id; }
            }
            EXPECT_EQ(a.winner[i], best_id);
            for (std::size_t c = 0; c < pool.size(); ++c) EXPECT_LE(a.best_loss(i), a.losses(i, c));
        }
    }
}

TEST(RankPredictions, RejectsDimensionMismatch) {
    auto data = random_points(5, 1);
    ModelPool pool;
    pool.add(init_network({{2, 3, 1}}, 0.001, 1), {});
    EXPECT_THROW(rank_predictions(pool, data), Error);
    EXPECT_THROW(rank_predictions(ModelPool{}, data), Error);
}

TEST(CompetitionEpoch, SingleModelEqualsPlainEpoch) {
    const auto data = random_points(40, 3);
    auto pool = random_pool(1, 4);
    Network reference = pool.models[0].network;
    competition_epoch(pool, data, {});
    train_pass(reference, data, all_indices(data.size()), {});
    EXPECT_EQ(pool.models[0].network, reference);
}

TEST(CompetitionEpoch, ZeroWinModelUnchangedAndAwardsArePreTraining) {
    Dataset data = random_points(30, 5);
    for (auto& v : data.labels.values) v = 0.0;
    ModelPool pool;
    pool.add(init_network({{1, 3, 1}}, 0.001, 1), {});
    pool.models[0].network.params.assign(pool.models[0].network.params.size(), 0.0);
    const auto loser = pool.add(constant_net(5.0), {});
    const auto before_pool = pool;
    const auto expected = rank_predictions(before_pool, data);
    const auto a = competition_epoch(pool, data, {});
    EXPECT_EQ(a.winner, expected.winner);
    EXPECT_EQ(a.losses, expected.losses);
    EXPECT_EQ(pool.find(loser)->network, before_pool.find(loser)->network);
}

TEST(CompetitionEpoch, HardPartitionEveryEpoch) {
    const auto data = random_points(60, 6);
    auto pool = random_pool(4, 7);
    for (int e = 0; e < 5; ++e) {
        const auto a = competition_epoch(pool, data, {});
        std::size_t total = 0;
        for (const auto& m : pool.models) total += a.won_points(m.id).size();
        EXPECT_EQ(total, data.size());
    }
}

TEST(CompetitionEpoch, DeterministicAcrossExecutions) {
    const auto data = random_points(60, 8);
    auto p1 = random_pool(3, 9), p2 = random_pool(3, 9);
    for (int e = 0; e < 3; ++e) {
        const auto a1 = competition_epoch(p1, data, {});
        const auto a2 = competition_epoch(p2, data, {});
        EXPECT_EQ(a1.winner, a2.winner);
    }
    for (std::size_t k = 0; k < p1.size(); ++k)
        EXPECT_EQ(nlohmann::json(p1.models[k].network).dump(), nlohmann::json(p2.models[k].network).dump());
}

TEST(ModelPool, IdsIncreaseAndLastModelIsKept) {
    ModelPool pool;
    const auto a = pool.add(constant_net(0), {});
    const auto b = pool.add(constant_net(1), {});
    pool.remove(a);
    const auto c = pool.add(constant_net(2), {});
    EXPECT_LT(a, b);
    EXPECT_LT(b, c);
    pool.remove(b);
    EXPECT_THROW(pool.remove(c), Error);
    EXPECT_EQ(pool.size(), 1u);
}
