#include "support.hpp"

#include "nnrepair/evaluator.hpp"
#include "nnrepair/model_io.hpp"
#include "nnrepair/trainer.hpp"

#include <doctest.h>

#include <cmath>

using namespace nnrepair;

namespace {

SyntheticData separable() {
    SyntheticSpec s;
    s.classCount = 4;
    s.featureDim = 8;
    s.perClassCount = 100;
    s.clusterSpread = 0.05;
    s.overlapFactor = 0.0;
    s.seed = 3;
    return generateSynthetic(s);
}

} // namespace

TEST_CASE("synthetic data is deterministic and sized") {
    SyntheticSpec s;
    s.seed = 11;
    const auto a = generateSynthetic(s);
    const auto b = generateSynthetic(s);
    CHECK(a.train.size() == 5000);
    CHECK(a.test.size() == 1000);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    std::vector<std::size_t> perClass(10, 0);
    for (const auto& x : a.train) ++perClass[static_cast<std::size_t>(x.label)];
    for (auto c : perClass) CHECK(c == 500);
    s.seed = 12;
    CHECK(generateSynthetic(s).train != a.train);
}

TEST_CASE("glorot initialisation") {
    const std::vector<std::size_t> dims{6, 10, 3};
    const auto m = initModel(dims, 4);
    CHECK((m.layer(0).activation == Activation::relu));
    CHECK((m.layer(1).activation == Activation::softmax));
    const double limit0 = std::sqrt(6.0 / 16.0);
    for (auto w : m.layer(0).kernel.values()) CHECK(std::abs(w) <= limit0);
    for (auto b : m.layer(1).bias.values()) CHECK(b == 0.0f);
    CHECK(initModel(dims, 4) == m);
}

TEST_CASE("separable data trains to high accuracy") {
    const auto data = separable();
    const std::vector<std::size_t> dims{8, 16, 4};
    const auto initial = initModel(dims, 1);
    TrainConfig cfg;
    cfg.mode = TrainMode::fullTrain;
    cfg.maxEpochs = 30;
    cfg.seed = 2;
    auto [tr, val] = splitValidation(data.train, 0.2, 5);
    CHECK(val.size() == 80);
    const auto result = train(initial, tr, val, cfg);
    CHECK(accuracy(result.model, data.train) >= 0.99);
    CHECK(accuracy(result.model, data.train) > accuracy(initial, data.train));
}

TEST_CASE("under-training respects the cap") {
    SyntheticSpec s;
    s.classCount = 4;
    s.featureDim = 6;
    s.perClassCount = 150;
    s.overlapFactor = 0.3;
    s.seed = 8;
    const auto data = generateSynthetic(s);
    const std::vector<std::size_t> dims{6, 16, 4};
    for (double cap : {0.5, 0.7, 0.9}) {
        TrainConfig cfg;
        cfg.mode = TrainMode::underTrain;
        cfg.accuracyCap = cap;
        cfg.learningRate = 0.002;
        cfg.maxEpochs = 50;
        cfg.seed = 1;
        const auto r = train(initModel(dims, 2), data.train, {}, cfg);
        CHECK(accuracy(r.model, data.train) <= cap);
        if (!r.log.empty()) CHECK(r.log.back().trainAcc <= cap);
    }
}

TEST_CASE("full training stops at max epochs when validation never drops") {
    const auto data = separable();
    const std::vector<std::size_t> dims{8, 16, 4};
    TrainConfig cfg;
    cfg.mode = TrainMode::fullTrain;
    cfg.maxEpochs = 3;
    auto [tr, val] = splitValidation(data.train, 0.2, 5);
    const auto r = train(initModel(dims, 1), tr, val, cfg);
    CHECK(r.log.size() == 3);
    CHECK(r.log.back().epoch == 3);
}

TEST_CASE("decrease streak") {
    DecreaseStreak s(5);
    CHECK_FALSE(s.push(0.90));
    for (double v : {0.89, 0.88, 0.87, 0.86}) CHECK_FALSE(s.push(v));
    CHECK(s.push(0.85));

    DecreaseStreak r(2);
    CHECK_FALSE(r.push(0.5));
    CHECK_FALSE(r.push(0.4));
    CHECK_FALSE(r.push(0.4));
    CHECK_FALSE(r.push(0.3));
    CHECK(r.push(0.2));
}

TEST_CASE("train config validation and errors") {
    TrainConfig c;
    c.accuracyCap = 0.0;
    CHECK_THROWS(c.validate());
    c = {};
    c.patienceDecreases = 0;
    CHECK_THROWS(c.validate());
    const std::vector<std::size_t> dims{2, 2};
    CHECK_THROWS_AS(train(initModel(dims, 1), {}, {}, TrainConfig{}), std::invalid_argument);
    CHECK((trainModeFromString("under") == TrainMode::underTrain));
    CHECK_THROWS(trainModeFromString("over"));
}

TEST_CASE("retraining baseline") {
    const auto subject = testing::smallSubject();
    Dataset neg, pos;
    for (const auto& x : subject.train) {
        if (predict(subject.model, x.features) != x.label) {
            if (neg.size() < 5) neg.push_back(x);
        } else if (pos.size() < 200) {
            pos.push_back(x);
        }
    }
    REQUIRE(neg.size() == 5);
    TrainConfig cfg;
    cfg.mode = TrainMode::retrain;
    cfg.maxEpochs = 20;
    cfg.patienceDecreases = 2;
    cfg.seed = 6;

    const auto a = retrainBaseline(subject.model, neg, pos, subject.test, cfg);
    const auto b = retrainBaseline(subject.model, neg, pos, subject.test, cfg);
    CHECK(saveModel(a.model) == saveModel(b.model));
    CHECK(!a.log.empty());
    CHECK(a.log.size() <= 20);
    CHECK_FALSE(confusion(a.model, subject.train) == confusion(subject.model, subject.train));

    SUBCASE("nothing to learn leaves the model unchanged") {
        const auto r = retrainBaseline(subject.model, {}, pos, subject.test, cfg);
        CHECK(r.log.empty());
        CHECK(accuracy(r.model, pos) >= accuracy(subject.model, pos));
    }
    SUBCASE("empty union") {
        CHECK_THROWS_AS(retrainBaseline(subject.model, {}, {}, subject.test, cfg), std::invalid_argument);
    }
}

TEST_CASE("epoch log csv") {
    const std::vector<EpochRecord> log{{1, 0.5, 0.25, 1.0}};
    CHECK(epochLogCsv(log).starts_with("epoch,trainAcc,valAcc,loss\n1,"));
}
