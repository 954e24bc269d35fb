#include "support.hpp"

#include "nnrepair/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace nnrepair;
using testing::Reference;

namespace {

NetworkModel identityNet() {
    auto layer = DenseLayer::zeros(2, 2, Activation::softmax);
    layer.kernel.at(0, 0) = 1.0f;
    layer.kernel.at(1, 1) = 1.0f;
    return NetworkModel({layer}, 2);
}

} // namespace

TEST_CASE("tensor shape must match data") {
    CHECK_NOTHROW(Tensor({2, 3}, std::vector<float>(6)));
    CHECK_THROWS_AS(Tensor({2, 3}, std::vector<float>(5)), DimensionError);
    CHECK_THROWS_AS(Tensor({0, 3}), DimensionError);
    Tensor t({2, 3});
    t.at(1, 2) = 4.0f;
    CHECK(t[5] == 4.0f);
    CHECK(t.allFinite());
    t[0] = std::nanf("");
    CHECK_FALSE(t.allFinite());
}

TEST_CASE("model validation rejects broken chains") {
    auto a = DenseLayer::zeros(3, 4, Activation::relu);
    auto b = DenseLayer::zeros(5, 2, Activation::softmax);
    CHECK_THROWS_AS(NetworkModel({a, b}, 2), DimensionError);
    auto c = DenseLayer::zeros(4, 2, Activation::relu);
    CHECK_THROWS_AS(NetworkModel({a, c}, 2), DimensionError);
    auto d = DenseLayer::zeros(4, 3, Activation::softmax);
    CHECK_THROWS_AS(NetworkModel({a, d}, 2), DimensionError);
    CHECK_NOTHROW(NetworkModel({a, DenseLayer::zeros(4, 2, Activation::softmax)}, 2));
}

TEST_CASE("forward on the identity net") {
    const auto m = identityNet();
    auto p = forward(m, Tensor::vector({0.0f, 0.0f}));
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-7));

    p = forward(m, Tensor::vector({1.0f, 0.0f}));
    const double e = std::exp(1.0);
    CHECK(p[0] == doctest::Approx(e / (e + 1.0)).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(1.0 / (e + 1.0)).epsilon(1e-6));
}

TEST_CASE("forward names the offending layer on a width mismatch") {
    const auto m = testing::randomModel({4, 3, 2}, 1);
    try {
        forward(m, Tensor::vector({1.0f, 2.0f}));
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("layer 0") != std::string::npos);
    }
}

TEST_CASE("softmax output is normalised and matches the reference network") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const auto m = testing::randomModel({5, 7, 6, 4}, 100 + trial, 1.5);
        const Reference ref(m);
        for (int k = 0; k < 5; ++k) {
            const auto x = testing::randomInput(5, rng);
            const auto p = forward(m, x);
            double sum = 0.0;
            for (auto v : p.values()) {
                CHECK(v >= 0.0f);
                CHECK(v <= 1.0f);
                sum += v;
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
            const auto expected = ref.probabilities(x.values());
            for (std::size_t j = 0; j < expected.size(); ++j) CHECK(std::abs(p[j] - expected[j]) < 1e-5);
        }
    }
}

TEST_CASE("softmax survives extreme logits") {
    std::vector<double> v{1000.0, -1000.0, 999.0};
    softmaxInPlace(v);
    CHECK(std::isfinite(v[0]));
    CHECK(v[0] + v[1] + v[2] == doctest::Approx(1.0));
    CHECK(v[1] == 0.0);
}

TEST_CASE("penultimate cache of a single-layer model is the raw input") {
    const auto m = testing::randomModel({3, 2}, 4);
    std::vector<Tensor> xs{Tensor::vector({1.0f, -2.0f, 3.5f}), Tensor::vector({0.0f, 0.25f, -1.0f})};
    const auto cache = penultimate(m, xs);
    REQUIRE(cache.rows() == 2);
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t i = 0; i < 3; ++i) CHECK(cache.row(r)[i] == xs[r][i]);
    }
}

TEST_CASE("penultimate cache of an empty sequence keeps its width") {
    const auto m = testing::randomModel({3, 5, 2}, 4);
    const auto cache = penultimate(m, std::span<const Tensor>{});
    CHECK(cache.width == 5);
    CHECK(cache.rows() == 0);
}

TEST_CASE("penultimate plus head equals the full forward pass") {
    Rng rng(8);
    const auto m = testing::randomModel({6, 9, 5, 3}, 77);
    const Reference ref(m);
    std::vector<Tensor> xs;
    for (int k = 0; k < 10; ++k) xs.push_back(testing::randomInput(6, rng));
    const auto cache = penultimate(m, xs);
    for (std::size_t r = 0; r < xs.size(); ++r) {
        const auto hidden = ref.hidden(xs[r].values());
        for (std::size_t i = 0; i < hidden.size(); ++i) CHECK(std::abs(cache.row(r)[i] - hidden[i]) < 1e-5);
        const auto full = forward(m, xs[r]);
        const auto head = headForward(cache.row(r), m.finalLayer());
        for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(full[j] - head[j]) <= 1e-6);
    }
}

TEST_CASE("forward is deterministic") {
    Rng rng(9);
    const auto m = testing::randomModel({4, 8, 3}, 5);
    const auto x = testing::randomInput(4, rng);
    CHECK(forward(m, x) == forward(m, x));
}

TEST_CASE("cross-entropy examples") {
    CHECK(crossEntropy(Tensor::vector({0.0f, 1.0f, 0.0f}), 1) == 0.0);
    const Tensor uniform({10}, std::vector<float>(10, 0.1f));
    CHECK(crossEntropy(uniform, 3) == doctest::Approx(std::log(10.0)).epsilon(1e-6));
    CHECK(crossEntropy(Tensor::vector({1.0f, 0.0f}), 1) == doctest::Approx(-std::log(1e-12)));
    CHECK(crossEntropy(Tensor::vector({1.0f, 0.0f}), 1) == doctest::Approx(27.631).epsilon(1e-4));
    CHECK_THROWS_AS(crossEntropy(Tensor::vector({0.5f, 0.5f}), 2), std::out_of_range);
    CHECK_THROWS_AS(crossEntropy(Tensor::vector({0.5f, 0.5f}), -1), std::out_of_range);
}

TEST_CASE("gradient vanishes for a confident correct prediction") {
    auto layer = DenseLayer::zeros(2, 2, Activation::softmax);
    layer.kernel.at(0, 0) = 200.0f;
    const NetworkModel m({layer}, 2);
    const auto g = lastLayerGradient(m, {Tensor::vector({1.0f, 0.0f}), 0});
    for (auto v : g.values()) CHECK(v == 0.0f);
}

TEST_CASE("gradient vanishes when the penultimate activation is zero") {
    auto m = testing::randomModel({3, 4, 3}, 12);
    m.layer(0).bias = Tensor({4});
    const auto g = lastLayerGradient(m, {Tensor::vector({0.0f, 0.0f, 0.0f}), 1});
    for (auto v : g.values()) CHECK(v == 0.0f);
}

TEST_CASE("gradient matches central finite differences of the reference loss") {
    Rng rng(42);
    std::size_t checked = 0;
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        const auto m = testing::randomModel({5, 8, 4}, 500 + trial);
        const auto x = testing::randomInput(5, rng);
        const int label = static_cast<int>(trial % 4);
        const auto g = lastLayerGradient(m, {x, label});
        Reference ref(m);
        auto& w = ref.kernels.back();
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double saved = w[k];
            w[k] = saved + 1e-4;
            const double up = ref.loss(x.values(), label);
            w[k] = saved - 1e-4;
            const double down = ref.loss(x.values(), label);
            w[k] = saved;
            const double fd = (up - down) / 2e-4;
            CHECK(std::abs(g[k] - fd) / std::max(std::abs(fd), 1e-6) <= 1e-4);
            ++checked;
        }
    }
    CHECK(checked == 20 * 32);
}

TEST_CASE("argmax returns the first maximum") {
    std::vector<double> v{0.1, 0.7, 0.7, 0.2};
    CHECK(argmax(std::span<const double>(v)) == 1);
}

TEST_CASE("accuracy counts argmax matches") {
    const auto m = identityNet();
    Dataset d{{Tensor::vector({1.0f, 0.0f}), 0}, {Tensor::vector({0.0f, 1.0f}), 0}, {Tensor::vector({0.0f, 2.0f}), 1}};
    CHECK(predictAll(m, d) == std::vector<int>{0, 1, 1});
    CHECK(accuracy(m, d) == doctest::Approx(2.0 / 3.0));
    CHECK(accuracy(m, {}) == 0.0);
}
