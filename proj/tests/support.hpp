#pragma once

#include "nnrepair/network.hpp"
#include "nnrepair/random.hpp"
#include "nnrepair/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace testing {

using namespace nnrepair;

inline DenseLayer randomLayer(std::size_t in, std::size_t out, Activation act, Rng& rng, double scale = 0.5) {
    std::normal_distribution<double> n(0.0, scale);
    auto layer = DenseLayer::zeros(in, out, act);
    for (auto& w : layer.kernel.values()) w = static_cast<float>(n(rng));
    for (auto& b : layer.bias.values()) b = static_cast<float>(0.2 * n(rng));
    return layer;
}

// dims = {input, hidden..., classes}
inline NetworkModel randomModel(const std::vector<std::size_t>& dims, std::uint64_t seed, double scale = 0.5) {
    Rng rng(seed);
    std::vector<DenseLayer> layers;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        const bool last = k + 2 == dims.size();
        layers.push_back(randomLayer(dims[k], dims[k + 1], last ? Activation::softmax : Activation::relu, rng, scale));
    }
    return NetworkModel(std::move(layers), dims.back());
}

inline Tensor randomInput(std::size_t width, Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<float> v(width);
    for (auto& x : v) x = static_cast<float>(n(rng));
    return Tensor::vector(std::move(v));
}

inline Dataset randomDataset(const NetworkModel& model, std::size_t rows, Rng& rng) {
    std::uniform_int_distribution<int> label(0, static_cast<int>(model.classCount()) - 1);
    Dataset d;
    for (std::size_t r = 0; r < rows; ++r) d.push_back({randomInput(model.inputDim(), rng), label(rng)});
    return d;
}

// Straightforward double-precision reference network, independent of the
// library's forward pass. The final kernel may be overridden.
struct Reference {
    std::vector<std::vector<double>> kernels;
    std::vector<std::vector<double>> biases;
    std::vector<std::size_t> in, out;
    std::vector<bool> relu;

    explicit Reference(const NetworkModel& m) {
        for (const auto& l : m.layers()) {
            kernels.emplace_back(l.kernel.values().begin(), l.kernel.values().end());
            biases.emplace_back(l.bias.values().begin(), l.bias.values().end());
            in.push_back(l.inDim());
            out.push_back(l.outDim());
            relu.push_back(l.activation == Activation::relu);
        }
    }

    std::vector<double> hidden(std::span<const float> x) const {
        std::vector<double> a(x.begin(), x.end());
        for (std::size_t k = 0; k + 1 < kernels.size(); ++k) a = layer(k, a);
        return a;
    }

    std::vector<double> layer(std::size_t k, const std::vector<double>& a) const {
        std::vector<double> z(biases[k]);
        for (std::size_t i = 0; i < in[k]; ++i) {
            for (std::size_t j = 0; j < out[k]; ++j) z[j] += a[i] * kernels[k][i * out[k] + j];
        }
        if (relu[k]) {
            for (auto& v : z) v = std::max(v, 0.0);
        }
        return z;
    }

    std::vector<double> probabilities(std::span<const float> x) const {
        auto z = layer(kernels.size() - 1, hidden(x));
        double m = z[0];
        for (auto v : z) m = std::max(m, v);
        double s = 0.0;
        for (auto& v : z) s += (v = std::exp(v - m));
        for (auto& v : z) v /= s;
        return z;
    }

    double loss(std::span<const float> x, int label) const {
        return -std::log(std::max(probabilities(x)[static_cast<std::size_t>(label)], 1e-12));
    }
};

inline std::filesystem::path scratchDir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("nnrepair_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Relative path -> contents for every regular file under `dir`.
inline std::map<std::string, std::string> snapshotTree(const std::filesystem::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        files[std::filesystem::relative(e.path(), dir).string()] =
            std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    return files;
}

// A small clustered problem and a briefly trained model for end-to-end tests.
struct SmallSubject {
    NetworkModel model;
    Dataset train;
    Dataset test;
};

inline SmallSubject smallSubject() {
    SyntheticSpec spec;
    spec.classCount = 4;
    spec.featureDim = 6;
    spec.perClassCount = 120;
    spec.overlapFactor = 1.0;
    spec.seed = 21;
    auto data = generateSynthetic(spec);
    const std::vector<std::size_t> dims{6, 12, 4};
    TrainConfig cfg;
    cfg.mode = TrainMode::fullTrain;
    cfg.maxEpochs = 15;
    cfg.seed = 4;
    auto [tr, val] = splitValidation(data.train, 0.2, 9);
    auto result = train(initModel(dims, 5), tr, val, cfg);
    return {std::move(result.model), std::move(data.train), std::move(data.test)};
}

} // namespace testing
