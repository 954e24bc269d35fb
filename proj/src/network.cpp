#include "nnrepair/network.hpp"

#include "nnrepair/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace nnrepair {

std::string_view toString(Activation activation) {
    switch (activation) {
    case Activation::relu: return "relu";
    case Activation::softmax: return "softmax";
    case Activation::identity: return "identity";
    }
    return "identity";
}

Activation activationFromString(std::string_view name) {
    if (name == "relu") return Activation::relu;
    if (name == "softmax") return Activation::softmax;
    if (name == "identity") return Activation::identity;
    throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

DenseLayer DenseLayer::zeros(std::size_t inDim, std::size_t outDim, Activation activation) {
    return DenseLayer{Tensor({inDim, outDim}), Tensor({outDim}), activation};
}

NetworkModel::NetworkModel(std::vector<DenseLayer> layers, std::size_t classCount)
    : layers_(std::move(layers)), classCount_(classCount) {
    validate();
}

void NetworkModel::validate() const {
    if (layers_.empty()) {
        throw DimensionError("model must have at least one layer");
    }
    if (classCount_ == 0) {
        throw DimensionError("classCount must be positive");
    }
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const auto& l = layers_[k];
        auto where = "layer " + std::to_string(k);
        if (l.kernel.rank() != 2) {
            throw DimensionError(where + ": kernel must be rank 2");
        }
        if (l.bias.rank() != 1 || l.bias.dim(0) != l.outDim()) {
            throw DimensionError(where + ": bias length does not match kernel output width");
        }
        if (k + 1 < layers_.size()) {
            if (l.outDim() != layers_[k + 1].inDim()) {
                throw DimensionError(where + ": output width " + std::to_string(l.outDim()) +
                                     " does not match input width " +
                                     std::to_string(layers_[k + 1].inDim()) + " of layer " +
                                     std::to_string(k + 1));
            }
            if (l.activation == Activation::softmax) {
                throw DimensionError(where + ": softmax is only allowed on the final layer");
            }
        }
    }
    const auto& last = layers_.back();
    if (last.outDim() != classCount_) {
        throw DimensionError("final layer width " + std::to_string(last.outDim()) +
                             " does not match classCount " + std::to_string(classCount_));
    }
    if (last.activation != Activation::softmax) {
        throw DimensionError("final layer activation must be softmax");
    }
}

namespace {

// One hidden layer; accumulates in double and stores the activation as float.
std::vector<float> hiddenForward(const DenseLayer& layer, std::span<const float> x) {
    const auto in = layer.inDim();
    const auto out = layer.outDim();
    std::vector<double> acc(out);
    for (std::size_t j = 0; j < out; ++j) acc[j] = layer.bias[j];
    const float* w = layer.kernel.data();
    for (std::size_t i = 0; i < in; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const float* row = w + i * out;
        for (std::size_t j = 0; j < out; ++j) acc[j] += xi * static_cast<double>(row[j]);
    }
    std::vector<float> y(out);
    for (std::size_t j = 0; j < out; ++j) {
        double v = acc[j];
        if (layer.activation == Activation::relu && v < 0.0) v = 0.0;
        y[j] = static_cast<float>(v);
    }
    return y;
}

void checkInput(const NetworkModel& model, std::size_t length) {
    if (length != model.inputDim()) {
        throw DimensionError("layer 0 expects input width " + std::to_string(model.inputDim()) +
                             ", got " + std::to_string(length));
    }
}

} // namespace

void softmaxInPlace(std::span<double> values) {
    if (values.empty()) return;
    const double top = *std::max_element(values.begin(), values.end());
    double sum = 0.0;
    for (auto& v : values) {
        v = std::exp(v - top);
        sum += v;
    }
    for (auto& v : values) v /= sum;
}

void headLogits(std::span<const float> activation, const DenseLayer& finalLayer,
                std::span<double> logits) {
    const auto in = finalLayer.inDim();
    const auto out = finalLayer.outDim();
    if (activation.size() != in) {
        throw DimensionError("final layer expects input width " + std::to_string(in) + ", got " +
                             std::to_string(activation.size()));
    }
    for (std::size_t j = 0; j < out; ++j) logits[j] = finalLayer.bias[j];
    const float* w = finalLayer.kernel.data();
    for (std::size_t i = 0; i < in; ++i) {
        const double oi = activation[i];
        if (oi == 0.0) continue;
        const float* row = w + i * out;
        for (std::size_t j = 0; j < out; ++j) logits[j] += oi * static_cast<double>(row[j]);
    }
}

std::vector<float> penultimateActivation(const NetworkModel& model, std::span<const float> input) {
    checkInput(model, input.size());
    std::vector<float> x(input.begin(), input.end());
    for (std::size_t k = 0; k + 1 < model.layerCount(); ++k) {
        x = hiddenForward(model.layer(k), x);
    }
    return x;
}

std::vector<double> forwardProbabilities(const NetworkModel& model, std::span<const float> input) {
    auto o = penultimateActivation(model, input);
    std::vector<double> p(model.classCount());
    headLogits(o, model.finalLayer(), p);
    softmaxInPlace(p);
    return p;
}

Tensor forward(const NetworkModel& model, const Tensor& input) {
    auto p = forwardProbabilities(model, input.values());
    return Tensor::vector(std::vector<float>(p.begin(), p.end()));
}

Tensor headForward(std::span<const float> activation, const DenseLayer& finalLayer) {
    std::vector<double> p(finalLayer.outDim());
    headLogits(activation, finalLayer, p);
    softmaxInPlace(p);
    return Tensor::vector(std::vector<float>(p.begin(), p.end()));
}

ActivationCache penultimate(const NetworkModel& model, std::span<const Tensor> inputs) {
    ActivationCache cache;
    cache.width = model.penultimateDim();
    cache.data.reserve(inputs.size() * cache.width);
    for (const auto& x : inputs) {
        auto row = penultimateActivation(model, x.values());
        cache.data.insert(cache.data.end(), row.begin(), row.end());
    }
    return cache;
}

ActivationCache penultimate(const NetworkModel& model, const Dataset& inputs) {
    ActivationCache cache;
    cache.width = model.penultimateDim();
    cache.data.reserve(inputs.size() * cache.width);
    for (const auto& x : inputs) {
        auto row = penultimateActivation(model, x.features.values());
        cache.data.insert(cache.data.end(), row.begin(), row.end());
    }
    return cache;
}

double crossEntropy(std::span<const double> probs, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) {
        throw std::out_of_range("label " + std::to_string(label) + " outside [0, " +
                                std::to_string(probs.size()) + ")");
    }
    return -std::log(std::max(probs[static_cast<std::size_t>(label)], kProbabilityFloor));
}

double crossEntropy(const Tensor& probs, int label) {
    std::vector<double> p(probs.values().begin(), probs.values().end());
    return crossEntropy(p, label);
}

Tensor lastLayerGradient(const NetworkModel& model, const LabeledInput& input) {
    const auto classes = model.classCount();
    if (input.label < 0 || static_cast<std::size_t>(input.label) >= classes) {
        throw std::out_of_range("label " + std::to_string(input.label) + " outside [0, " +
                                std::to_string(classes) + ")");
    }
    auto o = penultimateActivation(model, input.features.values());
    std::vector<double> p(classes);
    headLogits(o, model.finalLayer(), p);
    softmaxInPlace(p);
    p[static_cast<std::size_t>(input.label)] -= 1.0;

    Tensor grad({o.size(), classes});
    for (std::size_t i = 0; i < o.size(); ++i) {
        for (std::size_t j = 0; j < classes; ++j) {
            grad.at(i, j) = static_cast<float>(static_cast<double>(o[i]) * p[j]);
        }
    }
    return grad;
}

std::size_t argmax(std::span<const double> values) {
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

std::size_t argmax(std::span<const float> values) {
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

int predict(const NetworkModel& model, const Tensor& input) {
    auto o = penultimateActivation(model, input.values());
    std::vector<double> z(model.classCount());
    headLogits(o, model.finalLayer(), z);
    return static_cast<int>(argmax(z));
}

std::vector<int> predictAll(const NetworkModel& model, const Dataset& data) {
    std::vector<int> out;
    out.reserve(data.size());
    for (const auto& x : data) out.push_back(predict(model, x.features));
    return out;
}

double accuracy(const NetworkModel& model, const Dataset& data) {
    if (data.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& x : data) {
        if (predict(model, x.features) == x.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

} // namespace nnrepair
