#pragma once

#include "nnrepair/tensor.hpp"

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace nnrepair {

enum class Activation { relu, softmax, identity };

std::string_view toString(Activation activation);
Activation activationFromString(std::string_view name);

// Fully connected layer: y = act(x * kernel + bias), kernel is [inDim, outDim]
// so kernel.at(i, j) is the weight from input neuron i to output neuron j.
struct DenseLayer {
    Tensor kernel;
    Tensor bias;
    Activation activation = Activation::identity;

    static DenseLayer zeros(std::size_t inDim, std::size_t outDim, Activation activation);

    std::size_t inDim() const { return kernel.dim(0); }
    std::size_t outDim() const { return kernel.dim(1); }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Stack of dense layers ending in a softmax classifier head.
class NetworkModel {
public:
    NetworkModel() = default;
    NetworkModel(std::vector<DenseLayer> layers, std::size_t classCount);

    const std::vector<DenseLayer>& layers() const { return layers_; }
    const DenseLayer& layer(std::size_t k) const { return layers_.at(k); }
    // Mutable access for in-place weight edits; tensor shapes must not change.
    DenseLayer& layer(std::size_t k) { return layers_.at(k); }

    std::size_t layerCount() const { return layers_.size(); }
    std::size_t classCount() const { return classCount_; }
    std::size_t inputDim() const { return layers_.front().inDim(); }
    std::size_t penultimateDim() const { return layers_.back().inDim(); }
    std::size_t finalLayerIndex() const { return layers_.size() - 1; }
    const DenseLayer& finalLayer() const { return layers_.back(); }
    DenseLayer& finalLayer() { return layers_.back(); }

    // Re-checks every structural invariant; throws DimensionError.
    void validate() const;

    friend bool operator==(const NetworkModel&, const NetworkModel&) = default;

private:
    std::vector<DenseLayer> layers_;
    std::size_t classCount_ = 0;
};

struct LabeledInput {
    Tensor features;
    int label = 0;

    friend bool operator==(const LabeledInput&, const LabeledInput&) = default;
};

using Dataset = std::vector<LabeledInput>;

// Activations entering the final layer, one row per input.
struct ActivationCache {
    std::size_t width = 0;
    std::vector<float> data;

    std::size_t rows() const { return width == 0 ? 0 : data.size() / width; }
    std::span<const float> row(std::size_t k) const {
        return std::span<const float>(data).subspan(k * width, width);
    }
};

// Class probabilities for one input.
Tensor forward(const NetworkModel& model, const Tensor& input);

// Same computation as forward() but keeps the softmax output in double.
std::vector<double> forwardProbabilities(const NetworkModel& model, std::span<const float> input);

// Output of the last hidden layer (or the raw input for single-layer models).
std::vector<float> penultimateActivation(const NetworkModel& model, std::span<const float> input);

ActivationCache penultimate(const NetworkModel& model, std::span<const Tensor> inputs);
ActivationCache penultimate(const NetworkModel& model, const Dataset& inputs);

// Final-layer evaluation over a cached activation row.
Tensor headForward(std::span<const float> activation, const DenseLayer& finalLayer);

// Raw logits of the final layer over a cached activation row.
void headLogits(std::span<const float> activation, const DenseLayer& finalLayer,
                std::span<double> logits);

// Max-subtracted softmax, in place.
void softmaxInPlace(std::span<double> values);

inline constexpr double kProbabilityFloor = 1e-12;

// -log(max(probs[label], 1e-12)).
double crossEntropy(const Tensor& probs, int label);
double crossEntropy(std::span<const double> probs, int label);

// dL/dW for the final kernel under softmax + cross-entropy, shape [inDim, classCount].
Tensor lastLayerGradient(const NetworkModel& model, const LabeledInput& input);

std::size_t argmax(std::span<const double> values);
std::size_t argmax(std::span<const float> values);

int predict(const NetworkModel& model, const Tensor& input);
std::vector<int> predictAll(const NetworkModel& model, const Dataset& data);
double accuracy(const NetworkModel& model, const Dataset& data);

} // namespace nnrepair
