#include "nnrepair/trainer.hpp"

#include "nnrepair/errors.hpp"
#include "nnrepair/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nnrepair {

std::string_view toString(TrainMode mode) {
    switch (mode) {
    case TrainMode::underTrain: return "under";
    case TrainMode::fullTrain: return "full";
    case TrainMode::retrain: return "retrain";
    }
    return "full";
}

TrainMode trainModeFromString(std::string_view name) {
    if (name == "under") return TrainMode::underTrain;
    if (name == "full") return TrainMode::fullTrain;
    if (name == "retrain") return TrainMode::retrain;
    throw std::invalid_argument("unknown training mode '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
    if (!(accuracyCap > 0.0 && accuracyCap <= 1.0)) throw std::invalid_argument("accuracyCap must lie in (0, 1]");
    if (patienceDecreases < 1) throw std::invalid_argument("patienceDecreases must be >= 1");
    if (batchSize < 1) throw std::invalid_argument("batchSize must be >= 1");
    if (!(learningRate > 0.0)) throw std::invalid_argument("learningRate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must lie in [0, 1)");
}

bool DecreaseStreak::push(double value) {
    if (hasPrevious_ && value < previous_) {
        ++streak_;
    } else {
        streak_ = 0;
    }
    hasPrevious_ = true;
    previous_ = value;
    return streak_ >= patience_;
}

SyntheticData generateSynthetic(const SyntheticSpec& spec) {
    if (spec.classCount < 2 || spec.featureDim < 1) {
        throw std::invalid_argument("synthetic data needs >= 2 classes and >= 1 feature");
    }
    if (spec.overlapFactor < 0.0) throw std::invalid_argument("overlapFactor must be >= 0");
    if (spec.clusterSpread < 0.0) throw std::invalid_argument("clusterSpread must be >= 0");

    Rng rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto C = spec.classCount;
    const auto D = spec.featureDim;
    constexpr double kRadius = 4.0;

    // Equidistant centres: kRadius times a random orthonormal frame when
    // D >= C, otherwise random points on the sphere of that radius.
    std::vector<std::vector<double>> centre(C, std::vector<double>(D));
    for (std::size_t c = 0; c < C; ++c) {
        auto& v = centre[c];
        for (auto& x : v) x = gauss(rng);
        if (D >= C) {
            for (std::size_t b = 0; b < c; ++b) {
                double dot = 0.0;
                for (std::size_t d = 0; d < D; ++d) dot += v[d] * centre[b][d];
                for (std::size_t d = 0; d < D; ++d) v[d] -= dot * centre[b][d] / (kRadius * kRadius);
            }
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        for (auto& x : v) x *= kRadius / norm;
    }
    auto pulled = centre;
    for (std::size_t c = 0; c < C; ++c) {
        const auto partner = (c + 1) % C;
        const double weight = static_cast<double>(C - c) / static_cast<double>(C);
        const double f = std::min(0.45, 0.5 * spec.overlapFactor * weight * weight);
        for (std::size_t d = 0; d < D; ++d) pulled[c][d] += f * (centre[partner][d] - centre[c][d]);
    }

    auto sample = [&](std::size_t perClass) {
        Dataset rows;
        rows.reserve(perClass * C);
        for (std::size_t n = 0; n < perClass; ++n) {
            for (std::size_t c = 0; c < C; ++c) {
                std::vector<float> x(D);
                for (std::size_t d = 0; d < D; ++d) {
                    x[d] = static_cast<float>(pulled[c][d] + spec.clusterSpread * gauss(rng));
                }
                rows.push_back({Tensor::vector(std::move(x)), static_cast<int>(c)});
            }
        }
        std::shuffle(rows.begin(), rows.end(), rng);
        return rows;
    };
    SyntheticData out;
    out.train = sample(spec.perClassCount);
    out.test = sample(spec.testPerClassCount == 0 ? spec.perClassCount / 5 : spec.testPerClassCount);
    return out;
}

NetworkModel initModel(std::span<const std::size_t> dims, std::uint64_t seed) {
    if (dims.size() < 2) throw std::invalid_argument("initModel needs at least input and output widths");
    Rng rng(seed);
    std::vector<DenseLayer> layers;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        const bool last = k + 2 == dims.size();
        auto layer = DenseLayer::zeros(dims[k], dims[k + 1], last ? Activation::softmax : Activation::relu);
        const double limit = std::sqrt(6.0 / static_cast<double>(dims[k] + dims[k + 1]));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (auto& w : layer.kernel.values()) w = static_cast<float>(u(rng));
        layers.push_back(std::move(layer));
    }
    return NetworkModel(std::move(layers), dims.back());
}

std::pair<Dataset, Dataset> splitValidation(const Dataset& data, double fraction, std::uint64_t seed) {
    if (fraction < 0.0 || fraction >= 1.0) throw std::invalid_argument("validation fraction must lie in [0, 1)");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto held = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(data.size())));
    Dataset train, val;
    for (std::size_t k = 0; k < order.size(); ++k) {
        (k < held ? val : train).push_back(data[order[k]]);
    }
    return {std::move(train), std::move(val)};
}

double meanLoss(const NetworkModel& model, const Dataset& data) {
    if (data.empty()) return 0.0;
    double total = 0.0;
    for (const auto& x : data) total += crossEntropy(forwardProbabilities(model, x.features.values()), x.label);
    return total / static_cast<double>(data.size());
}

namespace {

// Minibatch SGD with momentum over all layers; gradients in double.
class SgdStepper {
public:
    SgdStepper(const NetworkModel& model, const TrainConfig& config) : config_(config) {
        for (const auto& l : model.layers()) {
            velocityW_.emplace_back(l.kernel.size(), 0.0);
            velocityB_.emplace_back(l.bias.size(), 0.0);
            gradW_.emplace_back(l.kernel.size(), 0.0);
            gradB_.emplace_back(l.bias.size(), 0.0);
        }
    }

    // One pass over `data` in the given order; returns mean batch loss.
    double epoch(NetworkModel& model, const Dataset& data, std::span<const std::size_t> order) {
        double lossSum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config_.batchSize) {
            const auto end = std::min(order.size(), start + config_.batchSize);
            for (auto& g : gradW_) std::fill(g.begin(), g.end(), 0.0);
            for (auto& g : gradB_) std::fill(g.begin(), g.end(), 0.0);
            for (std::size_t k = start; k < end; ++k) lossSum += accumulate(model, data[order[k]]);
            const double scale = 1.0 / static_cast<double>(end - start);
            for (std::size_t l = 0; l < model.layerCount(); ++l) {
                auto& layer = model.layer(l);
                update(layer.kernel.values(), gradW_[l], velocityW_[l], scale);
                update(layer.bias.values(), gradB_[l], velocityB_[l], scale);
            }
        }
        return order.empty() ? 0.0 : lossSum / static_cast<double>(order.size());
    }

private:
    void update(std::span<float> weights, const std::vector<double>& grad, std::vector<double>& velocity,
                double scale) {
        for (std::size_t k = 0; k < weights.size(); ++k) {
            velocity[k] = config_.momentum * velocity[k] - config_.learningRate * grad[k] * scale;
            weights[k] = static_cast<float>(static_cast<double>(weights[k]) + velocity[k]);
        }
    }

    double accumulate(const NetworkModel& model, const LabeledInput& sample) {
        const auto L = model.layerCount();
        std::vector<std::vector<double>> acts(L + 1);
        acts[0].assign(sample.features.values().begin(), sample.features.values().end());
        for (std::size_t l = 0; l < L; ++l) {
            const auto& layer = model.layer(l);
            const auto in = layer.inDim(), out = layer.outDim();
            std::vector<double> z(out);
            for (std::size_t j = 0; j < out; ++j) z[j] = layer.bias[j];
            for (std::size_t i = 0; i < in; ++i) {
                const double a = acts[l][i];
                if (a == 0.0) continue;
                for (std::size_t j = 0; j < out; ++j) z[j] += a * layer.kernel.at(i, j);
            }
            if (layer.activation == Activation::relu) {
                for (auto& v : z) v = std::max(0.0, v);
            } else if (layer.activation == Activation::softmax) {
                softmaxInPlace(z);
            }
            acts[l + 1] = std::move(z);
        }
        const auto label = static_cast<std::size_t>(sample.label);
        const double loss = -std::log(std::max(acts[L][label], kProbabilityFloor));

        std::vector<double> delta = acts[L];
        delta[label] -= 1.0;
        for (std::size_t l = L; l-- > 0;) {
            const auto& layer = model.layer(l);
            const auto in = layer.inDim(), out = layer.outDim();
            auto& gw = gradW_[l];
            auto& gb = gradB_[l];
            for (std::size_t j = 0; j < out; ++j) gb[j] += delta[j];
            std::vector<double> prev(in, 0.0);
            for (std::size_t i = 0; i < in; ++i) {
                const double a = acts[l][i];
                double back = 0.0;
                for (std::size_t j = 0; j < out; ++j) {
                    gw[i * out + j] += a * delta[j];
                    back += static_cast<double>(layer.kernel.at(i, j)) * delta[j];
                }
                prev[i] = back;
            }
            if (l > 0) {
                const auto& below = model.layer(l - 1);
                if (below.activation == Activation::relu) {
                    for (std::size_t i = 0; i < in; ++i) {
                        if (acts[l][i] <= 0.0) prev[i] = 0.0;
                    }
                }
            }
            delta = std::move(prev);
        }
        return loss;
    }

    TrainConfig config_;
    std::vector<std::vector<double>> velocityW_, velocityB_, gradW_, gradB_;
};

void checkShapes(const NetworkModel& model, const Dataset& data, std::string_view what) {
    for (std::size_t r = 0; r < data.size(); ++r) {
        if (data[r].features.size() != model.inputDim()) {
            throw DimensionError(fmt::format("{} row {} has {} features, model expects {}", what, r,
                                             data[r].features.size(), model.inputDim()));
        }
        if (data[r].label < 0 || static_cast<std::size_t>(data[r].label) >= model.classCount()) {
            throw std::out_of_range(fmt::format("{} row {} label {} out of range", what, r, data[r].label));
        }
    }
}

} // namespace

TrainResult train(NetworkModel model, const Dataset& trainSet, const Dataset& valSet, const TrainConfig& config) {
    config.validate();
    if (trainSet.empty()) throw std::invalid_argument("training set is empty");
    if (config.mode == TrainMode::fullTrain && valSet.empty()) {
        throw std::invalid_argument("fullTrain needs a non-empty validation set");
    }
    checkShapes(model, trainSet, "training set");
    checkShapes(model, valSet, "validation set");

    TrainResult result;
    SgdStepper stepper(model, config);
    Rng rng(config.seed);
    std::vector<std::size_t> order(trainSet.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    DecreaseStreak streak(config.patienceDecreases);
    result.stopReason = "max epochs";

    for (std::size_t epoch = 1; epoch <= config.maxEpochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        NetworkModel before = model;
        const double loss = stepper.epoch(model, trainSet, order);
        EpochRecord rec{epoch, accuracy(model, trainSet), valSet.empty() ? 0.0 : accuracy(model, valSet), loss};

        if (config.mode == TrainMode::underTrain && rec.trainAcc > config.accuracyCap) {
            model = std::move(before);
            result.stopReason = fmt::format("epoch {} crossed accuracy cap {:.4f}; rolled back", epoch,
                                            config.accuracyCap);
            break;
        }
        result.log.push_back(rec);
        if (config.mode != TrainMode::underTrain && streak.push(rec.valAcc)) {
            result.stopReason = fmt::format("monitored accuracy decreased {} consecutive epochs",
                                            config.patienceDecreases);
            break;
        }
    }
    result.model = std::move(model);
    return result;
}

TrainResult retrainBaseline(NetworkModel model, const Dataset& negatives, const Dataset& positives,
                            const Dataset& testSet, const TrainConfig& config) {
    config.validate();
    Dataset pool = negatives;
    pool.insert(pool.end(), positives.begin(), positives.end());
    if (pool.empty()) throw std::invalid_argument("retraining needs at least one input");
    checkShapes(model, pool, "retraining set");

    TrainResult result;
    const bool allCorrect = std::all_of(pool.begin(), pool.end(),
                                        [&](const LabeledInput& x) { return predict(model, x.features) == x.label; });
    if (allCorrect) {
        result.model = std::move(model);
        result.stopReason = "every retraining input already classified correctly";
        return result;
    }

    SgdStepper stepper(model, config);
    Rng rng(config.seed);
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    DecreaseStreak streak(config.patienceDecreases);
    if (!testSet.empty()) streak.push(accuracy(model, testSet));
    result.stopReason = "max epochs";

    for (std::size_t epoch = 1; epoch <= config.maxEpochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        const double loss = stepper.epoch(model, pool, order);
        EpochRecord rec{epoch, accuracy(model, pool), testSet.empty() ? 0.0 : accuracy(model, testSet), loss};
        result.log.push_back(rec);
        if (!testSet.empty() && streak.push(rec.valAcc)) {
            result.stopReason = fmt::format("test accuracy dropped {} consecutive epochs", config.patienceDecreases);
            break;
        }
    }
    result.model = std::move(model);
    return result;
}

std::string epochLogCsv(std::span<const EpochRecord> log) {
    std::string out = "epoch,trainAcc,valAcc,loss\n";
    for (const auto& r : log) out += fmt::format("{},{:.6f},{:.6f},{:.6f}\n", r.epoch, r.trainAcc, r.valAcc, r.loss);
    return out;
}

} // namespace nnrepair
