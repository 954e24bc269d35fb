#pragma once

#include "nnrepair/network.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace nnrepair {

enum class TrainMode { underTrain, fullTrain, retrain };

std::string_view toString(TrainMode mode);
TrainMode trainModeFromString(std::string_view name);

struct TrainConfig {
    double learningRate = 0.01;
    double momentum = 0.9;
    std::size_t batchSize = 32;
    std::size_t maxEpochs = 200;
    TrainMode mode = TrainMode::fullTrain;
    // underTrain: final training accuracy never exceeds this.
    double accuracyCap = 0.90;
    // fullTrain / retrain: stop after this many consecutive drops of the
    // monitored accuracy (validation for fullTrain, test for retrain).
    std::size_t patienceDecreases = 5;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double trainAcc = 0.0;
    double valAcc = 0.0;
    double loss = 0.0;
};

struct TrainResult {
    NetworkModel model;
    std::vector<EpochRecord> log;
    std::string stopReason;
};

// Tracks a monitored metric and reports when it has strictly decreased
// `patience` epochs in a row.
class DecreaseStreak {
public:
    explicit DecreaseStreak(std::size_t patience) : patience_(patience) {}

    // Returns true once the streak reaches the patience.
    bool push(double value);
    std::size_t streak() const { return streak_; }

private:
    std::size_t patience_;
    std::size_t streak_ = 0;
    bool hasPrevious_ = false;
    double previous_ = 0.0;
};

struct SyntheticSpec {
    std::size_t classCount = 10;
    std::size_t featureDim = 16;
    std::size_t perClassCount = 500;
    // 0 selects perClassCount / 5.
    std::size_t testPerClassCount = 0;
    double clusterSpread = 1.0;
    double overlapFactor = 0.5;
    std::uint64_t seed = 0;
};

struct SyntheticData {
    Dataset train;
    Dataset test;
};

// Gaussian clusters; class c's centre is pulled towards class (c+1) % C by a
// fraction proportional to overlapFactor that shrinks with c, so confusions
// concentrate on a few ordered class pairs.
SyntheticData generateSynthetic(const SyntheticSpec& spec);

// Glorot-uniform kernels, zero biases. `dims` = {input, hidden..., classes};
// hidden layers use relu, the last softmax.
NetworkModel initModel(std::span<const std::size_t> dims, std::uint64_t seed);

// Seeded partition into (train, validation) with `fraction` of rows held out.
std::pair<Dataset, Dataset> splitValidation(const Dataset& data, double fraction, std::uint64_t seed);

TrainResult train(NetworkModel model, const Dataset& trainSet, const Dataset& valSet,
                  const TrainConfig& config);

// Baseline: minibatch SGD over every layer on I_neg u I_pos only, stopping
// when test accuracy has dropped `patienceDecreases` epochs in a row.
TrainResult retrainBaseline(NetworkModel model, const Dataset& negatives, const Dataset& positives,
                            const Dataset& testSet, const TrainConfig& config);

// Mean cross-entropy over a dataset.
double meanLoss(const NetworkModel& model, const Dataset& data);

std::string epochLogCsv(std::span<const EpochRecord> log);

} // namespace nnrepair
