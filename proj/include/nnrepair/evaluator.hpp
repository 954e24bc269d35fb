#pragma once

#include "nnrepair/network.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nnrepair {

struct RepairOutcome {
    double repairRate = 0.0;
    double breakRate = 0.0;
    bool success = false;
    std::size_t patched = 0;
    std::size_t broken = 0;
    std::size_t negCount = 0;
    std::size_t posCount = 0;
    double accTrainBefore = 0.0;
    double accTrainAfter = 0.0;
    double accTestBefore = 0.0;
    double accTestAfter = 0.0;
};

// RR = patched / |I_neg|, BR = broken / |I_pos|, success iff RR > 0 and no
// positive input broke. Accuracy fields are left at zero; see withAccuracy().
RepairOutcome rates(const NetworkModel& before, const NetworkModel& after, const Dataset& negatives,
                    const Dataset& positives);

void withAccuracy(RepairOutcome& outcome, const NetworkModel& before, const NetworkModel& after,
                  const Dataset& trainSet, const Dataset& testSet);

class ConfusionMatrix {
public:
    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::size_t classes) : classes_(classes), cells_(classes * classes, 0) {}

    std::size_t classes() const { return classes_; }
    std::size_t& at(std::size_t truth, std::size_t predicted) { return cells_[truth * classes_ + predicted]; }
    std::size_t at(std::size_t truth, std::size_t predicted) const { return cells_[truth * classes_ + predicted]; }
    std::size_t rowSum(std::size_t truth) const;
    std::size_t total() const;
    std::size_t offDiagonal() const;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t classes_ = 0;
    std::vector<std::size_t> cells_;
};

ConfusionMatrix confusion(const NetworkModel& model, const Dataset& data);

struct FaultType {
    int trueLabel = 0;
    int predictedLabel = 0;
    std::size_t instanceCount = 0;

    friend bool operator==(const FaultType&, const FaultType&) = default;
};

// Non-zero off-diagonal cells, count descending, then (truth, predicted) ascending.
std::vector<FaultType> topFaultTypes(const ConfusionMatrix& matrix, std::size_t k);

struct LabelCounts {
    std::size_t patched = 0;
    std::size_t broken = 0;
};

struct LabelDiff {
    std::string split;
    std::vector<LabelCounts> perLabel;

    std::size_t totalPatched() const;
    std::size_t totalBroken() const;
};

// patched: wrong before, right after; broken: right before, wrong after; per ground-truth label.
LabelDiff labelDiff(const NetworkModel& before, const NetworkModel& after, const Dataset& data,
                    std::string split);

struct Summary {
    std::size_t runs = 0;
    std::size_t successes = 0;
    double meanRepairRate = 0.0;
    double meanBreakRate = 0.0;
    double successRate = 0.0;
    double meanAccTrainBefore = 0.0;
    double meanAccTrainAfter = 0.0;
    double meanAccTestBefore = 0.0;
    double meanAccTestAfter = 0.0;
};

Summary aggregate(std::span<const RepairOutcome> outcomes);

// Relative reduction (before - after) / before of one confusion cell; nullopt when before == 0.
std::optional<double> cellReduction(const ConfusionMatrix& before, const ConfusionMatrix& after,
                                    std::size_t truth, std::size_t predicted);

// Sum over off-diagonal cells other than (truth, predicted) of |after - before|.
std::size_t offTargetChange(const ConfusionMatrix& before, const ConfusionMatrix& after, std::size_t truth,
                            std::size_t predicted);

std::string confusionCsv(const ConfusionMatrix& matrix);
std::string labelDiffCsv(std::span<const LabelDiff> diffs);
std::string outcomeCsvHeader();
std::string outcomeCsvRow(const RepairOutcome& outcome);

} // namespace nnrepair
