#include "nnrepair/evaluator.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace nnrepair {

RepairOutcome rates(const NetworkModel& before, const NetworkModel& after, const Dataset& negatives,
                    const Dataset& positives) {
    if (negatives.empty() || positives.empty()) {
        throw std::invalid_argument("repair and break rates need non-empty I_neg and I_pos");
    }
    RepairOutcome out;
    out.negCount = negatives.size();
    out.posCount = positives.size();
    for (const auto& x : negatives) {
        if (predict(before, x.features) != x.label && predict(after, x.features) == x.label) ++out.patched;
    }
    for (const auto& x : positives) {
        if (predict(before, x.features) == x.label && predict(after, x.features) != x.label) ++out.broken;
    }
    out.repairRate = static_cast<double>(out.patched) / static_cast<double>(out.negCount);
    out.breakRate = static_cast<double>(out.broken) / static_cast<double>(out.posCount);
    out.success = out.patched > 0 && out.broken == 0;
    return out;
}

void withAccuracy(RepairOutcome& outcome, const NetworkModel& before, const NetworkModel& after,
                  const Dataset& trainSet, const Dataset& testSet) {
    outcome.accTrainBefore = accuracy(before, trainSet);
    outcome.accTrainAfter = accuracy(after, trainSet);
    outcome.accTestBefore = accuracy(before, testSet);
    outcome.accTestAfter = accuracy(after, testSet);
}

std::size_t ConfusionMatrix::rowSum(std::size_t truth) const {
    auto begin = cells_.begin() + static_cast<std::ptrdiff_t>(truth * classes_);
    return std::accumulate(begin, begin + static_cast<std::ptrdiff_t>(classes_), std::size_t{0});
}

std::size_t ConfusionMatrix::total() const { return std::accumulate(cells_.begin(), cells_.end(), std::size_t{0}); }

std::size_t ConfusionMatrix::offDiagonal() const {
    std::size_t diag = 0;
    for (std::size_t c = 0; c < classes_; ++c) diag += at(c, c);
    return total() - diag;
}

ConfusionMatrix confusion(const NetworkModel& model, const Dataset& data) {
    ConfusionMatrix m(model.classCount());
    for (const auto& x : data) {
        ++m.at(static_cast<std::size_t>(x.label), static_cast<std::size_t>(predict(model, x.features)));
    }
    return m;
}

std::vector<FaultType> topFaultTypes(const ConfusionMatrix& matrix, std::size_t k) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    std::vector<FaultType> cells;
    for (std::size_t t = 0; t < matrix.classes(); ++t) {
        for (std::size_t p = 0; p < matrix.classes(); ++p) {
            if (t != p && matrix.at(t, p) > 0) {
                cells.push_back({static_cast<int>(t), static_cast<int>(p), matrix.at(t, p)});
            }
        }
    }
    // Cells are generated in (truth, predicted) order; stable sort keeps it for ties.
    std::stable_sort(cells.begin(), cells.end(),
                     [](const FaultType& a, const FaultType& b) { return a.instanceCount > b.instanceCount; });
    if (cells.size() > k) cells.resize(k);
    return cells;
}

std::size_t LabelDiff::totalPatched() const {
    std::size_t n = 0;
    for (const auto& c : perLabel) n += c.patched;
    return n;
}

std::size_t LabelDiff::totalBroken() const {
    std::size_t n = 0;
    for (const auto& c : perLabel) n += c.broken;
    return n;
}

LabelDiff labelDiff(const NetworkModel& before, const NetworkModel& after, const Dataset& data, std::string split) {
    LabelDiff diff;
    diff.split = std::move(split);
    diff.perLabel.resize(before.classCount());
    for (const auto& x : data) {
        const bool wasRight = predict(before, x.features) == x.label;
        const bool isRight = predict(after, x.features) == x.label;
        auto& c = diff.perLabel[static_cast<std::size_t>(x.label)];
        if (!wasRight && isRight) ++c.patched;
        if (wasRight && !isRight) ++c.broken;
    }
    return diff;
}

Summary aggregate(std::span<const RepairOutcome> outcomes) {
    if (outcomes.empty()) throw std::invalid_argument("aggregate needs at least one run");
    Summary s;
    s.runs = outcomes.size();
    for (const auto& o : outcomes) {
        if (o.success) ++s.successes;
        s.meanRepairRate += o.repairRate;
        s.meanBreakRate += o.breakRate;
        s.meanAccTrainBefore += o.accTrainBefore;
        s.meanAccTrainAfter += o.accTrainAfter;
        s.meanAccTestBefore += o.accTestBefore;
        s.meanAccTestAfter += o.accTestAfter;
    }
    const double n = static_cast<double>(s.runs);
    s.meanRepairRate /= n;
    s.meanBreakRate /= n;
    s.meanAccTrainBefore /= n;
    s.meanAccTrainAfter /= n;
    s.meanAccTestBefore /= n;
    s.meanAccTestAfter /= n;
    s.successRate = static_cast<double>(s.successes) / n;
    return s;
}

std::optional<double> cellReduction(const ConfusionMatrix& before, const ConfusionMatrix& after,
                                    std::size_t truth, std::size_t predicted) {
    const auto b = before.at(truth, predicted);
    if (b == 0) return std::nullopt;
    const auto a = after.at(truth, predicted);
    return (static_cast<double>(b) - static_cast<double>(a)) / static_cast<double>(b);
}

std::size_t offTargetChange(const ConfusionMatrix& before, const ConfusionMatrix& after, std::size_t truth,
                            std::size_t predicted) {
    std::size_t change = 0;
    for (std::size_t t = 0; t < before.classes(); ++t) {
        for (std::size_t p = 0; p < before.classes(); ++p) {
            if (t == p || (t == truth && p == predicted)) continue;
            const auto b = before.at(t, p), a = after.at(t, p);
            change += a > b ? a - b : b - a;
        }
    }
    return change;
}

std::string confusionCsv(const ConfusionMatrix& matrix) {
    std::string out = "truth";
    for (std::size_t p = 0; p < matrix.classes(); ++p) out += fmt::format(",p{}", p);
    out += '\n';
    for (std::size_t t = 0; t < matrix.classes(); ++t) {
        out += fmt::format("{}", t);
        for (std::size_t p = 0; p < matrix.classes(); ++p) out += fmt::format(",{}", matrix.at(t, p));
        out += '\n';
    }
    return out;
}

std::string labelDiffCsv(std::span<const LabelDiff> diffs) {
    std::string out = "split,label,patched,broken\n";
    for (const auto& d : diffs) {
        for (std::size_t l = 0; l < d.perLabel.size(); ++l) {
            out += fmt::format("{},{},{},{}\n", d.split, l, d.perLabel[l].patched, d.perLabel[l].broken);
        }
    }
    return out;
}

std::string outcomeCsvHeader() {
    return "repairRate,breakRate,success,patched,broken,negCount,posCount,"
           "accTrainBefore,accTrainAfter,accTestBefore,accTestAfter\n";
}

std::string outcomeCsvRow(const RepairOutcome& o) {
    return fmt::format("{:.6f},{:.6f},{},{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f}\n", o.repairRate, o.breakRate,
                       o.success ? 1 : 0, o.patched, o.broken, o.negCount, o.posCount, o.accTrainBefore,
                       o.accTrainAfter, o.accTestBefore, o.accTestAfter);
}

} // namespace nnrepair
