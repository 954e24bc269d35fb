#pragma once

#include "nnrepair/evaluator.hpp"
#include "nnrepair/localizer.hpp"
#include "nnrepair/network.hpp"
#include "nnrepair/patch.hpp"
#include "nnrepair/pso.hpp"
#include "nnrepair/trainer.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nnrepair {

enum class Scenario { rq1Single, rq2LocCompare, rq3FaultTypes, rq4RetrainCompare, rq5Adaptive };

// rq1 .. rq5
std::string_view toString(Scenario scenario);
Scenario scenarioFromString(std::string_view name);

// Which misclassified inputs form I_neg.
struct FaultSelector {
    enum class Kind { random, frequent, pair };
    Kind kind = Kind::random;
    // frequent: 1-based rank among fault types by instance count.
    std::size_t rank = 1;
    // pair: the exact (truth, predicted) cell.
    int trueLabel = 0;
    int predictedLabel = 0;

    // "random", "freq:K", "pair:T:P"
    static FaultSelector parse(std::string_view text);
    std::string str() const;
};

struct ScenarioConfig {
    Scenario scenario = Scenario::rq1Single;
    std::size_t repeats = 30;
    std::size_t posCount = 200;
    std::size_t negCount = 1;
    FaultSelector fault;
    std::uint64_t masterSeed = 0;
    LocConfig loc;
    SwarmConfig swarm;
    TrainConfig retrain = defaultRetrainConfig();
    std::size_t adaptiveAttempts = 20;

    std::filesystem::path modelPath;
    std::filesystem::path trainPath;
    std::filesystem::path testPath;
    std::filesystem::path outDir;

    static TrainConfig defaultRetrainConfig();

    // Applies one `key = value` setting; throws std::invalid_argument on an
    // unknown key or malformed value.
    void set(std::string_view key, std::string_view value);
    void validate() const;

    // Canonical `key = value` text, one key per line, fixed order.
    std::string snapshot() const;
};

// Parses the key-value config format: `key = value` per line, `#` starts a
// comment, blank lines ignored. Later keys override earlier ones.
ScenarioConfig parseConfig(std::string_view text, ScenarioConfig base = {});

// runSeed = deriveSeed(masterSeed, {hashString(scenarioName), runIndex}).
std::uint64_t runSeed(std::uint64_t masterSeed, std::string_view scenarioName, std::size_t runIndex);

struct InputSets {
    Dataset positives;
    Dataset negatives;
    std::vector<std::size_t> positiveIds;
    std::vector<std::size_t> negativeIds;
    std::optional<FaultType> target;
};

// Seeded sampling without replacement of posCount correctly classified and
// negCount misclassified rows of `trainSet`.
InputSets sampleInputSets(const NetworkModel& model, const Dataset& trainSet, std::size_t posCount,
                          std::size_t negCount, const FaultSelector& fault, std::uint64_t seed);

struct MethodRun {
    std::string method;
    RepairOutcome outcome;
    LabelDiff trainDiff;
    LabelDiff testDiff;
    std::optional<double> targetReduction;
    std::optional<double> targetReductionTest;
    std::optional<std::size_t> offTargetChange;
    std::optional<Patch> patch;
    std::optional<RepairTrace> trace;
    std::optional<Localization> localization;
    std::vector<EpochRecord> retrainLog;
    FitnessValue fitnessBefore;
    FitnessValue fitnessAfter;
};

struct CorrectiveRun {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    std::optional<FaultType> target;
    std::vector<std::size_t> positiveIds;
    std::vector<std::size_t> negativeIds;
    std::vector<MethodRun> methods;
};

struct MethodSummary {
    std::string method;
    Summary summary;
};

struct CorrectiveReport {
    ScenarioConfig config;
    double trainAccuracy = 0.0;
    double testAccuracy = 0.0;
    std::vector<CorrectiveRun> runs;
    std::vector<MethodSummary> summaries;
};

// rq1-rq4. Each run samples its own input sets; rq2 applies all three
// localisation methods and rq4 the retraining baseline to the same sets.
CorrectiveReport runCorrective(const ScenarioConfig& config, const NetworkModel& model, const Dataset& trainSet,
                               const Dataset& testSet);
// Loads model/datasets from the configured paths and writes the report to outDir.
CorrectiveReport runCorrective(const ScenarioConfig& config);

struct AttemptRecord {
    std::size_t attempt = 0;
    std::size_t inputId = 0;
    int label = 0;
    int predictedBefore = 0;
    bool alreadyCorrect = false;
    bool succeeded = false;
    RepairOutcome outcome;
    double trainAcc = 0.0;
    double valAcc = 0.0;
    LabelDiff trainDiff;
    LabelDiff valDiff;
    std::optional<Patch> patch;
    std::optional<RepairTrace> trace;
};

struct AdaptiveState {
    NetworkModel initialModel;
    NetworkModel currentModel;
    std::vector<AttemptRecord> attemptLog;
    std::vector<std::size_t> remainingFaults;
    std::vector<std::size_t> workloadIds;
    std::vector<std::size_t> validationIds;
    double initialTrainAcc = 0.0;
    double initialValAcc = 0.0;
    std::vector<std::string> notes;
};

// rq5: the test set is split into a workload half and a validation half;
// up to `adaptiveAttempts` misclassified workload inputs are repaired one at a
// time and the model is replaced only after a successful attempt.
AdaptiveState runAdaptive(const ScenarioConfig& config, const NetworkModel& model, const Dataset& trainSet,
                          const Dataset& testSet);
AdaptiveState runAdaptive(const ScenarioConfig& config);

// Report directory writers; all output is a pure function of the inputs.
void writeCorrectiveReport(const CorrectiveReport& report, const std::filesystem::path& dir);
void writeAdaptiveReport(const ScenarioConfig& config, const AdaptiveState& state, const std::filesystem::path& dir);

// Summary table (method,runs,successes,successRate,meanRepairRate,meanBreakRate,...)
// of a report directory's report.json. Throws ParseError on schema mismatch.
std::string exportSummaryCsv(const std::filesystem::path& reportDir);

inline constexpr std::string_view kReportSchema = "nnrepair-report/1";

} // namespace nnrepair
