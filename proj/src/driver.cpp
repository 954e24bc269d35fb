#include "nnrepair/driver.hpp"

#include "nnrepair/errors.hpp"
#include "nnrepair/model_io.hpp"
#include "nnrepair/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <numeric>
#include <stdexcept>

namespace nnrepair {

std::string_view toString(Scenario scenario) {
    switch (scenario) {
    case Scenario::rq1Single: return "rq1";
    case Scenario::rq2LocCompare: return "rq2";
    case Scenario::rq3FaultTypes: return "rq3";
    case Scenario::rq4RetrainCompare: return "rq4";
    case Scenario::rq5Adaptive: return "rq5";
    }
    return "rq1";
}

Scenario scenarioFromString(std::string_view name) {
    if (name == "rq1") return Scenario::rq1Single;
    if (name == "rq2") return Scenario::rq2LocCompare;
    if (name == "rq3") return Scenario::rq3FaultTypes;
    if (name == "rq4") return Scenario::rq4RetrainCompare;
    if (name == "rq5") return Scenario::rq5Adaptive;
    throw std::invalid_argument("unknown scenario '" + std::string(name) + "' (expected rq1..rq5)");
}

namespace {

template <typename T>
T parseValue(std::string_view key, std::string_view text) {
    T value{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw std::invalid_argument(fmt::format("invalid value '{}' for '{}'", text, key));
    }
    return value;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::string_view toString(VelocityClamp clamp) { return clamp == VelocityClamp::band ? "band" : "symmetric"; }

} // namespace

FaultSelector FaultSelector::parse(std::string_view text) {
    FaultSelector f;
    if (text == "random") return f;
    if (text.starts_with("freq:")) {
        f.kind = Kind::frequent;
        f.rank = parseValue<std::size_t>("fault", text.substr(5));
        if (f.rank < 1) throw std::invalid_argument("fault rank must be >= 1");
        return f;
    }
    if (text.starts_with("pair:")) {
        auto rest = text.substr(5);
        auto colon = rest.find(':');
        if (colon == std::string_view::npos) throw std::invalid_argument("fault pair must be pair:T:P");
        f.kind = Kind::pair;
        f.trueLabel = parseValue<int>("fault", rest.substr(0, colon));
        f.predictedLabel = parseValue<int>("fault", rest.substr(colon + 1));
        if (f.trueLabel == f.predictedLabel) throw std::invalid_argument("fault pair labels must differ");
        return f;
    }
    throw std::invalid_argument("unknown fault selector '" + std::string(text) + "' (random|freq:K|pair:T:P)");
}

std::string FaultSelector::str() const {
    switch (kind) {
    case Kind::random: return "random";
    case Kind::frequent: return fmt::format("freq:{}", rank);
    case Kind::pair: return fmt::format("pair:{}:{}", trueLabel, predictedLabel);
    }
    return "random";
}

TrainConfig ScenarioConfig::defaultRetrainConfig() {
    TrainConfig c;
    c.mode = TrainMode::retrain;
    c.learningRate = 0.01;
    c.momentum = 0.9;
    c.batchSize = 32;
    c.maxEpochs = 20;
    c.patienceDecreases = 2;
    return c;
}

void ScenarioConfig::set(std::string_view key, std::string_view value) {
    if (key == "scenario") scenario = scenarioFromString(value);
    else if (key == "repeats") repeats = parseValue<std::size_t>(key, value);
    else if (key == "pos_count") posCount = parseValue<std::size_t>(key, value);
    else if (key == "neg_count") negCount = parseValue<std::size_t>(key, value);
    else if (key == "fault") fault = FaultSelector::parse(value);
    else if (key == "master_seed" || key == "seed") masterSeed = parseValue<std::uint64_t>(key, value);
    else if (key == "loc_method") loc.method = locMethodFromString(value);
    else if (key == "candidate_multiplier") loc.candidateMultiplier = parseValue<std::size_t>(key, value);
    else if (key == "phi") swarm.phi1 = swarm.phi2 = parseValue<double>(key, value);
    else if (key == "pop_size") swarm.popSize = parseValue<std::size_t>(key, value);
    else if (key == "max_iters") swarm.maxIters = parseValue<std::size_t>(key, value);
    else if (key == "stagnation_limit") swarm.stagnationLimit = parseValue<std::size_t>(key, value);
    else if (key == "threads") swarm.threads = parseValue<std::size_t>(key, value);
    else if (key == "velocity_clamp") {
        if (value == "symmetric") swarm.clamp = VelocityClamp::symmetric;
        else if (value == "band") swarm.clamp = VelocityClamp::band;
        else throw std::invalid_argument("velocity_clamp must be symmetric or band");
    }
    else if (key == "retrain_learning_rate") retrain.learningRate = parseValue<double>(key, value);
    else if (key == "retrain_momentum") retrain.momentum = parseValue<double>(key, value);
    else if (key == "retrain_batch_size") retrain.batchSize = parseValue<std::size_t>(key, value);
    else if (key == "retrain_max_epochs") retrain.maxEpochs = parseValue<std::size_t>(key, value);
    else if (key == "retrain_patience") retrain.patienceDecreases = parseValue<std::size_t>(key, value);
    else if (key == "adaptive_attempts") adaptiveAttempts = parseValue<std::size_t>(key, value);
    else if (key == "model") modelPath = std::string(value);
    else if (key == "train") trainPath = std::string(value);
    else if (key == "test") testPath = std::string(value);
    else if (key == "out") outDir = std::string(value);
    else throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
}

void ScenarioConfig::validate() const {
    if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
    if (posCount < 1) throw std::invalid_argument("pos_count must be >= 1");
    if (negCount < 1) throw std::invalid_argument("neg_count must be >= 1");
    if (loc.candidateMultiplier < 1) throw std::invalid_argument("candidate_multiplier must be >= 1");
    swarm.validate();
    retrain.validate();
}

std::string ScenarioConfig::snapshot() const {
    std::string s;
    auto line = [&](std::string_view key, const auto& value) { s += fmt::format("{} = {}\n", key, value); };
    line("scenario", toString(scenario));
    line("repeats", repeats);
    line("pos_count", posCount);
    line("neg_count", negCount);
    line("fault", fault.str());
    line("master_seed", masterSeed);
    line("loc_method", toString(loc.method));
    line("candidate_multiplier", loc.candidateMultiplier);
    line("phi", swarm.phi1);
    line("pop_size", swarm.popSize);
    line("max_iters", swarm.maxIters);
    line("stagnation_limit", swarm.stagnationLimit);
    line("velocity_clamp", toString(swarm.clamp));
    line("retrain_learning_rate", retrain.learningRate);
    line("retrain_momentum", retrain.momentum);
    line("retrain_batch_size", retrain.batchSize);
    line("retrain_max_epochs", retrain.maxEpochs);
    line("retrain_patience", retrain.patienceDecreases);
    line("adaptive_attempts", adaptiveAttempts);
    line("model", modelPath.string());
    line("train", trainPath.string());
    line("test", testPath.string());
    return s;
}

ScenarioConfig parseConfig(std::string_view text, ScenarioConfig base) {
    std::size_t lineNo = 0;
    while (!text.empty()) {
        ++lineNo;
        auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw std::invalid_argument(fmt::format("config line {}: expected 'key = value'", lineNo));
        }
        try {
            base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(fmt::format("config line {}: {}", lineNo, e.what()));
        }
    }
    return base;
}

std::uint64_t runSeed(std::uint64_t masterSeed, std::string_view scenarioName, std::size_t runIndex) {
    return deriveSeed(masterSeed, {hashString(scenarioName), runIndex});
}

namespace {

Dataset gather(const Dataset& data, std::span<const std::size_t> ids) {
    Dataset out;
    out.reserve(ids.size());
    for (auto id : ids) out.push_back(data[id]);
    return out;
}

std::vector<std::size_t> samplePositiveIds(const std::vector<int>& preds, const Dataset& data, std::size_t count,
                                           Rng& rng) {
    std::vector<std::size_t> correct;
    for (std::size_t k = 0; k < data.size(); ++k) {
        if (preds[k] == data[k].label) correct.push_back(k);
    }
    if (correct.size() < count) {
        throw ScenarioError(fmt::format("need {} correctly classified training inputs but only {} exist "
                                        "(deficit {})", count, correct.size(), count - correct.size()));
    }
    std::vector<std::size_t> picked;
    std::sample(correct.begin(), correct.end(), std::back_inserter(picked), count, rng);
    return picked;
}

} // namespace

InputSets sampleInputSets(const NetworkModel& model, const Dataset& trainSet, std::size_t posCount,
                          std::size_t negCount, const FaultSelector& fault, std::uint64_t seed) {
    const auto preds = predictAll(model, trainSet);
    InputSets sets;

    if (fault.kind == FaultSelector::Kind::frequent) {
        auto types = topFaultTypes(confusion(model, trainSet), fault.rank);
        if (types.size() < fault.rank) {
            throw ScenarioError(fmt::format("fault rank {} requested but only {} fault types exist", fault.rank,
                                            types.size()));
        }
        sets.target = types[fault.rank - 1];
    } else if (fault.kind == FaultSelector::Kind::pair) {
        const auto classes = static_cast<int>(model.classCount());
        if (fault.trueLabel < 0 || fault.trueLabel >= classes || fault.predictedLabel < 0 ||
            fault.predictedLabel >= classes) {
            throw ScenarioError(fmt::format("fault pair {} is outside the model's labels", fault.str()));
        }
        auto cm = confusion(model, trainSet);
        sets.target = FaultType{fault.trueLabel, fault.predictedLabel,
                                cm.at(static_cast<std::size_t>(fault.trueLabel),
                                      static_cast<std::size_t>(fault.predictedLabel))};
    }

    std::vector<std::size_t> wrong;
    for (std::size_t k = 0; k < trainSet.size(); ++k) {
        if (preds[k] == trainSet[k].label) continue;
        if (sets.target && (trainSet[k].label != sets.target->trueLabel || preds[k] != sets.target->predictedLabel)) {
            continue;
        }
        wrong.push_back(k);
    }
    if (wrong.size() < negCount) {
        throw ScenarioError(fmt::format("need {} faulty inputs{} but only {} exist (deficit {})", negCount,
                                        sets.target ? " of type " + std::to_string(sets.target->trueLabel) + "->" +
                                                          std::to_string(sets.target->predictedLabel)
                                                    : std::string(),
                                        wrong.size(), negCount - wrong.size()));
    }

    Rng rng(seed);
    sets.positiveIds = samplePositiveIds(preds, trainSet, posCount, rng);
    std::sample(wrong.begin(), wrong.end(), std::back_inserter(sets.negativeIds), negCount, rng);
    sets.positives = gather(trainSet, sets.positiveIds);
    sets.negatives = gather(trainSet, sets.negativeIds);
    return sets;
}

// ---------------------------------------------------------------------------
// Corrective scenarios

namespace {

std::vector<std::string> methodsFor(const ScenarioConfig& config) {
    switch (config.scenario) {
    case Scenario::rq2LocCompare: return {"loc", "gl", "rs"};
    case Scenario::rq4RetrainCompare: return {std::string(toString(config.loc.method)), "retrain"};
    default: return {std::string(toString(config.loc.method))};
    }
}

struct Subject {
    NetworkModel model;
    Dataset train;
    Dataset test;
};

Subject loadSubject(const ScenarioConfig& config, bool needTest) {
    if (config.modelPath.empty()) throw std::invalid_argument("no model path configured");
    if (config.trainPath.empty()) throw std::invalid_argument("no training dataset path configured");
    if (needTest && config.testPath.empty()) {
        throw std::invalid_argument(fmt::format("scenario {} needs a test dataset", toString(config.scenario)));
    }
    Subject s{loadModel(readFile(config.modelPath)), loadDataset(readFile(config.trainPath)).rows, {}};
    if (!config.testPath.empty()) s.test = loadDataset(readFile(config.testPath)).rows;
    return s;
}

} // namespace

CorrectiveReport runCorrective(const ScenarioConfig& config, const NetworkModel& model, const Dataset& trainSet,
                               const Dataset& testSet) {
    config.validate();
    if (config.scenario == Scenario::rq5Adaptive) throw std::invalid_argument("rq5 is run by runAdaptive");
    if (config.scenario == Scenario::rq4RetrainCompare && testSet.empty()) {
        throw std::invalid_argument("rq4 needs a test dataset for the retraining stop rule");
    }
    CorrectiveReport report;
    report.config = config;
    report.trainAccuracy = accuracy(model, trainSet);
    report.testAccuracy = accuracy(model, testSet);
    const auto cmTrain = confusion(model, trainSet);
    const auto cmTest = confusion(model, testSet);
    const auto methods = methodsFor(config);
    const auto scenarioName = toString(config.scenario);

    for (std::size_t r = 0; r < config.repeats; ++r) {
        CorrectiveRun run;
        run.index = r;
        run.seed = runSeed(config.masterSeed, scenarioName, r);
        try {
            auto sets = sampleInputSets(model, trainSet, config.posCount, config.negCount, config.fault,
                                        deriveSeed(run.seed, {hashString("inputs")}));
            run.target = sets.target;
            run.positiveIds = sets.positiveIds;
            run.negativeIds = sets.negativeIds;
            for (const auto& name : methods) {
                MethodRun mr;
                mr.method = name;
                NetworkModel after;
                if (name == "retrain") {
                    auto rc = config.retrain;
                    rc.mode = TrainMode::retrain;
                    rc.seed = deriveSeed(run.seed, {hashString("retrain")});
                    auto rt = retrainBaseline(model, sets.negatives, sets.positives, testSet, rc);
                    after = std::move(rt.model);
                    mr.retrainLog = std::move(rt.log);
                } else {
                    auto lc = config.loc;
                    lc.method = locMethodFromString(name);
                    auto sc = config.swarm;
                    sc.seed = deriveSeed(run.seed, {hashString("swarm")});
                    auto res = repair(model, sets.negatives, sets.positives, lc, sc);
                    after = applyPatch(model, res.patch);
                    mr.fitnessBefore = res.before;
                    mr.fitnessAfter = res.after;
                    mr.patch = std::move(res.patch);
                    mr.trace = std::move(res.trace);
                    mr.localization = std::move(res.localization);
                }
                mr.outcome = rates(model, after, sets.negatives, sets.positives);
                withAccuracy(mr.outcome, model, after, trainSet, testSet);
                mr.trainDiff = labelDiff(model, after, trainSet, "train");
                mr.testDiff = labelDiff(model, after, testSet, "test");
                if (sets.target) {
                    const auto t = static_cast<std::size_t>(sets.target->trueLabel);
                    const auto p = static_cast<std::size_t>(sets.target->predictedLabel);
                    const auto cmAfter = confusion(after, trainSet);
                    mr.targetReduction = cellReduction(cmTrain, cmAfter, t, p);
                    mr.targetReductionTest = cellReduction(cmTest, confusion(after, testSet), t, p);
                    mr.offTargetChange = offTargetChange(cmTrain, cmAfter, t, p);
                }
                run.methods.push_back(std::move(mr));
            }
        } catch (const std::exception& e) {
            run.failed = true;
            run.error = e.what();
            run.methods.clear();
        }
        report.runs.push_back(std::move(run));
    }

    for (std::size_t m = 0; m < methods.size(); ++m) {
        std::vector<RepairOutcome> outcomes;
        for (const auto& run : report.runs) {
            if (!run.failed) outcomes.push_back(run.methods[m].outcome);
        }
        MethodSummary ms{methods[m], {}};
        if (!outcomes.empty()) ms.summary = aggregate(outcomes);
        report.summaries.push_back(ms);
    }
    return report;
}

CorrectiveReport runCorrective(const ScenarioConfig& config) {
    auto subject = loadSubject(config, config.scenario == Scenario::rq4RetrainCompare);
    auto report = runCorrective(config, subject.model, subject.train, subject.test);
    if (!config.outDir.empty()) writeCorrectiveReport(report, config.outDir);
    return report;
}

// ---------------------------------------------------------------------------
// Adaptive scenario

AdaptiveState runAdaptive(const ScenarioConfig& config, const NetworkModel& model, const Dataset& trainSet,
                          const Dataset& testSet) {
    config.validate();
    AdaptiveState state;
    state.initialModel = model;
    state.currentModel = model;
    const auto seed = runSeed(config.masterSeed, toString(Scenario::rq5Adaptive), 0);

    std::vector<std::size_t> order(testSet.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng splitRng(deriveSeed(seed, {hashString("split")}));
    std::shuffle(order.begin(), order.end(), splitRng);
    const auto half = order.size() / 2;
    state.workloadIds.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half));
    state.validationIds.assign(order.begin() + static_cast<std::ptrdiff_t>(half), order.end());
    std::sort(state.workloadIds.begin(), state.workloadIds.end());
    std::sort(state.validationIds.begin(), state.validationIds.end());
    const auto valSet = gather(testSet, state.validationIds);

    std::vector<std::size_t> faults;
    for (auto id : state.workloadIds) {
        if (predict(model, testSet[id].features) != testSet[id].label) faults.push_back(id);
    }
    if (faults.empty()) {
        state.notes.push_back("the model misclassifies nothing in the workload half; no attempts made");
    } else if (faults.size() < config.adaptiveAttempts) {
        state.notes.push_back(fmt::format("only {} faults available in the workload half; attempting all",
                                          faults.size()));
    }
    Rng pickRng(deriveSeed(seed, {hashString("faults")}));
    std::vector<std::size_t> picked;
    std::sample(faults.begin(), faults.end(), std::back_inserter(picked),
                std::min(config.adaptiveAttempts, faults.size()), pickRng);
    std::shuffle(picked.begin(), picked.end(), pickRng);

    state.initialTrainAcc = accuracy(model, trainSet);
    state.initialValAcc = accuracy(model, valSet);
    double trainAcc = state.initialTrainAcc;
    double valAcc = state.initialValAcc;

    for (std::size_t k = 0; k < picked.size(); ++k) {
        AttemptRecord rec;
        rec.attempt = k;
        rec.inputId = picked[k];
        const auto& fault = testSet[picked[k]];
        rec.label = fault.label;
        rec.predictedBefore = predict(state.currentModel, fault.features);
        if (rec.predictedBefore == fault.label) {
            rec.alreadyCorrect = true;
        } else {
            const auto attemptSeed = deriveSeed(seed, {hashString("attempt"), k});
            Rng posRng(deriveSeed(attemptSeed, {hashString("inputs")}));
            const auto preds = predictAll(state.currentModel, trainSet);
            const auto positives = gather(trainSet, samplePositiveIds(preds, trainSet, config.posCount, posRng));
            const Dataset negatives{fault};

            auto sc = config.swarm;
            sc.seed = deriveSeed(attemptSeed, {hashString("swarm")});
            auto res = repair(state.currentModel, negatives, positives, config.loc, sc);
            auto after = applyPatch(state.currentModel, res.patch);
            rec.outcome = rates(state.currentModel, after, negatives, positives);
            rec.succeeded = rec.outcome.success;
            rec.trainDiff = labelDiff(state.currentModel, after, trainSet, "train");
            rec.valDiff = labelDiff(state.currentModel, after, valSet, "validation");
            rec.patch = std::move(res.patch);
            rec.trace = std::move(res.trace);
            if (rec.succeeded) {
                state.currentModel = std::move(after);
                trainAcc = accuracy(state.currentModel, trainSet);
                valAcc = accuracy(state.currentModel, valSet);
            }
        }
        rec.trainAcc = trainAcc;
        rec.valAcc = valAcc;
        state.attemptLog.push_back(std::move(rec));
    }

    for (auto id : picked) {
        if (predict(state.currentModel, testSet[id].features) != testSet[id].label) {
            state.remainingFaults.push_back(id);
        }
    }
    return state;
}

AdaptiveState runAdaptive(const ScenarioConfig& config) {
    auto subject = loadSubject(config, true);
    auto state = runAdaptive(config, subject.model, subject.train, subject.test);
    if (!config.outDir.empty()) writeAdaptiveReport(config, state, config.outDir);
    return state;
}

} // namespace nnrepair
