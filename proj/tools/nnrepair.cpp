#include "nnrepair/driver.hpp"
#include "nnrepair/errors.hpp"
#include "nnrepair/model_io.hpp"
#include "nnrepair/random.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

using namespace nnrepair;
namespace fs = std::filesystem;

namespace {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

DatasetFile readDataset(const fs::path& path) { return loadDataset(readFile(path)); }

void requireFile(const fs::path& path, std::string_view what) {
    if (path.empty()) throw ConfigError(fmt::format("--{} is required", what));
    if (!fs::exists(path)) throw ConfigError(fmt::format("{} file '{}' does not exist", what, path.string()));
}

struct GenOptions {
    SyntheticSpec spec;
    fs::path out;
};

struct TrainOptions {
    fs::path dataset;
    fs::path test;
    fs::path out;
    fs::path log;
    std::vector<std::size_t> hidden{64, 128};
    TrainConfig config;
    std::string mode = "under";
    double valFraction = 0.2;
    std::uint64_t initSeed = 0;
};

struct ScenarioFlags {
    std::string configFile;
    std::optional<std::string> model, dataset, test, out, locMethod, fault;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> posCount, negCount, repeats, threads;
};

void addScenarioFlags(CLI::App* app, ScenarioFlags& f) {
    app->add_option("--config", f.configFile, "key = value config file");
    app->add_option("--model", f.model, "model file (.anet)");
    app->add_option("--dataset", f.dataset, "training dataset (.adat)");
    app->add_option("--test", f.test, "test dataset (.adat)");
    app->add_option("--out", f.out, "output path");
    app->add_option("--loc-method", f.locMethod, "loc|gl|rs");
    app->add_option("--fault", f.fault, "random|freq:K|pair:T:P");
    app->add_option("--seed", f.seed, "master seed");
    app->add_option("--pos-count", f.posCount, "|I_pos|");
    app->add_option("--neg-count", f.negCount, "|I_neg|");
    app->add_option("--repeats", f.repeats, "independent runs");
    app->add_option("--threads", f.threads, "swarm evaluation threads");
}

ScenarioConfig buildConfig(const ScenarioFlags& f, std::optional<Scenario> scenario) {
    ScenarioConfig config;
    if (scenario) {
        config.scenario = *scenario;
        if (*scenario == Scenario::rq3FaultTypes || *scenario == Scenario::rq4RetrainCompare) {
            config.negCount = 5;
            config.fault = FaultSelector::parse("freq:1");
        }
    }
    try {
        if (!f.configFile.empty()) {
            if (!fs::exists(f.configFile)) throw ConfigError("config file '" + f.configFile + "' does not exist");
            const auto bytes = readFile(f.configFile);
            config = parseConfig(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), config);
            if (scenario && config.scenario != *scenario) {
                throw ConfigError(fmt::format("config file selects scenario {} but {} was requested",
                                              toString(config.scenario), toString(*scenario)));
            }
        }
        if (f.model) config.modelPath = *f.model;
        if (f.dataset) config.trainPath = *f.dataset;
        if (f.test) config.testPath = *f.test;
        if (f.out) config.outDir = *f.out;
        if (f.locMethod) config.loc.method = locMethodFromString(*f.locMethod);
        if (f.fault) config.fault = FaultSelector::parse(*f.fault);
        if (f.seed) config.masterSeed = *f.seed;
        if (f.posCount) config.posCount = *f.posCount;
        if (f.negCount) config.negCount = *f.negCount;
        if (f.repeats) config.repeats = *f.repeats;
        if (f.threads) config.swarm.threads = *f.threads;
        config.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return config;
}

int runGenData(const GenOptions& o) {
    if (o.out.empty()) throw ConfigError("--out is required");
    const auto data = generateSynthetic(o.spec);
    writeFile(o.out / "train.adat", saveDataset(data.train, o.spec.featureDim, o.spec.classCount));
    writeFile(o.out / "test.adat", saveDataset(data.test, o.spec.featureDim, o.spec.classCount));
    fmt::print("wrote {} training and {} test rows to {}\n", data.train.size(), data.test.size(), o.out.string());
    return 0;
}

int runTrain(TrainOptions o) {
    requireFile(o.dataset, "dataset");
    if (o.out.empty()) throw ConfigError("--out is required");
    try {
        o.config.mode = trainModeFromString(o.mode);
        if (o.config.mode == TrainMode::retrain) throw std::invalid_argument("train supports --mode under|full");
        o.config.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    const auto file = readDataset(o.dataset);
    std::vector<std::size_t> dims{file.width};
    dims.insert(dims.end(), o.hidden.begin(), o.hidden.end());
    dims.push_back(file.classCount);
    auto model = initModel(dims, o.initSeed);

    Dataset trainSet = file.rows, valSet;
    if (o.config.mode == TrainMode::fullTrain) {
        std::tie(trainSet, valSet) = splitValidation(file.rows, o.valFraction, deriveSeed(o.config.seed, {1}));
    }
    auto result = train(std::move(model), trainSet, valSet, o.config);
    writeFile(o.out, saveModel(result.model));
    if (!o.log.empty()) writeTextFile(o.log, epochLogCsv(result.log));
    fmt::print("stop: {} after {} epochs\ntrain accuracy {:.4f}\n", result.stopReason, result.log.size(),
               accuracy(result.model, file.rows));
    if (!o.test.empty()) fmt::print("test accuracy {:.4f}\n", accuracy(result.model, readDataset(o.test).rows));
    return 0;
}

int runRepair(const ScenarioFlags& f) {
    auto config = buildConfig(f, std::nullopt);
    requireFile(config.modelPath, "model");
    requireFile(config.trainPath, "dataset");
    if (config.outDir.empty()) throw ConfigError("--out is required");
    const auto model = loadModel(readFile(config.modelPath));
    const auto data = readDataset(config.trainPath);
    const auto seed = runSeed(config.masterSeed, "repair", 0);
    const auto sets = sampleInputSets(model, data.rows, config.posCount, config.negCount, config.fault,
                                      deriveSeed(seed, {hashString("inputs")}));
    auto swarm = config.swarm;
    swarm.seed = deriveSeed(seed, {hashString("swarm")});
    const auto res = repair(model, sets.negatives, sets.positives, config.loc, swarm);
    const auto outcome = rates(model, applyPatch(model, res.patch), sets.negatives, sets.positives);
    writeFile(config.outDir, savePatch(res.patch));
    auto stem = config.outDir;
    stem.replace_extension();
    writeTextFile(stem.string() + "_trace.csv", traceCsv(res.trace));
    writeTextFile(stem.string() + "_localization.csv", localizationCsv(res.localization));
    fmt::print("localised {} weights, {} iterations ({})\n", res.localization.coords.size(),
               res.trace.iterationsRun, res.trace.stopReason);
    fmt::print("fitness {:.6f} -> {:.6f}\n", res.before.total, res.after.total);
    fmt::print("RR {:.4f} BR {:.4f} success {}\n", outcome.repairRate, outcome.breakRate, outcome.success);
    return 0;
}

struct EvalOptions {
    fs::path model, dataset, patch, out;
};

int runEvaluate(const EvalOptions& o) {
    requireFile(o.model, "model");
    requireFile(o.dataset, "dataset");
    const auto model = loadModel(readFile(o.model));
    const auto data = readDataset(o.dataset).rows;
    fmt::print("accuracy {:.4f}\n", accuracy(model, data));
    const auto before = confusion(model, data);
    for (const auto& t : topFaultTypes(before, 5)) {
        fmt::print("fault {} -> {}: {}\n", t.trueLabel, t.predictedLabel, t.instanceCount);
    }
    if (!o.out.empty()) writeTextFile(o.out / "confusion.csv", confusionCsv(before));
    if (!o.patch.empty()) {
        requireFile(o.patch, "patch");
        const auto after = applyPatch(model, loadPatch(readFile(o.patch), model));
        const auto diff = labelDiff(model, after, data, "dataset");
        fmt::print("patched accuracy {:.4f} (patched {}, broken {})\n", accuracy(after, data), diff.totalPatched(),
                   diff.totalBroken());
        if (!o.out.empty()) {
            writeTextFile(o.out / "confusion_patched.csv", confusionCsv(confusion(after, data)));
            writeTextFile(o.out / "label_diff.csv", labelDiffCsv(std::span(&diff, 1)));
        }
    }
    return 0;
}

int runExperiment(const std::string& name, const ScenarioFlags& f) {
    Scenario scenario;
    try {
        scenario = scenarioFromString(name);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    auto config = buildConfig(f, scenario);
    requireFile(config.modelPath, "model");
    requireFile(config.trainPath, "dataset");
    if (scenario == Scenario::rq4RetrainCompare || scenario == Scenario::rq5Adaptive) requireFile(config.testPath, "test");
    if (config.outDir.empty()) throw ConfigError("--out is required");

    if (scenario == Scenario::rq5Adaptive) {
        const auto state = runAdaptive(config);
        std::size_t successes = 0;
        for (const auto& a : state.attemptLog) successes += a.succeeded ? 1 : 0;
        for (const auto& n : state.notes) fmt::print("note: {}\n", n);
        fmt::print("{} attempts, {} succeeded\n", state.attemptLog.size(), successes);
    } else {
        const auto report = runCorrective(config);
        std::size_t failed = 0;
        for (const auto& r : report.runs) failed += r.failed ? 1 : 0;
        if (failed > 0) fmt::print("{} of {} runs failed; see runs.csv\n", failed, report.runs.size());
        for (const auto& s : report.summaries) {
            fmt::print("{:8} SR {:.3f} RR {:.4f} BR {:.4f} ({} runs)\n", s.method, s.summary.successRate,
                       s.summary.meanRepairRate, s.summary.meanBreakRate, s.summary.runs);
        }
    }
    fmt::print("report written to {}\n", config.outDir.string());
    return 0;
}

int runExport(const fs::path& report, const fs::path& out) {
    if (report.empty()) throw ConfigError("--report is required");
    const auto csv = exportSummaryCsv(report);
    if (out.empty()) std::cout << csv;
    else writeTextFile(out, csv);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Search-based repair of the final layer of dense classifiers"};
    app.require_subcommand(1);

    GenOptions gen;
    auto* genCmd = app.add_subcommand("gen-data", "generate a synthetic clustered dataset");
    genCmd->add_option("--out", gen.out, "output directory")->required();
    genCmd->add_option("--classes", gen.spec.classCount)->capture_default_str();
    genCmd->add_option("--features", gen.spec.featureDim)->capture_default_str();
    genCmd->add_option("--per-class", gen.spec.perClassCount)->capture_default_str();
    genCmd->add_option("--test-per-class", gen.spec.testPerClassCount, "0 = per-class / 5");
    genCmd->add_option("--spread", gen.spec.clusterSpread)->capture_default_str();
    genCmd->add_option("--overlap", gen.spec.overlapFactor)->capture_default_str();
    genCmd->add_option("--seed", gen.spec.seed)->capture_default_str();

    TrainOptions tr;
    auto* trainCmd = app.add_subcommand("train", "train a dense classifier");
    trainCmd->add_option("--dataset", tr.dataset, "training dataset")->required();
    trainCmd->add_option("--test", tr.test, "test dataset, reported only");
    trainCmd->add_option("--out", tr.out, "model output (.anet)")->required();
    trainCmd->add_option("--log", tr.log, "epoch log CSV");
    trainCmd->add_option("--mode", tr.mode, "under|full")->capture_default_str();
    trainCmd->add_option("--hidden", tr.hidden, "hidden layer widths")->delimiter(',');
    trainCmd->add_option("--lr", tr.config.learningRate)->capture_default_str();
    trainCmd->add_option("--momentum", tr.config.momentum)->capture_default_str();
    trainCmd->add_option("--batch", tr.config.batchSize)->capture_default_str();
    trainCmd->add_option("--epochs", tr.config.maxEpochs)->capture_default_str();
    trainCmd->add_option("--cap", tr.config.accuracyCap, "under: accuracy cap")->capture_default_str();
    trainCmd->add_option("--patience", tr.config.patienceDecreases)->capture_default_str();
    trainCmd->add_option("--val-fraction", tr.valFraction)->capture_default_str();
    trainCmd->add_option("--seed", tr.config.seed, "minibatch order seed")->capture_default_str();
    trainCmd->add_option("--init-seed", tr.initSeed, "weight initialisation seed")->capture_default_str();

    ScenarioFlags repairFlags;
    auto* repairCmd = app.add_subcommand("repair", "localise and repair one sampled fault set");
    addScenarioFlags(repairCmd, repairFlags);

    EvalOptions ev;
    auto* evalCmd = app.add_subcommand("evaluate", "accuracy, confusion and optional patch effect");
    evalCmd->add_option("--model", ev.model)->required();
    evalCmd->add_option("--dataset", ev.dataset)->required();
    evalCmd->add_option("--patch", ev.patch);
    evalCmd->add_option("--out", ev.out, "directory for CSV output");

    std::string scenarioName;
    ScenarioFlags expFlags;
    auto* expCmd = app.add_subcommand("experiment", "run a scenario (rq1..rq5)");
    expCmd->add_option("scenario", scenarioName, "rq1|rq2|rq3|rq4|rq5")->required();
    addScenarioFlags(expCmd, expFlags);

    fs::path reportDir, exportOut;
    auto* exportCmd = app.add_subcommand("export-report", "summary CSV of a report directory");
    exportCmd->add_option("--report", reportDir)->required();
    exportCmd->add_option("--out", exportOut, "CSV path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*genCmd) return runGenData(gen);
        if (*trainCmd) return runTrain(tr);
        if (*repairCmd) return runRepair(repairFlags);
        if (*evalCmd) return runEvaluate(ev);
        if (*expCmd) return runExperiment(scenarioName, expFlags);
        if (*exportCmd) return runExport(reportDir, exportOut);
    } catch (const ConfigError& e) {
        fmt::print(stderr, "configuration error: {}\n", e.what());
        return 2;
    } catch (const ParseError& e) {
        fmt::print(stderr, "input error: {}\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
    return 0;
}
