#include "nnrepair/driver.hpp"

#include "nnrepair/errors.hpp"
#include "nnrepair/model_io.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <string>

namespace nnrepair {

namespace {

using nlohmann::ordered_json;

ordered_json toJson(const RepairOutcome& o) {
    return {{"repairRate", o.repairRate},       {"breakRate", o.breakRate},
            {"success", o.success},             {"patched", o.patched},
            {"broken", o.broken},               {"negCount", o.negCount},
            {"posCount", o.posCount},           {"accTrainBefore", o.accTrainBefore},
            {"accTrainAfter", o.accTrainAfter}, {"accTestBefore", o.accTestBefore},
            {"accTestAfter", o.accTestAfter}};
}

ordered_json toJson(const Summary& s) {
    return {{"runs", s.runs},
            {"successes", s.successes},
            {"successRate", s.successRate},
            {"meanRepairRate", s.meanRepairRate},
            {"meanBreakRate", s.meanBreakRate},
            {"meanAccTrainBefore", s.meanAccTrainBefore},
            {"meanAccTrainAfter", s.meanAccTrainAfter},
            {"meanAccTestBefore", s.meanAccTestBefore},
            {"meanAccTestAfter", s.meanAccTestAfter}};
}

ordered_json toJson(const FitnessValue& f) {
    return {{"total", f.total},
            {"nPatched", f.nPatched},
            {"nIntact", f.nIntact},
            {"lossNeg", f.lossNeg},
            {"lossPos", f.lossPos}};
}

ordered_json toJson(const LabelDiff& d) {
    ordered_json per = ordered_json::array();
    for (const auto& c : d.perLabel) per.push_back({{"patched", c.patched}, {"broken", c.broken}});
    return {{"split", d.split}, {"patched", d.totalPatched()}, {"broken", d.totalBroken()}, {"perLabel", per}};
}

ordered_json toJson(const Patch& p) {
    ordered_json entries = ordered_json::array();
    for (const auto& e : p.entries) entries.push_back({{"layer", e.layer}, {"i", e.i}, {"j", e.j}, {"value", e.value}});
    return {{"seed", p.meta.seed}, {"method", p.meta.method}, {"fitness", p.meta.fitness}, {"entries", entries}};
}

template <typename T>
ordered_json optionalJson(const std::optional<T>& v) {
    return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::string runDir(std::size_t index) { return fmt::format("run_{:03}", index); }

std::string idsCsv(const CorrectiveRun& run) {
    std::string out = "set,row\n";
    for (auto id : run.negativeIds) out += fmt::format("neg,{}\n", id);
    for (auto id : run.positiveIds) out += fmt::format("pos,{}\n", id);
    return out;
}

std::string chomp(std::string s) {
    if (!s.empty() && s.back() == '\n') s.pop_back();
    return s;
}

std::string num(double v) { return fmt::format("{:.6f}", v); }

std::string optNum(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

} // namespace

void writeCorrectiveReport(const CorrectiveReport& report, const std::filesystem::path& dir) {
    const auto& config = report.config;
    writeTextFile(dir / "config.txt", config.snapshot());

    ordered_json runs = ordered_json::array();
    const auto outcomeHeader = chomp(outcomeCsvHeader());
    const std::string blanks(static_cast<std::size_t>(std::count(outcomeHeader.begin(), outcomeHeader.end(), ',')),
                             ',');
    std::string runsCsv = "run,seed,method,status," + outcomeHeader +
                          ",targetReduction,targetReductionTest,offTargetChange,error\n";
    for (const auto& run : report.runs) {
        const auto sub = dir / "runs" / runDir(run.index);
        ordered_json jr = {{"index", run.index}, {"seed", run.seed}, {"failed", run.failed}};
        if (run.failed) {
            jr["error"] = run.error;
            runsCsv += fmt::format("{},{},,failed,{},,,,\"{}\"\n", run.index, run.seed, blanks, run.error);
            runs.push_back(jr);
            continue;
        }
        jr["target"] = run.target ? ordered_json{{"trueLabel", run.target->trueLabel},
                                                 {"predictedLabel", run.target->predictedLabel},
                                                 {"instanceCount", run.target->instanceCount}}
                                  : ordered_json(nullptr);
        jr["negativeIds"] = run.negativeIds;
        jr["positiveIds"] = run.positiveIds;
        writeTextFile(sub / "inputs.csv", idsCsv(run));

        ordered_json methods = ordered_json::array();
        for (const auto& m : run.methods) {
            ordered_json jm = {{"method", m.method},
                               {"outcome", toJson(m.outcome)},
                               {"trainDiff", toJson(m.trainDiff)},
                               {"testDiff", toJson(m.testDiff)},
                               {"targetReduction", optionalJson(m.targetReduction)},
                               {"targetReductionTest", optionalJson(m.targetReductionTest)},
                               {"offTargetChange", optionalJson(m.offTargetChange)}};
            const std::vector<LabelDiff> diffs{m.trainDiff, m.testDiff};
            writeTextFile(sub / (m.method + "_label_diff.csv"), labelDiffCsv(diffs));
            if (m.patch) {
                jm["fitnessBefore"] = toJson(m.fitnessBefore);
                jm["fitnessAfter"] = toJson(m.fitnessAfter);
                jm["patch"] = toJson(*m.patch);
                writeFile(sub / (m.method + ".apatch"), savePatch(*m.patch));
            }
            if (m.trace) {
                jm["iterations"] = m.trace->iterationsRun;
                jm["stopReason"] = m.trace->stopReason;
                jm["notes"] = m.trace->notes;
                writeTextFile(sub / (m.method + "_trace.csv"), traceCsv(*m.trace));
            }
            if (m.localization) {
                jm["localizedWeights"] = m.localization->coords.size();
                jm["candidateCount"] = m.localization->candidateCount;
                writeTextFile(sub / (m.method + "_localization.csv"), localizationCsv(*m.localization));
            }
            if (m.method == "retrain") {
                jm["epochs"] = m.retrainLog.size();
                writeTextFile(sub / "retrain_epochs.csv", epochLogCsv(m.retrainLog));
            }
            methods.push_back(jm);
            runsCsv += fmt::format("{},{},{},ok,{},{},{},{},\n", run.index, run.seed, m.method,
                                   chomp(outcomeCsvRow(m.outcome)), optNum(m.targetReduction),
                                   optNum(m.targetReductionTest),
                                   m.offTargetChange ? std::to_string(*m.offTargetChange) : std::string());
        }
        jr["methods"] = methods;
        runs.push_back(jr);
    }

    ordered_json summaries = ordered_json::array();
    for (const auto& s : report.summaries) {
        auto js = toJson(s.summary);
        js["method"] = s.method;
        summaries.push_back(js);
    }

    ordered_json root = {{"schema", kReportSchema},
                         {"kind", "corrective"},
                         {"scenario", toString(config.scenario)},
                         {"masterSeed", config.masterSeed},
                         {"repeats", config.repeats},
                         {"trainAccuracy", report.trainAccuracy},
                         {"testAccuracy", report.testAccuracy},
                         {"summaries", summaries},
                         {"runs", runs}};
    writeTextFile(dir / "report.json", root.dump(2) + "\n");
    writeTextFile(dir / "runs.csv", runsCsv);
    writeTextFile(dir / "aggregate.csv", exportSummaryCsv(dir));
}

void writeAdaptiveReport(const ScenarioConfig& config, const AdaptiveState& state,
                         const std::filesystem::path& dir) {
    writeTextFile(dir / "config.txt", config.snapshot());
    std::string csv = "attempt,inputId,label,predictedBefore,status,repairRate,breakRate,trainAcc,valAcc\n";
    ordered_json attempts = ordered_json::array();
    writeFile(dir / "models" / "initial.anet", saveModel(state.initialModel));
    NetworkModel snapshot = state.initialModel;
    for (const auto& a : state.attemptLog) {
        const auto status = a.alreadyCorrect ? "already_correct" : a.succeeded ? "success" : "failed";
        csv += fmt::format("{},{},{},{},{},{},{},{},{}\n", a.attempt, a.inputId, a.label, a.predictedBefore, status,
                           num(a.outcome.repairRate), num(a.outcome.breakRate), num(a.trainAcc), num(a.valAcc));
        ordered_json ja = {{"attempt", a.attempt},   {"inputId", a.inputId},
                           {"label", a.label},       {"predictedBefore", a.predictedBefore},
                           {"status", status},       {"trainAcc", a.trainAcc},
                           {"valAcc", a.valAcc}};
        if (!a.alreadyCorrect) {
            ja["outcome"] = toJson(a.outcome);
            ja["trainDiff"] = toJson(a.trainDiff);
            ja["valDiff"] = toJson(a.valDiff);
            const auto sub = dir / "attempts" / fmt::format("attempt_{:02}", a.attempt);
            const std::vector<LabelDiff> diffs{a.trainDiff, a.valDiff};
            writeTextFile(sub / "label_diff.csv", labelDiffCsv(diffs));
            if (a.patch) {
                ja["patch"] = toJson(*a.patch);
                writeFile(sub / "patch.apatch", savePatch(*a.patch));
                if (a.succeeded) {
                    snapshot = applyPatch(snapshot, *a.patch);
                    writeFile(dir / "models" / fmt::format("attempt_{:02}.anet", a.attempt), saveModel(snapshot));
                }
            }
            if (a.trace) writeTextFile(sub / "trace.csv", traceCsv(*a.trace));
        }
        attempts.push_back(ja);
    }
    writeFile(dir / "models" / "final.anet", saveModel(state.currentModel));

    std::size_t successes = 0;
    for (const auto& a : state.attemptLog) successes += a.succeeded ? 1 : 0;
    ordered_json root = {{"schema", kReportSchema},
                         {"kind", "adaptive"},
                         {"scenario", toString(config.scenario)},
                         {"masterSeed", config.masterSeed},
                         {"attempts", state.attemptLog.size()},
                         {"successes", successes},
                         {"initialTrainAcc", state.initialTrainAcc},
                         {"initialValAcc", state.initialValAcc},
                         {"finalTrainAcc", state.attemptLog.empty() ? state.initialTrainAcc
                                                                    : state.attemptLog.back().trainAcc},
                         {"finalValAcc", state.attemptLog.empty() ? state.initialValAcc
                                                                  : state.attemptLog.back().valAcc},
                         {"workloadSize", state.workloadIds.size()},
                         {"validationSize", state.validationIds.size()},
                         {"remainingFaults", state.remainingFaults},
                         {"notes", state.notes},
                         {"log", attempts}};
    writeTextFile(dir / "report.json", root.dump(2) + "\n");
    writeTextFile(dir / "attempts.csv", csv);
    writeTextFile(dir / "aggregate.csv", exportSummaryCsv(dir));
}

std::string exportSummaryCsv(const std::filesystem::path& reportDir) {
    const auto bytes = readFile(reportDir / "report.json");
    ordered_json root;
    try {
        root = ordered_json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("{}: {}", (reportDir / "report.json").string(), e.what()));
    }
    try {
        if (root.at("schema").get<std::string>() != kReportSchema) {
            throw ParseError(fmt::format("unsupported report schema '{}'", root.at("schema").get<std::string>()));
        }
        const auto kind = root.at("kind").get<std::string>();
        if (kind == "corrective") {
            std::string out = "method,runs,successes,successRate,meanRepairRate,meanBreakRate,"
                              "meanAccTrainBefore,meanAccTrainAfter,meanAccTestBefore,meanAccTestAfter\n";
            for (const auto& s : root.at("summaries")) {
                out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", s.at("method").get<std::string>(),
                                   s.at("runs").get<std::size_t>(), s.at("successes").get<std::size_t>(),
                                   num(s.at("successRate").get<double>()), num(s.at("meanRepairRate").get<double>()),
                                   num(s.at("meanBreakRate").get<double>()),
                                   num(s.at("meanAccTrainBefore").get<double>()),
                                   num(s.at("meanAccTrainAfter").get<double>()),
                                   num(s.at("meanAccTestBefore").get<double>()),
                                   num(s.at("meanAccTestAfter").get<double>()));
            }
            return out;
        }
        if (kind == "adaptive") {
            return fmt::format("attempts,successes,initialTrainAcc,finalTrainAcc,initialValAcc,finalValAcc\n"
                               "{},{},{},{},{},{}\n",
                               root.at("attempts").get<std::size_t>(), root.at("successes").get<std::size_t>(),
                               num(root.at("initialTrainAcc").get<double>()),
                               num(root.at("finalTrainAcc").get<double>()),
                               num(root.at("initialValAcc").get<double>()), num(root.at("finalValAcc").get<double>()));
        }
        throw ParseError(fmt::format("unknown report kind '{}'", kind));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("malformed report: {}", e.what()));
    }
}

} // namespace nnrepair
