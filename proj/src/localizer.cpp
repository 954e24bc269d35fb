#include "nnrepair/localizer.hpp"

#include "nnrepair/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

namespace nnrepair {

std::string_view toString(LocMethod method) {
    switch (method) {
    case LocMethod::paretoLoc: return "loc";
    case LocMethod::gradientOnly: return "gl";
    case LocMethod::randomSelect: return "rs";
    }
    return "loc";
}

LocMethod locMethodFromString(std::string_view name) {
    if (name == "loc") return LocMethod::paretoLoc;
    if (name == "gl") return LocMethod::gradientOnly;
    if (name == "rs") return LocMethod::randomSelect;
    throw std::invalid_argument("unknown localisation method '" + std::string(name) + "' (expected loc|gl|rs)");
}

namespace {

void requireNegatives(const Dataset& negatives) {
    if (negatives.empty()) throw std::invalid_argument("localisation needs at least one negative input");
}

void requireCoord(const DenseLayer& finalLayer, WeightCoord c) {
    if (c.i >= finalLayer.inDim() || c.j >= finalLayer.outDim()) {
        throw std::out_of_range(fmt::format("weight ({}, {}) outside final kernel [{}, {}]", c.i, c.j,
                                            finalLayer.inDim(), finalLayer.outDim()));
    }
}

} // namespace

std::vector<GradientScore> gradientLossScores(const NetworkModel& model, const Dataset& negatives) {
    requireNegatives(negatives);
    const auto& last = model.finalLayer();
    const auto in = last.inDim(), out = last.outDim();
    std::vector<double> sum(in * out, 0.0);
    std::vector<double> p(out);
    for (const auto& x : negatives) {
        if (x.label < 0 || static_cast<std::size_t>(x.label) >= out) {
            throw std::out_of_range(fmt::format("label {} out of range", x.label));
        }
        auto o = penultimateActivation(model, x.features.values());
        headLogits(o, last, p);
        softmaxInPlace(p);
        p[static_cast<std::size_t>(x.label)] -= 1.0;
        for (std::size_t i = 0; i < in; ++i) {
            for (std::size_t j = 0; j < out; ++j) sum[i * out + j] += std::abs(static_cast<double>(o[i]) * p[j]);
        }
    }
    const double n = static_cast<double>(negatives.size());
    std::vector<GradientScore> scores;
    scores.reserve(in * out);
    for (std::size_t i = 0; i < in; ++i) {
        for (std::size_t j = 0; j < out; ++j) scores.push_back({{i, j}, sum[i * out + j] / n});
    }
    return scores;
}

double forwardImpact(const ActivationCache& cache, const DenseLayer& finalLayer, WeightCoord coord) {
    requireCoord(finalLayer, coord);
    if (cache.rows() == 0) throw std::invalid_argument("forward impact needs at least one negative input");
    const double w = finalLayer.kernel.at(coord.i, coord.j);
    double total = 0.0;
    for (std::size_t r = 0; r < cache.rows(); ++r) total += std::abs(static_cast<double>(cache.row(r)[coord.i]) * w);
    return total / static_cast<double>(cache.rows());
}

double forwardImpact(const NetworkModel& model, const Dataset& negatives, WeightCoord coord) {
    requireNegatives(negatives);
    return forwardImpact(penultimate(model, negatives), model.finalLayer(), coord);
}

std::vector<LocalizedWeight> paretoFront(std::span<const LocalizedWeight> pool) {
    if (pool.empty()) throw std::invalid_argument("Pareto front of an empty pool");
    // Sweep in descending gradLoss. A point survives iff its fwdImp is the
    // maximum within its gradLoss group and strictly exceeds the best fwdImp
    // of every group with larger gradLoss.
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return pool[a].gradLoss > pool[b].gradLoss; });

    std::vector<bool> keep(pool.size(), false);
    double bestAbove = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < order.size();) {
        auto h = g;
        double groupMax = -std::numeric_limits<double>::infinity();
        while (h < order.size() && pool[order[h]].gradLoss == pool[order[g]].gradLoss) {
            groupMax = std::max(groupMax, pool[order[h]].fwdImp);
            ++h;
        }
        if (groupMax > bestAbove) {
            for (auto k = g; k < h; ++k) {
                if (pool[order[k]].fwdImp == groupMax) keep[order[k]] = true;
            }
            bestAbove = groupMax;
        }
        g = h;
    }
    std::vector<LocalizedWeight> front;
    for (std::size_t k = 0; k < pool.size(); ++k) {
        if (keep[k]) front.push_back(pool[k]);
    }
    return front;
}

std::vector<GradientScore> topByGradient(std::vector<GradientScore> scores, std::size_t n, bool includeTies) {
    std::stable_sort(scores.begin(), scores.end(),
                     [](const GradientScore& a, const GradientScore& b) { return a.gradLoss > b.gradLoss; });
    if (n >= scores.size()) return scores;
    auto cut = n;
    if (includeTies && n > 0) {
        while (cut < scores.size() && scores[cut].gradLoss == scores[n - 1].gradLoss) ++cut;
    }
    scores.resize(cut);
    return scores;
}

Localization localize(const NetworkModel& model, const Dataset& negatives, const LocConfig& config,
                      std::uint64_t seed) {
    requireNegatives(negatives);
    if (config.candidateMultiplier < 1) throw std::invalid_argument("candidateMultiplier must be >= 1");
    const auto& last = model.finalLayer();
    const auto weightCount = last.kernel.size();
    const auto cache = penultimate(model, negatives);
    auto scores = gradientLossScores(model, negatives);

    Localization loc;
    auto clamp = [&](std::size_t wanted, std::string_view what) {
        if (wanted > weightCount) {
            loc.notes.push_back(fmt::format("{} = {} exceeds the {} final-layer weights; clamped", what, wanted,
                                            weightCount));
            return weightCount;
        }
        return wanted;
    };
    auto score = [&](const GradientScore& s) {
        return LocalizedWeight{s.coord, s.gradLoss, forwardImpact(cache, last, s.coord)};
    };

    switch (config.method) {
    case LocMethod::paretoLoc: {
        const auto ng = clamp(negatives.size() * config.candidateMultiplier, "N_g");
        loc.candidateCount = ng;
        for (const auto& s : topByGradient(std::move(scores), ng, true)) loc.pool.push_back(score(s));
        for (const auto& w : paretoFront(loc.pool)) loc.coords.push_back(w.coord);
        break;
    }
    case LocMethod::gradientOnly: {
        const auto n = clamp(negatives.size(), "selection size");
        loc.candidateCount = n;
        for (const auto& s : topByGradient(std::move(scores), n, false)) {
            loc.pool.push_back(score(s));
            loc.coords.push_back(s.coord);
        }
        break;
    }
    case LocMethod::randomSelect: {
        const auto n = clamp(negatives.size(), "selection size");
        loc.candidateCount = n;
        std::vector<std::size_t> all(weightCount);
        std::iota(all.begin(), all.end(), std::size_t{0});
        std::vector<std::size_t> picked;
        Rng rng(seed);
        std::sample(all.begin(), all.end(), std::back_inserter(picked), n, rng);
        for (auto flat : picked) {
            const auto& s = scores[flat];
            loc.pool.push_back(score(s));
            loc.coords.push_back(s.coord);
        }
        break;
    }
    }
    return loc;
}

std::string localizationCsv(const Localization& loc) {
    std::set<WeightCoord> chosen(loc.coords.begin(), loc.coords.end());
    std::string out = "i,j,gradLoss,fwdImp,selected\n";
    for (const auto& w : loc.pool) {
        out += fmt::format("{},{},{:.9g},{:.9g},{}\n", w.coord.i, w.coord.j, w.gradLoss, w.fwdImp,
                           chosen.count(w.coord) ? 1 : 0);
    }
    return out;
}

} // namespace nnrepair
