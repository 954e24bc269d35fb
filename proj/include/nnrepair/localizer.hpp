#pragma once

#include "nnrepair/network.hpp"
#include "nnrepair/patch.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nnrepair {

enum class LocMethod { paretoLoc, gradientOnly, randomSelect };

// CLI spellings: loc, gl, rs.
std::string_view toString(LocMethod method);
LocMethod locMethodFromString(std::string_view name);

struct LocConfig {
    LocMethod method = LocMethod::paretoLoc;
    // N_g = |I_neg| * candidateMultiplier.
    std::size_t candidateMultiplier = 20;
};

struct GradientScore {
    WeightCoord coord;
    double gradLoss = 0.0;
};

struct LocalizedWeight {
    WeightCoord coord;
    double gradLoss = 0.0;
    double fwdImp = 0.0;

    friend bool operator==(const LocalizedWeight&, const LocalizedWeight&) = default;
};

struct Localization {
    std::vector<WeightCoord> coords;
    // Scored candidates; for paretoLoc this is the top-N_g pool.
    std::vector<LocalizedWeight> pool;
    std::size_t candidateCount = 0;
    // Human-readable remarks (e.g. N_g clamped to the weight count).
    std::vector<std::string> notes;
};

// Mean over negatives of |dL/dw_ij|, one entry per final kernel weight in
// row-major (i, j) order.
std::vector<GradientScore> gradientLossScores(const NetworkModel& model, const Dataset& negatives);

// Mean over negatives of |o_i(x) * w_ij|.
double forwardImpact(const NetworkModel& model, const Dataset& negatives, WeightCoord coord);
double forwardImpact(const ActivationCache& cache, const DenseLayer& finalLayer, WeightCoord coord);

// Non-dominated subset with both scores maximised; keeps input order and
// keeps every copy of a point that ties on both scores.
std::vector<LocalizedWeight> paretoFront(std::span<const LocalizedWeight> pool);

// Top-n entries by descending gradLoss (stable on coordinate order),
// optionally extended to every entry tied with the n-th score.
std::vector<GradientScore> topByGradient(std::vector<GradientScore> scores, std::size_t n, bool includeTies);

Localization localize(const NetworkModel& model, const Dataset& negatives, const LocConfig& config,
                      std::uint64_t seed);

// i,j,gradLoss,fwdImp,selected
std::string localizationCsv(const Localization& loc);

} // namespace nnrepair
