#pragma once

#include "nnrepair/localizer.hpp"
#include "nnrepair/network.hpp"
#include "nnrepair/patch.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nnrepair {

// Constriction coefficient 2 / (phi - 2 + sqrt(phi^2 - 4 phi)); phi >= 4.
double chi(double phi);

enum class VelocityClamp {
    // |v| <= vHigh per component.
    symmetric,
    // |v| forced into [vLow, vHigh] per component, sign preserved.
    band,
};

struct SwarmConfig {
    double phi1 = 4.1;
    double phi2 = 4.1;
    std::size_t popSize = 100;
    std::size_t maxIters = 100;
    std::size_t stagnationLimit = 10;
    std::uint64_t seed = 0;
    VelocityClamp clamp = VelocityClamp::symmetric;
    // Fitness evaluations per iteration are split across this many threads.
    std::size_t threads = 1;

    void validate() const;
};

struct VelocityBounds {
    double wb = 0.0;
    double vLow = 0.0;
    double vHigh = 0.0;

    // wb = max(W) - min(W) over the final kernel; vLow = wb/5, vHigh = wb*5.
    static VelocityBounds fromModel(const NetworkModel& model);
    static VelocityBounds fromWidth(double wb);
};

struct FitnessValue {
    double total = 0.0;
    std::size_t nPatched = 0;
    std::size_t nIntact = 0;
    double lossNeg = 0.0;
    double lossPos = 0.0;

    // (nPatched+1)/(lossNeg+1) + (nIntact+1)/(lossPos+1)
    static FitnessValue make(std::size_t nPatched, std::size_t nIntact, double lossNeg, double lossPos);
};

using FitnessFn = std::function<FitnessValue(std::span<const double>)>;

struct Particle {
    std::vector<double> position;
    std::vector<double> velocity;
    std::vector<double> localBestPos;
    double localBestFit = 0.0;
};

struct Candidate {
    std::vector<double> position;
    FitnessValue fitness;
};

struct Swarm {
    std::vector<Particle> particles;
    Candidate globalBest;
    std::size_t iteration = 0;
    std::vector<std::string> notes;
};

// Fitness over the final layer only: base logits of every input are cached
// once, and a candidate position only adds o_i * (new - old) for the patched
// coordinates. Safe to call concurrently.
class HeadFitness {
public:
    HeadFitness(const NetworkModel& model, const Dataset& negatives, const Dataset& positives,
                std::vector<WeightCoord> coords);

    FitnessValue operator()(std::span<const double> position) const;

    // Current weight values at the patched coordinates.
    std::vector<double> identityPosition() const;
    const std::vector<WeightCoord>& coords() const { return coords_; }

private:
    struct InputSet {
        ActivationCache cache;
        std::vector<int> labels;
        std::vector<double> baseLogits;
    };
    InputSet cacheSet(const NetworkModel& model, const Dataset& data) const;
    // Returns (#correct, mean loss).
    std::pair<std::size_t, double> score(const InputSet& set, std::span<const double> delta,
                                         std::span<double> scratch) const;

    std::vector<WeightCoord> coords_;
    std::vector<double> base_;
    std::size_t classes_ = 0;
    InputSet neg_;
    InputSet pos_;
};

// Positions ~ Normal(mean(W), std(W)) over the whole final kernel, zero
// velocities, one fitness evaluation per particle. `incumbent`, when given,
// is the starting global best; particles replace it only by strict improvement.
Swarm initSwarm(const NetworkModel& model, const std::vector<WeightCoord>& coords, const SwarmConfig& config,
                const FitnessFn& fitness, std::optional<Candidate> incumbent = std::nullopt);

// Velocity and position update of one particle with explicit random factors
// (u1 ~ U(0, phi1), u2 ~ U(0, phi2) per component).
void moveParticle(Particle& particle, std::span<const double> globalBest, double constriction,
                  std::span<const double> u1, std::span<const double> u2, const VelocityBounds& bounds,
                  VelocityClamp clamp);

// One synchronous iteration. Random factors of particle p at iteration t come
// from a generator seeded with deriveSeed(seed, {t, p}). Returns true when the
// global best strictly improved.
bool stepSwarm(Swarm& swarm, const FitnessFn& fitness, const VelocityBounds& bounds, const SwarmConfig& config);

struct TraceRow {
    std::size_t iteration = 0;
    FitnessValue best;
};

struct RepairTrace {
    std::vector<TraceRow> rows;
    std::size_t iterationsRun = 0;
    std::vector<WeightCoord> coords;
    std::uint64_t seed = 0;
    std::string stopReason;
    std::vector<std::string> notes;
};

// Runs stepSwarm until maxIters or stagnationLimit iterations without a
// strict global-best improvement. Row 0 of the trace is the initial swarm.
RepairTrace runSwarm(Swarm& swarm, const FitnessFn& fitness, const VelocityBounds& bounds,
                     const SwarmConfig& config);

struct RepairResult {
    Patch patch;
    RepairTrace trace;
    Localization localization;
    FitnessValue before;
    FitnessValue after;
};

// localize -> initSwarm (identity patch as incumbent) -> runSwarm.
RepairResult repair(const NetworkModel& model, const Dataset& negatives, const Dataset& positives,
                    const LocConfig& locConfig, const SwarmConfig& config);

// iteration,bestFitness,nPatched,nIntact,lossNeg,lossPos
std::string traceCsv(const RepairTrace& trace);

} // namespace nnrepair
