#include "nnrepair/pso.hpp"

#include "nnrepair/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace nnrepair {

double chi(double phi) {
    if (!(phi >= 4.0)) throw std::domain_error(fmt::format("constriction needs phi >= 4, got {}", phi));
    return 2.0 / (phi - 2.0 + std::sqrt(phi * phi - 4.0 * phi));
}

void SwarmConfig::validate() const {
    if (phi1 != phi2) throw std::invalid_argument("phi1 and phi2 must be equal");
    if (!(phi1 >= 4.0)) throw std::invalid_argument("phi must be >= 4");
    if (popSize < 1) throw std::invalid_argument("popSize must be >= 1");
    if (stagnationLimit < 1) throw std::invalid_argument("stagnationLimit must be >= 1");
    if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

VelocityBounds VelocityBounds::fromWidth(double wb) { return {wb, wb / 5.0, wb * 5.0}; }

VelocityBounds VelocityBounds::fromModel(const NetworkModel& model) {
    auto w = model.finalLayer().kernel.values();
    auto [lo, hi] = std::minmax_element(w.begin(), w.end());
    return fromWidth(static_cast<double>(*hi) - static_cast<double>(*lo));
}

FitnessValue FitnessValue::make(std::size_t nPatched, std::size_t nIntact, double lossNeg, double lossPos) {
    FitnessValue f;
    f.nPatched = nPatched;
    f.nIntact = nIntact;
    f.lossNeg = lossNeg;
    f.lossPos = lossPos;
    f.total = (static_cast<double>(nPatched) + 1.0) / (lossNeg + 1.0) +
              (static_cast<double>(nIntact) + 1.0) / (lossPos + 1.0);
    return f;
}

// ---------------------------------------------------------------------------
// HeadFitness

HeadFitness::HeadFitness(const NetworkModel& model, const Dataset& negatives, const Dataset& positives,
                         std::vector<WeightCoord> coords)
    : coords_(std::move(coords)), classes_(model.classCount()) {
    const auto& last = model.finalLayer();
    for (const auto& c : coords_) {
        if (c.i >= last.inDim() || c.j >= last.outDim()) {
            throw std::out_of_range(fmt::format("weight ({}, {}) outside final kernel", c.i, c.j));
        }
        base_.push_back(last.kernel.at(c.i, c.j));
    }
    neg_ = cacheSet(model, negatives);
    pos_ = cacheSet(model, positives);
}

HeadFitness::InputSet HeadFitness::cacheSet(const NetworkModel& model, const Dataset& data) const {
    InputSet set;
    set.cache = penultimate(model, data);
    set.labels.reserve(data.size());
    set.baseLogits.resize(data.size() * classes_);
    for (std::size_t r = 0; r < data.size(); ++r) {
        set.labels.push_back(data[r].label);
        headLogits(set.cache.row(r), model.finalLayer(),
                   std::span<double>(set.baseLogits).subspan(r * classes_, classes_));
    }
    return set;
}

std::pair<std::size_t, double> HeadFitness::score(const InputSet& set, std::span<const double> delta,
                                                  std::span<double> z) const {
    std::size_t correct = 0;
    double loss = 0.0;
    const auto rows = set.labels.size();
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(set.baseLogits.begin() + static_cast<std::ptrdiff_t>(r * classes_), classes_, z.begin());
        auto o = set.cache.row(r);
        for (std::size_t k = 0; k < coords_.size(); ++k) z[coords_[k].j] += static_cast<double>(o[coords_[k].i]) * delta[k];
        const auto label = static_cast<std::size_t>(set.labels[r]);
        if (argmax(std::span<const double>(z.data(), classes_)) == label) ++correct;
        softmaxInPlace(z.first(classes_));
        loss += -std::log(std::max(z[label], kProbabilityFloor));
    }
    return {correct, rows == 0 ? 0.0 : loss / static_cast<double>(rows)};
}

FitnessValue HeadFitness::operator()(std::span<const double> position) const {
    if (position.size() != coords_.size()) throw std::invalid_argument("position length does not match coordinates");
    std::vector<double> delta(coords_.size());
    for (std::size_t k = 0; k < coords_.size(); ++k) {
        // Weights are stored as binary32, so evaluate exactly what a patch would write.
        delta[k] = static_cast<double>(static_cast<float>(position[k])) - base_[k];
    }
    std::vector<double> z(classes_);
    auto [patched, lossNeg] = score(neg_, delta, z);
    auto [intact, lossPos] = score(pos_, delta, z);
    return FitnessValue::make(patched, intact, lossNeg, lossPos);
}

std::vector<double> HeadFitness::identityPosition() const { return base_; }

// ---------------------------------------------------------------------------
// Swarm

namespace {

constexpr std::uint64_t kInitStream = 0xffffffffffffffffULL;

template <typename F>
void parallelFor(std::size_t n, std::size_t threads, F&& body) {
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t k = 0; k < n; ++k) body(k);
        return;
    }
    std::exception_ptr failure;
    std::mutex failureLock;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t k = t; k < n; k += threads) body(k);
            } catch (...) {
                std::lock_guard lock(failureLock);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

double clampComponent(double v, const VelocityBounds& bounds, VelocityClamp mode) {
    const double mag = std::abs(v);
    const double sign = v < 0.0 ? -1.0 : 1.0;
    if (mode == VelocityClamp::band) return sign * std::clamp(mag, bounds.vLow, bounds.vHigh);
    return mag > bounds.vHigh ? sign * bounds.vHigh : v;
}

} // namespace

Swarm initSwarm(const NetworkModel& model, const std::vector<WeightCoord>& coords, const SwarmConfig& config,
                const FitnessFn& fitness, std::optional<Candidate> incumbent) {
    config.validate();
    if (coords.empty()) throw std::invalid_argument("swarm needs at least one coordinate");
    auto w = model.finalLayer().kernel.values();
    double mean = 0.0;
    for (float v : w) mean += v;
    mean /= static_cast<double>(w.size());
    double var = 0.0;
    for (float v : w) var += (v - mean) * (v - mean);
    double sd = std::sqrt(var / static_cast<double>(w.size()));

    Swarm swarm;
    if (!(sd > 0.0)) {
        sd = 1e-3;
        swarm.notes.push_back("sibling weights have zero spread; sampling with std 1e-3");
    }

    swarm.particles.resize(config.popSize);
    for (std::size_t p = 0; p < config.popSize; ++p) {
        Rng rng(deriveSeed(config.seed, {kInitStream, p}));
        std::normal_distribution<double> gauss(mean, sd);
        auto& particle = swarm.particles[p];
        particle.position.resize(coords.size());
        for (auto& x : particle.position) x = gauss(rng);
        particle.velocity.assign(coords.size(), 0.0);
        particle.localBestPos = particle.position;
    }

    std::vector<FitnessValue> values(config.popSize);
    parallelFor(config.popSize, config.threads,
                [&](std::size_t p) { values[p] = fitness(swarm.particles[p].position); });

    bool haveBest = incumbent.has_value();
    if (haveBest) swarm.globalBest = std::move(*incumbent);
    for (std::size_t p = 0; p < config.popSize; ++p) {
        swarm.particles[p].localBestFit = values[p].total;
        if (!haveBest || values[p].total > swarm.globalBest.fitness.total) {
            swarm.globalBest = {swarm.particles[p].position, values[p]};
            haveBest = true;
        }
    }
    return swarm;
}

void moveParticle(Particle& particle, std::span<const double> globalBest, double constriction,
                  std::span<const double> u1, std::span<const double> u2, const VelocityBounds& bounds,
                  VelocityClamp clamp) {
    auto& x = particle.position;
    auto& v = particle.velocity;
    const auto& pl = particle.localBestPos;
    for (std::size_t d = 0; d < x.size(); ++d) {
        double next = constriction * (v[d] + u1[d] * (pl[d] - x[d]) + u2[d] * (globalBest[d] - x[d]));
        v[d] = clampComponent(next, bounds, clamp);
        x[d] += v[d];
    }
}

bool stepSwarm(Swarm& swarm, const FitnessFn& fitness, const VelocityBounds& bounds, const SwarmConfig& config) {
    const double constriction = chi(config.phi1);
    const auto t = swarm.iteration + 1;
    const auto n = swarm.particles.size();
    const auto& gbest = swarm.globalBest.position;

    std::vector<FitnessValue> values(n);
    parallelFor(n, config.threads, [&](std::size_t p) {
        auto& particle = swarm.particles[p];
        const auto dim = particle.position.size();
        Rng rng(deriveSeed(config.seed, {t, p}));
        std::uniform_real_distribution<double> draw1(0.0, config.phi1);
        std::uniform_real_distribution<double> draw2(0.0, config.phi2);
        std::vector<double> u1(dim), u2(dim);
        for (std::size_t d = 0; d < dim; ++d) {
            u1[d] = draw1(rng);
            u2[d] = draw2(rng);
        }
        moveParticle(particle, gbest, constriction, u1, u2, bounds, config.clamp);
        values[p] = fitness(particle.position);
    });

    bool improved = false;
    for (std::size_t p = 0; p < n; ++p) {
        auto& particle = swarm.particles[p];
        if (values[p].total > particle.localBestFit) {
            particle.localBestFit = values[p].total;
            particle.localBestPos = particle.position;
        }
        if (values[p].total > swarm.globalBest.fitness.total) {
            swarm.globalBest = {particle.position, values[p]};
            improved = true;
        }
    }
    swarm.iteration = t;
    return improved;
}

RepairTrace runSwarm(Swarm& swarm, const FitnessFn& fitness, const VelocityBounds& bounds,
                     const SwarmConfig& config) {
    config.validate();
    RepairTrace trace;
    trace.seed = config.seed;
    trace.rows.push_back({swarm.iteration, swarm.globalBest.fitness});
    trace.stopReason = "max iterations";
    std::size_t stagnant = 0;
    for (std::size_t it = 0; it < config.maxIters; ++it) {
        const bool improved = stepSwarm(swarm, fitness, bounds, config);
        stagnant = improved ? 0 : stagnant + 1;
        trace.rows.push_back({swarm.iteration, swarm.globalBest.fitness});
        if (stagnant >= config.stagnationLimit) {
            trace.stopReason = fmt::format("no improvement in {} consecutive iterations", config.stagnationLimit);
            break;
        }
    }
    trace.iterationsRun = swarm.iteration;
    trace.notes = swarm.notes;
    return trace;
}

RepairResult repair(const NetworkModel& model, const Dataset& negatives, const Dataset& positives,
                    const LocConfig& locConfig, const SwarmConfig& config) {
    config.validate();
    RepairResult result;
    result.localization = localize(model, negatives, locConfig, deriveSeed(config.seed, {hashString("localize")}));
    const auto& coords = result.localization.coords;

    HeadFitness head(model, negatives, positives, coords);
    FitnessFn fitness = [&head](std::span<const double> x) { return head(x); };
    Candidate identity{head.identityPosition(), {}};
    identity.fitness = head(identity.position);
    result.before = identity.fitness;

    auto swarm = initSwarm(model, coords, config, fitness, identity);
    result.trace = runSwarm(swarm, fitness, VelocityBounds::fromModel(model), config);
    result.trace.coords = coords;
    result.trace.notes.insert(result.trace.notes.begin(), result.localization.notes.begin(),
                              result.localization.notes.end());
    result.after = swarm.globalBest.fitness;

    std::vector<float> values;
    values.reserve(coords.size());
    for (double x : swarm.globalBest.position) values.push_back(static_cast<float>(x));
    result.patch = makePatch(model, coords, values);
    result.patch.meta = {config.seed, std::string(toString(locConfig.method)), result.after.total};
    return result;
}

std::string traceCsv(const RepairTrace& trace) {
    std::string out = "iteration,bestFitness,nPatched,nIntact\n";
    for (const auto& r : trace.rows) {
        out += fmt::format("{},{:.17g},{},{}\n", r.iteration, r.best.total, r.best.nPatched, r.best.nIntact);
    }
    return out;
}

} // namespace nnrepair
