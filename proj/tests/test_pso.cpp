#include "support.hpp"

#include "nnrepair/errors.hpp"
#include "nnrepair/model_io.hpp"
#include "nnrepair/patch.hpp"
#include "nnrepair/pso.hpp"

#include <doctest.h>

#include <atomic>
#include <cmath>

using namespace nnrepair;

namespace {

// Fitness of a patch computed the slow way: patch a full model copy and run
// every input through the whole network.
FitnessValue fullModelFitness(const NetworkModel& model, const std::vector<WeightCoord>& coords,
                              const std::vector<double>& position, const Dataset& neg, const Dataset& pos) {
    std::vector<float> values;
    for (double x : position) values.push_back(static_cast<float>(x));
    const auto patched = applyPatch(model, makePatch(model, coords, values));
    auto score = [&](const Dataset& set) {
        std::size_t correct = 0;
        double loss = 0.0;
        for (const auto& x : set) {
            const auto p = forwardProbabilities(patched, x.features.values());
            correct += predict(patched, x.features) == x.label ? 1 : 0;
            loss += -std::log(std::max(p[static_cast<std::size_t>(x.label)], 1e-12));
        }
        return std::pair{correct, loss / static_cast<double>(set.size())};
    };
    auto [np, ln] = score(neg);
    auto [ni, lp] = score(pos);
    return {(np + 1.0) / (ln + 1.0) + (ni + 1.0) / (lp + 1.0), np, ni, ln, lp};
}

SwarmConfig smallSwarm(std::uint64_t seed) {
    SwarmConfig c;
    c.popSize = 12;
    c.maxIters = 30;
    c.seed = seed;
    return c;
}

} // namespace

TEST_CASE("constriction coefficient") {
    CHECK(chi(4.1) == doctest::Approx(0.72984).epsilon(1e-5 / 0.72984));
    CHECK(chi(4.0) == 1.0);
    CHECK(chi(5.0) == doctest::Approx(2.0 / (3.0 + std::sqrt(5.0))));
    CHECK(std::abs(chi(5.0) - 0.38197) <= 1e-5);
    CHECK_THROWS_AS(chi(3.9), std::domain_error);
}

TEST_CASE("swarm config validation") {
    SwarmConfig c;
    CHECK_NOTHROW(c.validate());
    c.phi2 = 4.2;
    CHECK_THROWS(c.validate());
    c = {};
    c.phi1 = c.phi2 = 3.0;
    CHECK_THROWS(c.validate());
    c = {};
    c.popSize = 0;
    CHECK_THROWS(c.validate());
}

TEST_CASE("fitness value formula and bounds") {
    const auto f = FitnessValue::make(1, 200, 0.0, 0.0);
    CHECK(f.total == 203.0);
    const auto g = FitnessValue::make(0, 0, 30.0, 30.0);
    CHECK(g.total > 0.0);
    CHECK(g.total == doctest::Approx(2.0 / 31.0));
}

TEST_CASE("velocity bounds") {
    auto m = testing::randomModel({3, 2}, 1);
    auto w = m.finalLayer().kernel.values();
    const auto [lo, hi] = std::minmax_element(w.begin(), w.end());
    const auto b = VelocityBounds::fromModel(m);
    CHECK(b.wb == doctest::Approx(double(*hi) - double(*lo)));
    CHECK(b.vHigh == doctest::Approx(5.0 * b.wb));
    CHECK(b.vLow == doctest::Approx(b.wb / 5.0));
}

TEST_CASE("scalar particle update") {
    Particle p{{0.0}, {1.0}, {0.0}, 0.0};
    const std::vector<double> gbest{0.0}, zero{0.0};
    moveParticle(p, gbest, chi(4.1), zero, zero, VelocityBounds::fromWidth(10.0), VelocityClamp::symmetric);
    CHECK(std::abs(p.velocity[0] - 0.72984) <= 1e-5);
    CHECK(std::abs(p.position[0] - 0.72984) <= 1e-5);
}

TEST_CASE("fixed point of the update") {
    Particle p{{0.3, -0.2}, {0.0, 0.0}, {0.3, -0.2}, 0.0};
    const std::vector<double> gbest{0.3, -0.2}, u{2.0, 3.0};
    moveParticle(p, gbest, chi(4.1), u, u, VelocityBounds::fromWidth(1.0), VelocityClamp::symmetric);
    CHECK(p.velocity == std::vector<double>{0.0, 0.0});
    CHECK(p.position == std::vector<double>{0.3, -0.2});
}

TEST_CASE("velocity clamp modes") {
    const auto bounds = VelocityBounds::fromWidth(1.0);
    const std::vector<double> gbest{100.0, -100.0, 0.0}, u{4.0, 4.0, 0.0};
    Particle p{{0.0, 0.0, 0.0}, {0.0, 0.0, 0.01}, {0.0, 0.0, 0.0}, 0.0};
    auto q = p;
    moveParticle(p, gbest, chi(4.1), u, u, bounds, VelocityClamp::symmetric);
    CHECK(p.velocity[0] == 5.0);
    CHECK(p.velocity[1] == -5.0);
    CHECK(p.velocity[2] == doctest::Approx(0.01 * chi(4.1)));
    moveParticle(q, gbest, chi(4.1), u, u, bounds, VelocityClamp::band);
    CHECK(q.velocity[2] == doctest::Approx(0.2));
}

TEST_CASE("swarm initialisation") {
    const auto m = testing::randomModel({20, 30, 10}, 4);
    const std::vector<WeightCoord> coords{{0, 0}, {1, 1}};
    FitnessFn constant = [](std::span<const double>) { return FitnessValue::make(0, 0, 1.0, 1.0); };
    auto cfg = smallSwarm(7);

    const auto a = initSwarm(m, coords, cfg, constant);
    const auto b = initSwarm(m, coords, cfg, constant);
    REQUIRE(a.particles.size() == 12);
    for (std::size_t p = 0; p < a.particles.size(); ++p) {
        CHECK(a.particles[p].position == b.particles[p].position);
        CHECK(a.particles[p].velocity == std::vector<double>{0.0, 0.0});
        CHECK(a.particles[p].localBestPos == a.particles[p].position);
    }

    SUBCASE("sampled entries follow the sibling weight distribution") {
        auto w = m.finalLayer().kernel.values();
        double mean = 0.0, var = 0.0;
        for (float v : w) mean += v;
        mean /= double(w.size());
        for (float v : w) var += (v - mean) * (v - mean);
        const double sd = std::sqrt(var / double(w.size()));

        cfg.popSize = 5000;
        const auto big = initSwarm(m, coords, cfg, constant);
        double sm = 0.0, ss = 0.0;
        std::size_t n = 0;
        for (const auto& p : big.particles) {
            for (double x : p.position) {
                sm += x;
                ss += x * x;
                ++n;
            }
        }
        CHECK(n == 10000);
        const double smean = sm / double(n);
        const double ssd = std::sqrt(ss / double(n) - smean * smean);
        CHECK(std::abs(smean - mean) <= 0.05 * std::max(std::abs(mean), sd));
        CHECK(std::abs(ssd - sd) <= 0.05 * sd);
    }
    SUBCASE("zero spread falls back with a note") {
        auto flat = m;
        for (auto& v : flat.finalLayer().kernel.values()) v = 0.25f;
        const auto s = initSwarm(flat, coords, cfg, constant);
        CHECK(s.notes.size() == 1);
        CHECK(s.particles[0].position[0] != 0.25);
    }
    SUBCASE("an incumbent is kept unless strictly beaten") {
        Candidate inc{{9.0, 9.0}, FitnessValue::make(0, 0, 1.0, 1.0)};
        const auto s = initSwarm(m, coords, cfg, constant, inc);
        CHECK(s.globalBest.position == inc.position);
    }
}

TEST_CASE("stagnation cutoff with a constant fitness") {
    const auto m = testing::randomModel({4, 3}, 4);
    FitnessFn constant = [](std::span<const double>) { return FitnessValue::make(0, 0, 1.0, 1.0); };
    auto cfg = smallSwarm(1);
    cfg.maxIters = 100;
    auto swarm = initSwarm(m, {{0, 0}}, cfg, constant);
    const auto trace = runSwarm(swarm, constant, VelocityBounds::fromModel(m), cfg);
    CHECK(trace.rows.size() == 11);
    CHECK(trace.iterationsRun == 10);
}

TEST_CASE("stagnation cutoff after the last improvement at iteration 3") {
    const auto m = testing::randomModel({4, 3}, 4);
    auto cfg = smallSwarm(1);
    cfg.maxIters = 100;
    std::atomic<std::size_t> calls{0};
    const std::size_t improvingCalls = cfg.popSize * 4;
    FitnessFn rising = [&](std::span<const double>) {
        const auto k = calls++;
        return FitnessValue::make(0, 0, 1.0, k < improvingCalls ? 1.0 / double(k + 1) : 10.0);
    };
    auto swarm = initSwarm(m, {{0, 0}}, cfg, rising);
    const auto trace = runSwarm(swarm, rising, VelocityBounds::fromModel(m), cfg);
    CHECK(trace.iterationsRun == 13);
    CHECK(trace.rows.back().iteration == 13);
}

TEST_CASE("max iterations bound the run") {
    const auto m = testing::randomModel({4, 3}, 4);
    std::atomic<std::size_t> calls{0};
    FitnessFn always = [&](std::span<const double>) {
        return FitnessValue::make(0, 0, 1.0, 1.0 / double(++calls));
    };
    auto cfg = smallSwarm(1);
    cfg.maxIters = 7;
    auto swarm = initSwarm(m, {{0, 0}}, cfg, always);
    const auto trace = runSwarm(swarm, always, VelocityBounds::fromModel(m), cfg);
    CHECK(trace.iterationsRun == 7);
    CHECK(trace.stopReason == "max iterations");
}

TEST_CASE("cached head fitness equals the full-model oracle") {
    const auto subject = testing::smallSubject();
    Rng rng(3);
    const auto& m = subject.model;
    Dataset neg, pos;
    for (const auto& x : subject.train) {
        (predict(m, x.features) == x.label ? pos : neg).push_back(x);
        if (neg.size() >= 3 && pos.size() >= 40) break;
    }
    std::uniform_int_distribution<std::size_t> ci(0, m.penultimateDim() - 1), cj(0, m.classCount() - 1);
    std::normal_distribution<double> value(0.0, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<WeightCoord> coords;
        while (coords.size() < 3) {
            WeightCoord c{ci(rng), cj(rng)};
            if (std::find(coords.begin(), coords.end(), c) == coords.end()) coords.push_back(c);
        }
        HeadFitness head(m, neg, pos, coords);
        std::vector<double> position;
        for (int k = 0; k < 3; ++k) position.push_back(value(rng));
        const auto fast = head(position);
        const auto slow = fullModelFitness(m, coords, position, neg, pos);
        CHECK(std::abs(fast.total - slow.total) <= 1e-5);
        CHECK(fast.nPatched == slow.nPatched);
        CHECK(fast.nIntact == slow.nIntact);
    }
}

TEST_CASE("identity position changes nothing") {
    const auto subject = testing::smallSubject();
    const auto& m = subject.model;
    Dataset neg, pos;
    for (const auto& x : subject.train) (predict(m, x.features) == x.label ? pos : neg).push_back(x);
    REQUIRE_FALSE(neg.empty());
    HeadFitness head(m, neg, pos, {{0, 0}, {3, 2}});
    const auto f = head(head.identityPosition());
    CHECK(f.nPatched == 0);
    CHECK(f.nIntact == pos.size());
}

TEST_CASE("repair end to end") {
    const auto subject = testing::smallSubject();
    const auto& m = subject.model;
    Dataset neg, pos;
    for (const auto& x : subject.train) {
        if (predict(m, x.features) != x.label) {
            if (neg.empty()) neg.push_back(x);
        } else if (pos.size() < 50) {
            pos.push_back(x);
        }
    }
    auto cfg = smallSwarm(11);

    const auto a = repair(m, neg, pos, {}, cfg);
    CHECK(a.after.total >= a.before.total);
    for (std::size_t k = 1; k < a.trace.rows.size(); ++k) {
        CHECK(a.trace.rows[k].best.total >= a.trace.rows[k - 1].best.total);
    }
    CHECK(a.patch.entries.size() == a.localization.coords.size());
    CHECK(a.patch.meta.method == "loc");
    CHECK_NOTHROW(validatePatch(a.patch, m));

    const auto b = repair(m, neg, pos, {}, cfg);
    CHECK(savePatch(a.patch) == savePatch(b.patch));

    auto parallel = cfg;
    parallel.threads = 4;
    const auto c = repair(m, neg, pos, {}, parallel);
    CHECK(c.patch == a.patch);
    CHECK(c.after.total == a.after.total);

    const auto patched = applyPatch(m, a.patch);
    HeadFitness head(m, neg, pos, a.localization.coords);
    std::vector<double> pos2;
    for (const auto& e : a.patch.entries) pos2.push_back(e.value);
    CHECK(head(pos2).total == a.after.total);
    CHECK(patched != m);
}

TEST_CASE("velocities never exceed the upper bound during a run") {
    const auto m = testing::randomModel({5, 6, 3}, 2);
    Rng rng(1);
    const auto data = testing::randomDataset(m, 20, rng);
    HeadFitness head(m, {data[0]}, data, {{0, 0}, {1, 1}, {2, 2}});
    FitnessFn fn = [&](std::span<const double> x) { return head(x); };
    auto cfg = smallSwarm(3);
    const auto bounds = VelocityBounds::fromModel(m);
    auto swarm = initSwarm(m, head.coords(), cfg, fn);
    for (int t = 0; t < 20; ++t) {
        stepSwarm(swarm, fn, bounds, cfg);
        for (const auto& p : swarm.particles) {
            for (double v : p.velocity) CHECK(std::abs(v) <= bounds.vHigh);
        }
    }
}

TEST_CASE("applying patches") {
    const auto m = testing::randomModel({4, 5, 3}, 6);
    CHECK(applyPatch(m, Patch{}) == m);

    const auto one = applyPatch(m, makePatch(m, {{2, 1}}, {0.0f}));
    const auto& a = m.finalLayer().kernel;
    const auto& b = one.finalLayer().kernel;
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            if (i == 2 && j == 1) CHECK(b.at(i, j) == 0.0f);
            else CHECK(b.at(i, j) == a.at(i, j));
        }
    }
    CHECK(one.layer(0) == m.layer(0));

    const auto patched = applyPatch(m, makePatch(m, {{0, 0}, {4, 2}}, {9.0f, -9.0f}));
    const auto restored = applyPatch(patched, makePatch(m, {{0, 0}, {4, 2}}, {a.at(0, 0), a.at(4, 2)}));
    CHECK(saveModel(restored) == saveModel(m));

    CHECK_THROWS_AS(applyPatch(m, makePatch(m, {{0, 0}, {0, 0}}, {1.0f, 2.0f})), ValidationError);
    Patch outside;
    outside.entries.push_back({1, 5, 0, 1.0f});
    CHECK_THROWS_AS(applyPatch(m, outside), ValidationError);
}

TEST_CASE("trace csv") {
    RepairTrace t;
    t.rows.push_back({0, FitnessValue::make(0, 10, 1.0, 0.0)});
    CHECK(traceCsv(t) == "iteration,bestFitness,nPatched,nIntact\n0,11.5,0,10\n");
}
