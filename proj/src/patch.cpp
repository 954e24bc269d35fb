#include "nnrepair/patch.hpp"

#include "nnrepair/errors.hpp"

#include <set>
#include <string>
#include <tuple>

namespace nnrepair {

void checkUniqueCoords(const Patch& patch) {
    std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
    for (std::size_t k = 0; k < patch.entries.size(); ++k) {
        const auto& e = patch.entries[k];
        if (!seen.emplace(e.layer, e.i, e.j).second) {
            throw ValidationError("patch entry " + std::to_string(k) + " duplicates coordinate (" +
                                  std::to_string(e.layer) + ", " + std::to_string(e.i) + ", " +
                                  std::to_string(e.j) + ")");
        }
    }
}

void validatePatch(const Patch& patch, const NetworkModel& model) {
    const auto& last = model.finalLayer();
    for (std::size_t k = 0; k < patch.entries.size(); ++k) {
        const auto& e = patch.entries[k];
        if (e.layer != model.finalLayerIndex() || e.i >= last.inDim() || e.j >= last.outDim()) {
            throw ValidationError("patch entry " + std::to_string(k) + " at (" +
                                  std::to_string(e.layer) + ", " + std::to_string(e.i) + ", " +
                                  std::to_string(e.j) + ") is outside the final-layer kernel");
        }
    }
    checkUniqueCoords(patch);
}

NetworkModel applyPatch(const NetworkModel& model, const Patch& patch) {
    validatePatch(patch, model);
    NetworkModel out = model;
    auto& kernel = out.finalLayer().kernel;
    for (const auto& e : patch.entries) kernel.at(e.i, e.j) = e.value;
    return out;
}

Patch makePatch(const NetworkModel& model, const std::vector<WeightCoord>& coords,
                const std::vector<float>& values) {
    if (coords.size() != values.size()) {
        throw DimensionError("patch needs one value per coordinate");
    }
    Patch p;
    p.entries.reserve(coords.size());
    for (std::size_t k = 0; k < coords.size(); ++k) {
        p.entries.push_back({model.finalLayerIndex(), coords[k].i, coords[k].j, values[k]});
    }
    validatePatch(p, model);
    return p;
}

} // namespace nnrepair
