#pragma once

#include "nnrepair/network.hpp"

#include <compare>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace nnrepair {

// Address of one final-layer kernel weight: penultimate neuron i -> output neuron j.
struct WeightCoord {
    std::size_t i = 0;
    std::size_t j = 0;

    friend auto operator<=>(const WeightCoord&, const WeightCoord&) = default;
};

struct PatchEntry {
    std::size_t layer = 0;
    std::size_t i = 0;
    std::size_t j = 0;
    float value = 0.0f;

    friend bool operator==(const PatchEntry&, const PatchEntry&) = default;
};

struct PatchMetadata {
    std::uint64_t seed = 0;
    std::string method = "none";
    double fitness = 0.0;

    friend bool operator==(const PatchMetadata&, const PatchMetadata&) = default;
};

// Replacement values for a fixed set of final-layer weights.
struct Patch {
    std::vector<PatchEntry> entries;
    PatchMetadata meta;

    bool empty() const { return entries.empty(); }

    friend bool operator==(const Patch&, const Patch&) = default;
};

// Throws ValidationError on duplicate coordinates.
void checkUniqueCoords(const Patch& patch);

// Throws ValidationError unless every entry addresses the final kernel of
// `model` and coordinates are unique.
void validatePatch(const Patch& patch, const NetworkModel& model);

NetworkModel applyPatch(const NetworkModel& model, const Patch& patch);

// Patch that writes `values[k]` to `coords[k]` of the final layer.
Patch makePatch(const NetworkModel& model, const std::vector<WeightCoord>& coords,
                const std::vector<float>& values);

} // namespace nnrepair
