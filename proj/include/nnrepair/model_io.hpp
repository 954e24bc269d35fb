#pragma once

// On-disk formats shared with the Python exporter.
//
// Model (.anet): ASCII manifest, one directive per line, then raw payload.
//
//     ANET 1
//     classes <classCount>
//     layers <layerCount>
//     dense <inDim> <outDim> <relu|softmax|identity>     (once per layer)
//     payload
//     <binary>
//
//   The payload holds, layer by layer, the kernel (row-major [inDim][outDim])
//   followed by the bias, as little-endian IEEE-754 binary32. Its byte length
//   must equal 4 * sum(inDim*outDim + outDim).
//
// Dataset / activation cache (.adat): 24-byte little-endian header
//
//     char[4] "ADAT" | u32 version (=1) | u64 count | u32 width | u32 classCount
//
//   followed by `count` records of `width` binary32 features and one u16 label.
//
// Patch (.apatch): ASCII, values as C99 hex-float literals so they round-trip exactly.
//
//     APATCH 1
//     seed <u64>
//     method <name>
//     fitness <hexfloat>
//     entries <n>
//     <layer> <i> <j> <hexfloat>                           (n lines)

#include "nnrepair/network.hpp"
#include "nnrepair/patch.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace nnrepair {

using Bytes = std::vector<std::uint8_t>;

inline constexpr int kModelFormatVersion = 1;
inline constexpr int kDatasetFormatVersion = 1;
inline constexpr int kPatchFormatVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 24;

Bytes saveModel(const NetworkModel& model);
NetworkModel loadModel(std::span<const std::uint8_t> bytes);

struct DatasetFile {
    Dataset rows;
    std::size_t width = 0;
    std::size_t classCount = 0;
};

Bytes saveDataset(const Dataset& rows, std::size_t width, std::size_t classCount);
DatasetFile loadDataset(std::span<const std::uint8_t> bytes);

// Stores penultimate activations with their labels in the dataset layout.
Bytes saveActivationCache(const ActivationCache& cache, std::span<const int> labels,
                          std::size_t classCount);

Bytes savePatch(const Patch& patch);
Patch loadPatch(std::span<const std::uint8_t> bytes);
// Also checks every coordinate against `model`'s final-layer kernel.
Patch loadPatch(std::span<const std::uint8_t> bytes, const NetworkModel& model);

Bytes readFile(const std::filesystem::path& path);
void writeFile(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void writeTextFile(const std::filesystem::path& path, std::string_view text);

} // namespace nnrepair
