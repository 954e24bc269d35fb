#include "nnrepair/model_io.hpp"

#include "nnrepair/errors.hpp"

#include <fmt/format.h>

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>

namespace nnrepair {

namespace {

void putU16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void putU32(Bytes& out, std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>((v >> s) & 0xff));
}

void putU64(Bytes& out, std::uint64_t v) {
    for (int s = 0; s < 64; s += 8) out.push_back(static_cast<std::uint8_t>((v >> s) & 0xff));
}

void putF32(Bytes& out, float v) { putU32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint16_t getU16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t getU32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int k = 3; k >= 0; --k) v = (v << 8) | p[k];
    return v;
}

std::uint64_t getU64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int k = 7; k >= 0; --k) v = (v << 8) | p[k];
    return v;
}

float getF32(const std::uint8_t* p) { return std::bit_cast<float>(getU32(p)); }

void appendText(Bytes& out, std::string_view text) { out.insert(out.end(), text.begin(), text.end()); }

// Sequential line reader over a byte buffer; tracks where the binary part starts.
class LineReader {
public:
    explicit LineReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    bool next(std::string& line) {
        if (pos_ >= bytes_.size()) return false;
        auto begin = pos_;
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
        if (pos_ >= bytes_.size()) return false; // no terminating newline: incomplete
        line.assign(reinterpret_cast<const char*>(bytes_.data() + begin), pos_ - begin);
        ++pos_;
        return true;
    }

    std::size_t position() const { return pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

template <typename T>
T parseNumber(std::string_view token, std::string_view what) {
    T value{};
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size()) {
        throw ParseError("malformed " + std::string(what) + ": '" + std::string(token) + "'");
    }
    return value;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> tokens;
    std::size_t k = 0;
    while (k < line.size()) {
        while (k < line.size() && line[k] == ' ') ++k;
        auto start = k;
        while (k < line.size() && line[k] != ' ') ++k;
        if (k > start) tokens.push_back(line.substr(start, k - start));
    }
    return tokens;
}

std::string hexFloat(double v) { return fmt::format("{:a}", v); }

double parseHexFloat(std::string_view token) {
    std::string_view body = token;
    bool negative = false;
    if (!body.empty() && body.front() == '-') {
        negative = true;
        body.remove_prefix(1);
    }
    if (body.size() < 3 || body.substr(0, 2) != "0x") {
        throw ParseError("expected hex-float literal, got '" + std::string(token) + "'");
    }
    body.remove_prefix(2);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), value,
                                     std::chars_format::hex);
    if (ec != std::errc() || ptr != body.data() + body.size() || !std::isfinite(value)) {
        throw ParseError("malformed hex-float literal '" + std::string(token) + "'");
    }
    return negative ? -value : value;
}

void expectKeyword(const std::vector<std::string_view>& tokens, std::string_view key,
                   std::size_t arity, std::string_view context) {
    if (tokens.size() != arity + 1 || tokens[0] != key) {
        throw ParseError(std::string(context) + ": expected '" + std::string(key) + "' directive");
    }
}

} // namespace

Bytes saveModel(const NetworkModel& model) {
    model.validate();
    Bytes out;
    appendText(out, fmt::format("ANET {}\n", kModelFormatVersion));
    appendText(out, fmt::format("classes {}\n", model.classCount()));
    appendText(out, fmt::format("layers {}\n", model.layerCount()));
    for (const auto& l : model.layers()) {
        appendText(out, fmt::format("dense {} {} {}\n", l.inDim(), l.outDim(), toString(l.activation)));
    }
    appendText(out, "payload\n");
    for (const auto& l : model.layers()) {
        for (float w : l.kernel.values()) putF32(out, w);
        for (float b : l.bias.values()) putF32(out, b);
    }
    return out;
}

NetworkModel loadModel(std::span<const std::uint8_t> bytes) {
    LineReader reader(bytes);
    std::string line;
    auto need = [&](std::string_view what) {
        if (!reader.next(line)) throw TruncationError("model manifest truncated before " + std::string(what));
        return split(line);
    };

    auto head = need("format line");
    if (head.size() != 2 || head[0] != "ANET") throw ParseError("not a model file: missing ANET header");
    auto version = parseNumber<int>(head[1], "format version");
    if (version != kModelFormatVersion) {
        throw VersionError(fmt::format("unsupported model format version {} (expected {})", version,
                                       kModelFormatVersion));
    }
    auto cls = need("classes");
    expectKeyword(cls, "classes", 1, "model manifest");
    auto classCount = parseNumber<std::size_t>(cls[1], "class count");
    auto lay = need("layers");
    expectKeyword(lay, "layers", 1, "model manifest");
    auto layerCount = parseNumber<std::size_t>(lay[1], "layer count");

    struct Decl { std::size_t in, out; Activation act; };
    std::vector<Decl> decls;
    std::size_t expectedFloats = 0;
    for (std::size_t k = 0; k < layerCount; ++k) {
        auto d = need("layer declaration");
        expectKeyword(d, "dense", 3, "model manifest");
        Decl decl{parseNumber<std::size_t>(d[1], "inDim"), parseNumber<std::size_t>(d[2], "outDim"),
                  Activation::identity};
        try {
            decl.act = activationFromString(d[3]);
        } catch (const std::invalid_argument& e) {
            throw ParseError(e.what());
        }
        if (decl.in == 0 || decl.out == 0) throw ParseError("layer dimensions must be positive");
        expectedFloats += decl.in * decl.out + decl.out;
        decls.push_back(decl);
    }
    auto end = need("payload marker");
    if (end.size() != 1 || end[0] != "payload") throw ParseError("model manifest: expected 'payload' marker");

    const auto payloadBytes = bytes.size() - reader.position();
    if (payloadBytes % 4 != 0) {
        throw TruncationError(fmt::format("model payload of {} bytes ends inside a float", payloadBytes));
    }
    if (payloadBytes / 4 != expectedFloats) {
        throw InconsistencyError(fmt::format("manifest declares {} floats but payload holds {}",
                                             expectedFloats, payloadBytes / 4));
    }

    const std::uint8_t* p = bytes.data() + reader.position();
    std::vector<DenseLayer> layers;
    for (const auto& d : decls) {
        auto layer = DenseLayer::zeros(d.in, d.out, d.act);
        for (auto& w : layer.kernel.values()) { w = getF32(p); p += 4; }
        for (auto& b : layer.bias.values()) { b = getF32(p); p += 4; }
        layers.push_back(std::move(layer));
    }
    try {
        return NetworkModel(std::move(layers), classCount);
    } catch (const DimensionError& e) {
        throw InconsistencyError(std::string("model manifest: ") + e.what());
    }
}

Bytes saveDataset(const Dataset& rows, std::size_t width, std::size_t classCount) {
    if (width == 0) throw DimensionError("dataset feature width must be positive");
    Bytes out;
    out.reserve(kDatasetHeaderBytes + rows.size() * (4 * width + 2));
    appendText(out, "ADAT");
    putU32(out, kDatasetFormatVersion);
    putU64(out, rows.size());
    putU32(out, static_cast<std::uint32_t>(width));
    putU32(out, static_cast<std::uint32_t>(classCount));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.features.size() != width) {
            throw DimensionError(fmt::format("row {} has {} features, expected {}", r, row.features.size(), width));
        }
        if (row.label < 0 || static_cast<std::size_t>(row.label) >= classCount || row.label > 0xffff) {
            throw ValidationError(fmt::format("row {} label {} outside [0, {})", r, row.label, classCount));
        }
        for (float v : row.features.values()) putF32(out, v);
        putU16(out, static_cast<std::uint16_t>(row.label));
    }
    return out;
}

DatasetFile loadDataset(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kDatasetHeaderBytes) throw TruncationError("dataset header truncated");
    if (std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) != "ADAT") {
        throw ParseError("not a dataset file: missing ADAT magic");
    }
    auto version = getU32(bytes.data() + 4);
    if (version != kDatasetFormatVersion) {
        throw VersionError(fmt::format("unsupported dataset format version {} (expected {})", version,
                                       kDatasetFormatVersion));
    }
    DatasetFile file;
    const auto count = getU64(bytes.data() + 8);
    file.width = getU32(bytes.data() + 16);
    file.classCount = getU32(bytes.data() + 20);
    if (file.width == 0) throw InconsistencyError("dataset feature width must be positive");
    const auto record = 4 * file.width + 2;
    const auto body = bytes.size() - kDatasetHeaderBytes;
    if (count > body / record) {
        throw TruncationError(fmt::format("dataset declares {} records but holds {} bytes of data", count, body));
    }
    if (body != count * record) {
        throw InconsistencyError(fmt::format("dataset has {} trailing bytes", body - count * record));
    }
    const std::uint8_t* p = bytes.data() + kDatasetHeaderBytes;
    file.rows.reserve(count);
    for (std::uint64_t r = 0; r < count; ++r) {
        std::vector<float> features(file.width);
        for (auto& v : features) { v = getF32(p); p += 4; }
        int label = getU16(p);
        p += 2;
        if (static_cast<std::size_t>(label) >= file.classCount) {
            throw ValidationError(fmt::format("row {} label {} outside [0, {})", r, label, file.classCount));
        }
        file.rows.push_back({Tensor::vector(std::move(features)), label});
    }
    return file;
}

Bytes saveActivationCache(const ActivationCache& cache, std::span<const int> labels,
                          std::size_t classCount) {
    if (labels.size() != cache.rows()) throw DimensionError("one label per cache row required");
    Dataset rows;
    rows.reserve(cache.rows());
    for (std::size_t r = 0; r < cache.rows(); ++r) {
        auto row = cache.row(r);
        rows.push_back({Tensor::vector(std::vector<float>(row.begin(), row.end())), labels[r]});
    }
    return saveDataset(rows, cache.width, classCount);
}

Bytes savePatch(const Patch& patch) {
    checkUniqueCoords(patch);
    std::string text = fmt::format("APATCH {}\n", kPatchFormatVersion);
    text += fmt::format("seed {}\n", patch.meta.seed);
    text += fmt::format("method {}\n", patch.meta.method.empty() ? "none" : patch.meta.method);
    text += fmt::format("fitness {}\n", hexFloat(patch.meta.fitness));
    text += fmt::format("entries {}\n", patch.entries.size());
    for (const auto& e : patch.entries) {
        text += fmt::format("{} {} {} {}\n", e.layer, e.i, e.j, hexFloat(static_cast<double>(e.value)));
    }
    return Bytes(text.begin(), text.end());
}

Patch loadPatch(std::span<const std::uint8_t> bytes) {
    LineReader reader(bytes);
    std::string line;
    auto need = [&](std::string_view what) {
        if (!reader.next(line)) throw TruncationError("patch file truncated before " + std::string(what));
        return split(line);
    };
    auto head = need("format line");
    if (head.size() != 2 || head[0] != "APATCH") throw ParseError("not a patch file: missing APATCH header");
    auto version = parseNumber<int>(head[1], "format version");
    if (version != kPatchFormatVersion) {
        throw VersionError(fmt::format("unsupported patch format version {} (expected {})", version,
                                       kPatchFormatVersion));
    }
    Patch patch;
    auto seed = need("seed");
    expectKeyword(seed, "seed", 1, "patch file");
    patch.meta.seed = parseNumber<std::uint64_t>(seed[1], "seed");
    auto method = need("method");
    expectKeyword(method, "method", 1, "patch file");
    patch.meta.method = std::string(method[1]);
    auto fitness = need("fitness");
    expectKeyword(fitness, "fitness", 1, "patch file");
    patch.meta.fitness = parseHexFloat(fitness[1]);
    auto entries = need("entries");
    expectKeyword(entries, "entries", 1, "patch file");
    auto n = parseNumber<std::size_t>(entries[1], "entry count");
    for (std::size_t k = 0; k < n; ++k) {
        auto t = need("patch entry");
        if (t.size() != 4) throw ParseError(fmt::format("patch entry {}: expected 4 fields", k));
        PatchEntry e;
        e.layer = parseNumber<std::size_t>(t[0], "layer index");
        e.i = parseNumber<std::size_t>(t[1], "row index");
        e.j = parseNumber<std::size_t>(t[2], "column index");
        auto v = parseHexFloat(t[3]);
        e.value = static_cast<float>(v);
        if (static_cast<double>(e.value) != v) {
            throw ValidationError(fmt::format("patch entry {}: value is not a binary32 number", k));
        }
        patch.entries.push_back(e);
    }
    if (reader.position() != bytes.size()) {
        throw InconsistencyError("patch file has trailing content after the declared entries");
    }
    checkUniqueCoords(patch);
    return patch;
}

Patch loadPatch(std::span<const std::uint8_t> bytes, const NetworkModel& model) {
    auto patch = loadPatch(bytes);
    validatePatch(patch, model);
    return patch;
}

Bytes readFile(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void writeFile(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

void writeTextFile(const std::filesystem::path& path, std::string_view text) {
    writeFile(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

} // namespace nnrepair
