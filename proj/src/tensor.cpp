#include "nnrepair/tensor.hpp"

#include "nnrepair/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

namespace nnrepair {

namespace {

std::size_t shapeProduct(const std::vector<std::size_t>& shape) {
    for (auto d : shape) {
        if (d == 0) {
            throw DimensionError("tensor shape entries must be positive");
        }
    }
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shapeProduct(shape_), 0.0f) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    auto expected = shapeProduct(shape_);
    if (expected != data_.size()) {
        throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape product " + std::to_string(expected));
    }
}

Tensor Tensor::vector(std::vector<float> values) {
    if (values.empty()) {
        throw DimensionError("tensor must hold at least one element");
    }
    auto n = values.size();
    return Tensor({n}, std::move(values));
}

bool Tensor::allFinite() const {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

} // namespace nnrepair
