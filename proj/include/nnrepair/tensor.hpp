#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace nnrepair {

// Dense row-major float tensor. Shape entries are positive; the flat data
// length always equals the product of the shape.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<float> data);

    // 1-D convenience constructor.
    static Tensor vector(std::vector<float> values);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

    std::span<float> values() { return data_; }
    std::span<const float> values() const { return data_; }
    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    float& operator[](std::size_t k) { return data_[k]; }
    float operator[](std::size_t k) const { return data_[k]; }

    // 2-D element access (row, col).
    float& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    float at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    bool allFinite() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<float> data_;
};

} // namespace nnrepair
