#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace leviathan {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Extents are strictly positive and their
/// product always equals the data length.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double value) { return Tensor({1}, value); }
    static Tensor from(std::initializer_list<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t numel() const noexcept { return data_.size(); }
    std::size_t extent(std::size_t axis) const;

    // Rows/cols of the 2-D view that collapses all leading axes.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<double> data() & noexcept { return data_; }
    std::span<const double> data() const& noexcept { return data_; }
    // A span into a temporary would dangle.
    std::span<const double> data() const&& = delete;
    double* ptr() noexcept { return data_.data(); }
    const double* ptr() const noexcept { return data_.data(); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double& at(std::size_t row, std::size_t col) { return data_[row * cols() + col]; }
    double at(std::size_t row, std::size_t col) const { return data_[row * cols() + col]; }

    double item() const;

    void fill(double value);
    Tensor reshaped(Shape shape) const;
    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

    // Bitwise equality of shape and payload.
    bool identical(const Tensor& other) const noexcept;

private:
    Shape shape_;
    std::vector<double> data_;
};

std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t state = 0xcbf29ce484222325ULL);
std::uint64_t hash_tensor(const Tensor& t, std::uint64_t state = 0xcbf29ce484222325ULL);

}  // namespace leviathan
