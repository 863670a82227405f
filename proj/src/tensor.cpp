#include "leviathan/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

#include "leviathan/errors.hpp"

namespace leviathan {

std::size_t shape_numel(const Shape& shape)
{
    std::size_t n = 1;
    for (auto e : shape)
        n *= e;
    return n;
}

std::string shape_string(const Shape& shape)
{
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i)
        out << (i ? "x" : "") << shape[i];
    out << ']';
    return out.str();
}

namespace {

void check_shape(const Shape& shape)
{
    if (shape.empty())
        throw DimensionError("tensor shape must have at least one axis");
    for (auto e : shape)
        if (e == 0)
            throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
}

}  // namespace

Tensor::Tensor(Shape shape, double fill)
  : shape_{std::move(shape)}
{
    check_shape(shape_);
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
  : shape_{std::move(shape)}, data_{std::move(data)}
{
    check_shape(shape_);
    if (shape_numel(shape_) != data_.size())
        throw DimensionError("data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(shape_));
}

Tensor Tensor::from(std::initializer_list<double> values)
{
    return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::extent(std::size_t axis) const
{
    if (axis >= shape_.size())
        throw DimensionError("axis out of range for shape " + shape_string(shape_));
    return shape_[axis];
}

std::size_t Tensor::rows() const
{
    return shape_.empty() ? 0 : data_.size() / shape_.back();
}

std::size_t Tensor::cols() const
{
    return shape_.empty() ? 0 : shape_.back();
}

double Tensor::item() const
{
    if (data_.size() != 1)
        throw DimensionError("item() on tensor of shape " + shape_string(shape_));
    return data_[0];
}

void Tensor::fill(double value)
{
    std::fill(data_.begin(), data_.end(), value);
}

Tensor Tensor::reshaped(Shape shape) const
{
    return Tensor(std::move(shape), data_);
}

bool Tensor::identical(const Tensor& other) const noexcept
{
    return shape_ == other.shape_ &&
           (data_.empty() ||
            std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t state)
{
    for (auto b : bytes) {
        state ^= static_cast<std::uint64_t>(b);
        state *= 0x100000001b3ULL;
    }
    return state;
}

std::uint64_t hash_tensor(const Tensor& t, std::uint64_t state)
{
    for (auto e : t.shape()) {
        std::uint64_t v = e;
        state = fnv1a(std::as_bytes(std::span{&v, 1}), state);
    }
    return fnv1a(std::as_bytes(t.data()), state);
}

}  // namespace leviathan
