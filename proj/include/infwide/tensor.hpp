#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace infwide {

using Index = Eigen::Index;

/// Thrown when tensor extents do not line up for an operation.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when an argument violates an operation's precondition.
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown for file-system and format failures.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor extents, outermost first.
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<Index> dims) : dims_(dims) {}
    explicit Shape(std::vector<Index> dims) : dims_(std::move(dims)) {}

    [[nodiscard]] Index rank() const { return static_cast<Index>(dims_.size()); }
    [[nodiscard]] Index operator[](Index i) const { return dims_[static_cast<std::size_t>(i)]; }
    Index& operator[](Index i) { return dims_[static_cast<std::size_t>(i)]; }
    [[nodiscard]] Index numel() const
    {
        return std::accumulate(dims_.begin(), dims_.end(), Index{1}, std::multiplies<>());
    }
    [[nodiscard]] const std::vector<Index>& dims() const { return dims_; }
    [[nodiscard]] Index back(Index i = 0) const { return dims_[dims_.size() - 1 - static_cast<std::size_t>(i)]; }

    bool operator==(const Shape&) const = default;

    [[nodiscard]] std::string str() const
    {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
        os << ']';
        return os.str();
    }

private:
    std::vector<Index> dims_;
};

/// Dense row-major real array. Images use the batch x channel x height x width layout.
template <typename Scalar>
class Tensor {
public:
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

    Tensor() = default;
    explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(Array::Zero(shape_.numel())) {}
    Tensor(Shape shape, Scalar fill) : shape_(std::move(shape)), data_(Array::Constant(shape_.numel(), fill)) {}
    Tensor(Shape shape, Array data) : shape_(std::move(shape)), data_(std::move(data))
    {
        if (shape_.numel() != data_.size())
            throw DimensionError("tensor buffer length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_.str());
    }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

    [[nodiscard]] const Shape& shape() const { return shape_; }
    [[nodiscard]] Index rank() const { return shape_.rank(); }
    [[nodiscard]] Index dim(Index i) const { return shape_[i]; }
    [[nodiscard]] Index size() const { return data_.size(); }
    [[nodiscard]] bool empty() const { return data_.size() == 0; }

    Array& array() { return data_; }
    [[nodiscard]] const Array& array() const { return data_; }
    Scalar* data() { return data_.data(); }
    [[nodiscard]] const Scalar* data() const { return data_.data(); }

    Scalar& operator[](Index i) { return data_[i]; }
    Scalar operator[](Index i) const { return data_[i]; }

    /// Element of a 4-D tensor.
    Scalar& at(Index n, Index c, Index h, Index w)
    {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    [[nodiscard]] Scalar at(Index n, Index c, Index h, Index w) const
    {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    /// Element of a 2-D tensor.
    Scalar& at(Index h, Index w) { return data_[h * shape_[1] + w]; }
    [[nodiscard]] Scalar at(Index h, Index w) const { return data_[h * shape_[1] + w]; }

    [[nodiscard]] Tensor reshaped(Shape s) const
    {
        if (s.numel() != size())
            throw DimensionError("cannot reshape " + shape_.str() + " to " + s.str());
        return Tensor(std::move(s), data_);
    }

    template <typename Other>
    [[nodiscard]] Tensor<Other> cast() const
    {
        return Tensor<Other>(shape_, data_.template cast<Other>());
    }

    /// One H x W plane of a 4-D tensor.
    [[nodiscard]] Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
    plane(Index n, Index c) const
    {
        return {data_.data() + (n * shape_[1] + c) * shape_[2] * shape_[3], shape_[2], shape_[3]};
    }
    Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> plane(Index n, Index c)
    {
        return {data_.data() + (n * shape_[1] + c) * shape_[2] * shape_[3], shape_[2], shape_[3]};
    }

    [[nodiscard]] bool all_finite() const { return data_.isFinite().all(); }

private:
    Shape shape_;
    Array data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline void require_rank(const Shape& s, Index rank, const char* what)
{
    if (s.rank() != rank)
        throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " + s.str());
}

} // namespace infwide
