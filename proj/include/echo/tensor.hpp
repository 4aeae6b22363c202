#pragma once

#include "echo/errors.hpp"
#include "echo/types.hpp"

#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

namespace echo {

// Dense multidimensional array, row-major, used at API boundaries where rank
// exceeds 2 (batched logits) and for checkpoint staging. The 2-d workhorse
// type throughout the library is Mat.
template <class Scalar>
class TensorT {
  public:
    TensorT() = default;

    explicit TensorT(std::vector<Index> shape) : shape_(std::move(shape)) {
        Index total = 1;
        for (Index dim : shape_) {
            if (dim <= 0) throw ShapeError("tensor dimension must be positive, got " + std::to_string(dim));
            total *= dim;
        }
        data_.assign(static_cast<std::size_t>(total), Scalar(0));
    }

    TensorT(std::vector<Index> shape, std::vector<Scalar> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<std::size_t>(element_count(shape_)) != data_.size()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape product " + std::to_string(element_count(shape_)));
        }
    }

    static TensorT from_mat(const MatT<Scalar>& m) {
        TensorT t({m.rows(), m.cols()});
        Eigen::Map<MatT<Scalar>>(t.data(), m.rows(), m.cols()) = m;
        return t;
    }

    const std::vector<Index>& shape() const { return shape_; }
    Index rank() const { return static_cast<Index>(shape_.size()); }
    Index size() const { return static_cast<Index>(data_.size()); }

    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }

    Scalar& operator[](Index flat) { return data_[static_cast<std::size_t>(flat)]; }
    Scalar operator[](Index flat) const { return data_[static_cast<std::size_t>(flat)]; }

    Scalar& at(std::initializer_list<Index> idx) { return data_[flat_index(idx)]; }
    Scalar at(std::initializer_list<Index> idx) const { return data_[flat_index(idx)]; }

    // Row-major 2-d view over a contiguous slab of the data.
    Eigen::Map<MatT<Scalar>> slab(Index offset, Index rows, Index cols) {
        return Eigen::Map<MatT<Scalar>>(data_.data() + offset, rows, cols);
    }
    Eigen::Map<const MatT<Scalar>> slab(Index offset, Index rows, Index cols) const {
        return Eigen::Map<const MatT<Scalar>>(data_.data() + offset, rows, cols);
    }

    bool all_finite() const {
        for (Scalar v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    static Index element_count(const std::vector<Index>& shape) {
        return std::accumulate(shape.begin(), shape.end(), Index(1), std::multiplies<Index>());
    }

  private:
    std::size_t flat_index(std::initializer_list<Index> idx) const {
        if (static_cast<Index>(idx.size()) != rank()) {
            throw ShapeError("index rank " + std::to_string(idx.size()) + " vs tensor rank " +
                             std::to_string(rank()));
        }
        std::size_t flat = 0;
        std::size_t axis = 0;
        for (Index i : idx) {
            flat = flat * static_cast<std::size_t>(shape_[axis]) + static_cast<std::size_t>(i);
            ++axis;
        }
        return flat;
    }

    std::vector<Index> shape_;
    std::vector<Scalar> data_;
};

using Tensor = TensorT<double>;

}  // namespace echo
