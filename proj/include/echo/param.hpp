#pragma once

#include "echo/types.hpp"

#include <string>
#include <utility>

namespace echo {

// A trainable weight: value plus a gradient accumulator of the same shape and
// a freeze flag the optimizer honors. grad is mutable so that backward can
// accumulate into it through a const model.
struct Parameter {
    Mat value;
    mutable Mat grad;
    bool frozen = false;
    std::string name;

    Parameter() = default;

    Parameter(std::string param_name, Index rows, Index cols)
        : value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)), name(std::move(param_name)) {}

    Index size() const { return value.size(); }

    void zero_grad() const { grad.setZero(); }
};

}  // namespace echo
