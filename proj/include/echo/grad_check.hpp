#pragma once

#include "echo/param.hpp"
#include "echo/types.hpp"

#include <functional>

namespace echo {

// Central-difference gradient of f with respect to one parameter:
// (f(theta + h e_i) - f(theta - h e_i)) / 2h per coordinate. f must read the
// parameter's current value each call; the value is restored afterwards.
Mat finite_difference_grad(const std::function<double()>& f, Parameter& p, double h);

// max over coordinates of |a-b| / max(|a|, |b|, floor)
double max_relative_error(const Mat& a, const Mat& b, double floor = 1e-6);

}  // namespace echo
