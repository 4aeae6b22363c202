#include "echo/grad_check.hpp"

#include "echo/errors.hpp"

#include <cmath>

namespace echo {

Mat finite_difference_grad(const std::function<double()>& f, Parameter& p, double h) {
    if (!(h > 0.0)) throw ConfigError("finite difference step h must be positive");
    Mat grad(p.value.rows(), p.value.cols());
    for (Index i = 0; i < p.value.rows(); ++i) {
        for (Index j = 0; j < p.value.cols(); ++j) {
            const double saved = p.value(i, j);
            p.value(i, j) = saved + h;
            const double f_plus = f();
            p.value(i, j) = saved - h;
            const double f_minus = f();
            p.value(i, j) = saved;
            grad(i, j) = (f_plus - f_minus) / (2.0 * h);
        }
    }
    return grad;
}

double max_relative_error(const Mat& a, const Mat& b, double floor) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("relative error shapes disagree: " + shape_str(a) + " vs " + shape_str(b));
    }
    double worst = 0.0;
    for (Index i = 0; i < a.rows(); ++i) {
        for (Index j = 0; j < a.cols(); ++j) {
            const double denom = std::max({std::abs(a(i, j)), std::abs(b(i, j)), floor});
            worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / denom);
        }
    }
    return worst;
}

}  // namespace echo
