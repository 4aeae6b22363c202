#include "echo/ops.hpp"

#include "echo/errors.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace echo {

void check_finite(const Mat& m, const char* op) {
    if (!m.allFinite()) {
        throw NonFiniteError(std::string(op) + " produced a non-finite value");
    }
}

Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul inner dimensions disagree: " + shape_str(a) + " x " + shape_str(b));
    }
    Mat c = a * b;
    check_finite(c, "matmul");
    return c;
}

Mat matmul_nt(const Mat& a, const Mat& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt inner dimensions disagree: " + shape_str(a) + " x " +
                         shape_str(b) + "^T");
    }
    Mat c = a * b.transpose();
    check_finite(c, "matmul_nt");
    return c;
}

Mat softmax_rows(const Mat& m, const BoolArray* mask) {
    if (mask != nullptr && (mask->rows() != m.rows() || mask->cols() != m.cols())) {
        throw ShapeError("softmax mask shape " + shape_str(mask->rows(), mask->cols()) +
                         " does not match input " + shape_str(m));
    }
    Mat out(m.rows(), m.cols());
    for (Index i = 0; i < m.rows(); ++i) {
        double row_max = -std::numeric_limits<double>::infinity();
        for (Index j = 0; j < m.cols(); ++j) {
            if (mask == nullptr || (*mask)(i, j)) row_max = std::max(row_max, m(i, j));
        }
        if (row_max == -std::numeric_limits<double>::infinity()) {
            throw DegenerateRowError("softmax row " + std::to_string(i) + " has every entry masked");
        }
        double sum = 0.0;
        for (Index j = 0; j < m.cols(); ++j) {
            if (mask == nullptr || (*mask)(i, j)) {
                const double e = std::exp(m(i, j) - row_max);
                out(i, j) = e;
                sum += e;
            } else {
                out(i, j) = 0.0;
            }
        }
        out.row(i) /= sum;
    }
    check_finite(out, "softmax_rows");
    return out;
}

Mat rms_norm(const Mat& x, const Mat& gamma, double eps) {
    if (gamma.rows() != 1 || gamma.cols() != x.cols()) {
        throw ShapeError("rms_norm gamma shape " + shape_str(gamma) + " does not match input " +
                         shape_str(x));
    }
    Mat out(x.rows(), x.cols());
    const Index d = x.cols();
    for (Index i = 0; i < x.rows(); ++i) {
        const double mean_sq = x.row(i).squaredNorm() / static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(mean_sq + eps);
        out.row(i) = x.row(i).cwiseProduct(gamma.row(0)) * inv;
    }
    check_finite(out, "rms_norm");
    return out;
}

Mat silu(const Mat& x) {
    Mat out = x.unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); });
    check_finite(out, "silu");
    return out;
}

Mat rope(const Mat& x, std::span<const int> positions, int heads, double base, int sign) {
    if (heads <= 0 || x.cols() % heads != 0) {
        throw ShapeError("rope head count " + std::to_string(heads) + " does not divide width " +
                         std::to_string(x.cols()));
    }
    const Index head_dim = x.cols() / heads;
    if (head_dim % 2 != 0) {
        throw ShapeError("rope requires an even head dimension, got " + std::to_string(head_dim));
    }
    if (static_cast<Index>(positions.size()) != x.rows()) {
        throw ShapeError("rope positions length " + std::to_string(positions.size()) +
                         " does not match rows " + std::to_string(x.rows()));
    }
    Mat out(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r) {
        const double pos = static_cast<double>(positions[static_cast<std::size_t>(r)]);
        for (Index pair = 0; pair < head_dim / 2; ++pair) {
            const double freq = std::pow(base, -2.0 * static_cast<double>(pair) / static_cast<double>(head_dim));
            const double angle = sign * pos * freq;
            const double c = std::cos(angle);
            const double s = std::sin(angle);
            for (int h = 0; h < heads; ++h) {
                const Index j = static_cast<Index>(h) * head_dim + 2 * pair;
                const double a = x(r, j);
                const double b = x(r, j + 1);
                out(r, j) = a * c - b * s;
                out(r, j + 1) = a * s + b * c;
            }
        }
    }
    check_finite(out, "rope");
    return out;
}

Mat add_rowvec(const Mat& x, const Mat& b) {
    if (b.rows() != 1 || b.cols() != x.cols()) {
        throw ShapeError("row-vector shape " + shape_str(b) + " does not broadcast over " + shape_str(x));
    }
    Mat out = x.rowwise() + b.row(0);
    check_finite(out, "add_rowvec");
    return out;
}

Mat hadamard(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("hadamard shapes disagree: " + shape_str(a) + " vs " + shape_str(b));
    }
    Mat out = a.cwiseProduct(b);
    check_finite(out, "hadamard");
    return out;
}

Mat add(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("add shapes disagree: " + shape_str(a) + " vs " + shape_str(b));
    }
    Mat out = a + b;
    check_finite(out, "add");
    return out;
}

Mat scale(const Mat& a, double c) {
    Mat out = a * c;
    check_finite(out, "scale");
    return out;
}

Mat slice_cols(const Mat& x, Index first_col, Index width) {
    if (first_col < 0 || width <= 0 || first_col + width > x.cols()) {
        throw ShapeError("slice_cols [" + std::to_string(first_col) + ", " +
                         std::to_string(first_col + width) + ") out of range for " + shape_str(x));
    }
    return x.middleCols(first_col, width);
}

Mat concat_cols(const std::vector<Mat>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols needs at least one part");
    Index cols = 0;
    for (const Mat& p : parts) {
        if (p.rows() != parts.front().rows()) {
            throw ShapeError("concat_cols row mismatch: " + shape_str(p) + " vs " + shape_str(parts.front()));
        }
        cols += p.cols();
    }
    Mat out(parts.front().rows(), cols);
    Index at = 0;
    for (const Mat& p : parts) {
        out.middleCols(at, p.cols()) = p;
        at += p.cols();
    }
    return out;
}

Mat rows_lookup(const Mat& table, std::span<const int> ids) {
    Mat out(static_cast<Index>(ids.size()), table.cols());
    for (std::size_t t = 0; t < ids.size(); ++t) {
        const int id = ids[t];
        if (id < 0 || id >= table.rows()) {
            throw VocabError("token id " + std::to_string(id) + " at position " + std::to_string(t) +
                             " outside vocabulary of size " + std::to_string(table.rows()));
        }
        out.row(static_cast<Index>(t)) = table.row(id);
    }
    return out;
}

double cross_entropy_sum(const Mat& logits, std::span<const int> targets) {
    if (static_cast<Index>(targets.size()) > logits.rows()) {
        throw ShapeError("cross entropy has " + std::to_string(targets.size()) + " targets but only " +
                         std::to_string(logits.rows()) + " logit rows");
    }
    double total = 0.0;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        const int y = targets[t];
        if (y < 0 || y >= logits.cols()) {
            throw VocabError("target id " + std::to_string(y) + " at position " + std::to_string(t) +
                             " outside vocabulary of size " + std::to_string(logits.cols()));
        }
        const Index r = static_cast<Index>(t);
        const double row_max = logits.row(r).maxCoeff();
        const double lse = row_max + std::log((logits.row(r).array() - row_max).exp().sum());
        total += lse - logits(r, y);
    }
    if (!std::isfinite(total)) throw NonFiniteError("cross_entropy produced a non-finite value");
    return total;
}

BoolArray causal_mask(Index n_queries, Index n_keys, Index query_offset) {
    BoolArray mask(n_queries, n_keys);
    for (Index i = 0; i < n_queries; ++i) {
        for (Index j = 0; j < n_keys; ++j) {
            mask(i, j) = j <= i + query_offset;
        }
    }
    return mask;
}

}  // namespace echo
