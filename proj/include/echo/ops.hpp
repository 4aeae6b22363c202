#pragma once

#include "echo/param.hpp"
#include "echo/types.hpp"

#include <optional>
#include <span>
#include <vector>

namespace echo {

// Plain (non-recording) kernels. The autodiff tape in tape.hpp exposes the
// same operations on Var handles; both run the identical Eigen expressions so
// a recorded forward and a plain forward agree bitwise.

// c[i][j] = sum_t a[i][t] * b[t][j]
Mat matmul(const Mat& a, const Mat& b);

// a * b^T without materializing the transpose.
Mat matmul_nt(const Mat& a, const Mat& b);

// Row-wise softmax with per-row max subtraction. Masked entries come out as
// exactly 0; a fully masked row raises DegenerateRowError.
Mat softmax_rows(const Mat& m, const BoolArray* mask = nullptr);

// y = gamma (x) x / sqrt(mean(x^2) + eps), over the last dimension. gamma is 1xd.
Mat rms_norm(const Mat& x, const Mat& gamma, double eps);

// Elementwise x * sigmoid(x).
Mat silu(const Mat& x);

// Rotary position embedding applied per head of width cols/heads; row r is
// rotated by angles derived from positions[r]. sign=-1 applies the inverse
// rotation (used by the backward pass).
Mat rope(const Mat& x, std::span<const int> positions, int heads, double base, int sign = 1);

// x + b broadcast over rows; b is a 1xn row vector.
Mat add_rowvec(const Mat& x, const Mat& b);

Mat hadamard(const Mat& a, const Mat& b);
Mat add(const Mat& a, const Mat& b);
Mat scale(const Mat& a, double c);
Mat slice_cols(const Mat& x, Index first_col, Index width);
Mat concat_cols(const std::vector<Mat>& parts);

// Rows of `table` selected by token id; ids are validated against table rows.
Mat rows_lookup(const Mat& table, std::span<const int> ids);

// Sum over rows 0..targets.size()-1 of -log softmax(logits_row)[target].
// The caller divides by the position count for a mean.
double cross_entropy_sum(const Mat& logits, std::span<const int> targets);

// Query i may attend key j iff j <= i + query_offset. query_offset is the
// absolute position of query row 0 (prefill uses 0).
BoolArray causal_mask(Index n_queries, Index n_keys, Index query_offset = 0);

// Throws NonFiniteError naming `op` if m holds NaN or Inf.
void check_finite(const Mat& m, const char* op);

}  // namespace echo
