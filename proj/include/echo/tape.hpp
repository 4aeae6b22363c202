#pragma once

#include "echo/errors.hpp"
#include "echo/ops.hpp"
#include "echo/param.hpp"
#include "echo/types.hpp"

#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

namespace echo {

class Tape;

// Handle to a node on a tape. Cheap to copy; the tape owns the data.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Mat& value() const;
    Index rows() const;
    Index cols() const;
};

// Reverse-mode tape, recorded per forward call and consumed by one backward
// sweep. First order only. Forward values are computed by the same plain
// kernels declared in ops.hpp, so a recorded forward matches a plain forward
// bitwise.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // One node per Parameter per tape; repeated calls return the same handle.
    Var leaf(const Parameter& p);

    Var constant(Mat value);

    // Seeds d(loss)/d(loss) = 1, sweeps the tape in reverse, then adds each
    // reachable leaf's gradient into its Parameter (frozen leaves skipped).
    // A second call without a new forward raises StaleGraphError.
    void backward(Var loss);

    const Mat& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    std::size_t node_count() const { return nodes_.size(); }

    // --- low-level API used by the operation definitions ---
    using Backprop = std::function<void(Tape&, const Mat& grad_out)>;

    Var emplace(Mat value, Backprop backprop);
    // For operations whose backward needs the output node's own id/value.
    void set_backprop(int id, Backprop backprop);

    void accumulate(int id, const Mat& g);
    // Gradient buffer for scatter-style accumulation (row/column updates).
    Mat& grad_buffer(int id);

  private:
    struct Node {
        Mat value;
        Mat grad;
        bool has_grad = false;
        const Parameter* param = nullptr;
        Backprop backprop;
    };

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, int> leaves_;
    bool used_ = false;
};

inline const Mat& Var::value() const { return tape->value(id); }
inline Index Var::rows() const { return value().rows(); }
inline Index Var::cols() const { return value().cols(); }

// Tape-recorded counterparts of the plain kernels in ops.hpp.
Var matmul(Var a, Var b);
// a * b^T without materializing the transpose.
Var matmul_nt(Var a, Var b);
Var softmax_rows(Var m, const BoolArray* mask = nullptr);
Var rms_norm(Var x, Var gamma, double eps);
Var silu(Var x);
Var rope(Var x, std::span<const int> positions, int heads, double base);
Var add_rowvec(Var x, Var b);
Var hadamard(Var a, Var b);
Var add(Var a, Var b);
Var scale(Var a, double c);
Var slice_cols(Var x, Index first_col, Index width);
Var concat_cols(const std::vector<Var>& parts);
Var rows_lookup(Var table, std::span<const int> ids);
// Scalar (1x1) node with the summed negative log-likelihood.
Var cross_entropy_sum(Var logits, std::span<const int> targets);

}  // namespace echo
