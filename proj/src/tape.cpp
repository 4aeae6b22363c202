#include "echo/tape.hpp"

#include <cmath>
#include <utility>

namespace echo {

namespace {

void require_same_tape(Var a, Var b, const char* op) {
    if (a.tape == nullptr || b.tape == nullptr || a.tape != b.tape) {
        throw Error(std::string(op) + " called with values from different tapes");
    }
}

}  // namespace

Var Tape::emplace(Mat value, Backprop backprop) {
    Node node;
    node.value = std::move(value);
    node.backprop = std::move(backprop);
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(const Parameter& p) {
    auto it = leaves_.find(&p);
    if (it != leaves_.end()) return Var{this, it->second};
    check_finite(p.value, "leaf");
    Var v = emplace(p.value, nullptr);
    nodes_[static_cast<std::size_t>(v.id)].param = &p;
    leaves_.emplace(&p, v.id);
    return v;
}

Var Tape::constant(Mat value) {
    check_finite(value, "constant");
    return emplace(std::move(value), nullptr);
}

void Tape::set_backprop(int id, Backprop backprop) {
    nodes_[static_cast<std::size_t>(id)].backprop = std::move(backprop);
}

void Tape::accumulate(int id, const Mat& g) {
    Mat& buf = grad_buffer(id);
    buf += g;
}

Mat& Tape::grad_buffer(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad) {
        n.grad = Mat::Zero(n.value.rows(), n.value.cols());
        n.has_grad = true;
    }
    return n.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape != this) throw Error("backward called with a loss from a different tape");
    if (used_) throw StaleGraphError("backward called twice on the same recorded forward");
    used_ = true;
    const Mat& lv = value(loss.id);
    if (lv.rows() != 1 || lv.cols() != 1) {
        throw ShapeError("backward expects a scalar loss, got " + shape_str(lv));
    }
    accumulate(loss.id, Mat::Ones(1, 1));
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.has_grad && n.backprop) n.backprop(*this, n.grad);
    }
    for (const auto& [param, id] : leaves_) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.has_grad || param->frozen) continue;
        check_finite(n.grad, "backward");
        param->grad += n.grad;
    }
}

Var matmul(Var a, Var b) {
    require_same_tape(a, b, "matmul");
    Tape& t = *a.tape;
    Mat value = matmul(a.value(), b.value());
    const int ia = a.id, ib = b.id;
    return t.emplace(std::move(value), [ia, ib](Tape& tp, const Mat& g) {
        tp.accumulate(ia, g * tp.value(ib).transpose());
        tp.accumulate(ib, tp.value(ia).transpose() * g);
    });
}

Var matmul_nt(Var a, Var b) {
    require_same_tape(a, b, "matmul_nt");
    Tape& t = *a.tape;
    Mat value = matmul_nt(a.value(), b.value());
    const int ia = a.id, ib = b.id;
    return t.emplace(std::move(value), [ia, ib](Tape& tp, const Mat& g) {
        tp.accumulate(ia, g * tp.value(ib));
        tp.accumulate(ib, g.transpose() * tp.value(ia));
    });
}

Var softmax_rows(Var m, const BoolArray* mask) {
    Tape& t = *m.tape;
    Mat value = softmax_rows(m.value(), mask);
    const int im = m.id;
    Var out = t.emplace(std::move(value), nullptr);
    const int io = out.id;
    // masked entries have probability exactly 0, which zeroes their gradient
    // without consulting the mask again
    t.set_backprop(io, [im, io](Tape& tp, const Mat& g) {
        const Mat& p = tp.value(io);
        Mat gx(p.rows(), p.cols());
        for (Index r = 0; r < p.rows(); ++r) {
            const double dot = g.row(r).cwiseProduct(p.row(r)).sum();
            gx.row(r) = (p.row(r).array() * (g.row(r).array() - dot)).matrix();
        }
        tp.accumulate(im, gx);
    });
    return out;
}

Var rms_norm(Var x, Var gamma, double eps) {
    require_same_tape(x, gamma, "rms_norm");
    Tape& t = *x.tape;
    Mat value = rms_norm(x.value(), gamma.value(), eps);
    const int ix = x.id, ig = gamma.id;
    return t.emplace(std::move(value), [ix, ig, eps](Tape& tp, const Mat& g) {
        const Mat& xv = tp.value(ix);
        const Mat& gamma_v = tp.value(ig);
        const Index d = xv.cols();
        Mat gx(xv.rows(), xv.cols());
        Mat ggamma = Mat::Zero(1, d);
        for (Index r = 0; r < xv.rows(); ++r) {
            const double mean_sq = xv.row(r).squaredNorm() / static_cast<double>(d);
            const double inv = 1.0 / std::sqrt(mean_sq + eps);
            const Mat gg = g.row(r).cwiseProduct(gamma_v.row(0));
            const double dot = gg.cwiseProduct(xv.row(r)).sum();
            gx.row(r) = gg * inv - xv.row(r) * (dot * inv * inv * inv / static_cast<double>(d));
            ggamma.row(0) += g.row(r).cwiseProduct(xv.row(r)) * inv;
        }
        tp.accumulate(ix, gx);
        tp.accumulate(ig, ggamma);
    });
}

Var silu(Var x) {
    Tape& t = *x.tape;
    Mat value = silu(x.value());
    const int ix = x.id;
    return t.emplace(std::move(value), [ix](Tape& tp, const Mat& g) {
        const Mat& xv = tp.value(ix);
        Mat deriv = xv.unaryExpr([](double v) {
            const double s = 1.0 / (1.0 + std::exp(-v));
            return s * (1.0 + v * (1.0 - s));
        });
        tp.accumulate(ix, g.cwiseProduct(deriv));
    });
}

Var rope(Var x, std::span<const int> positions, int heads, double base) {
    Tape& t = *x.tape;
    Mat value = rope(x.value(), positions, heads, base);
    const int ix = x.id;
    std::vector<int> pos(positions.begin(), positions.end());
    return t.emplace(std::move(value), [ix, pos = std::move(pos), heads, base](Tape& tp, const Mat& g) {
        // the rotation is orthogonal, so the adjoint is the inverse rotation
        tp.accumulate(ix, rope(g, pos, heads, base, -1));
    });
}

Var add_rowvec(Var x, Var b) {
    require_same_tape(x, b, "add_rowvec");
    Tape& t = *x.tape;
    Mat value = add_rowvec(x.value(), b.value());
    const int ix = x.id, ib = b.id;
    return t.emplace(std::move(value), [ix, ib](Tape& tp, const Mat& g) {
        tp.accumulate(ix, g);
        tp.accumulate(ib, g.colwise().sum());
    });
}

Var hadamard(Var a, Var b) {
    require_same_tape(a, b, "hadamard");
    Tape& t = *a.tape;
    Mat value = hadamard(a.value(), b.value());
    const int ia = a.id, ib = b.id;
    return t.emplace(std::move(value), [ia, ib](Tape& tp, const Mat& g) {
        tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
        tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
    });
}

Var add(Var a, Var b) {
    require_same_tape(a, b, "add");
    Tape& t = *a.tape;
    Mat value = add(a.value(), b.value());
    const int ia = a.id, ib = b.id;
    return t.emplace(std::move(value), [ia, ib](Tape& tp, const Mat& g) {
        tp.accumulate(ia, g);
        tp.accumulate(ib, g);
    });
}

Var scale(Var a, double c) {
    Tape& t = *a.tape;
    Mat value = scale(a.value(), c);
    const int ia = a.id;
    return t.emplace(std::move(value), [ia, c](Tape& tp, const Mat& g) { tp.accumulate(ia, g * c); });
}

Var slice_cols(Var x, Index first_col, Index width) {
    Tape& t = *x.tape;
    Mat value = slice_cols(x.value(), first_col, width);
    const int ix = x.id;
    return t.emplace(std::move(value), [ix, first_col, width](Tape& tp, const Mat& g) {
        tp.grad_buffer(ix).middleCols(first_col, width) += g;
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols needs at least one part");
    Tape& t = *parts.front().tape;
    std::vector<Mat> values;
    values.reserve(parts.size());
    std::vector<int> ids;
    std::vector<Index> widths;
    for (Var p : parts) {
        require_same_tape(parts.front(), p, "concat_cols");
        values.push_back(p.value());
        ids.push_back(p.id);
        widths.push_back(p.cols());
    }
    Mat value = concat_cols(values);
    return t.emplace(std::move(value),
                     [ids = std::move(ids), widths = std::move(widths)](Tape& tp, const Mat& g) {
                         Index at = 0;
                         for (std::size_t i = 0; i < ids.size(); ++i) {
                             tp.accumulate(ids[i], g.middleCols(at, widths[i]));
                             at += widths[i];
                         }
                     });
}

Var rows_lookup(Var table, std::span<const int> ids) {
    Tape& t = *table.tape;
    Mat value = rows_lookup(table.value(), ids);
    const int it = table.id;
    std::vector<int> id_copy(ids.begin(), ids.end());
    return t.emplace(std::move(value), [it, id_copy = std::move(id_copy)](Tape& tp, const Mat& g) {
        Mat& buf = tp.grad_buffer(it);
        for (std::size_t r = 0; r < id_copy.size(); ++r) {
            buf.row(id_copy[r]) += g.row(static_cast<Index>(r));
        }
    });
}

Var cross_entropy_sum(Var logits, std::span<const int> targets) {
    Tape& t = *logits.tape;
    Mat value(1, 1);
    value(0, 0) = cross_entropy_sum(logits.value(), targets);
    const int il = logits.id;
    std::vector<int> tgt(targets.begin(), targets.end());
    return t.emplace(std::move(value), [il, tgt = std::move(tgt)](Tape& tp, const Mat& g) {
        const Mat& z = tp.value(il);
        const double gs = g(0, 0);
        Mat gz = Mat::Zero(z.rows(), z.cols());
        for (std::size_t r = 0; r < tgt.size(); ++r) {
            const Index i = static_cast<Index>(r);
            const double row_max = z.row(i).maxCoeff();
            Eigen::ArrayXd e = (z.row(i).array() - row_max).exp();
            gz.row(i) = (e / e.sum()).matrix() * gs;
            gz(i, tgt[r]) -= gs;
        }
        tp.accumulate(il, gz);
    });
}

}  // namespace echo
