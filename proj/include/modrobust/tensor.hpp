#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "modrobust/errors.hpp"

namespace modrobust {

/// Dense row-major 2-D array of doubles with an optional gradient slot.
class Tensor {
public:
    Tensor() = default;

    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(checked_size(rows, cols), fill) {}

    Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != checked_size(rows, cols)) {
            throw ShapeError("tensor " + shape_string(rows, cols) + " given " +
                             std::to_string(data_.size()) + " values");
        }
    }

    /// Builds from nested rows, e.g. {{1, 2}, {3, 4}}.
    Tensor(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        checked_size(rows_, cols_);
        data_.reserve(rows_ * cols_);
        for (const auto& row : rows) {
            if (row.size() != cols_) throw ShapeError("ragged tensor literal");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static Tensor scalar(double value) { return Tensor(1, 1, value); }

    static Tensor row(std::span<const double> values) {
        return Tensor(1, values.size(), std::vector<double>(values.begin(), values.end()));
    }

    static Tensor identity(std::size_t n) {
        Tensor t(n, n);
        for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
        return t;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double item() const {
        if (data_.size() != 1) throw ShapeError("item() on " + shape() + " tensor");
        return data_[0];
    }

    std::span<const double> row_values(std::size_t r) const {
        return std::span<const double>(data_).subspan(r * cols_, cols_);
    }

    bool has_grad() const noexcept { return !grad_.empty(); }
    std::span<double> grad() noexcept { return grad_; }
    std::span<const double> grad() const noexcept { return grad_; }

    /// Allocates a zero gradient if none is present.
    std::span<double> ensure_grad() {
        if (grad_.empty()) grad_.assign(data_.size(), 0.0);
        return grad_;
    }

    void zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }
    void clear_grad() { grad_.clear(); }

    std::string shape() const { return shape_string(rows_, cols_); }

    static std::string shape_string(std::size_t rows, std::size_t cols) {
        return std::to_string(rows) + "x" + std::to_string(cols);
    }

    /// Compares shape and values only; gradients are ignored.
    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    static std::size_t checked_size(std::size_t rows, std::size_t cols) {
        if (rows == 0 || cols == 0) {
            throw ShapeError("tensor dimensions must be positive, got " + shape_string(rows, cols));
        }
        return rows * cols;
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
    std::vector<double> grad_;
};

enum class Activation { relu, tanh, identity };

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: cannot multiply " + a.shape() + " by " + b.shape());
    }
    Tensor out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

inline double activate(double x, Activation kind) {
    switch (kind) {
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::tanh: return std::tanh(x);
        case Activation::identity: return x;
    }
    return x;
}

/// Pointwise derivative given input `x` and output `y`. relu'(0) is 0.
inline double activation_derivative(double x, double y, Activation kind) {
    switch (kind) {
        case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
        case Activation::tanh: return 1.0 - y * y;
        case Activation::identity: return 1.0;
    }
    return 1.0;
}

inline Tensor activate(const Tensor& x, Activation kind) {
    Tensor out = x;
    out.clear_grad();
    for (double& v : out.data()) v = activate(v, kind);
    return out;
}

/// Handle to a value recorded on a Tape.
class Var {
public:
    Var() = default;
    std::size_t index() const noexcept { return index_; }

private:
    friend class Tape;
    explicit Var(std::size_t index) : index_(index) {}
    std::size_t index_ = 0;
};

/// Per-row edit applied by Tape::edit_rows: out = scale * x + offset.
struct RowEdit {
    std::size_t row = 0;
    double scale = 1.0;
    std::vector<double> offset;  // empty means no offset
};

/// Records a forward computation and replays it in reverse for gradients.
///
/// Parameters registered with `parameter()` accumulate their gradient into the
/// tensor's own grad slot on each `backward()` call; intermediate gradients are
/// reset at the start of every call. A tape is built for one forward pass and
/// then discarded.
class Tape {
public:
    Var parameter(Tensor& p) {
        Var v = push(p, nullptr);
        nodes_.back().sink = &p;
        return v;
    }

    Var constant(Tensor value) {
        value.clear_grad();
        return push(std::move(value), nullptr);
    }

    const Tensor& value(Var v) const { return nodes_.at(v.index()).value; }

    /// Gradient of the last backward() loss with respect to `v`.
    std::span<const double> grad(Var v) const { return nodes_.at(v.index()).grad; }

    std::size_t size() const noexcept { return nodes_.size(); }

    Var matmul(Var a, Var b) {
        Tensor out = modrobust::matmul(value(a), value(b));
        const std::size_t ia = a.index();
        const std::size_t ib = b.index();
        return push(std::move(out), [ia, ib](Tape& t, std::size_t self) {
            const Tensor& av = t.nodes_[ia].value;
            const Tensor& bv = t.nodes_[ib].value;
            const auto& g = t.nodes_[self].grad;
            const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
            auto& ga = t.nodes_[ia].grad;
            auto& gb = t.nodes_[ib].grad;
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double aip = av(i, p);
                    for (std::size_t j = 0; j < m; ++j) {
                        const double gij = g[i * m + j];
                        acc += gij * bv(p, j);
                        gb[p * m + j] += aip * gij;
                    }
                    ga[i * k + p] += acc;
                }
            }
        });
    }

    Var add(Var a, Var b) {
        require_same_shape(a, b, "add");
        Tensor out = value(a);
        const auto bv = value(b).data();
        auto od = out.data();
        for (std::size_t i = 0; i < od.size(); ++i) od[i] += bv[i];
        const std::size_t ia = a.index(), ib = b.index();
        return push(std::move(out), [ia, ib](Tape& t, std::size_t self) {
            const auto& g = t.nodes_[self].grad;
            for (std::size_t i = 0; i < g.size(); ++i) {
                t.nodes_[ia].grad[i] += g[i];
                t.nodes_[ib].grad[i] += g[i];
            }
        });
    }

    Var sub(Var a, Var b) {
        require_same_shape(a, b, "sub");
        Tensor out = value(a);
        const auto bv = value(b).data();
        auto od = out.data();
        for (std::size_t i = 0; i < od.size(); ++i) od[i] -= bv[i];
        const std::size_t ia = a.index(), ib = b.index();
        return push(std::move(out), [ia, ib](Tape& t, std::size_t self) {
            const auto& g = t.nodes_[self].grad;
            for (std::size_t i = 0; i < g.size(); ++i) {
                t.nodes_[ia].grad[i] += g[i];
                t.nodes_[ib].grad[i] -= g[i];
            }
        });
    }

    /// Elementwise product.
    Var mul(Var a, Var b) {
        require_same_shape(a, b, "mul");
        Tensor out = value(a);
        const auto bv = value(b).data();
        auto od = out.data();
        for (std::size_t i = 0; i < od.size(); ++i) od[i] *= bv[i];
        const std::size_t ia = a.index(), ib = b.index();
        return push(std::move(out), [ia, ib](Tape& t, std::size_t self) {
            const auto& g = t.nodes_[self].grad;
            const auto av = t.nodes_[ia].value.data();
            const auto bv = t.nodes_[ib].value.data();
            for (std::size_t i = 0; i < g.size(); ++i) {
                t.nodes_[ia].grad[i] += g[i] * bv[i];
                t.nodes_[ib].grad[i] += g[i] * av[i];
            }
        });
    }

    Var scale(Var a, double factor) {
        Tensor out = value(a);
        for (double& v : out.data()) v *= factor;
        const std::size_t ia = a.index();
        return push(std::move(out), [ia, factor](Tape& t, std::size_t self) {
            const auto& g = t.nodes_[self].grad;
            for (std::size_t i = 0; i < g.size(); ++i) t.nodes_[ia].grad[i] += factor * g[i];
        });
    }

    /// Adds a 1 x cols bias row to every row of `x`.
    Var add_row(Var x, Var bias) {
        const Tensor& xv = value(x);
        const Tensor& bv = value(bias);
        if (bv.rows() != 1 || bv.cols() != xv.cols()) {
            throw ShapeError("add_row: bias " + bv.shape() + " does not fit " + xv.shape());
        }
        Tensor out = xv;
        for (std::size_t r = 0; r < out.rows(); ++r) {
            for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv(0, c);
        }
        const std::size_t ix = x.index(), ib = bias.index();
        return push(std::move(out), [ix, ib](Tape& t, std::size_t self) {
            const auto& g = t.nodes_[self].grad;
            const std::size_t cols = t.nodes_[ib].value.cols();
            for (std::size_t i = 0; i < g.size(); ++i) {
                t.nodes_[ix].grad[i] += g[i];
                t.nodes_[ib].grad[i % cols] += g[i];
            }
        });
    }

    Var activation(Var x, Activation kind) {
        Tensor out = activate(value(x), kind);
        const std::size_t ix = x.index();
        return push(std::move(out), [ix, kind](Tape& t, std::size_t self) {
            const auto& g = t.nodes_[self].grad;
            const auto in = t.nodes_[ix].value.data();
            const auto y = t.nodes_[self].value.data();
            for (std::size_t i = 0; i < g.size(); ++i) {
                t.nodes_[ix].grad[i] += g[i] * activation_derivative(in[i], y[i], kind);
            }
        });
    }

    /// Horizontal concatenation of tensors with equal row counts.
    Var concat_cols(std::span<const Var> parts) {
        if (parts.empty()) throw ShapeError("concat_cols: no operands");
        const std::size_t rows = value(parts[0]).rows();
        std::size_t cols = 0;
        for (Var p : parts) {
            if (value(p).rows() != rows) {
                throw ShapeError("concat_cols: row mismatch " + value(parts[0]).shape() + " vs " +
                                 value(p).shape());
            }
            cols += value(p).cols();
        }
        Tensor out(rows, cols);
        std::vector<std::size_t> indices;
        std::size_t offset = 0;
        for (Var p : parts) {
            const Tensor& pv = value(p);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < pv.cols(); ++c) out(r, offset + c) = pv(r, c);
            }
            offset += pv.cols();
            indices.push_back(p.index());
        }
        return push(std::move(out), [indices](Tape& t, std::size_t self) {
            const auto& g = t.nodes_[self].grad;
            const std::size_t total = t.nodes_[self].value.cols();
            std::size_t offset = 0;
            for (std::size_t idx : indices) {
                auto& part = t.nodes_[idx];
                const std::size_t pc = part.value.cols();
                for (std::size_t r = 0; r < part.value.rows(); ++r) {
                    for (std::size_t c = 0; c < pc; ++c) part.grad[r * pc + c] += g[r * total + offset + c];
                }
                offset += pc;
            }
        });
    }

    /// Rewrites selected rows as scale * x + offset; other rows pass through.
    Var edit_rows(Var x, std::vector<RowEdit> edits) {
        Tensor out = value(x);
        for (const RowEdit& e : edits) {
            if (e.row >= out.rows()) {
                throw ContractError("edit_rows: row " + std::to_string(e.row) + " outside " + out.shape());
            }
            if (!e.offset.empty() && e.offset.size() != out.cols()) {
                throw ShapeError("edit_rows: offset of length " + std::to_string(e.offset.size()) +
                                 " for " + out.shape());
            }
            for (std::size_t c = 0; c < out.cols(); ++c) {
                out(e.row, c) = e.scale * out(e.row, c) + (e.offset.empty() ? 0.0 : e.offset[c]);
            }
        }
        std::vector<double> row_scale(out.rows(), 1.0);
        for (const RowEdit& e : edits) row_scale[e.row] *= e.scale;
        const std::size_t ix = x.index();
        return push(std::move(out), [ix, row_scale = std::move(row_scale)](Tape& t, std::size_t self) {
            const auto& g = t.nodes_[self].grad;
            const std::size_t cols = t.nodes_[self].value.cols();
            for (std::size_t i = 0; i < g.size(); ++i) t.nodes_[ix].grad[i] += row_scale[i / cols] * g[i];
        });
    }

    Var sum(Var x) {
        double total = 0.0;
        for (double v : value(x).data()) total += v;
        const std::size_t ix = x.index();
        return push(Tensor::scalar(total), [ix](Tape& t, std::size_t self) {
            const double g = t.nodes_[self].grad[0];
            for (double& gi : t.nodes_[ix].grad) gi += g;
        });
    }

    Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(value(x).size())); }

    /// Mean squared error between two equally shaped tensors, as a 1x1 tensor.
    Var mse(Var prediction, Var target) {
        Var diff = sub(prediction, target);
        return mean(mul(diff, diff));
    }

    /// Reverse-mode sweep from a 1x1 loss.
    void backward(Var loss) {
        const Tensor& lv = value(loss);
        if (lv.rows() != 1 || lv.cols() != 1) {
            throw ContractError("backward: loss must be 1x1, got " + lv.shape());
        }
        for (auto& n : nodes_) n.grad.assign(n.value.size(), 0.0);
        nodes_[loss.index()].grad[0] = 1.0;
        for (std::size_t i = loss.index() + 1; i-- > 0;) {
            if (nodes_[i].backward) nodes_[i].backward(*this, i);
        }
        for (auto& n : nodes_) {
            if (n.sink == nullptr) continue;
            auto sink = n.sink->ensure_grad();
            for (std::size_t i = 0; i < sink.size(); ++i) sink[i] += n.grad[i];
        }
    }

private:
    using BackwardFn = std::function<void(Tape&, std::size_t)>;

    struct Node {
        Tensor value;
        std::vector<double> grad;
        BackwardFn backward;
        Tensor* sink = nullptr;
    };

    Var push(Tensor value, BackwardFn fn) {
        value.clear_grad();
        nodes_.push_back(Node{std::move(value), {}, std::move(fn), nullptr});
        return Var(nodes_.size() - 1);
    }

    void require_same_shape(Var a, Var b, const char* op) const {
        const Tensor& av = value(a);
        const Tensor& bv = value(b);
        if (av.rows() != bv.rows() || av.cols() != bv.cols()) {
            throw ShapeError(std::string(op) + ": shape mismatch " + av.shape() + " vs " + bv.shape());
        }
    }

    std::vector<Node> nodes_;
};

/// Scalar-valued computation rebuilt on a fresh tape at each evaluation.
using ScalarFunction = std::function<Var(Tape&)>;

/// Largest relative disagreement between analytic and central-difference
/// gradients over every entry of `params`:
///   |analytic - numeric| / max(1, |analytic|, |numeric|).
/// `f` must register each tensor in `params` via Tape::parameter.
inline double gradient_check(const ScalarFunction& f, std::span<Tensor* const> params, double eps = 1e-5) {
    if (!(eps > 0.0)) throw ContractError("gradient_check: eps must be positive");

    for (Tensor* p : params) p->clear_grad();
    {
        Tape tape;
        Var loss = f(tape);
        if (!std::isfinite(tape.value(loss).item())) throw NumericError("gradient_check: non-finite loss");
        tape.backward(loss);
    }

    auto evaluate = [&f]() {
        Tape tape;
        const double v = tape.value(f(tape)).item();
        if (!std::isfinite(v)) throw NumericError("gradient_check: non-finite loss at perturbed point");
        return v;
    };

    double worst = 0.0;
    for (Tensor* p : params) {
        std::vector<double> analytic(p->size(), 0.0);
        if (p->has_grad()) std::copy(p->grad().begin(), p->grad().end(), analytic.begin());
        auto values = p->data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + eps;
            const double up = evaluate();
            values[i] = saved - eps;
            const double down = evaluate();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
            worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace modrobust
