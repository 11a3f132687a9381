#include "transavs/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace transavs {

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::string op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    BackwardFn backward;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

}  // namespace detail

using detail::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

[[noreturn]] void dim_error(std::string_view op, const Shape& a, const Shape& b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

[[noreturn]] void dim_error(std::string_view op, const Shape& a, std::string_view what) {
    throw DimensionError(std::string(op) + ": " + std::string(what) + ", got " + shape_str(a));
}

void require_defined(const Tensor& t, std::string_view op) {
    if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor");
}

void require_2d(const Tensor& t, std::string_view op) {
    require_defined(t, op);
    if (t.ndim() != 2) dim_error(op, t.shape(), "expected a 2-D tensor");
}

void require_same(const Tensor& a, const Tensor& b, std::string_view op) {
    require_defined(a, op);
    require_defined(b, op);
    if (a.shape() != b.shape()) dim_error(op, a.shape(), b.shape());
}

template <class Fwd, class Deriv>
Tensor unary(std::string_view name, const Tensor& a, Fwd fwd, Deriv deriv) {
    require_defined(a, name);
    auto in = a.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
    return make_op(name, a.shape(), std::move(out), {a}, [deriv](const OpContext& c) {
        auto& g = c.in_grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += c.out_grad[i] * deriv(c.in_data[0][i], c.out_data[i]);
    });
}

}  // namespace

// -- Tensor --------------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("Tensor: shape " + shape_str(shape) + " holds " + std::to_string(shape_numel(shape)) +
                             " values, data has " + std::to_string(data.size()));
    }
    for (auto d : shape) {
        if (d == 0) throw DimensionError("Tensor: zero-sized dimension in " + shape_str(shape));
    }
    node_ = std::make_shared<Node>();
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev, bool requires_grad) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::uniform(Shape shape, std::mt19937_64& rng, double lo, double hi, bool requires_grad) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

const Shape& Tensor::shape() const {
    require_defined(*this, "shape");
    return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= ndim()) dim_error("dim", shape(), "axis " + std::to_string(axis) + " out of range");
    return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_ ? node_->data.size() : 0; }

std::span<const double> Tensor::data() const {
    require_defined(*this, "data");
    return node_->data;
}

std::span<double> Tensor::mutable_data() {
    require_defined(*this, "mutable_data");
    if (node_->backward) throw std::logic_error("mutable_data: tensor '" + node_->op + "' is not a leaf");
    return node_->data;
}

double Tensor::item() const {
    if (numel() != 1) dim_error("item", shape(), "expected a single element");
    return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
    require_defined(*this, "set_requires_grad");
    node_->requires_grad = flag;
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->data.size(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw std::logic_error("grad: tensor has no gradient (run backward first)");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->data, false); }

void Tensor::backward() const {
    if (numel() != 1) throw std::invalid_argument("backward: root must be a scalar, got " + shape_str(shape()));
    Tape tape = Tape::record(*this);
    tape.replay();
    tape.clear();
}

const std::string& Tensor::op_name() const {
    require_defined(*this, "op_name");
    return node_->op;
}

Tensor make_op(std::string_view name, Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
               BackwardFn backward) {
    Tensor out(std::move(shape), std::move(data), false);
    out.node_->op = std::string(name);
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
        out.node_->requires_grad = true;
        out.node_->inputs.reserve(inputs.size());
        for (auto& t : inputs) out.node_->inputs.push_back(t.node_);
        out.node_->backward = std::move(backward);
    }
    return out;
}

// -- Tape ----------------------------------------------------------------------

Tape Tape::record(const Tensor& root) {
    Tape tape;
    tape.root_ = root.node();
    if (!tape.root_ || !tape.root_->requires_grad) return tape;

    // Iterative post-order DFS; post-order is a topological order.
    std::unordered_set<const Node*> seen;
    std::vector<std::shared_ptr<Node>> order;
    std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> st;
    st.emplace_back(tape.root_, 0);
    seen.insert(tape.root_.get());
    while (!st.empty()) {
        auto& [node, next] = st.back();
        if (next < node->inputs.size()) {
            auto child = node->inputs[next++];
            if (child->requires_grad && !seen.count(child.get())) {
                seen.insert(child.get());
                st.emplace_back(child, 0);
            }
            continue;
        }
        order.push_back(node);
        st.pop_back();
    }
    tape.order_ = std::move(order);
    return tape;
}

void Tape::replay() {
    if (!root_ || order_.empty()) return;
    for (auto& n : order_) {
        if (n->backward) n->grad.assign(n->data.size(), 0.0);  // intermediates start fresh
        else n->ensure_grad();                                  // leaves accumulate
    }
    root_->grad[0] += 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        Node& n = **it;
        if (!n.backward) continue;
        OpContext ctx;
        ctx.out_data = n.data;
        ctx.out_grad = n.grad;
        ctx.in_data.reserve(n.inputs.size());
        ctx.in_grad.reserve(n.inputs.size());
        for (auto& in : n.inputs) {
            ctx.in_data.emplace_back(in->data);
            if (in->requires_grad) {
                in->ensure_grad();
                ctx.in_grad.emplace_back(in->grad);
            } else {
                ctx.in_grad.emplace_back();
            }
        }
        n.backward(ctx);
    }
}

void Tape::clear() {
    for (auto& n : order_) {
        n->inputs.clear();
        n->backward = nullptr;
    }
    order_.clear();
    root_.reset();
}

// -- linear algebra -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) dim_error("matmul", a.shape(), b.shape());
    std::vector<double> out(m * n);
    MapMat(out.data(), m, n).noalias() = CMapMat(a.data().data(), m, k) * CMapMat(b.data().data(), k, n);
    return make_op("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](const OpContext& c) {
        CMapMat dc(c.out_grad.data(), m, n);
        if (!c.in_grad[0].empty())
            MapMat(c.in_grad[0].data(), m, k).noalias() += dc * CMapMat(c.in_data[1].data(), k, n).transpose();
        if (!c.in_grad[1].empty())
            MapMat(c.in_grad[1].data(), k, n).noalias() += CMapMat(c.in_data[0].data(), m, k).transpose() * dc;
    });
}

Tensor transpose(const Tensor& a) {
    require_2d(a, "transpose");
    const auto m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m * n);
    MapMat(out.data(), n, m) = CMapMat(a.data().data(), m, n).transpose();
    return make_op("transpose", {n, m}, std::move(out), {a}, [m, n](const OpContext& c) {
        MapMat(c.in_grad[0].data(), m, n) += CMapMat(c.out_grad.data(), n, m).transpose();
    });
}

// -- elementwise --------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    require_same(a, b, "add");
    std::vector<double> out(a.numel());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
    return make_op("add", a.shape(), std::move(out), {a, b}, [](const OpContext& c) {
        for (auto& g : c.in_grad)
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += c.out_grad[i];
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same(a, b, "sub");
    std::vector<double> out(a.numel());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
    return make_op("sub", a.shape(), std::move(out), {a, b}, [](const OpContext& c) {
        auto& ga = c.in_grad[0];
        auto& gb = c.in_grad[1];
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c.out_grad[i];
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= c.out_grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same(a, b, "mul");
    std::vector<double> out(a.numel());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
    return make_op("mul", a.shape(), std::move(out), {a, b}, [](const OpContext& c) {
        auto& ga = c.in_grad[0];
        auto& gb = c.in_grad[1];
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c.out_grad[i] * c.in_data[1][i];
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += c.out_grad[i] * c.in_data[0][i];
    });
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_same(a, b, "div");
    std::vector<double> out(a.numel());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / y[i];
    return make_op("div", a.shape(), std::move(out), {a, b}, [](const OpContext& c) {
        auto& ga = c.in_grad[0];
        auto& gb = c.in_grad[1];
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c.out_grad[i] / c.in_data[1][i];
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= c.out_grad[i] * c.out_data[i] / c.in_data[1][i];
    });
}

Tensor scale(const Tensor& a, double factor) {
    return unary("scale", a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
    return unary("add_scalar", a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
    return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor log(const Tensor& a) {
    return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
    return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor square(const Tensor& a) {
    return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
    return unary("sqrt", a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Tensor pow(const Tensor& a, double exponent) {
    return unary("pow", a, [exponent](double x) { return std::pow(x, exponent); },
                 [exponent](double x, double) { return exponent == 0.0 ? 0.0 : exponent * std::pow(x, exponent - 1.0); });
}

Tensor sigmoid(const Tensor& a) {
    return unary("sigmoid", a,
                 [](double x) {
                     if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                     const double e = std::exp(x);
                     return e / (1.0 + e);
                 },
                 [](double, double y) { return y * (1.0 - y); });
}

Tensor clamp_min(const Tensor& a, double lo) {
    return unary("clamp_min", a, [lo](double x) { return x < lo ? lo : x; },
                 [lo](double x, double) { return x < lo ? 0.0 : 1.0; });
}

// -- broadcasting ---------------------------------------------------------------

Tensor add_row_vector(const Tensor& a, const Tensor& b) {
    require_2d(a, "add_row_vector");
    require_defined(b, "add_row_vector");
    const auto m = a.dim(0), n = a.dim(1);
    if (b.numel() != n) dim_error("add_row_vector", a.shape(), b.shape());
    std::vector<double> out(a.data().begin(), a.data().end());
    auto bv = b.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
    return make_op("add_row_vector", a.shape(), std::move(out), {a, b}, [m, n](const OpContext& c) {
        auto& ga = c.in_grad[0];
        auto& gb = c.in_grad[1];
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c.out_grad[i];
        if (!gb.empty())
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gb[j] += c.out_grad[i * n + j];
    });
}

Tensor add_col_vector(const Tensor& a, const Tensor& b) {
    require_2d(a, "add_col_vector");
    require_defined(b, "add_col_vector");
    const auto m = a.dim(0), n = a.dim(1);
    if (b.numel() != m) dim_error("add_col_vector", a.shape(), b.shape());
    std::vector<double> out(a.data().begin(), a.data().end());
    auto bv = b.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[i];
    return make_op("add_col_vector", a.shape(), std::move(out), {a, b}, [m, n](const OpContext& c) {
        auto& ga = c.in_grad[0];
        auto& gb = c.in_grad[1];
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c.out_grad[i];
        if (!gb.empty())
            for (std::size_t i = 0; i < m; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < n; ++j) s += c.out_grad[i * n + j];
                gb[i] += s;
            }
    });
}

// -- reductions ---------------------------------------------------------------

Tensor sum(const Tensor& a) {
    require_defined(a, "sum");
    double s = 0.0;
    for (double x : a.data()) s += x;
    return make_op("sum", {}, {s}, {a}, [](const OpContext& c) {
        const double g = c.out_grad[0];
        for (auto& v : c.in_grad[0]) v += g;
    });
}

Tensor mean(const Tensor& a) {
    require_defined(a, "mean");
    double s = 0.0;
    for (double x : a.data()) s += x;
    const double n = static_cast<double>(a.numel());
    return make_op("mean", {}, {s / n}, {a}, [n](const OpContext& c) {
        const double g = c.out_grad[0] / n;
        for (auto& v : c.in_grad[0]) v += g;
    });
}

// -- row-wise ----------------------------------------------------------------

Tensor softmax_rows(const Tensor& a) {
    require_2d(a, "softmax_rows");
    const auto m = a.dim(0), n = a.dim(1);
    auto x = a.data();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = x.data() + i * n;
        double* o = out.data() + i * n;
        const double mx = *std::max_element(row, row + n);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += (o[j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < n; ++j) o[j] /= s;
    }
    return make_op("softmax_rows", a.shape(), std::move(out), {a}, [m, n](const OpContext& c) {
        for (std::size_t i = 0; i < m; ++i) {
            const double* y = c.out_data.data() + i * n;
            const double* dy = c.out_grad.data() + i * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
            double* g = c.in_grad[0].data() + i * n;
            for (std::size_t j = 0; j < n; ++j) g[j] += y[j] * (dy[j] - dot);
        }
    });
}

Tensor log_softmax_rows(const Tensor& a) {
    require_2d(a, "log_softmax_rows");
    const auto m = a.dim(0), n = a.dim(1);
    auto x = a.data();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = x.data() + i * n;
        const double mx = *std::max_element(row, row + n);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += std::exp(row[j] - mx);
        const double lse = mx + std::log(s);
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lse;
    }
    return make_op("log_softmax_rows", a.shape(), std::move(out), {a}, [m, n](const OpContext& c) {
        for (std::size_t i = 0; i < m; ++i) {
            const double* y = c.out_data.data() + i * n;
            const double* dy = c.out_grad.data() + i * n;
            double total = 0.0;
            for (std::size_t j = 0; j < n; ++j) total += dy[j];
            double* g = c.in_grad[0].data() + i * n;
            for (std::size_t j = 0; j < n; ++j) g[j] += dy[j] - std::exp(y[j]) * total;
        }
    });
}

// -- shape / indexing ----------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
    require_defined(a, "reshape");
    if (shape_numel(shape) != a.numel()) dim_error("reshape", a.shape(), shape);
    return make_op("reshape", std::move(shape), std::vector<double>(a.data().begin(), a.data().end()), {a},
                   [](const OpContext& c) {
                       auto& g = c.in_grad[0];
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += c.out_grad[i];
                   });
}

Tensor concat(std::span<const Tensor> parts) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    require_defined(parts[0], "concat");
    Shape tail(parts[0].shape().begin() + (parts[0].ndim() ? 1 : 0), parts[0].shape().end());
    if (parts[0].ndim() == 0) dim_error("concat", parts[0].shape(), "scalars cannot be concatenated");
    std::size_t rows = 0;
    std::vector<double> out;
    std::vector<std::size_t> sizes;
    for (const auto& p : parts) {
        require_defined(p, "concat");
        Shape t(p.shape().begin() + 1, p.shape().end());
        if (p.ndim() == 0 || t != tail) dim_error("concat", parts[0].shape(), p.shape());
        rows += p.dim(0);
        sizes.push_back(p.numel());
        out.insert(out.end(), p.data().begin(), p.data().end());
    }
    Shape shape{rows};
    shape.insert(shape.end(), tail.begin(), tail.end());
    return make_op("concat", std::move(shape), std::move(out), {parts.begin(), parts.end()},
                   [sizes](const OpContext& c) {
                       std::size_t off = 0;
                       for (std::size_t p = 0; p < sizes.size(); ++p) {
                           auto& g = c.in_grad[p];
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += c.out_grad[off + i];
                           off += sizes[p];
                       }
                   });
}

Tensor index_rows(const Tensor& a, std::span<const std::size_t> rows) {
    require_2d(a, "index_rows");
    const auto m = a.dim(0), n = a.dim(1);
    if (rows.empty()) throw DimensionError("index_rows: empty row selection");
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    std::vector<double> out(idx.size() * n);
    auto x = a.data();
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= m) dim_error("index_rows", a.shape(), "row " + std::to_string(idx[r]) + " out of range");
        std::copy_n(x.data() + idx[r] * n, n, out.data() + r * n);
    }
    return make_op("index_rows", {idx.size(), n}, std::move(out), {a}, [idx, n](const OpContext& c) {
        for (std::size_t r = 0; r < idx.size(); ++r) {
            double* g = c.in_grad[0].data() + idx[r] * n;
            const double* dy = c.out_grad.data() + r * n;
            for (std::size_t j = 0; j < n; ++j) g[j] += dy[j];
        }
    });
}

Tensor select_per_row(const Tensor& a, std::span<const std::size_t> cols) {
    require_2d(a, "select_per_row");
    const auto m = a.dim(0), n = a.dim(1);
    if (cols.size() != m) dim_error("select_per_row", a.shape(), "need one column index per row");
    std::vector<std::size_t> idx(cols.begin(), cols.end());
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        if (idx[i] >= n) dim_error("select_per_row", a.shape(), "column index out of range");
        out[i] = a.data()[i * n + idx[i]];
    }
    return make_op("select_per_row", {m}, std::move(out), {a}, [idx, n](const OpContext& c) {
        for (std::size_t i = 0; i < idx.size(); ++i) c.in_grad[0][i * n + idx[i]] += c.out_grad[i];
    });
}

// -- imaging -------------------------------------------------------------------

Tensor upsample_nearest2x(const Tensor& a) {
    require_defined(a, "upsample_nearest2x");
    if (a.ndim() != 3) dim_error("upsample_nearest2x", a.shape(), "expected [C, H, W]");
    const auto ch = a.dim(0), h = a.dim(1), w = a.dim(2);
    const auto h2 = 2 * h, w2 = 2 * w;
    std::vector<double> out(ch * h2 * w2);
    auto x = a.data();
    for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t y = 0; y < h2; ++y)
            for (std::size_t xx = 0; xx < w2; ++xx) out[(c * h2 + y) * w2 + xx] = x[(c * h + y / 2) * w + xx / 2];
    return make_op("upsample_nearest2x", {ch, h2, w2}, std::move(out), {a}, [ch, h, w](const OpContext& c) {
        const auto h2 = 2 * h, w2 = 2 * w;
        for (std::size_t k = 0; k < ch; ++k)
            for (std::size_t y = 0; y < h2; ++y)
                for (std::size_t xx = 0; xx < w2; ++xx)
                    c.in_grad[0][(k * h + y / 2) * w + xx / 2] += c.out_grad[(k * h2 + y) * w2 + xx];
    });
}

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t kernel, std::size_t stride, std::size_t pad) {
    require_defined(x, "conv2d");
    require_2d(w, "conv2d");
    if (x.ndim() != 3) dim_error("conv2d", x.shape(), "expected input [C, H, W]");
    const auto cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const auto cout = w.dim(0), kk = kernel * kernel;
    if (w.dim(1) != cin * kk) dim_error("conv2d", x.shape(), w.shape());
    if (stride == 0 || h + 2 * pad < kernel || wd + 2 * pad < kernel)
        dim_error("conv2d", x.shape(), "kernel does not fit");
    const auto ho = (h + 2 * pad - kernel) / stride + 1;
    const auto wo = (wd + 2 * pad - kernel) / stride + 1;
    const auto rows = cin * kk, cols = ho * wo;

    // im2col: cols[(c, ky, kx), (oy, ox)]; -1 marks padding.
    std::vector<std::ptrdiff_t> src(rows * cols, -1);
    for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t ky = 0; ky < kernel; ++ky)
            for (std::size_t kx = 0; kx < kernel; ++kx) {
                const auto r = (c * kernel + ky) * kernel + kx;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const auto ix =
                            static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                        src[r * cols + oy * wo + ox] = static_cast<std::ptrdiff_t>((c * h + iy) * wd + ix);
                    }
                }
            }
    auto xd = x.data();
    std::vector<double> col(rows * cols, 0.0);
    for (std::size_t i = 0; i < col.size(); ++i)
        if (src[i] >= 0) col[i] = xd[src[i]];

    std::vector<double> out(cout * cols);
    MapMat(out.data(), cout, cols).noalias() = CMapMat(w.data().data(), cout, rows) * CMapMat(col.data(), rows, cols);

    auto shared_src = std::make_shared<std::vector<std::ptrdiff_t>>(std::move(src));
    auto shared_col = std::make_shared<std::vector<double>>(std::move(col));
    return make_op("conv2d", {cout, ho, wo}, std::move(out), {x, w},
                   [shared_src, shared_col, cout, rows, cols](const OpContext& c) {
                       CMapMat dout(c.out_grad.data(), cout, cols);
                       if (!c.in_grad[1].empty())
                           MapMat(c.in_grad[1].data(), cout, rows).noalias() +=
                               dout * CMapMat(shared_col->data(), rows, cols).transpose();
                       if (!c.in_grad[0].empty()) {
                           RowMat dcol = CMapMat(c.in_data[1].data(), cout, rows).transpose() * dout;
                           const auto& s = *shared_src;
                           const double* dc = dcol.data();
                           for (std::size_t i = 0; i < s.size(); ++i)
                               if (s[i] >= 0) c.in_grad[0][s[i]] += dc[i];
                       }
                   });
}

}  // namespace transavs
