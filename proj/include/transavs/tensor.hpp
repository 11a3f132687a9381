#pragma once

// Dense f64 tensors with reverse-mode differentiation.
//
// A Tensor is a reference-counted handle to a graph node. Operations on
// tensors that require gradients record their inputs and a vector-Jacobian
// rule; Tensor::backward() orders the reachable nodes into a Tape, replays it
// in reverse and then clears the recorded edges.

#include "transavs/errors.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace transavs {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

/// Data handed to a backward rule. `in_grad[i]` is empty when input i does not
/// take part in differentiation; rules must accumulate (+=), never assign.
struct OpContext {
    std::span<const double> out_data;
    std::span<const double> out_grad;
    std::vector<std::span<const double>> in_data;
    std::vector<std::span<double>> in_grad;
};

using BackwardFn = std::function<void(const OpContext&)>;

class Tensor {
  public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0, bool requires_grad = false);
    static Tensor uniform(Shape shape, std::mt19937_64& rng, double lo, double hi, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t ndim() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    /// Writable access for leaf tensors (parameters, optimizer updates).
    std::span<double> mutable_data();
    double operator[](std::size_t flat_index) const { return data()[flat_index]; }
    double item() const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();

    /// Fresh leaf holding a copy of the data and no history.
    Tensor detach() const;
    /// Runs reverse-mode differentiation from this scalar.
    void backward() const;

    const std::string& op_name() const;
    std::shared_ptr<detail::Node> node() const { return node_; }

  private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;

    friend Tensor make_op(std::string_view, Shape, std::vector<double>, std::vector<Tensor>, BackwardFn);
};

/// Builds a differentiable op result. The backward rule is dropped when no
/// input requires gradients.
Tensor make_op(std::string_view name, Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
               BackwardFn backward);

/// Ordered record of the differentiable nodes reachable from a root.
class Tape {
  public:
    static Tape record(const Tensor& root);

    /// Seeds d(root)/d(root) = 1 and runs every backward rule in reverse
    /// topological order.
    void replay();
    /// Drops recorded edges and rules so intermediate nodes can be freed.
    void clear();
    std::size_t size() const { return order_.size(); }

  private:
    std::shared_ptr<detail::Node> root_;
    std::vector<std::shared_ptr<detail::Node>> order_;
};

// -- linear algebra -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// -- elementwise --------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor relu(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor pow(const Tensor& a, double exponent);
Tensor sigmoid(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);

// -- broadcasting helpers (2-D only) -------------------------------------------

/// a[m×n] + b[n] added to every row.
Tensor add_row_vector(const Tensor& a, const Tensor& b);
/// a[m×n] + b[m] added to every column.
Tensor add_col_vector(const Tensor& a, const Tensor& b);

// -- reductions ---------------------------------------------------------------

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// -- row-wise ----------------------------------------------------------------

Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);

// -- shape / indexing ----------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape);
/// Concatenates along axis 0; trailing dimensions must agree.
Tensor concat(std::span<const Tensor> parts);
/// Gathers rows of a 2-D tensor (rows may repeat).
Tensor index_rows(const Tensor& a, std::span<const std::size_t> rows);
/// out[i] = a[i, cols[i]] for a 2-D tensor.
Tensor select_per_row(const Tensor& a, std::span<const std::size_t> cols);

// -- imaging -------------------------------------------------------------------

/// [C, H, W] -> [C, 2H, 2W], each value copied into a 2×2 block.
Tensor upsample_nearest2x(const Tensor& a);
/// Zero-padded square convolution. x: [Cin, H, W], w: [Cout, Cin*k*k] in
/// (cin, ky, kx) order. Returns [Cout, Ho, Wo].
Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t kernel, std::size_t stride, std::size_t pad);

}  // namespace transavs
