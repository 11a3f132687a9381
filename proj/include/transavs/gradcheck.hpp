#pragma once

#include "transavs/tensor.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace transavs {

struct GradcheckOptions {
    double step = 1e-5;
    /// Denominator floor for the relative error, so gradients that are
    /// numerically zero are compared on an absolute scale.
    double floor = 1e-3;
};

struct GradcheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t checked = 0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
};

using ScalarFn = std::function<Tensor(std::span<const Tensor>)>;

/// Compares tape gradients of a scalar-valued `f` against central finite
/// differences for every element of every input flagged requires_grad.
/// Inputs are modified in place during probing and restored afterwards.
/// Throws std::invalid_argument when `f` does not return a single element.
GradcheckReport gradcheck(const ScalarFn& f, std::vector<Tensor> inputs, const GradcheckOptions& options = {});

}  // namespace transavs
