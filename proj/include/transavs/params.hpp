#pragma once

#include "transavs/tensor.hpp"

#include <random>
#include <string>
#include <vector>

namespace transavs {

/// Optimizer parameter groups. Backbone parameters (the stand-in encoders)
/// train at a reduced learning rate.
enum class ParamGroup { Backbone, Head };

struct ParamRef {
    std::string name;
    Tensor* tensor;
    ParamGroup group;
};

/// Xavier-style N(0, 1/fan_in) weight.
Tensor init_weight(Shape shape, std::size_t fan_in, std::mt19937_64& rng, double gain = 1.0);

}  // namespace transavs
