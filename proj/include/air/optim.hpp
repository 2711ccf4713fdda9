#pragma once

#include <vector>

#include "air/tensor.hpp"

namespace air {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. Moments are zero-initialized
// and keyed by position, so the list must not change after construction.
class Adam {
public:
    Adam(std::vector<Tensor*> params, AdamConfig cfg = {});

    void step();       // consumes param->grad, updates param->values
    void zero_grad();
    long step_count() const { return t_; }

private:
    std::vector<Tensor*> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    AdamConfig cfg_;
    long t_ = 0;
};

}  // namespace air
