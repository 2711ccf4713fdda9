#include "air/optim.hpp"

#include <cmath>

namespace air {

Adam::Adam(std::vector<Tensor*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    if (cfg_.lr <= 0.0) throw ConfigError("adam: learning rate must be positive, got " + std::to_string(cfg_.lr));
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Tensor* p : params_) {
        m_.emplace_back(p->values.size(), 0.0);
        v_.emplace_back(p->values.size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        Tensor& p = *params_[pi];
        if (p.grad.empty()) continue;  // parameter unreached this step
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (size_t i = 0; i < p.values.size(); ++i) {
            const double gr = p.grad[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gr;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gr * gr;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.values[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (Tensor* p : params_) p->zero_grad();
}

}  // namespace air
