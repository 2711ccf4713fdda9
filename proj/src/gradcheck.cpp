#include "air/gradcheck.hpp"

#include <cmath>

namespace air {

double finite_difference_max_rel_err(const LossFn& loss, const std::vector<Tensor*>& params,
                                     double eps) {
    for (Tensor* p : params) p->zero_grad();
    loss(true);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (Tensor* p : params) {
        p->ensure_grad();
        analytic.push_back(p->grad);
    }

    double worst = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = *params[pi];
        for (size_t i = 0; i < p.values.size(); ++i) {
            const double keep = p.values[i];
            p.values[i] = keep + eps;
            const double f_plus = loss(false);
            p.values[i] = keep - eps;
            const double f_minus = loss(false);
            p.values[i] = keep;
            const double numeric = (f_plus - f_minus) / (2.0 * eps);
            const double err = std::abs(analytic[pi][i] - numeric) / std::max(1.0, std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace air
