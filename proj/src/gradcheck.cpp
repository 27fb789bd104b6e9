#include "tscam/gradcheck.hpp"

#include <cmath>

#include "tscam/errors.hpp"

namespace tscam {

double grad_check(const ScalarFn& f, const std::vector<Tensor<double>>& params, double step) {
    std::vector<Tensor<double>> analytic;
    const double base = f(params, &analytic);
    if (!std::isfinite(base)) {
        throw ValueError("grad_check: computation is non-finite at the probe point");
    }
    if (analytic.size() != params.size()) {
        throw ShapeError("grad_check: expected " + std::to_string(params.size()) +
                         " gradients, got " + std::to_string(analytic.size()));
    }

    std::vector<Tensor<double>> probe = params;
    double worst = 0.0;
    for (std::size_t p = 0; p < probe.size(); ++p) {
        if (!analytic[p].same_shape(params[p])) {
            throw ShapeError("grad_check: gradient " + std::to_string(p) + " has shape " +
                             shape_str(analytic[p].shape()) + ", parameter has " +
                             shape_str(params[p].shape()));
        }
        for (index_t i = 0; i < probe[p].size(); ++i) {
            const double saved = probe[p][i];
            probe[p][i] = saved + step;
            const double up = f(probe, nullptr);
            probe[p][i] = saved - step;
            const double down = f(probe, nullptr);
            probe[p][i] = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw ValueError("grad_check: computation is non-finite near the probe point");
            }
            const double cd = (up - down) / (2.0 * step);
            const double an = analytic[p][i];
            const double rel =
                std::abs(an - cd) / std::max({std::abs(an), std::abs(cd), 1e-8});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace tscam
