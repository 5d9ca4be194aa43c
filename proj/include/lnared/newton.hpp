#pragma once

#include <functional>

#include <Eigen/Dense>

#include "lnared/types.hpp"

namespace lnared::newton {

struct NewtonOptions {
    int max_iterations = 200;
    int max_halvings = 40;
    double rtol = 1e-12; ///< accept when ||F(x)|| <= rtol * (1 + ||x||)
};

struct NewtonResult {
    Vec x;
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;
    bool singular_jacobian = false;
};

/// Damped Newton iteration with a halving line search on ||F||.
///
/// Each step solves J(x) dx = -F(x) and halves dx until the residual norm
/// decreases (or the halving budget runs out, in which case the full step is
/// taken anyway to escape flat regions). A Jacobian whose LU factors signal
/// rank deficiency sets `singular_jacobian` and stops the iteration.
[[nodiscard]] inline NewtonResult damped_newton(
    const std::function<Vec(const Vec&)>& f,
    const std::function<Mat(const Vec&)>& jac,
    const Vec& x0,
    const NewtonOptions& opts = {}) {
    NewtonResult res;
    res.x = x0;
    Vec fx = f(res.x);
    res.residual = fx.norm();

    for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
        if (res.residual <= opts.rtol * (1.0 + res.x.norm())) {
            res.converged = true;
            return res;
        }
        const Mat j = jac(res.x);
        Eigen::FullPivLU<Mat> lu(j);
        lu.setThreshold(1e-13);
        if (!lu.isInvertible()) {
            res.singular_jacobian = true;
            return res;
        }
        const Vec dx = lu.solve(-fx);
        double step = 1.0;
        Vec x_new = res.x + dx;
        Vec f_new = f(x_new);
        int halvings = 0;
        while ((!f_new.allFinite() || f_new.norm() >= res.residual) &&
               halvings < opts.max_halvings) {
            step *= 0.5;
            x_new = res.x + step * dx;
            f_new = f(x_new);
            ++halvings;
        }
        if (!f_new.allFinite()) return res;
        res.x = x_new;
        fx = f_new;
        res.residual = fx.norm();
    }
    res.converged = res.residual <= opts.rtol * (1.0 + res.x.norm());
    return res;
}

} // namespace lnared::newton
