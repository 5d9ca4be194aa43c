#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "lnared/errors.hpp"
#include "lnared/types.hpp"

namespace lnared::ode {

using Rhs = std::function<Vec(double, const Vec&)>;

struct OdeOptions {
    double rtol = 1e-9;
    double atol = 1e-12;
    double hmin_rel = 1e-12; ///< below hmin_rel * span the stiff fallback takes over
    long max_steps = 20000000;
};

namespace detail {

/// Scaled RMS error used by both controllers; <= 1 means the step is accepted.
inline double error_norm(const Vec& err, const Vec& y0, const Vec& y1, const OdeOptions& o) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < err.size(); ++i) {
        const double sc = o.atol + o.rtol * std::max(std::abs(y0(i)), std::abs(y1(i)));
        const double q = err(i) / sc;
        acc += q * q;
    }
    return std::sqrt(acc / static_cast<double>(err.size() > 0 ? err.size() : 1));
}

} // namespace detail

/// Adaptive integrator: explicit Dormand-Prince 5(4) with an implicit
/// trapezoid fallback that takes over when the explicit step collapses below
/// hmin_rel * (t1 - t0) (stiff regime).
class Integrator {
public:
    explicit Integrator(Rhs f, OdeOptions opts = {}) : f_(std::move(f)), opts_(opts) {}

    /// Integrates y' = f(t, y) from (t0, y0) to t1 and returns y(t1).
    [[nodiscard]] Vec integrate(double t0, const Vec& y0, double t1) const {
        if (!(t1 >= t0)) throw DimensionMismatch("ode: integration span must be forward");
        if (t1 == t0) return y0;
        const double span = t1 - t0;
        const double hmin = opts_.hmin_rel * span;
        double t = t0;
        Vec y = y0;
        double h = 0.01 * span;
        bool stiff = false;
        long steps = 0;

        while (t < t1) {
            if (++steps > opts_.max_steps) throw NoConvergence("ode: step budget exhausted");
            h = std::min(h, t1 - t);
            if (!stiff && h < hmin && t1 - t > hmin) {
                stiff = true;
                h = std::min(1e4 * hmin, t1 - t);
            }
            Vec y_new;
            double h_next = h;
            const bool ok = stiff ? trapezoid_controlled(t, y, h, y_new, h_next)
                                  : explicit_controlled(t, y, h, y_new, h_next);
            if (ok) {
                t += h;
                y = std::move(y_new);
            }
            h = h_next;
        }
        return y;
    }

    /// Integrates across an ascending grid, landing on each point exactly.
    [[nodiscard]] std::vector<Vec> integrate_grid(double t0, const Vec& y0,
                                                  const std::vector<double>& grid) const {
        std::vector<Vec> out;
        out.reserve(grid.size());
        double t = t0;
        Vec y = y0;
        for (double tg : grid) {
            if (tg < t) throw DimensionMismatch("ode: grid must ascend from t0");
            y = integrate(t, y, tg);
            t = tg;
            out.push_back(y);
        }
        return out;
    }

private:
    bool explicit_controlled(double t, const Vec& y, double h, Vec& y_new,
                             double& h_next) const {
        const Vec k1 = f_(t, y);
        const Vec k2 = f_(t + h * (1.0 / 5.0), y + h * (1.0 / 5.0) * k1);
        const Vec k3 =
            f_(t + h * (3.0 / 10.0), y + h * ((3.0 / 40.0) * k1 + (9.0 / 40.0) * k2));
        const Vec k4 = f_(t + h * (4.0 / 5.0),
                          y + h * ((44.0 / 45.0) * k1 - (56.0 / 15.0) * k2 + (32.0 / 9.0) * k3));
        const Vec k5 = f_(t + h * (8.0 / 9.0),
                          y + h * ((19372.0 / 6561.0) * k1 - (25360.0 / 2187.0) * k2 +
                                   (64448.0 / 6561.0) * k3 - (212.0 / 729.0) * k4));
        const Vec k6 = f_(t + h, y + h * ((9017.0 / 3168.0) * k1 - (355.0 / 33.0) * k2 +
                                          (46732.0 / 5247.0) * k3 + (49.0 / 176.0) * k4 -
                                          (5103.0 / 18656.0) * k5));
        y_new = y + h * ((35.0 / 384.0) * k1 + (500.0 / 1113.0) * k3 + (125.0 / 192.0) * k4 -
                         (2187.0 / 6784.0) * k5 + (11.0 / 84.0) * k6);
        if (!y_new.allFinite()) {
            h_next = 0.5 * h;
            return false;
        }
        const Vec k7 = f_(t + h, y_new);
        const Vec err = h * ((71.0 / 57600.0) * k1 - (71.0 / 16695.0) * k3 +
                             (71.0 / 1920.0) * k4 - (17253.0 / 339200.0) * k5 +
                             (22.0 / 525.0) * k6 - (1.0 / 40.0) * k7);
        const double e = detail::error_norm(err, y, y_new, opts_);
        if (e <= 1.0) {
            h_next = h * std::clamp(0.9 * std::pow(std::max(e, 1e-30), -0.2), 1.0, 5.0);
            return true;
        }
        h_next = h * std::clamp(0.9 * std::pow(e, -0.2), 0.2, 0.9);
        return false;
    }

    /// Implicit trapezoid with Richardson (h vs h/2 + h/2) error control.
    bool trapezoid_controlled(double t, const Vec& y, double h, Vec& y_new,
                              double& h_next) const {
        Vec full, half1, half2;
        if (!trapezoid_step(t, y, h, full) || !trapezoid_step(t, y, 0.5 * h, half1) ||
            !trapezoid_step(t + 0.5 * h, half1, 0.5 * h, half2)) {
            h_next = 0.5 * h;
            return false;
        }
        const Vec err = (full - half2) / 3.0;
        const double e = detail::error_norm(err, y, half2, opts_);
        if (e <= 1.0) {
            y_new = half2;
            h_next = h * std::clamp(0.9 * std::pow(std::max(e, 1e-30), -1.0 / 3.0), 1.0, 4.0);
            return true;
        }
        h_next = h * std::clamp(0.9 * std::pow(e, -1.0 / 3.0), 0.2, 0.9);
        return false;
    }

    /// One trapezoid step solved by Newton with a finite-difference Jacobian.
    bool trapezoid_step(double t, const Vec& y, double h, Vec& out) const {
        const Vec f0 = f_(t, y);
        Vec x = y + h * f0; // explicit Euler predictor
        const Eigen::Index n = y.size();
        for (int it = 0; it < 25; ++it) {
            const Vec fx = f_(t + h, x);
            const Vec g = x - y - 0.5 * h * (f0 + fx);
            const double tol = opts_.atol + opts_.rtol * std::max(x.norm(), 1.0);
            if (g.norm() <= 0.1 * tol) {
                out = x;
                return true;
            }
            Mat j(n, n);
            for (Eigen::Index k = 0; k < n; ++k) {
                const double dx = 1e-7 * std::max(std::abs(x(k)), 1.0);
                Vec xp = x;
                xp(k) += dx;
                j.col(k) = (f_(t + h, xp) - fx) / dx;
            }
            const Mat a = Mat::Identity(n, n) - 0.5 * h * j;
            Eigen::PartialPivLU<Mat> lu(a);
            const Vec dxv = lu.solve(-g);
            if (!dxv.allFinite()) return false;
            x += dxv;
        }
        return false;
    }

    Rhs f_;
    OdeOptions opts_;
};

} // namespace lnared::ode
