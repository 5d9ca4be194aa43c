#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "lnared/linalg.hpp"
#include "lnared/network.hpp"
#include "lnared/newton.hpp"
#include "lnared/ode.hpp"
#include "lnared/types.hpp"

namespace lnared::timescale {

//==============================================================================
// Time-scale separation and averaging
//
// For a partition into slow (1) and fast (2) species, the family of models
// indexed by the separation parameter eps is
//   mean:        dx1 = g1(x) dt,   dx2 = g2(x)/eps dt
//   fluctuation: d(eta1) = (A11 eta1 + A12 eta2 / sqrt(eps) + B1 dw)
//                d(eta2) = (A21 eta1 / sqrt(eps) + A22 eta2 / eps
//                           + B2 dw / sqrt(eps))
// and the averaged reduction is
//   dz  = g1(z, zhat(z)) dt  with g2(z, zhat(z)) = 0
//   dxi = A_r xi dt + B_r dw,  A_r = A11 - A12 A22^{-1} A21,
//                              B_r = B1 - A12 A22^{-1} B2,
// whose coefficients are eps-free. The sweep measures sup_t ||z - x1|| and
// sup_t E||xi - eta1||^2, the latter exactly through the covariance ODE of
// the stacked process [eta1; eta2; xi] sharing one Wiener process.
//==============================================================================

struct PartitionedLna {
    net::LnaModel base;
    std::vector<Eigen::Index> slow;
    std::vector<Eigen::Index> fast;
    double epsilon = 1.0;
};

namespace detail {

inline Vec select(const Vec& v, const std::vector<Eigen::Index>& idx) {
    Vec out(static_cast<Eigen::Index>(idx.size()));
    for (size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(idx[i]);
    return out;
}

inline Mat select_rows(const Mat& a, const std::vector<Eigen::Index>& rows) {
    Mat out(static_cast<Eigen::Index>(rows.size()), a.cols());
    for (size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = a.row(rows[i]);
    return out;
}

inline Mat select_block(const Mat& a, const std::vector<Eigen::Index>& rows,
                        const std::vector<Eigen::Index>& cols) {
    Mat out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < cols.size(); ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                a(rows[i], cols[j]);
    return out;
}

inline Vec assemble(Eigen::Index n, const std::vector<Eigen::Index>& slow,
                    const std::vector<Eigen::Index>& fast, const Vec& zs, const Vec& zf) {
    Vec x(n);
    for (size_t i = 0; i < slow.size(); ++i) x(slow[i]) = zs(static_cast<Eigen::Index>(i));
    for (size_t i = 0; i < fast.size(); ++i) x(fast[i]) = zf(static_cast<Eigen::Index>(i));
    return x;
}

} // namespace detail

/// Averaged slow model. Holds a warm-started root cache for the fast slaving
/// equation; one instance per integration thread (the cache is not shared).
class AveragedModel {
  public:
    AveragedModel(net::LnaModel base, std::vector<Eigen::Index> slow,
                  std::vector<Eigen::Index> fast)
        : base_(std::move(base)), slow_(std::move(slow)), fast_(std::move(fast)) {
        warm_ = detail::select(base_.x0, fast_);
    }

    [[nodiscard]] const std::vector<Eigen::Index>& slow_indices() const { return slow_; }
    [[nodiscard]] const std::vector<Eigen::Index>& fast_indices() const { return fast_; }
    [[nodiscard]] const net::LnaModel& base() const { return base_; }

    /// Unique root zhat of g2(z, .) = 0, warm-started from the previous call.
    [[nodiscard]] Vec fast_root(const Vec& z) const {
        if (fast_.empty()) return Vec(0);
        const auto res = newton::damped_newton(
            [&](const Vec& y) {
                return detail::select(
                    base_.g(detail::assemble(base_.n, slow_, fast_, z, y)), fast_);
            },
            [&](const Vec& y) {
                return detail::select_block(
                    base_.A(detail::assemble(base_.n, slow_, fast_, z, y)), fast_, fast_);
            },
            warm_);
        if (res.singular_jacobian)
            throw SingularFastJacobian("average: fast Jacobian is singular at the root");
        if (!res.converged || !(res.residual <= 1e-10 * (1.0 + res.x.norm())))
            throw FastRootNotFound("average: fast slaving equation has no computable root");
        warm_ = res.x;
        return res.x;
    }

    /// One evaluation of every averaged quantity, solving the fast root once.
    struct Eval {
        Vec zhat; ///< slaved fast state
        Vec g1;   ///< slow vector field
        Mat a_r;  ///< reduced drift
        Mat b_r;  ///< reduced diffusion
        Mat phi;  ///< n x n1 slaved-manifold embedding [I; -A22^{-1}A21], model row order
    };

    [[nodiscard]] Eval eval(const Vec& z) const {
        Eval e;
        e.zhat = fast_root(z);
        const Vec x = detail::assemble(base_.n, slow_, fast_, z, e.zhat);
        e.g1 = detail::select(base_.g(x), slow_);
        const Mat a = base_.A(x);
        const Mat b = base_.B(x);
        const Eigen::Index n1 = static_cast<Eigen::Index>(slow_.size());
        if (fast_.empty()) {
            e.a_r = detail::select_block(a, slow_, slow_);
            e.b_r = detail::select_rows(b, slow_);
            e.phi = Mat::Zero(base_.n, n1);
            for (size_t i = 0; i < slow_.size(); ++i)
                e.phi(slow_[i], static_cast<Eigen::Index>(i)) = 1.0;
            return e;
        }
        const Mat a12 = detail::select_block(a, slow_, fast_);
        const Mat rhs = [&] {
            Mat m(static_cast<Eigen::Index>(fast_.size()), n1 + b.cols());
            m.leftCols(n1) = detail::select_block(a, fast_, slow_);
            m.rightCols(b.cols()) = detail::select_rows(b, fast_);
            return m;
        }();
        const Mat sol = fast_solve(a, rhs);
        e.a_r = detail::select_block(a, slow_, slow_) - a12 * sol.leftCols(n1);
        e.b_r = detail::select_rows(b, slow_) - a12 * sol.rightCols(b.cols());
        e.phi = Mat::Zero(base_.n, n1);
        for (size_t i = 0; i < slow_.size(); ++i)
            e.phi(slow_[i], static_cast<Eigen::Index>(i)) = 1.0;
        for (size_t i = 0; i < fast_.size(); ++i)
            e.phi.row(fast_[i]) = -sol.row(static_cast<Eigen::Index>(i)).head(n1);
        return e;
    }

    /// Slow vector field g1(z, zhat(z)).
    [[nodiscard]] Vec slow_field(const Vec& z) const { return eval(z).g1; }

    /// Reduced drift A_r = A11 - A12 A22^{-1} A21 at (z, zhat(z)).
    [[nodiscard]] Mat A_r(const Vec& z) const { return eval(z).a_r; }

    /// Reduced diffusion B_r = B1 - A12 A22^{-1} B2 at (z, zhat(z)).
    [[nodiscard]] Mat B_r(const Vec& z) const { return eval(z).b_r; }

    /// Count of evaluations where the fast block was not Hurwitz. Theorem-level
    /// hypotheses are reported, not enforced.
    [[nodiscard]] long fast_instability_count() const { return fast_unstable_; }

    /// Full Jacobian at (z, zhat(z)).
    [[nodiscard]] Mat jacobian_at(const Vec& z) const {
        const Vec zhat = fast_root(z);
        return base_.A(detail::assemble(base_.n, slow_, fast_, z, zhat));
    }

  private:
    [[nodiscard]] Mat fast_solve(const Mat& a, const Mat& rhs) const {
        const Mat a22 = detail::select_block(a, fast_, fast_);
        Eigen::FullPivLU<Mat> lu(a22);
        lu.setThreshold(1e-12);
        if (!lu.isInvertible())
            throw SingularFastJacobian("average: fast block A22 is singular");
        if (linalg::max_real_eig(a22) >= 0.0) ++fast_unstable_;
        return lu.solve(rhs);
    }

    net::LnaModel base_;
    std::vector<Eigen::Index> slow_;
    std::vector<Eigen::Index> fast_;
    mutable Vec warm_;
    mutable long fast_unstable_ = 0;
};

/// Validated partition constructor: `fast` selects the fast species, the rest
/// stay slow in model order.
[[nodiscard]] inline PartitionedLna partition(const net::LnaModel& model,
                                              const std::vector<Eigen::Index>& fast,
                                              double epsilon) {
    if (!(epsilon > 0.0)) throw ConfigError("partition: epsilon must be positive");
    std::vector<bool> is_fast(static_cast<size_t>(model.n), false);
    for (const Eigen::Index i : fast) {
        if (i < 0 || i >= model.n)
            throw DimensionMismatch("partition: fast index out of range");
        if (is_fast[static_cast<size_t>(i)])
            throw ConfigError("partition: duplicate fast index");
        is_fast[static_cast<size_t>(i)] = true;
    }
    PartitionedLna p;
    p.base = model;
    p.fast = fast;
    std::sort(p.fast.begin(), p.fast.end());
    for (Eigen::Index i = 0; i < model.n; ++i)
        if (!is_fast[static_cast<size_t>(i)]) p.slow.push_back(i);
    if (p.slow.empty() || p.fast.empty())
        throw ConfigError("partition: both index sets must be non-empty");
    p.epsilon = epsilon;
    return p;
}

/// Builds the averaged model and probes the fast root at the initial state.
[[nodiscard]] inline AveragedModel average(const PartitionedLna& p) {
    AveragedModel avg(p.base, p.slow, p.fast);
    (void)avg.fast_root(detail::select(p.base.x0, p.slow));
    return avg;
}

struct SweepRow {
    double epsilon = 0.0;
    double mean_err = 0.0; ///< sup_t ||z - x1||
    double ms_err = 0.0;   ///< sup_t E||xi - eta1||^2, exact covariance ODE
};

struct SweepResult {
    std::vector<SweepRow> rows;
    double mean_slope = 0.0; ///< log-log slope of mean_err against epsilon
    double ms_slope = 0.0;   ///< log-log slope of ms_err against epsilon
};

/// Least-squares slope of log(err) against log(eps).
[[nodiscard]] inline double fit_loglog_slope(const std::vector<double>& eps,
                                             const std::vector<double>& err) {
    if (eps.size() != err.size() || eps.size() < 2)
        throw DimensionMismatch("fit_loglog_slope: need two or more points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(eps.size());
    for (size_t i = 0; i < eps.size(); ++i) {
        const double x = std::log(eps[i]);
        const double y = std::log(std::max(err[i], 1e-300));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Sweeps the separation parameter over a descending list, measuring the
/// deterministic and the mean-square reduction errors on a uniform grid.
[[nodiscard]] inline SweepResult epsilon_sweep(const PartitionedLna& p,
                                               const std::vector<double>& eps_list,
                                               double horizon,
                                               Eigen::Index grid_points = 401) {
    if (eps_list.empty()) throw ConfigError("epsilon_sweep: empty epsilon list");
    for (size_t i = 0; i < eps_list.size(); ++i) {
        if (!(eps_list[i] > 0.0))
            throw ConfigError("epsilon_sweep: epsilon must be positive");
        if (i > 0 && !(eps_list[i] < eps_list[i - 1]))
            throw ConfigError("epsilon_sweep: epsilon list must descend");
    }
    if (!(horizon > 0.0) || grid_points < 2)
        throw ConfigError("epsilon_sweep: bad horizon or grid");

    const auto& slow = p.slow;
    const auto& fast = p.fast;
    const Eigen::Index n = p.base.n;
    const Eigen::Index n1 = static_cast<Eigen::Index>(slow.size());
    const Eigen::Index n2 = static_cast<Eigen::Index>(fast.size());
    const Eigen::Index ns = n1 + n2 + n1; // stacked [eta1; eta2; xi]
    const Eigen::Index nsig = ns * (ns + 1) / 2;

    std::vector<double> grid(static_cast<size_t>(grid_points));
    for (Eigen::Index i = 0; i < grid_points; ++i)
        grid[static_cast<size_t>(i)] =
            horizon * static_cast<double>(i) / static_cast<double>(grid_points - 1);

    SweepResult result;
    for (const double eps : eps_list) {
        AveragedModel avg = average(p);
        const double rsq = 1.0 / std::sqrt(eps);

        // Combined state: full mean x (n), averaged mean z (n1), stacked
        // covariance upper triangle (nsig).
        const auto rhs = [&](double, const Vec& y) {
            const Vec x = y.head(n);
            const Vec z = y.segment(n, n1);
            const Mat sigma = unvech(y.tail(nsig), ns);

            Vec dy(y.size());
            const Vec gx = p.base.g(x);
            Vec dx(n);
            for (size_t i = 0; i < slow.size(); ++i) dx(slow[i]) = gx(slow[i]);
            for (size_t i = 0; i < fast.size(); ++i) dx(fast[i]) = gx(fast[i]) / eps;
            dy.head(n) = dx;
            const auto red = avg.eval(z);
            dy.segment(n, n1) = red.g1;

            const Mat a = p.base.A(x);
            const Mat b = p.base.B(x);
            Mat f = Mat::Zero(ns, ns);
            f.topLeftCorner(n1, n1) = detail::select_block(a, slow, slow);
            f.block(0, n1, n1, n2) = rsq * detail::select_block(a, slow, fast);
            f.block(n1, 0, n2, n1) = rsq * detail::select_block(a, fast, slow);
            f.block(n1, n1, n2, n2) = detail::select_block(a, fast, fast) / eps;
            f.bottomRightCorner(n1, n1) = red.a_r;
            Mat g = Mat::Zero(ns, p.base.m);
            g.topRows(n1) = detail::select_rows(b, slow);
            g.middleRows(n1, n2) = rsq * detail::select_rows(b, fast);
            g.bottomRows(n1) = red.b_r;
            dy.tail(nsig) = vech(f * sigma + sigma * f.transpose() + g * g.transpose());
            return dy;
        };

        Vec y0 = Vec::Zero(n + n1 + nsig);
        y0.head(n) = p.base.x0;
        y0.segment(n, n1) = detail::select(p.base.x0, slow);

        ode::Integrator integ(rhs);
        const auto states = integ.integrate_grid(0.0, y0, grid);

        SweepRow row;
        row.epsilon = eps;
        for (const Vec& y : states) {
            const Vec x1 = detail::select(y.head(n), slow);
            const Vec z = y.segment(n, n1);
            row.mean_err = std::max(row.mean_err, (z - x1).norm());
            const Mat sigma = unvech(y.tail(nsig), ns);
            const double ms = sigma.topLeftCorner(n1, n1).trace() -
                              2.0 * sigma.topRightCorner(n1, n1).trace() +
                              sigma.bottomRightCorner(n1, n1).trace();
            row.ms_err = std::max(row.ms_err, ms);
        }
        result.rows.push_back(row);
    }

    std::vector<double> eps_v, mean_v, ms_v;
    for (const auto& row : result.rows) {
        eps_v.push_back(row.epsilon);
        mean_v.push_back(row.mean_err);
        ms_v.push_back(row.ms_err);
    }
    result.mean_slope = fit_loglog_slope(eps_v, mean_v);
    result.ms_slope = fit_loglog_slope(eps_v, ms_v);
    return result;
}

} // namespace lnared::timescale
