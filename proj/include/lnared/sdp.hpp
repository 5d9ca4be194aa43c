#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "lnared/linalg.hpp"
#include "lnared/types.hpp"

namespace lnared::sdp {

//==============================================================================
// Small-scale structured semidefinite programming
//
// Solves trace-minimization programmes over symmetric matrices restricted to
// a block sparsity pattern (ordered blocks, each diagonal or full):
//
//   minimize    trace(P)
//   subject to  A P + P A^T + M <= -delta I,   P >= mu I,   P in pattern
//
// plus a seeded variant that optimizes an excess over a fixed feasible seed.
// The engine is a logarithmic-barrier interior-point method with damped
// Newton steps on the packed parameter vector; the barrier weight is reduced
// tenfold per outer iteration (at most 50 outers). Intended for desk scale:
// n <= 64 and at most 600 pattern parameters.
//==============================================================================

enum class BlockKind { diagonal, full };

struct Block {
    Eigen::Index size = 0;
    BlockKind kind = BlockKind::full;
};

/// Ordered block-diagonal sparsity pattern for symmetric matrices.
struct SparsityPattern {
    std::vector<Block> blocks;

    [[nodiscard]] Eigen::Index dim() const {
        Eigen::Index n = 0;
        for (const Block& b : blocks) n += b.size;
        return n;
    }

    [[nodiscard]] Eigen::Index n_params() const {
        Eigen::Index m = 0;
        for (const Block& b : blocks)
            m += b.kind == BlockKind::diagonal ? b.size : b.size * (b.size + 1) / 2;
        return m;
    }

    [[nodiscard]] static SparsityPattern single_full(Eigen::Index n) {
        return SparsityPattern{{Block{n, BlockKind::full}}};
    }

    /// Enumerates the packed parameters as (row, col) positions, row <= col.
    [[nodiscard]] std::vector<std::pair<Eigen::Index, Eigen::Index>> positions() const {
        std::vector<std::pair<Eigen::Index, Eigen::Index>> pos;
        Eigen::Index off = 0;
        for (const Block& b : blocks) {
            if (b.kind == BlockKind::diagonal) {
                for (Eigen::Index i = 0; i < b.size; ++i) pos.emplace_back(off + i, off + i);
            } else {
                for (Eigen::Index i = 0; i < b.size; ++i)
                    for (Eigen::Index j = i; j < b.size; ++j)
                        pos.emplace_back(off + i, off + j);
            }
            off += b.size;
        }
        return pos;
    }

    /// Packs params into the symmetric matrix they parametrize.
    [[nodiscard]] Mat assemble(const Vec& p) const {
        if (p.size() != n_params()) throw PatternMismatch("pattern: parameter count");
        Mat out = Mat::Zero(dim(), dim());
        Eigen::Index k = 0;
        for (const auto& [i, j] : positions()) {
            out(i, j) = p(k);
            out(j, i) = p(k);
            ++k;
        }
        return out;
    }

    /// Extracts the packed parameters of a conforming matrix.
    [[nodiscard]] Vec extract(const Mat& m) const {
        if (m.rows() != dim() || m.cols() != dim())
            throw PatternMismatch("pattern: matrix dimension");
        Vec p(n_params());
        Eigen::Index k = 0;
        for (const auto& [i, j] : positions()) p(k++) = m(i, j);
        return p;
    }

    /// True when every off-pattern entry is exactly zero (or within tol).
    [[nodiscard]] bool conforms(const Mat& m, double tol = 0.0) const {
        if (m.rows() != dim() || m.cols() != dim()) return false;
        const Mat off = m - assemble(extract(m));
        return off.cwiseAbs().maxCoeff() <= tol;
    }
};

struct SdpReport {
    Mat P;            ///< total solution (seed included for the seeded variant)
    double slack = 0; ///< achieved margin: -lambda_max(A P + P A^T + M)
    double kkt = 0;   ///< relative duality-gap bound at termination
    int outer = 0;    ///< outer barrier iterations used
    int inner = 0;    ///< total Newton steps across outer iterations
    double barrier_t = 0; ///< final barrier parameter
};

namespace detail {

/// Affine SDP in packed variables z: S_c(z) = C_c + sum_k z_k D_c[k] >= 0.
struct AffineSdp {
    Vec c;  ///< objective: minimize c . z
    Vec z0; ///< strictly feasible start
    std::vector<Mat> C;              ///< one base matrix per PSD constraint
    std::vector<std::vector<Mat>> D; ///< per constraint, one slope per variable
};

struct BarrierState {
    Vec z;
    double gap_rel = 0.0;
    int outer = 0;
    int inner_total = 0;
    double t_final = 0.0;
    bool converged = false;
};

inline Mat eval_constraint(const AffineSdp& prob, size_t c, const Vec& z) {
    Mat s = prob.C[c];
    for (Eigen::Index k = 0; k < z.size(); ++k)
        if (z(k) != 0.0) s += z(k) * prob.D[c][static_cast<size_t>(k)];
    return s;
}

inline bool all_pd(const AffineSdp& prob, const Vec& z) {
    for (size_t c = 0; c < prob.C.size(); ++c) {
        Eigen::LLT<Mat> llt(symmetrize(eval_constraint(prob, c, z)));
        if (llt.info() != Eigen::Success) return false;
    }
    return true;
}

/// Barrier value phi(z) = -sum_c logdet S_c(z); +inf (as a flag) off the cone.
inline bool barrier_value(const AffineSdp& prob, const Vec& z, double& phi) {
    phi = 0.0;
    for (size_t c = 0; c < prob.C.size(); ++c) {
        Eigen::LLT<Mat> llt(symmetrize(eval_constraint(prob, c, z)));
        if (llt.info() != Eigen::Success) return false;
        const Mat l = llt.matrixL();
        for (Eigen::Index i = 0; i < l.rows(); ++i) {
            if (!(l(i, i) > 0.0)) return false;
            phi -= 2.0 * std::log(l(i, i));
        }
    }
    return true;
}

/// Log-barrier path following with damped Newton inner iterations. The
/// optional `stop_when` predicate ends the solve early (used by the
/// feasibility phase, whose objective is unbounded below on feasible input).
inline BarrierState solve_barrier(const AffineSdp& prob, double kkt_rel, int max_outer,
                                  int max_inner,
                                  const std::function<bool(const Vec&)>& stop_when = {}) {
    const Eigen::Index m = prob.c.size();
    double cone_dim = 0.0;
    for (const Mat& c : prob.C) cone_dim += static_cast<double>(c.rows());

    BarrierState st;
    st.z = prob.z0;
    if (!all_pd(prob, st.z))
        throw NoConvergence("sdp: initial point is not strictly feasible");

    double t = cone_dim / std::max(std::abs(prob.c.dot(st.z)), 1.0);
    for (st.outer = 1; st.outer <= max_outer; ++st.outer) {
        if (stop_when && stop_when(st.z)) {
            st.converged = true;
            return st;
        }
        st.t_final = t;
        for (int inner = 0; inner < max_inner; ++inner) {
            ++st.inner_total;
            // Assemble gradient and Hessian of f(z) = t c.z - sum logdet S_c.
            Vec g = t * prob.c;
            Mat h = Mat::Zero(m, m);
            for (size_t c = 0; c < prob.C.size(); ++c) {
                const Mat s = symmetrize(eval_constraint(prob, c, st.z));
                Eigen::LLT<Mat> llt(s);
                if (llt.info() != Eigen::Success)
                    throw NoConvergence("sdp: iterate left the cone");
                std::vector<Mat> w(static_cast<size_t>(m));
                for (Eigen::Index k = 0; k < m; ++k) {
                    w[static_cast<size_t>(k)] = llt.solve(prob.D[c][static_cast<size_t>(k)]);
                    g(k) -= w[static_cast<size_t>(k)].trace();
                }
                for (Eigen::Index k = 0; k < m; ++k)
                    for (Eigen::Index l = k; l < m; ++l) {
                        const double v = (w[static_cast<size_t>(k)].array() *
                                          w[static_cast<size_t>(l)].transpose().array())
                                             .sum();
                        h(k, l) += v;
                        if (l != k) h(l, k) += v;
                    }
            }

            Eigen::LDLT<Mat> hf(symmetrize(h));
            Vec dz = hf.solve(-g);
            if (hf.info() != Eigen::Success || !dz.allFinite()) {
                const double reg = 1e-12 * std::max(h.trace(), 1.0);
                hf.compute(symmetrize(h) + reg * Mat::Identity(m, m));
                dz = hf.solve(-g);
                if (!dz.allFinite()) throw NoConvergence("sdp: Newton system degenerate");
            }
            const double decrement2 = -g.dot(dz);
            if (decrement2 <= 2e-10 * (1.0 + std::abs(t * prob.c.dot(st.z)))) break;

            // Backtrack into the cone, then Armijo on the barrier objective.
            double phi0;
            barrier_value(prob, st.z, phi0);
            const double f0 = t * prob.c.dot(st.z) + phi0;
            double alpha = 1.0;
            bool accepted = false;
            for (int bs = 0; bs < 60; ++bs) {
                const Vec z_try = st.z + alpha * dz;
                double phi;
                if (barrier_value(prob, z_try, phi)) {
                    const double f_try = t * prob.c.dot(z_try) + phi;
                    if (f_try <= f0 - 1e-4 * alpha * decrement2) {
                        st.z = z_try;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if (!accepted) break; // stalled: line search cannot improve
            if (stop_when && stop_when(st.z)) {
                st.converged = true;
                return st;
            }
        }
        st.gap_rel = cone_dim / (t * std::max(std::abs(prob.c.dot(st.z)), 1.0));
        if (st.gap_rel <= kkt_rel) {
            st.converged = true;
            return st;
        }
        t *= 10.0;
    }
    st.converged = st.gap_rel <= kkt_rel;
    return st;
}

/// Slopes of S(z) = -(A P(z) + P(z) A^T) in the packed parameters.
inline std::vector<Mat> lyapunov_slopes(const Mat& a, const SparsityPattern& pat) {
    const Eigen::Index n = a.rows();
    std::vector<Mat> d;
    d.reserve(static_cast<size_t>(pat.n_params()));
    for (const auto& [i, j] : pat.positions()) {
        Mat e = Mat::Zero(n, n);
        e(i, j) += 1.0;
        e(j, i) += (i == j ? 0.0 : 1.0);
        d.push_back(-(a * e + e * a.transpose()));
    }
    return d;
}

/// Identity slopes (dP/dz_k) for the P >= mu I cone.
inline std::vector<Mat> identity_slopes(const SparsityPattern& pat) {
    const Eigen::Index n = pat.dim();
    std::vector<Mat> d;
    d.reserve(static_cast<size_t>(pat.n_params()));
    for (const auto& [i, j] : pat.positions()) {
        Mat e = Mat::Zero(n, n);
        e(i, j) += 1.0;
        e(j, i) += (i == j ? 0.0 : 1.0);
        d.push_back(e);
    }
    return d;
}

inline Vec objective_trace(const SparsityPattern& pat) {
    Vec c = Vec::Zero(pat.n_params());
    Eigen::Index k = 0;
    for (const auto& [i, j] : pat.positions()) {
        if (i == j) c(k) = 1.0;
        ++k;
    }
    return c;
}

inline void check_scale(const Mat& a, const SparsityPattern& pat) {
    if (a.rows() != pat.dim()) throw PatternMismatch("sdp: pattern dimension");
    if (a.rows() > 64) throw DimensionMismatch("sdp: order exceeds the n <= 64 limit");
    if (pat.n_params() > 600)
        throw DimensionMismatch("sdp: pattern exceeds the 600-parameter limit");
}

} // namespace detail

/// Phase-1 + phase-2 barrier solve of the structured trace-minimization
/// programme. Throws Infeasible when the best attainable constraint residual
/// s satisfies s > -delta / 2; when s lands in (-1.5 delta, -delta/2] the
/// margin is shrunk to |s|/2 and recorded in the returned slack.
[[nodiscard]] inline SdpReport minimize_trace(const Mat& a, const Mat& m,
                                              const SparsityPattern& pat, double delta,
                                              double mu, double kkt_rel = 1e-7,
                                              int max_outer = 50, int max_inner = 50) {
    require_square(a, "sdp");
    require_finite(a, "sdp");
    require_finite(m, "sdp");
    detail::check_scale(a, pat);
    const Eigen::Index n = a.rows();
    const Eigen::Index np = pat.n_params();
    const Mat ms = symmetrize(m);

    const std::vector<Mat> lyap_slopes = detail::lyapunov_slopes(a, pat);
    const std::vector<Mat> id_slopes = detail::identity_slopes(pat);

    // Feasibility phase from P = alpha I, minimizing the residual bound s in
    // A P + P A^T + M <= s I. Skipped when alpha I is already interior.
    const double sym_a = sym_norm2(symmetrize(a + a.transpose())) / 2.0;
    double alpha = sym_norm2(ms) / std::max(2.0 * sym_a, 1e-12);
    alpha = std::max(alpha, 2.0 * mu);
    Vec p_start = pat.extract(alpha * Mat::Identity(n, n));
    double delta_eff = delta;

    const auto lyap_residual = [&](const Vec& p) {
        const Mat pm = pat.assemble(p);
        return sym_eig_max(a * pm + pm * a.transpose() + ms);
    };

    if (!(lyap_residual(p_start) <= -1.5 * delta &&
          sym_eig_min(pat.assemble(p_start)) > mu)) {
        detail::AffineSdp ph1;
        ph1.c = Vec::Zero(np + 1);
        ph1.c(np) = 1.0; // minimize s
        ph1.C = {(-ms).eval(), (-mu * Mat::Identity(n, n)).eval()};
        ph1.D.resize(2);
        for (Eigen::Index k = 0; k < np; ++k) {
            ph1.D[0].push_back(lyap_slopes[static_cast<size_t>(k)]);
            ph1.D[1].push_back(id_slopes[static_cast<size_t>(k)]);
        }
        ph1.D[0].push_back(Mat::Identity(n, n));
        ph1.D[1].push_back(Mat::Zero(n, n));
        ph1.z0 = Vec::Zero(np + 1);
        ph1.z0.head(np) = p_start;
        ph1.z0(np) = lyap_residual(p_start) + std::max(1.0, std::abs(lyap_residual(p_start)));

        // Stop as soon as the margin comfortably clears delta; otherwise run
        // the gap down far enough to separate s* from -delta/2.
        const auto st = detail::solve_barrier(
            ph1, std::min(1e-3, delta / 4.0), max_outer, max_inner,
            [&](const Vec& z) { return z(np) <= -3.0 * delta; });
        const double s_opt = st.z(np);
        const double s_true = lyap_residual(st.z.head(np));
        const double s_best = std::max(s_opt, s_true);
        if (s_best > -delta / 2.0)
            throw Infeasible("sdp: no structured solution (best residual " +
                             std::to_string(s_best) + ")");
        if (s_best > -1.5 * delta) delta_eff = std::abs(s_best) / 2.0;
        p_start = st.z.head(np);
    }

    detail::AffineSdp ph2;
    ph2.c = detail::objective_trace(pat);
    ph2.C = {(-ms - delta_eff * Mat::Identity(n, n)).eval(),
             (-mu * Mat::Identity(n, n)).eval()};
    ph2.D = {lyap_slopes, id_slopes};
    ph2.z0 = p_start;
    const auto st = detail::solve_barrier(ph2, kkt_rel, max_outer, max_inner);
    if (!st.converged)
        throw NoConvergence("sdp: barrier stalled at relative gap " +
                            std::to_string(st.gap_rel));

    SdpReport rep;
    rep.P = symmetrize(pat.assemble(st.z));
    rep.slack = -sym_eig_max(a * rep.P + rep.P * a.transpose() + ms);
    rep.kkt = st.gap_rel;
    rep.outer = st.outer;
    rep.inner = st.inner_total;
    rep.barrier_t = st.t_final;
    return rep;
}

/// Seeded variant: minimizes trace of the structured excess P over a fixed
/// diagonal seed P_base = scale * diag(x), subject to
/// A (P + P_base) + (P + P_base) A^T + M <= 0 and P + P_base > 0. The start
/// P = eps * diag(x) is strictly interior by the seed construction.
[[nodiscard]] inline SdpReport minimize_trace_seeded(const Mat& a, const Mat& m,
                                                     const SparsityPattern& pat,
                                                     const Mat& p_base, const Vec& cert_x,
                                                     double kkt_rel = 1e-7,
                                                     int max_outer = 50,
                                                     int max_inner = 50) {
    require_square(a, "sdp");
    require_finite(a, "sdp");
    require_finite(m, "sdp");
    detail::check_scale(a, pat);
    const Mat ms = symmetrize(m);

    detail::AffineSdp prob;
    prob.c = detail::objective_trace(pat);
    prob.C = {symmetrize(-(a * p_base + p_base * a.transpose() + ms)), symmetrize(p_base)};
    prob.D = {detail::lyapunov_slopes(a, pat), detail::identity_slopes(pat)};

    // eps X start: margin eps * min_sv(A X + X A^T) inside the first cone.
    const double eps0 = 1e-3 * p_base.trace() / std::max(cert_x.sum(), 1e-300);
    prob.z0 = pat.extract(eps0 * Mat(cert_x.asDiagonal()));
    const auto st = detail::solve_barrier(prob, kkt_rel, max_outer, max_inner);
    if (!st.converged)
        throw NoConvergence("sdp: seeded barrier stalled at relative gap " +
                            std::to_string(st.gap_rel));

    SdpReport rep;
    rep.P = symmetrize(p_base + pat.assemble(st.z));
    rep.slack = -sym_eig_max(a * rep.P + rep.P * a.transpose() + ms);
    rep.kkt = st.gap_rel;
    rep.outer = st.outer;
    rep.inner = st.inner_total;
    rep.barrier_t = st.t_final;
    return rep;
}

} // namespace lnared::sdp
