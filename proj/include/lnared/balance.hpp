#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "lnared/gramian.hpp"
#include "lnared/linalg.hpp"
#include "lnared/types.hpp"

namespace lnared::balance {

//==============================================================================
// Balancing, truncation, singular perturbation, and the structured variants
//
// Plain balancing diagonalizes a Gramian pair via the square-root algorithm.
// The structured form keeps a leading block of states in physical coordinates
// (block-diagonal transformation), balances each remaining block on its own,
// and never sorts Hankel values across blocks. Reductions are projections:
//   bt : (V A W, V B, C W, D)
//   bsp: (V (A - A T~ A) W, V (I - A T~) B, C (I - T~ A) W, D - C T~ B)
// with T~ = W_r (V_r A W_r)^{-1} V_r, which reproduces the Schur-complement
// singular perturbation and interpolates the full model at zero frequency.
//==============================================================================

enum class Method { bt, bsp, structured_bt, structured_bsp, h2_structured };

[[nodiscard]] inline std::string to_string(Method m) {
    switch (m) {
        case Method::bt: return "bt";
        case Method::bsp: return "bsp";
        case Method::structured_bt: return "structured_bt";
        case Method::structured_bsp: return "structured_bsp";
        case Method::h2_structured: return "h2_structured";
    }
    return "unknown";
}

struct BalancedForm {
    Mat T;
    Mat T_inv;
    Vec sigma; ///< generalized Hankel values, descending inside each block
    Eigen::Index k = 0; ///< leading states kept in (rescaled) physical coordinates
    std::vector<Eigen::Index> group_sizes; ///< balanced blocks after the first
    Vec d1;       ///< preserved-block rescaling; folded back by reductions
    Vec sigma_p1; ///< preserved-block diagonal of P (physical certificate part)

    [[nodiscard]] Eigen::Index order() const { return T.rows(); }
};

struct Projections {
    Mat V;   ///< kept rows of the transformation
    Mat W;   ///< kept columns of its inverse
    Mat V_r; ///< discarded rows
    Mat W_r; ///< discarded columns
};

struct ReductionResult {
    Realization reduced;
    Projections projections;
    Vec sigma;          ///< Hankel values of the balancing that produced this
    double hankel_tail = 0.0; ///< 2 * sum of discarded sigma; NaN when no bound holds
    Method method = Method::bt;
    gramian::Provenance gramian_provenance = gramian::Provenance::equation;
    std::vector<Eigen::Index> kept; ///< kept state indices in balanced ordering

    [[nodiscard]] bool has_bound() const { return std::isfinite(hankel_tail); }
};

namespace detail {

struct BlockBalance {
    Mat T;
    Mat T_inv;
    Vec sigma;
};

/// Square-root balancing of one SPD pair: P = L L^T, L^T Q L = U S^2 U^T,
/// T = S^{1/2} U^T L^{-1}. Deterministic through the eigensolver ordering and
/// the sign rule shared with linalg::svd.
inline BlockBalance square_root_balance(const Mat& p, const Mat& q) {
    const Mat l = linalg::cholesky_factor(p);
    const Mat core = symmetrize(l.transpose() * q * l);
    Eigen::SelfAdjointEigenSolver<Mat> es(core);
    if (es.info() != Eigen::Success)
        throw NoConvergence("balance: eigensolver failed on the balancing core");
    const Eigen::Index n = p.rows();
    // Descending eigenvalues with canonical column signs.
    Mat u(n, n);
    Vec s2(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        s2(i) = es.eigenvalues()(n - 1 - i);
        u.col(i) = es.eigenvectors().col(n - 1 - i);
        Eigen::Index arg = 0;
        u.col(i).cwiseAbs().maxCoeff(&arg);
        if (u(arg, i) < 0.0) u.col(i) = -u.col(i);
    }
    if (!(s2.minCoeff() > 0.0))
        throw NotPositiveDefinite("balance: Hankel values collapsed to zero");
    BlockBalance bb;
    bb.sigma = s2.cwiseSqrt();
    const Vec root = bb.sigma.cwiseSqrt(); // Sigma^{1/2}
    const Mat l_inv = l.triangularView<Eigen::Lower>().solve(Mat::Identity(n, n));
    bb.T = root.asDiagonal() * u.transpose() * l_inv;
    bb.T_inv = l * u * root.cwiseInverse().asDiagonal();
    return bb;
}

/// Eigen-balancing of a single SPD matrix (controllability-only path):
/// orthogonal T with T P T^T diagonal descending.
inline BlockBalance eigen_balance(const Mat& p) {
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(p));
    if (es.info() != Eigen::Success)
        throw NoConvergence("balance: eigensolver failed on the Gramian");
    const Eigen::Index n = p.rows();
    Mat u(n, n);
    Vec lam(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        lam(i) = es.eigenvalues()(n - 1 - i);
        u.col(i) = es.eigenvectors().col(n - 1 - i);
        Eigen::Index arg = 0;
        u.col(i).cwiseAbs().maxCoeff(&arg);
        if (u(arg, i) < 0.0) u.col(i) = -u.col(i);
    }
    if (!(lam.minCoeff() > 0.0))
        throw NotPositiveDefinite("balance: Gramian is not positive definite");
    BlockBalance bb;
    bb.sigma = lam;
    bb.T = u.transpose();
    bb.T_inv = u;
    return bb;
}

inline void verify_balanced(const Mat& t, const Mat& t_inv, const Mat& p, const Mat& q,
                            const Vec& sigma) {
    const Mat s = sigma.asDiagonal();
    const double scale = std::max(fnorm(s), kTolFloor);
    if (fnorm(t * p * t.transpose() - s) > 1e-8 * scale)
        throw NoConvergence("balance: T P T^T deviates from Sigma");
    if (fnorm(t_inv.transpose() * q * t_inv - s) > 1e-8 * scale)
        throw NoConvergence("balance: T^{-T} Q T^{-1} deviates from Sigma");
}

/// Boundary gap check between the last kept and first discarded value.
inline void require_gap(const Vec& sigma, Eigen::Index cut, const std::string& who) {
    if (cut <= 0 || cut >= sigma.size()) return;
    if (!(sigma(cut - 1) >= (1.0 + 1e-8) * sigma(cut)))
        throw HankelTie(who + ": Hankel values tie across the truncation cut");
}

inline void require_stable_reduced(const Mat& a, const std::string& who) {
    if (a.size() == 0) return;
    if (linalg::max_real_eig(a) >= -rel_tol(1e-12, fnorm(a)))
        throw NotStable(who + ": reduced drift lost stability");
}

inline void require_dc_match(const Realization& full, const Realization& red,
                             const std::string& who) {
    const Mat g0 = full.dc_gain();
    const Mat g0r = red.dc_gain();
    if (fnorm(g0r - g0) > 1e-8 * (1.0 + fnorm(g0)))
        throw NoConvergence(who + ": zero-frequency interpolation lost");
}

} // namespace detail

/// Square-root balancing of a full SPD Gramian pair.
[[nodiscard]] inline BalancedForm balance(const Mat& p, const Mat& q) {
    require_square(p, "balance");
    require_square(q, "balance");
    require_size(p.rows(), q.rows(), "balance: P and Q sizes");
    require_finite(p, "balance");
    require_finite(q, "balance");
    const auto bb = detail::square_root_balance(symmetrize(p), symmetrize(q));
    BalancedForm bf;
    bf.T = bb.T;
    bf.T_inv = bb.T_inv;
    bf.sigma = bb.sigma;
    bf.k = 0;
    bf.group_sizes = {p.rows()};
    detail::verify_balanced(bf.T, bf.T_inv, symmetrize(p), symmetrize(q), bf.sigma);
    return bf;
}

/// Block-diagonal balancing of a structured pair: the leading diagonal block
/// of size k is rescaled by D1 = (Sigma_Q1 / Sigma_P1)^{1/4}, every further
/// pattern block is balanced on its own, and no sorting crosses blocks.
[[nodiscard]] inline BalancedForm balance_structured(const gramian::GramianPair& g,
                                                     Eigen::Index k) {
    if (!g.has_q()) throw PatternMismatch("balance_structured: pair lacks Q");
    const Eigen::Index n = g.P.rows();
    const auto& blocks = g.pattern.blocks;
    if (blocks.empty() || g.pattern.dim() != n)
        throw PatternMismatch("balance_structured: pattern does not cover the pair");
    size_t first_group = 0;
    if (k > 0) {
        if (blocks[0].size != k || blocks[0].kind != sdp::BlockKind::diagonal)
            throw PatternMismatch(
                "balance_structured: preserved block must be a leading diagonal block");
        first_group = 1;
    }

    BalancedForm bf;
    bf.k = k;
    bf.T = Mat::Zero(n, n);
    bf.T_inv = Mat::Zero(n, n);
    bf.sigma.resize(n);
    if (k > 0) {
        const Vec sp1 = g.P.topLeftCorner(k, k).diagonal();
        const Vec sq1 = g.Q.topLeftCorner(k, k).diagonal();
        if (!(sp1.minCoeff() > 0.0 && sq1.minCoeff() > 0.0))
            throw NotPositiveDefinite("balance_structured: preserved block not PD");
        bf.d1 = (sq1.array() / sp1.array()).pow(0.25);
        bf.sigma_p1 = sp1;
        bf.sigma.head(k) = (sp1.array() * sq1.array()).sqrt();
        bf.T.topLeftCorner(k, k) = bf.d1.asDiagonal();
        bf.T_inv.topLeftCorner(k, k) = bf.d1.cwiseInverse().asDiagonal();
    }
    Eigen::Index off = k;
    for (size_t b = first_group; b < blocks.size(); ++b) {
        const Eigen::Index m = blocks[b].size;
        const auto bb = detail::square_root_balance(
            symmetrize(g.P.block(off, off, m, m)), symmetrize(g.Q.block(off, off, m, m)));
        bf.T.block(off, off, m, m) = bb.T;
        bf.T_inv.block(off, off, m, m) = bb.T_inv;
        bf.sigma.segment(off, m) = bb.sigma;
        bf.group_sizes.push_back(m);
        off += m;
    }
    detail::verify_balanced(bf.T, bf.T_inv, symmetrize(g.P), symmetrize(g.Q), bf.sigma);
    return bf;
}

/// Controllability-only structured balancing: each block is diagonalized by
/// an orthogonal eigenbasis of its P block; the preserved block is untouched.
[[nodiscard]] inline BalancedForm balance_structured_h2(const gramian::GramianPair& g,
                                                        Eigen::Index k) {
    const Eigen::Index n = g.P.rows();
    const auto& blocks = g.pattern.blocks;
    if (blocks.empty() || g.pattern.dim() != n)
        throw PatternMismatch("balance_structured_h2: pattern does not cover the pair");
    size_t first_group = 0;
    if (k > 0) {
        if (blocks[0].size != k || blocks[0].kind != sdp::BlockKind::diagonal)
            throw PatternMismatch(
                "balance_structured_h2: preserved block must be a leading diagonal block");
        first_group = 1;
    }
    BalancedForm bf;
    bf.k = k;
    bf.T = Mat::Zero(n, n);
    bf.T_inv = Mat::Zero(n, n);
    bf.sigma.resize(n);
    if (k > 0) {
        const Vec sp1 = g.P.topLeftCorner(k, k).diagonal();
        if (!(sp1.minCoeff() > 0.0))
            throw NotPositiveDefinite("balance_structured_h2: preserved block not PD");
        bf.d1 = Vec::Ones(k);
        bf.sigma_p1 = sp1;
        bf.sigma.head(k) = sp1;
        bf.T.topLeftCorner(k, k) = Mat::Identity(k, k);
        bf.T_inv.topLeftCorner(k, k) = Mat::Identity(k, k);
    }
    Eigen::Index off = k;
    for (size_t b = first_group; b < blocks.size(); ++b) {
        const Eigen::Index m = blocks[b].size;
        const auto bb = detail::eigen_balance(g.P.block(off, off, m, m));
        bf.T.block(off, off, m, m) = bb.T;
        bf.T_inv.block(off, off, m, m) = bb.T_inv;
        bf.sigma.segment(off, m) = bb.sigma;
        bf.group_sizes.push_back(m);
        off += m;
    }
    return bf;
}

namespace detail {

inline Projections split_projections(const Mat& t, const Mat& t_inv,
                                     const std::vector<Eigen::Index>& kept,
                                     const std::vector<Eigen::Index>& discarded) {
    Projections pr;
    const Eigen::Index n = t.rows();
    const Eigen::Index nk = static_cast<Eigen::Index>(kept.size());
    const Eigen::Index nd = static_cast<Eigen::Index>(discarded.size());
    pr.V.resize(nk, n);
    pr.W.resize(n, nk);
    pr.V_r.resize(nd, n);
    pr.W_r.resize(n, nd);
    for (Eigen::Index i = 0; i < nk; ++i) {
        pr.V.row(i) = t.row(kept[static_cast<size_t>(i)]);
        pr.W.col(i) = t_inv.col(kept[static_cast<size_t>(i)]);
    }
    for (Eigen::Index i = 0; i < nd; ++i) {
        pr.V_r.row(i) = t.row(discarded[static_cast<size_t>(i)]);
        pr.W_r.col(i) = t_inv.col(discarded[static_cast<size_t>(i)]);
    }
    return pr;
}

/// Applies the projection reduction. For `schur` the Eq.-(17)-style deflation
/// through T~ = W_r (V_r A W_r)^{-1} V_r is used; otherwise plain truncation.
inline Realization project(const Realization& r, const Projections& pr, bool schur,
                           const std::string& who) {
    Realization red;
    if (!schur || pr.V_r.rows() == 0) {
        red.A = pr.V * r.A * pr.W;
        red.B = pr.V * r.B;
        red.C = r.C * pr.W;
        red.D = r.D;
        return red;
    }
    const Mat m22 = pr.V_r * r.A * pr.W_r;
    Eigen::JacobiSVD<Mat> svd(m22);
    const double scale = fnorm(r.A) * std::max(fnorm(pr.V_r), 1.0) *
                         std::max(fnorm(pr.W_r), 1.0);
    if (!(svd.singularValues().minCoeff() > 1e-12 * std::max(scale, kTolFloor)))
        throw SingularFastBlock(who + ": discarded-block matrix is singular");
    const Mat tilde = pr.W_r * m22.partialPivLu().solve(pr.V_r);
    red.A = pr.V * (r.A - r.A * tilde * r.A) * pr.W;
    red.B = pr.V * (r.B - r.A * tilde * r.B);
    red.C = (r.C - r.C * tilde * r.A) * pr.W;
    red.D = r.D - r.C * tilde * r.B;
    return red;
}

} // namespace detail

/// Balanced truncation: keeps the first `keep` balanced states.
[[nodiscard]] inline ReductionResult truncate(const Realization& r, const BalancedForm& bf,
                                              Eigen::Index keep) {
    r.check("truncate");
    require_size(bf.order(), r.order(), "truncate: balanced form order");
    if (keep < 1 || keep > r.order())
        throw DimensionMismatch("truncate: keep count out of range");
    detail::require_gap(bf.sigma, keep, "truncate");

    std::vector<Eigen::Index> kept, discarded;
    for (Eigen::Index i = 0; i < r.order(); ++i)
        (i < keep ? kept : discarded).push_back(i);

    ReductionResult res;
    res.projections = detail::split_projections(bf.T, bf.T_inv, kept, discarded);
    res.reduced = detail::project(r, res.projections, false, "truncate");
    res.reduced.check("truncate: reduced");
    detail::require_stable_reduced(res.reduced.A, "truncate");
    res.sigma = bf.sigma;
    res.hankel_tail = 2.0 * bf.sigma.tail(r.order() - keep).sum();
    res.method = Method::bt;
    res.kept = kept;
    return res;
}

/// Balanced singular perturbation: Schur-complements the discarded block,
/// interpolating the full model at zero frequency.
[[nodiscard]] inline ReductionResult singular_perturb(const Realization& r,
                                                      const BalancedForm& bf,
                                                      Eigen::Index keep) {
    r.check("singular_perturb");
    require_size(bf.order(), r.order(), "singular_perturb: balanced form order");
    if (keep < 1 || keep > r.order())
        throw DimensionMismatch("singular_perturb: keep count out of range");
    detail::require_gap(bf.sigma, keep, "singular_perturb");

    std::vector<Eigen::Index> kept, discarded;
    for (Eigen::Index i = 0; i < r.order(); ++i)
        (i < keep ? kept : discarded).push_back(i);

    ReductionResult res;
    res.projections = detail::split_projections(bf.T, bf.T_inv, kept, discarded);
    res.reduced = detail::project(r, res.projections, true, "singular_perturb");
    res.reduced.check("singular_perturb: reduced");
    detail::require_stable_reduced(res.reduced.A, "singular_perturb");
    if (keep < r.order()) detail::require_dc_match(r, res.reduced, "singular_perturb");
    res.sigma = bf.sigma;
    res.hankel_tail = 2.0 * bf.sigma.tail(r.order() - keep).sum();
    res.method = Method::bsp;
    res.kept = kept;
    return res;
}

/// Structure-preserving reduction: the first k states stay in physical
/// coordinates (the preserved-block rescaling of the balanced form is folded
/// back), each remaining block keeps its leading `keeps[g]` balanced states.
/// When the preserved pattern block is diagonal the reduced drift is verified
/// diagonally stable with the explicit certificate diag(P_1, kept Sigma).
[[nodiscard]] inline ReductionResult reduce_structured(
    const Realization& r, const gramian::GramianPair& g, Eigen::Index k,
    const std::vector<Eigen::Index>& keeps, Method method) {
    r.check("reduce_structured");
    if (g.P.rows() != r.order())
        throw PatternMismatch("reduce_structured: Gramian order mismatch");
    if (method != Method::structured_bt && method != Method::structured_bsp &&
        method != Method::h2_structured)
        throw ConfigError("reduce_structured: method must be a structured variant");

    const BalancedForm bf = method == Method::h2_structured
                                ? balance_structured_h2(g, k)
                                : balance_structured(g, k);
    if (keeps.size() != bf.group_sizes.size())
        throw DimensionMismatch("reduce_structured: one keep count per block required");

    // Kept = preserved states plus the per-block heads; gap at every cut.
    std::vector<Eigen::Index> kept, discarded;
    for (Eigen::Index i = 0; i < k; ++i) kept.push_back(i);
    Eigen::Index off = k;
    for (size_t gi = 0; gi < keeps.size(); ++gi) {
        const Eigen::Index m = bf.group_sizes[gi];
        const Eigen::Index kp = keeps[gi];
        if (kp < 0 || kp > m)
            throw DimensionMismatch("reduce_structured: keep count out of range");
        const Vec block_sigma = bf.sigma.segment(off, m);
        detail::require_gap(block_sigma, kp, "reduce_structured");
        for (Eigen::Index i = 0; i < m; ++i)
            (i < kp ? kept : discarded).push_back(off + i);
        off += m;
    }
    if (kept.empty()) throw DimensionMismatch("reduce_structured: nothing kept");

    // Physical transformation: fold the preserved-block rescaling back.
    Mat t_phys = bf.T;
    Mat t_phys_inv = bf.T_inv;
    for (Eigen::Index i = 0; i < k; ++i) {
        t_phys.row(i) /= bf.d1(i);
        t_phys_inv.col(i) *= bf.d1(i);
    }

    ReductionResult res;
    res.projections = detail::split_projections(t_phys, t_phys_inv, kept, discarded);
    const bool schur = method != Method::structured_bt;
    res.reduced = detail::project(r, res.projections, schur, "reduce_structured");
    res.reduced.check("reduce_structured: reduced");
    detail::require_stable_reduced(res.reduced.A, "reduce_structured");
    if (schur && !discarded.empty())
        detail::require_dc_match(r, res.reduced, "reduce_structured");

    res.sigma = bf.sigma;
    if (method == Method::h2_structured) {
        res.hankel_tail = std::numeric_limits<double>::quiet_NaN();
    } else {
        double tail = 0.0;
        for (const Eigen::Index i : discarded) tail += bf.sigma(i);
        res.hankel_tail = 2.0 * tail;
    }
    res.method = method;
    res.gramian_provenance = g.provenance;
    res.kept = kept;

    // Diagonal-stability certificate of the reduced drift in the physical
    // coordinates: preserved entries carry P's diagonal, balanced blocks their
    // kept Sigma entries.
    Vec cert(static_cast<Eigen::Index>(kept.size()));
    for (size_t i = 0; i < kept.size(); ++i) {
        const Eigen::Index idx = kept[i];
        cert(static_cast<Eigen::Index>(i)) =
            idx < k ? bf.sigma_p1(idx) : bf.sigma(idx);
    }
    const Mat lyap = res.reduced.A * cert.asDiagonal() +
                     cert.asDiagonal() * res.reduced.A.transpose();
    if (!(sym_eig_max(lyap) < 0.0))
        throw DiagonalStabilityLost(
            "reduce_structured: explicit diagonal certificate failed the eigen-check");
    return res;
}

[[nodiscard]] inline ReductionResult reduce_structured(const Realization& r,
                                                       const gramian::GramianPair& g,
                                                       Eigen::Index k, Eigen::Index keep_r,
                                                       Method method) {
    return reduce_structured(r, g, k, std::vector<Eigen::Index>{keep_r}, method);
}

/// Controllability-only structured reduction (no a-priori error bound).
[[nodiscard]] inline ReductionResult h2_reduce_structured(
    const Realization& r, const gramian::GramianPair& g, Eigen::Index k,
    const std::vector<Eigen::Index>& keeps) {
    return reduce_structured(r, g, k, keeps, Method::h2_structured);
}

[[nodiscard]] inline ReductionResult h2_reduce_structured(const Realization& r,
                                                          const gramian::GramianPair& g,
                                                          Eigen::Index k,
                                                          Eigen::Index keep_r) {
    return h2_reduce_structured(r, g, k, std::vector<Eigen::Index>{keep_r});
}

} // namespace lnared::balance
