#pragma once

#include <string>

#include "lnared/linalg.hpp"
#include "lnared/matclass.hpp"
#include "lnared/sdp.hpp"
#include "lnared/types.hpp"

namespace lnared::gramian {

//==============================================================================
// Generalized Gramian pairs
//
// Classical Gramians solve the Lyapunov equations exactly; structured pairs
// solve the trace-minimization programmes
//   min trace(P)  s.t.  A P + P A^T + B B^T <= -delta I,  P >= mu I
//   min trace(Q)  s.t.  A^T Q + Q A + C^T C <= -delta I,  Q >= mu I
// restricted to a block sparsity pattern; the Q programme reuses the P
// machinery through transposition. The seeded variant starts from the
// closed-form diagonal seed available for drifts whose negation is H+.
//==============================================================================

enum class Provenance { equation, sdp, hmatrix_seeded_sdp };

[[nodiscard]] inline std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::equation: return "equation";
        case Provenance::sdp: return "sdp";
        case Provenance::hmatrix_seeded_sdp: return "hmatrix_seeded_sdp";
    }
    return "unknown";
}

struct GramianPair {
    Mat P;
    Mat Q; ///< empty (0 x 0) for controllability-only pairs
    sdp::SparsityPattern pattern;
    Provenance provenance = Provenance::equation;
    double slack = 0.0;    ///< achieved margin of the binding Lyapunov inequality
    int sdp_outer = 0;     ///< barrier outer iterations, worst side
    int sdp_inner = 0;     ///< Newton steps, summed over sides
    double sdp_kkt = 0.0;  ///< relative duality-gap bound, worst side

    [[nodiscard]] bool has_q() const { return Q.size() > 0; }
};

namespace detail {

/// Re-verifies symmetry, positive definiteness, pattern conformance, and the
/// Lyapunov inequality margin of a computed Gramian. Never trusted to the
/// optimizer: every structured solve passes through here.
inline void verify_side(const Mat& a, const Mat& m, const Mat& g,
                        const sdp::SparsityPattern& pat, double required_margin,
                        const std::string& who) {
    const double asym = (g - g.transpose()).cwiseAbs().maxCoeff();
    if (asym > rel_tol(1e-12, fnorm(g)))
        throw NoConvergence(who + ": result lost symmetry");
    if (!pat.conforms(g, 0.0))
        throw PatternMismatch(who + ": result violates the sparsity pattern");
    if (!(sym_eig_min(g) > 0.0))
        throw NoConvergence(who + ": result is not positive definite");
    const double resid = sym_eig_max(a * g + g * a.transpose() + m);
    if (resid > -required_margin + rel_tol(1e-12, fnorm(m)))
        throw NoConvergence(who + ": Lyapunov inequality margin lost");
}

inline void require_stable(const Mat& a, const std::string& who) {
    if (linalg::max_real_eig(a) >= -rel_tol(1e-12, fnorm(a)))
        throw NotStable(who + ": drift must be Hurwitz");
}

} // namespace detail

/// Exact Gramians from the Lyapunov equations (single full block, slack 0).
[[nodiscard]] inline GramianPair classical_gramians(const Realization& r) {
    r.check("classical_gramians");
    GramianPair g;
    g.pattern = sdp::SparsityPattern::single_full(r.order());
    g.P = linalg::solve_lyapunov(r.A, r.B * r.B.transpose());
    g.Q = linalg::solve_lyapunov(r.A.transpose(), r.C.transpose() * r.C);
    g.provenance = Provenance::equation;
    g.slack = 0.0;
    return g;
}

/// Structured pair via the interior-point programmes. Post-solve eigenvalue
/// re-verification always runs; KKT gap must reach 1e-7 relative.
[[nodiscard]] inline GramianPair structured_gramians(const Realization& r,
                                                     const sdp::SparsityPattern& pattern,
                                                     bool controllability_only = false) {
    r.check("structured_gramians");
    if (pattern.dim() != r.order())
        throw PatternMismatch("structured_gramians: pattern does not match the order");
    detail::require_stable(r.A, "structured_gramians");

    const Mat bbt = r.B * r.B.transpose();
    const Mat ctc = r.C.transpose() * r.C;
    const Eigen::Index n = r.order();

    // Scale floors derive from the classical solutions.
    const Mat p_cl = linalg::solve_lyapunov(r.A, bbt);
    const double delta_p = rel_tol(1e-8, sym_norm2(bbt));
    const double mu_p = rel_tol(1e-10, p_cl.trace() / static_cast<double>(n));

    GramianPair g;
    g.pattern = pattern;
    g.provenance = Provenance::sdp;
    const auto rep_p = sdp::minimize_trace(r.A, bbt, pattern, delta_p, mu_p);
    g.P = rep_p.P;
    detail::verify_side(r.A, bbt, g.P, pattern, 0.0, "structured_gramians[P]");
    g.slack = rep_p.slack;
    g.sdp_outer = rep_p.outer;
    g.sdp_inner = rep_p.inner;
    g.sdp_kkt = rep_p.kkt;
    if (rep_p.kkt > 1e-7)
        throw NoConvergence("structured_gramians: KKT gap above tolerance");

    if (!controllability_only) {
        const Mat q_cl = linalg::solve_lyapunov(r.A.transpose(), ctc);
        const double delta_q = rel_tol(1e-8, sym_norm2(ctc));
        const double mu_q = rel_tol(1e-10, q_cl.trace() / static_cast<double>(n));
        const auto rep_q = sdp::minimize_trace(r.A.transpose(), ctc, pattern, delta_q, mu_q);
        g.Q = rep_q.P;
        detail::verify_side(r.A.transpose(), ctc, g.Q, pattern, 0.0,
                            "structured_gramians[Q]");
        g.slack = std::min(g.slack, rep_q.slack);
        g.sdp_outer = std::max(g.sdp_outer, rep_q.outer);
        g.sdp_inner += rep_q.inner;
        g.sdp_kkt = std::max(g.sdp_kkt, rep_q.kkt);
        if (rep_q.kkt > 1e-7)
            throw NoConvergence("structured_gramians: KKT gap above tolerance");
    }
    return g;
}

/// Structured pair seeded by the closed-form H+ certificate Gramian; the
/// variable is the structured excess over the seed, started strictly inside.
[[nodiscard]] inline GramianPair seeded_structured_gramians(
    const Realization& r, const sdp::SparsityPattern& pattern,
    bool controllability_only = false) {
    r.check("seeded_structured_gramians");
    if (pattern.dim() != r.order())
        throw PatternMismatch("seeded_structured_gramians: pattern does not match the order");
    detail::require_stable(r.A, "seeded_structured_gramians");

    const Mat bbt = r.B * r.B.transpose();
    const Mat ctc = r.C.transpose() * r.C;

    GramianPair g;
    g.pattern = pattern;
    g.provenance = Provenance::hmatrix_seeded_sdp;

    Vec x_p;
    try {
        x_p = matclass::diagonal_certificate(r.A).x;
    } catch (const NotHPlus& e) {
        throw CertificateUnavailable(std::string("seeded_structured_gramians: ") + e.what());
    } catch (const SingularCompanion& e) {
        throw CertificateUnavailable(std::string("seeded_structured_gramians: ") + e.what());
    }
    const Mat p_base = matclass::base_gramian_seed(r.A, r.B);
    const auto rep_p = sdp::minimize_trace_seeded(r.A, bbt, pattern, p_base, x_p);
    g.P = rep_p.P;
    detail::verify_side(r.A, bbt, g.P, pattern, 0.0, "seeded_structured_gramians[P]");
    g.slack = rep_p.slack;
    g.sdp_outer = rep_p.outer;
    g.sdp_inner = rep_p.inner;
    g.sdp_kkt = rep_p.kkt;
    if (rep_p.kkt > 1e-7)
        throw NoConvergence("seeded_structured_gramians: KKT gap above tolerance");

    if (!controllability_only) {
        // M(A^T) = M(A)^T shares its spectrum, so this cannot fail if the P side passed.
        Vec x_q;
        try {
            x_q = matclass::diagonal_certificate(r.A.transpose()).x;
        } catch (const NotHPlus& e) {
            throw CertificateUnavailable(std::string("seeded_structured_gramians: ") + e.what());
        } catch (const SingularCompanion& e) {
            throw CertificateUnavailable(std::string("seeded_structured_gramians: ") + e.what());
        }
        const Mat q_base = matclass::base_gramian_seed(r.A.transpose(), r.C.transpose());
        const auto rep_q =
            sdp::minimize_trace_seeded(r.A.transpose(), ctc, pattern, q_base, x_q);
        g.Q = rep_q.P;
        detail::verify_side(r.A.transpose(), ctc, g.Q, pattern, 0.0,
                            "seeded_structured_gramians[Q]");
        g.slack = std::min(g.slack, rep_q.slack);
        g.sdp_outer = std::max(g.sdp_outer, rep_q.outer);
        g.sdp_inner += rep_q.inner;
        g.sdp_kkt = std::max(g.sdp_kkt, rep_q.kkt);
        if (rep_q.kkt > 1e-7)
            throw NoConvergence("seeded_structured_gramians: KKT gap above tolerance");
    }
    return g;
}

} // namespace lnared::gramian
