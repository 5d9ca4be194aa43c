#pragma once

#include <cmath>
#include <optional>

#include "lnared/linalg.hpp"
#include "lnared/types.hpp"

namespace lnared::matclass {

//==============================================================================
// Sign-structure classes and diagonal stability certificates
//
// The comparison (companion) matrix M(A) has m_ii = |a_ii| and
// m_ij = -|a_ij|. A is an H matrix when spec(M(A)) lies in the closed right
// half-plane, H+ when additionally every a_ii > 0. For -A in H+ with
// nonsingular M(A), the scales v = M(A)^{-1} 1 and w = M(A)^{-T} 1 are
// strictly positive and X = diag(v_i / w_i) certifies diagonal stability:
// A X + X A^T is negative definite, with -(A X + X A^T) itself H+.
//==============================================================================

struct MatrixClassReport {
    bool is_metzler = false;   ///< off-diagonal entries all >= 0
    bool is_h = false;         ///< min Re spec(M(A)) >= -1e-10 * ||A||
    bool is_h_plus = false;    ///< H with every a_ii > 0
    bool is_dd_row = false;    ///< strict row diagonal dominance (unit scales)
    bool is_scaled_dd = false; ///< row dominance under scales v = M(A)^{-1} 1 > 0
    bool is_scaled_dd_col = false; ///< column-side analogue via w = M(A)^{-T} 1
    CVec companion_spectrum;       ///< eigenvalues of M(A), canonical order
    std::optional<Vec> certificate; ///< diag X with A X + X A^T < 0, when available
};

/// Comparison matrix M(A).
[[nodiscard]] inline Mat companion(const Mat& a) {
    require_square(a, "companion");
    require_finite(a, "companion");
    Mat m = -a.cwiseAbs();
    for (Eigen::Index i = 0; i < a.rows(); ++i) m(i, i) = std::abs(a(i, i));
    return m;
}

namespace detail {

struct Scales {
    Vec v; ///< M(A)^{-1} 1
    Vec w; ///< M(A)^{-T} 1
    bool solved = false;
    bool strictly_positive = false;
};

/// Solves for the row/column scale vectors; positivity uses a relative floor.
inline Scales companion_scales(const Mat& m) {
    Scales s;
    const Eigen::Index n = m.rows();
    Eigen::FullPivLU<Mat> lu(m);
    lu.setThreshold(1e-13);
    if (!lu.isInvertible()) return s;
    s.v = lu.solve(Vec::Ones(n));
    Eigen::FullPivLU<Mat> lut(m.transpose());
    lut.setThreshold(1e-13);
    if (!lut.isInvertible()) return s;
    s.w = lut.solve(Vec::Ones(n));
    if (!s.v.allFinite() || !s.w.allFinite()) return s;
    s.solved = true;
    const double floor_v = 1e-12 * s.v.cwiseAbs().maxCoeff();
    const double floor_w = 1e-12 * s.w.cwiseAbs().maxCoeff();
    s.strictly_positive = (s.v.array() > floor_v).all() && (s.w.array() > floor_w).all();
    return s;
}

} // namespace detail

/// Classifies the sign structure of a square matrix.
///
/// Flags degrade to false (and the certificate to absent) when the numerics
/// behind them fail; classification never throws on a finite square input.
[[nodiscard]] inline MatrixClassReport classify(const Mat& a) {
    require_square(a, "classify");
    require_finite(a, "classify");
    MatrixClassReport rep;
    const Eigen::Index n = a.rows();

    rep.is_metzler = true;
    for (Eigen::Index i = 0; i < n && rep.is_metzler; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j && a(i, j) < 0.0) {
                rep.is_metzler = false;
                break;
            }

    rep.is_dd_row = true;
    for (Eigen::Index i = 0; i < n && rep.is_dd_row; ++i) {
        double off = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) off += std::abs(a(i, j));
        if (!(std::abs(a(i, i)) > off)) rep.is_dd_row = false;
    }

    const Mat m = companion(a);
    try {
        rep.companion_spectrum = linalg::eigvals(m);
        double min_re = rep.companion_spectrum(0).real();
        for (Eigen::Index i = 0; i < n; ++i)
            min_re = std::min(min_re, rep.companion_spectrum(i).real());
        rep.is_h = min_re >= -rel_tol(1e-10, fnorm(a));
    } catch (const Error&) {
        rep.is_h = false;
    }
    rep.is_h_plus = rep.is_h && (a.diagonal().array() > 0.0).all();

    const detail::Scales sc = detail::companion_scales(m);
    if (sc.solved && sc.strictly_positive) {
        rep.is_scaled_dd = true;
        rep.is_scaled_dd_col = true;
    }

    // Diagonal stability certificate for A itself: needs -A in H+.
    if (rep.is_h && (a.diagonal().array() < 0.0).all() && sc.solved &&
        sc.strictly_positive) {
        Vec x(n);
        for (Eigen::Index i = 0; i < n; ++i) x(i) = sc.v(i) / sc.w(i);
        try {
            const Mat lyap = a * x.asDiagonal() + x.asDiagonal() * a.transpose();
            if (sym_eig_max(lyap) < 0.0) rep.certificate = x;
        } catch (const Error&) {
            // leave the certificate absent
        }
    }
    return rep;
}

/// Certificate triple: X = diag(x) satisfies A X + X A^T < 0, built from the
/// companion scales v = M(A)^{-1} 1 and w = M(A)^{-T} 1.
struct DiagonalCertificate {
    Vec x;
    Vec v;
    Vec w;
};

/// Diagonal stability certificate X = diag(v_i / w_i) for a drift A with
/// -A in H+. Throws NotHPlus when the premise fails and SingularCompanion
/// when the companion solves degenerate.
[[nodiscard]] inline DiagonalCertificate diagonal_certificate(const Mat& a) {
    require_square(a, "diagonal_certificate");
    require_finite(a, "diagonal_certificate");
    const Mat m = companion(a);
    const CVec spectrum = linalg::eigvals(m);
    double min_re = spectrum(0).real();
    for (Eigen::Index i = 0; i < spectrum.size(); ++i)
        min_re = std::min(min_re, spectrum(i).real());
    const bool neg_a_h_plus =
        min_re >= -rel_tol(1e-10, fnorm(a)) && (a.diagonal().array() < 0.0).all();
    if (!neg_a_h_plus)
        throw NotHPlus("diagonal_certificate: -A is not an H+ matrix");
    const detail::Scales sc = detail::companion_scales(m);
    if (!sc.solved)
        throw SingularCompanion("diagonal_certificate: companion matrix is singular");
    if (!sc.strictly_positive)
        throw SingularCompanion("diagonal_certificate: companion scales lost positivity");
    DiagonalCertificate cert;
    cert.v = sc.v;
    cert.w = sc.w;
    cert.x.resize(a.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) cert.x(i) = sc.v(i) / sc.w(i);
    return cert;
}

/// Closed-form Lyapunov-feasible seed built from the diagonal certificate:
/// P_base = X * max_sv(B B^T) / min_sv(A X + X A^T), which satisfies
/// A P + P A^T + B B^T <= 0. The inequality is eigen-checked before return;
/// failure raises CertificateUnavailable.
[[nodiscard]] inline Mat base_gramian_seed(const Mat& a, const Mat& b) {
    require_square(a, "base_gramian_seed");
    if (b.rows() != a.rows()) throw DimensionMismatch("base_gramian_seed: B rows");
    require_finite(b, "base_gramian_seed");
    Vec x;
    try {
        x = diagonal_certificate(a).x;
    } catch (const Error& e) {
        throw CertificateUnavailable(std::string("base_gramian_seed: ") + e.what());
    }
    const Mat bbt = b * b.transpose();
    const Mat lyap = a * x.asDiagonal() + x.asDiagonal() * a.transpose();
    const double num = sym_norm2(bbt);
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(lyap), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw CertificateUnavailable("base_gramian_seed: eigensolver failed");
    const double den = es.eigenvalues().cwiseAbs().minCoeff();
    if (!(den > 0.0))
        throw CertificateUnavailable("base_gramian_seed: certificate residual is singular");
    const Mat p = (num / den) * Mat(x.asDiagonal());
    const double check = sym_eig_max(a * p + p * a.transpose() + bbt);
    if (check > rel_tol(1e-10, std::max(num, 1.0)))
        throw CertificateUnavailable("base_gramian_seed: seed failed the Lyapunov check");
    return p;
}

} // namespace lnared::matclass
