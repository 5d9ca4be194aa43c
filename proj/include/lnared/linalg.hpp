#pragma once

#include <algorithm>
#include <complex>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "lnared/types.hpp"

namespace lnared::linalg {

//==============================================================================
// Deterministic dense kernels
//
// Every routine here is a pure function of its input bits: identical inputs
// produce identical outputs, including eigenvalue order and singular-vector
// signs. Downstream modules rely on that for byte-identical artifacts.
//==============================================================================

/// Eigen decomposition with a canonical ordering.
struct SpectralDecomposition {
    CVec values;  ///< sorted by descending real part, ties by descending imaginary part
    CMat vectors; ///< columns are unit-norm eigenvectors matching `values`
};

/// Result of svd(): A = U * S.asDiagonal() * V^T with S descending.
struct SvdResult {
    Mat U;
    Vec S;
    Mat V;
};

namespace detail {

/// Canonical phase: rotate v so its first largest-magnitude entry is real positive.
inline void canonicalize_phase(Eigen::Ref<CVec> v) {
    Eigen::Index k = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double m = std::abs(v(i));
        if (m > best + 1e-15 * (best > 0 ? best : 1.0)) {
            best = m;
            k = i;
        }
    }
    if (best <= 0.0) return;
    const std::complex<double> phase = v(k) / std::abs(v(k));
    v /= phase;
}

} // namespace detail

/// Eigenvalues and eigenvectors of a square real matrix.
///
/// Values are sorted by descending real part, ties broken by descending
/// imaginary part; each vector has unit norm and canonical phase. Throws
/// NoConvergence when the QR iteration fails.
[[nodiscard]] inline SpectralDecomposition eig(const Mat& a) {
    require_square(a, "eig");
    require_finite(a, "eig");
    Eigen::EigenSolver<Mat> es(a, true);
    if (es.info() != Eigen::Success) throw NoConvergence("eig: QR iteration failed");

    const Eigen::Index n = a.rows();
    std::vector<Eigen::Index> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    const CVec vals = es.eigenvalues();
    std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index i, Eigen::Index j) {
        if (vals(i).real() != vals(j).real()) return vals(i).real() > vals(j).real();
        return vals(i).imag() > vals(j).imag();
    });

    SpectralDecomposition out;
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        out.values(k) = vals(idx[static_cast<size_t>(k)]);
        CVec v = es.eigenvectors().col(idx[static_cast<size_t>(k)]);
        v.normalize();
        detail::canonicalize_phase(v);
        out.vectors.col(k) = v;
    }
    return out;
}

/// Eigenvalues only, in the canonical order of eig().
[[nodiscard]] inline CVec eigvals(const Mat& a) {
    require_square(a, "eigvals");
    require_finite(a, "eigvals");
    Eigen::EigenSolver<Mat> es(a, false);
    if (es.info() != Eigen::Success) throw NoConvergence("eigvals: QR iteration failed");
    CVec vals = es.eigenvalues();
    std::vector<Eigen::Index> idx(static_cast<size_t>(vals.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index i, Eigen::Index j) {
        if (vals(i).real() != vals(j).real()) return vals(i).real() > vals(j).real();
        return vals(i).imag() > vals(j).imag();
    });
    CVec out(vals.size());
    for (Eigen::Index k = 0; k < vals.size(); ++k) out(k) = vals(idx[static_cast<size_t>(k)]);
    return out;
}

[[nodiscard]] inline double max_real_eig(const Mat& a) { return eigvals(a)(0).real(); }

/// Singular value decomposition A = U S V^T (thin), S descending.
///
/// Sign convention: the first largest-magnitude entry of each U column is
/// non-negative, with the matching V column flipped alongside.
[[nodiscard]] inline SvdResult svd(const Mat& a) {
    require_finite(a, "svd");
    Eigen::JacobiSVD<Mat> solver(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    SvdResult out{solver.matrixU(), solver.singularValues(), solver.matrixV()};
    for (Eigen::Index j = 0; j < out.U.cols(); ++j) {
        Eigen::Index k = 0;
        double best = -1.0;
        for (Eigen::Index i = 0; i < out.U.rows(); ++i) {
            const double m = std::abs(out.U(i, j));
            if (m > best + 1e-15 * (best > 0 ? best : 1.0)) {
                best = m;
                k = i;
            }
        }
        if (out.U(k, j) < 0.0) {
            out.U.col(j) = -out.U.col(j);
            out.V.col(j) = -out.V.col(j);
        }
    }
    return out;
}

/// Spectral norm via svd(); safe for non-symmetric input.
[[nodiscard]] inline double norm2(const Mat& a) {
    if (a.size() == 0) return 0.0;
    return svd(a).S(0);
}

/// Lower-triangular L with P = L L^T within 1e-12 * ||P||.
///
/// Accepts symmetric input whose smallest eigenvalue is >= -1e-12 * ||P||;
/// a single diagonal shift of that size is retried before giving up.
[[nodiscard]] inline Mat cholesky_factor(const Mat& p) {
    require_square(p, "cholesky_factor");
    require_finite(p, "cholesky_factor");
    const Mat ps = symmetrize(p);
    Eigen::LLT<Mat> llt(ps);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    const double shift = rel_tol(1e-12, fnorm(ps));
    Eigen::LLT<Mat> retry(ps + shift * Mat::Identity(p.rows(), p.cols()));
    if (retry.info() == Eigen::Success) return retry.matrixL();
    throw NotPositiveDefinite("cholesky_factor: matrix is not positive definite");
}

/// Kronecker product, column-major vec convention: vec(AXB) = (B^T (x) A) vec(X).
[[nodiscard]] inline Mat kron(const Mat& a, const Mat& b) {
    Mat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

/// Solves A P + P A^T + M = 0 for symmetric P.
///
/// The equation is vectorized to (I (x) A + A (x) I) vec(P) = -vec(M) and
/// solved by dense LU; intended for the desk scale n <= 64. Throws NotStable
/// when max Re lambda(A) >= -1e-12 * ||A||, DimensionMismatch on shape errors
/// or n > 64, and NoConvergence if the residual check
/// ||A P + P A^T + M|| <= 1e-9 * (2 ||A|| ||P|| + ||M||) fails.
[[nodiscard]] inline Mat solve_lyapunov(const Mat& a, const Mat& m) {
    require_square(a, "solve_lyapunov");
    require_square(m, "solve_lyapunov");
    if (a.rows() != m.rows()) throw DimensionMismatch("solve_lyapunov: A and M sizes differ");
    if (a.rows() > 64) throw DimensionMismatch("solve_lyapunov: order exceeds the n <= 64 limit");
    require_finite(a, "solve_lyapunov");
    require_finite(m, "solve_lyapunov");

    const double a_norm = fnorm(a);
    if (max_real_eig(a) >= -rel_tol(1e-12, a_norm))
        throw NotStable("solve_lyapunov: A has an eigenvalue on or right of the imaginary axis");

    const Eigen::Index n = a.rows();
    const Mat id = Mat::Identity(n, n);
    const Mat k = kron(id, a) + kron(a, id);
    const Mat ms = symmetrize(m);
    Vec rhs(n * n);
    for (Eigen::Index j = 0; j < n; ++j) rhs.segment(j * n, n) = -ms.col(j);
    Vec x = k.partialPivLu().solve(rhs);
    Mat p(n, n);
    for (Eigen::Index j = 0; j < n; ++j) p.col(j) = x.segment(j * n, n);
    p = symmetrize(p);

    const double resid = fnorm(a * p + p * a.transpose() + ms);
    if (resid > rel_tol(1e-9, 2.0 * a_norm * fnorm(p) + fnorm(ms)))
        throw NoConvergence("solve_lyapunov: residual exceeds tolerance");
    return p;
}

} // namespace lnared::linalg
