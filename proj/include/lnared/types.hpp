#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "lnared/errors.hpp"

namespace lnared {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

/// Absolute floor applied to every relative tolerance in the library.
inline constexpr double kTolFloor = 1e-14;

/// Relative tolerance scaled by a magnitude, never below the floor.
[[nodiscard]] inline double rel_tol(double rel, double scale) {
    double t = rel * scale;
    return t > kTolFloor ? t : kTolFloor;
}

[[nodiscard]] inline bool all_finite(const Mat& a) { return a.allFinite(); }

/// Throws NotFinite when a matrix carries NaN or Inf entries.
inline void require_finite(const Mat& a, const std::string& who) {
    if (!a.allFinite()) throw NotFinite(who + ": non-finite entries");
}

inline void require_size(const Mat& a, Eigen::Index rows, Eigen::Index cols,
                         const std::string& who) {
    if (a.rows() != rows || a.cols() != cols)
        throw DimensionMismatch(who + ": expected " + std::to_string(rows) + "x" +
                                std::to_string(cols) + ", got " +
                                std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()));
}

inline void require_size(Eigen::Index got, Eigen::Index want, const std::string& who) {
    if (got != want)
        throw DimensionMismatch(who + ": expected " + std::to_string(want) + ", got " +
                                std::to_string(got));
}

inline void require_square(const Mat& a, const std::string& who) {
    if (a.rows() != a.cols())
        throw DimensionMismatch(who + ": matrix must be square, got " +
                                std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()));
}

/// Frobenius norm; the library's default magnitude for relative tolerances.
[[nodiscard]] inline double fnorm(const Mat& a) { return a.norm(); }

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
[[nodiscard]] inline double sym_norm2(const Mat& s) {
    Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NoConvergence("sym_norm2: eigensolver failed");
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

[[nodiscard]] inline Mat symmetrize(const Mat& a) { return 0.5 * (a + a.transpose()); }

/// Largest eigenvalue of a symmetric matrix.
[[nodiscard]] inline double sym_eig_max(const Mat& s) {
    Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NoConvergence("sym_eig_max: eigensolver failed");
    return es.eigenvalues().maxCoeff();
}

/// Smallest eigenvalue of a symmetric matrix.
[[nodiscard]] inline double sym_eig_min(const Mat& s) {
    Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NoConvergence("sym_eig_min: eigensolver failed");
    return es.eigenvalues().minCoeff();
}

/// State-space realization (A, B, C, D) of dx = Ax + Bw, y = Cx + Dw.
struct Realization {
    Mat A;
    Mat B;
    Mat C;
    Mat D;

    [[nodiscard]] Eigen::Index order() const { return A.rows(); }
    [[nodiscard]] Eigen::Index inputs() const { return B.cols(); }
    [[nodiscard]] Eigen::Index outputs() const { return C.rows(); }

    /// Validates the block dimensions and entry finiteness.
    void check(const std::string& who) const {
        require_square(A, who + ".A");
        if (B.rows() != A.rows())
            throw DimensionMismatch(who + ".B: row count must match A");
        if (C.cols() != A.cols())
            throw DimensionMismatch(who + ".C: column count must match A");
        require_size(D, C.rows(), B.cols(), who + ".D");
        require_finite(A, who + ".A");
        require_finite(B, who + ".B");
        require_finite(C, who + ".C");
        require_finite(D, who + ".D");
    }

    /// Transfer matrix G(s) = C (sI - A)^{-1} B + D at s = iw.
    [[nodiscard]] CMat eval(double w) const {
        CMat m = CMat::Identity(order(), order()) * std::complex<double>(0.0, w) -
                 A.cast<std::complex<double>>();
        return C.cast<std::complex<double>>() * m.lu().solve(B.cast<std::complex<double>>()) +
               D.cast<std::complex<double>>();
    }

    /// DC gain G(0) = -C A^{-1} B + D; A must be invertible.
    [[nodiscard]] Mat dc_gain() const { return -C * A.lu().solve(B) + D; }
};

/// Packs the upper triangle of a symmetric n x n matrix row-major into a
/// vector of length n(n+1)/2 (the layout shared by covariance integrators).
[[nodiscard]] inline Vec vech(const Mat& s) {
    const Eigen::Index n = s.rows();
    Vec v(n * (n + 1) / 2);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i; j < n; ++j) v(k++) = s(i, j);
    return v;
}

/// Inverse of vech: rebuilds the full symmetric matrix.
[[nodiscard]] inline Mat unvech(const Vec& v, Eigen::Index n) {
    if (v.size() != n * (n + 1) / 2) throw DimensionMismatch("unvech: packed length");
    Mat s(n, n);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i; j < n; ++j) {
            s(i, j) = v(k);
            s(j, i) = v(k);
            ++k;
        }
    return s;
}

/// Parallel difference G1 - G2 as one realization (shared input, subtracted output).
[[nodiscard]] inline Realization error_system(const Realization& g1, const Realization& g2) {
    if (g1.inputs() != g2.inputs() || g1.outputs() != g2.outputs())
        throw DimensionMismatch("error_system: incompatible input/output dimensions");
    const Eigen::Index n1 = g1.order(), n2 = g2.order();
    Realization e;
    e.A = Mat::Zero(n1 + n2, n1 + n2);
    e.A.topLeftCorner(n1, n1) = g1.A;
    e.A.bottomRightCorner(n2, n2) = g2.A;
    e.B = Mat::Zero(n1 + n2, g1.inputs());
    e.B.topRows(n1) = g1.B;
    e.B.bottomRows(n2) = g2.B;
    e.C = Mat::Zero(g1.outputs(), n1 + n2);
    e.C.leftCols(n1) = g1.C;
    e.C.rightCols(n2) = -g2.C;
    e.D = g1.D - g2.D;
    return e;
}

} // namespace lnared
