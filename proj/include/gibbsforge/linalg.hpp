#pragma once

#include <cmath>
#include <functional>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "gibbsforge/common.hpp"

namespace gibbsforge {

// All matrix functions of Hermitian matrices go through the eigendecomposition,
// with eigenvalue clipping at kEigClip for logarithms and square roots.

template <typename Derived>
inline typename Derived::PlainObject hermitize(const Eigen::MatrixBase<Derived>& a) {
    typename Derived::PlainObject m = a.derived();
    return typename Derived::PlainObject(0.5 * (m + m.adjoint()));
}

inline bool is_hermitian(const MatC& a, double tol = 1e-10) {
    return (a - a.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

struct EighReal {
    VecR eigenvalues;   // ascending
    MatR eigenvectors;  // columns aligned with eigenvalues
};

struct EighComplex {
    VecR eigenvalues;
    MatC eigenvectors;
};

inline EighReal eigh(const MatR& h) {
    Eigen::SelfAdjointEigenSolver<MatR> solver(h);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("eigh: real symmetric eigendecomposition failed");
    return {solver.eigenvalues(), solver.eigenvectors()};
}

inline EighComplex eigh(const MatC& h) {
    Eigen::SelfAdjointEigenSolver<MatC> solver(h);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("eigh: Hermitian eigendecomposition failed");
    return {solver.eigenvalues(), solver.eigenvectors()};
}

/// f applied spectrally to a Hermitian matrix.
inline MatC hermitian_function(const MatC& h, const std::function<double(double)>& f) {
    const EighComplex e = eigh(hermitize(h));
    VecR fe(e.eigenvalues.size());
    for (Eigen::Index k = 0; k < fe.size(); ++k) fe[k] = f(e.eigenvalues[k]);
    return e.eigenvectors * fe.asDiagonal() * e.eigenvectors.adjoint();
}

inline MatC matrix_sqrt_psd(const MatC& h) {
    return hermitian_function(h, [](double x) { return std::sqrt(std::max(x, 0.0)); });
}

/// log with the clipping floor; intended for density matrices.
inline MatC matrix_log_clipped(const MatC& h, double clip = kEigClip) {
    return hermitian_function(h, [clip](double x) { return std::log(std::max(x, clip)); });
}

inline MatC matrix_exp_hermitian(const MatC& h) {
    return hermitian_function(h, [](double x) { return std::exp(x); });
}

/// Weight of the spectrum below the clipping floor (reported when significant).
inline double clipped_mass(const VecR& eigenvalues, double clip = kEigClip) {
    double m = 0.0;
    for (Eigen::Index k = 0; k < eigenvalues.size(); ++k)
        if (eigenvalues[k] < clip) m += std::abs(std::min(eigenvalues[k], 0.0));
    return m;
}

inline double min_eigenvalue(const MatC& h) { return eigh(hermitize(h)).eigenvalues.minCoeff(); }

/// y = A x for real A and complex x via two real products.
inline VecC real_apply(const MatR& a, const VecC& x) {
    VecR xr = x.real(), xi = x.imag();
    VecR yr = a * xr, yi = a * xi;
    VecC y(a.rows());
    y.real() = yr;
    y.imag() = yi;
    return y;
}

/// y = A^T x for real A and complex x.
inline VecC real_apply_transpose(const MatR& a, const VecC& x) {
    VecR xr = x.real(), xi = x.imag();
    VecR yr = a.transpose() * xr, yi = a.transpose() * xi;
    VecC y(a.cols());
    y.real() = yr;
    y.imag() = yi;
    return y;
}

}  // namespace gibbsforge
