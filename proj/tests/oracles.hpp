#pragma once

// Test-side oracles, independent of the library implementation paths they
// check: explicit Kronecker constructions, an RK4 Schrodinger integrator, a
// reshaping partial trace, a Taylor matrix exponential, and a long-double
// Jacobi eigensolver for high-precision entropies.

#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "gibbsforge/common.hpp"
#include "gibbsforge/hilbert.hpp"
#include "gibbsforge/spinmodel.hpp"

namespace oracle {

using gibbsforge::cx;
using gibbsforge::MatC;
using gibbsforge::MatR;
using gibbsforge::VecC;

inline MatC kron(const MatC& a, const MatC& b) {
    MatC out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline MatC pauli_x() {
    MatC m(2, 2);
    m << 0, 1, 1, 0;
    return m;
}
inline MatC pauli_z() {
    // basis order (|0>, |1>) = (down, up); up carries sigma^z = +1
    MatC m(2, 2);
    m << -1, 0, 0, 1;
    return m;
}
inline MatC id2() { return MatC::Identity(2, 2); }

/// Tensor product of per-site 2x2 operators with site 0 as the least
/// significant bit: full = ops[L-1] (x) ... (x) ops[0].
inline MatC sites_to_full(const std::vector<MatC>& ops) {
    MatC out = ops.back();
    for (int i = static_cast<int>(ops.size()) - 2; i >= 0; --i) out = kron(out, ops[i]);
    return out;
}

inline MatC two_site_term(int length, int i, int j, const MatC& op_i, const MatC& op_j) {
    std::vector<MatC> ops(length, id2());
    ops[i] = op_i;
    ops[j] = op_j;
    return sites_to_full(ops);
}

/// Literal extended-XZ Hamiltonian on 2^L via explicit Kronecker products.
inline MatC hamiltonian_full_kron(const gibbsforge::CouplingParams& p, int length) {
    const std::uint64_t dim = std::uint64_t{1} << length;
    MatC h = MatC::Zero(dim, dim);
    for (int i = 0; i + 1 < length; ++i) {
        h += -p.j * two_site_term(length, i, i + 1, pauli_x(), pauli_x());
        h += p.j_perp * two_site_term(length, i, i + 1, pauli_z(), pauli_z());
    }
    for (int i = 0; i + 2 < length; ++i) {
        h += -p.j_prime * two_site_term(length, i, i + 2, pauli_x(), pauli_x());
        h += p.j_prime_perp * two_site_term(length, i, i + 2, pauli_z(), pauli_z());
    }
    return h;
}

/// Rows/columns of a full-basis operator at the sector masks.
inline MatC project_to_sector(const MatC& full, const gibbsforge::SectorBasis& basis) {
    MatC out(basis.dim(), basis.dim());
    for (int a = 0; a < basis.dim(); ++a)
        for (int b = 0; b < basis.dim(); ++b)
            out(a, b) = full(basis.state(a), basis.state(b));
    return out;
}

/// Sector state embedded into the full 2^L space.
inline VecC embed_sector_state(const VecC& psi, const gibbsforge::SectorBasis& basis) {
    VecC out = VecC::Zero(std::uint64_t{1} << basis.length());
    for (int k = 0; k < basis.dim(); ++k) out(basis.state(k)) = psi(k);
    return out;
}

/// RK4 integration of d psi/dt = -i H psi.
inline VecC rk4_schrodinger(const MatC& h, VecC psi, double t_final, double dt) {
    const cx mi(0.0, -1.0);
    double t = 0.0;
    while (t < t_final - 1e-15) {
        const double step = std::min(dt, t_final - t);
        const VecC k1 = mi * (h * psi);
        const VecC k2 = mi * (h * (psi + 0.5 * step * k1));
        const VecC k3 = mi * (h * (psi + 0.5 * step * k2));
        const VecC k4 = mi * (h * (psi + step * k3));
        psi += (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += step;
    }
    return psi;
}

/// Partial trace of a full-basis pure state by direct index assembly over
/// (kept pattern, environment pattern) pairs.
inline MatC brute_partial_trace(const VecC& psi, const std::vector<int>& keep, int length) {
    const int m = static_cast<int>(keep.size());
    std::vector<int> env;
    for (int s = 0; s < length; ++s)
        if (std::find(keep.begin(), keep.end(), s) == keep.end()) env.push_back(s);
    const int ld = 1 << m;
    const int ed = 1 << static_cast<int>(env.size());
    auto assemble = [&](int local, int environment) {
        std::uint64_t mask = 0;
        for (int k = 0; k < m; ++k)
            if ((local >> k) & 1) mask |= std::uint64_t{1} << keep[k];
        for (std::size_t k = 0; k < env.size(); ++k)
            if ((environment >> k) & 1) mask |= std::uint64_t{1} << env[k];
        return mask;
    };
    MatC rho = MatC::Zero(ld, ld);
    for (int a = 0; a < ld; ++a)
        for (int b = 0; b < ld; ++b)
            for (int e = 0; e < ed; ++e)
                rho(a, b) += psi(assemble(a, e)) * std::conj(psi(assemble(b, e)));
    return rho;
}

/// Dense partial trace of a full-basis density matrix, same index route.
inline MatC brute_partial_trace_density(const MatC& rho, const std::vector<int>& keep,
                                        int length) {
    const int m = static_cast<int>(keep.size());
    std::vector<int> env;
    for (int s = 0; s < length; ++s)
        if (std::find(keep.begin(), keep.end(), s) == keep.end()) env.push_back(s);
    const int ld = 1 << m;
    const int ed = 1 << static_cast<int>(env.size());
    auto assemble = [&](int local, int environment) {
        std::uint64_t mask = 0;
        for (int k = 0; k < m; ++k)
            if ((local >> k) & 1) mask |= std::uint64_t{1} << keep[k];
        for (std::size_t k = 0; k < env.size(); ++k)
            if ((environment >> k) & 1) mask |= std::uint64_t{1} << env[k];
        return mask;
    };
    MatC out = MatC::Zero(ld, ld);
    for (int a = 0; a < ld; ++a)
        for (int b = 0; b < ld; ++b)
            for (int e = 0; e < ed; ++e)
                out(a, b) += rho(assemble(a, e), assemble(b, e));
    return out;
}

/// Taylor matrix exponential with scaling and squaring; small dims only.
inline MatC expm_series(const MatC& m) {
    int squarings = 0;
    MatC scaled = m;
    while (scaled.cwiseAbs().sum() > 0.25 && squarings < 120) {
        scaled *= 0.5;
        ++squarings;
    }
    MatC result = MatC::Identity(m.rows(), m.cols());
    MatC term = result;
    for (int k = 1; k <= 30; ++k) {
        term = term * scaled / static_cast<double>(k);
        result += term;
    }
    for (int s = 0; s < squarings; ++s) result = result * result;
    return result;
}

// ============================================================================
// Long-double Jacobi eigensolver and high-precision relative entropy
// ============================================================================

using LMat = std::vector<std::vector<long double>>;

inline LMat lmat(int n) { return LMat(n, std::vector<long double>(n, 0.0L)); }

/// Cyclic Jacobi for a real symmetric matrix in long double precision.
/// Returns eigenvalues; V receives the eigenvectors in columns.
inline std::vector<long double> jacobi_eigh(LMat a, LMat& v) {
    const int n = static_cast<int>(a.size());
    v = lmat(n);
    for (int i = 0; i < n; ++i) v[i][i] = 1.0L;
    for (int sweep = 0; sweep < 200; ++sweep) {
        long double off = 0.0L;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-60L) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                if (std::abs((double)a[p][q]) == 0.0) continue;
                const long double theta = (a[q][q] - a[p][p]) / (2.0L * a[p][q]);
                const long double t = (theta >= 0 ? 1.0L : -1.0L) /
                                      (std::abs((long double)theta) +
                                       std::sqrt((long double)(theta * theta + 1.0L)));
                const long double c = 1.0L / std::sqrt((long double)(t * t + 1.0L));
                const long double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const long double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const long double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const long double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
    }
    std::vector<long double> evals(n);
    for (int i = 0; i < n; ++i) evals[i] = a[i][i];
    return evals;
}

/// Real-symmetric embedding of a complex Hermitian matrix: E(M) = [[Re, -Im],
/// [Im, Re]]. E is an algebra homomorphism, so f(E(M)) = E(f(M)).
inline LMat embed_hermitian(const MatC& m) {
    const int d = static_cast<int>(m.rows());
    LMat e = lmat(2 * d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            e[i][j] = (long double)m(i, j).real();
            e[i][j + d] = -(long double)m(i, j).imag();
            e[i + d][j] = (long double)m(i, j).imag();
            e[i + d][j + d] = (long double)m(i, j).real();
        }
    return e;
}

/// f applied spectrally in long double.
inline LMat lmat_function(const LMat& m, long double (*f)(long double)) {
    LMat v;
    const std::vector<long double> evals = jacobi_eigh(m, v);
    const int n = static_cast<int>(m.size());
    LMat out = lmat(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            long double acc = 0.0L;
            for (int k = 0; k < n; ++k) acc += v[i][k] * f(evals[k]) * v[j][k];
            out[i][j] = acc;
        }
    return out;
}

/// Tr[rho (ln rho - ln sigma)] in long double via the real embedding
/// (embedding doubles every trace, hence the factor 1/2).
inline double relative_entropy_ld(const MatC& rho, const MatC& sigma) {
    auto clipped_log = [](long double x) -> long double {
        return std::log(std::max(x, (long double)1e-22L));
    };
    const LMat er = embed_hermitian(rho);
    const LMat log_r = lmat_function(er, clipped_log);
    const LMat log_s = lmat_function(embed_hermitian(sigma), clipped_log);
    const int n = static_cast<int>(er.size());
    long double trace = 0.0L;
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) trace += er[i][k] * (log_r[k][i] - log_s[k][i]);
    return static_cast<double>(trace / 2.0L);
}

}  // namespace oracle
