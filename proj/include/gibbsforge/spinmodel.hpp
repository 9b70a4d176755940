#pragma once

#include <cmath>
#include <memory>
#include <optional>

#include "gibbsforge/hilbert.hpp"
#include "gibbsforge/linalg.hpp"
#include "gibbsforge/metrology.hpp"

namespace gibbsforge {

// ============================================================================
// Couplings
// ============================================================================

/// Extended XZ chain couplings:
///   H = -J sum_i X_i X_{i+1} + J_perp sum_i Z_i Z_{i+1}
///       -J' sum_i X_i X_{i+2} + J'_perp sum_i Z_i Z_{i+2},   open boundary.
/// The model is integrable iff both next-nearest couplings vanish.
struct CouplingParams {
    double j = 1.0;             // nearest-neighbor XX
    double j_perp = 1.0;        // nearest-neighbor ZZ
    double j_prime = 0.5;       // next-nearest XX
    double j_prime_perp = 0.5;  // next-nearest ZZ

    bool integrable() const { return j_prime == 0.0 && j_prime_perp == 0.0; }
};

namespace detail {

inline double sign_bit(std::uint64_t mask, int site) {
    return ((mask >> site) & 1ULL) ? 1.0 : -1.0;
}

// Diagonal (ZZ) part of the energy of one computational-basis state.
inline double zz_energy(std::uint64_t mask, int length, const CouplingParams& p) {
    double e = 0.0;
    for (int i = 0; i + 1 < length; ++i)
        e += p.j_perp * sign_bit(mask, i) * sign_bit(mask, i + 1);
    for (int i = 0; i + 2 < length; ++i)
        e += p.j_prime_perp * sign_bit(mask, i) * sign_bit(mask, i + 2);
    return e;
}

}  // namespace detail

// ============================================================================
// Hamiltonian assembly
// ============================================================================

/// H projected onto the magnetization sector. Within the sector the XX terms
/// act as flip-flops |up,down> <-> |down,up>; the pair-creation elements of
/// X_i X_j connect different sectors and are cut by the projection, which is
/// exactly what makes the sector restriction consistent. Real symmetric.
inline MatR build_hamiltonian(const CouplingParams& params, const SectorBasis& basis) {
    if (static_cast<std::size_t>(basis.dim()) > kDenseOperatorCap)
        throw DimensionCapError("build_hamiltonian: sector dimension exceeds dense cap");
    const int length = basis.length();
    const int dim = basis.dim();
    MatR h = MatR::Zero(dim, dim);
    for (int k = 0; k < dim; ++k) {
        const std::uint64_t m = basis.state(k);
        h(k, k) = detail::zz_energy(m, length, params);
        auto add_hop = [&](int i, int j, double coeff) {
            const bool bi = (m >> i) & 1ULL, bj = (m >> j) & 1ULL;
            if (bi == bj) return;  // pair terms leave the sector
            const std::uint64_t flipped = m ^ ((std::uint64_t{1} << i) | (std::uint64_t{1} << j));
            const int k2 = basis.index_of(flipped);
            h(k, k2) += coeff;
        };
        for (int i = 0; i + 1 < length; ++i) add_hop(i, i + 1, -params.j);
        for (int i = 0; i + 2 < length; ++i) add_hop(i, i + 2, -params.j_prime);
    }
    return h;
}

/// Literal H on the full 2^L computational basis, including the
/// magnetization-violating |up,up> <-> |down,down> elements of X_i X_j. This
/// is the operator the Trotter circuit exponentiates.
inline MatR build_hamiltonian_full(const CouplingParams& params, int length) {
    if (length < 1 || length > 16 || (std::size_t{1} << length) > kDenseOperatorCap)
        throw DimensionCapError("build_hamiltonian_full: 2^L exceeds dense cap");
    const std::uint64_t dim = std::uint64_t{1} << length;
    MatR h = MatR::Zero(static_cast<int>(dim), static_cast<int>(dim));
    for (std::uint64_t m = 0; m < dim; ++m) {
        h(m, m) = detail::zz_energy(m, length, params);
        auto add_xx = [&](int i, int j, double coeff) {
            const std::uint64_t flipped = m ^ ((std::uint64_t{1} << i) | (std::uint64_t{1} << j));
            h(m, flipped) += coeff;
        };
        for (int i = 0; i + 1 < length; ++i) add_xx(i, i + 1, -params.j);
        for (int i = 0; i + 2 < length; ++i) add_xx(i, i + 2, -params.j_prime);
    }
    return h;
}

// ============================================================================
// Spectrum
// ============================================================================

/// Full eigendecomposition of a real symmetric Hamiltonian, with basis tag.
struct Spectrum {
    BasisKey basis;
    VecR eigenvalues;   // ascending
    MatR eigenvectors;  // orthogonal, columns aligned with eigenvalues

    static Spectrum compute(const MatR& h, BasisKey key) {
        EighReal e = eigh(h);
        return {key, std::move(e.eigenvalues), std::move(e.eigenvectors)};
    }

    int dim() const { return static_cast<int>(eigenvalues.size()); }
    double ground_energy() const { return eigenvalues(0); }
    double top_energy() const { return eigenvalues(dim() - 1); }

    VecC to_eigenbasis(const VecC& psi) const { return real_apply_transpose(eigenvectors, psi); }
    VecC from_eigenbasis(const VecC& phi) const { return real_apply(eigenvectors, phi); }

    /// max residual ||H v_k - E_k v_k|| and orthogonality defect, for tests.
    std::pair<double, double> validate(const MatR& h) const {
        const double res = (h * eigenvectors - eigenvectors * eigenvalues.asDiagonal())
                               .cwiseAbs()
                               .maxCoeff();
        const double orth = (eigenvectors.transpose() * eigenvectors -
                             MatR::Identity(dim(), dim()))
                                .cwiseAbs()
                                .maxCoeff();
        return {res, orth};
    }
};

// ============================================================================
// Density of states
// ============================================================================

struct DosCurve {
    VecR energy;
    VecR density;      // scaled so the curve integrates to the level count
    double bandwidth;  // Gaussian kernel width actually used
};

inline double silverman_bandwidth(const VecR& evals) {
    const Eigen::Index n = evals.size();
    const double mean = evals.mean();
    const double sd = std::sqrt((evals.array() - mean).square().sum() / std::max<double>(1, n - 1));
    VecR sorted = evals;
    std::sort(sorted.data(), sorted.data() + n);
    auto quantile = [&](double q) {
        const double pos = q * (n - 1);
        const Eigen::Index lo = static_cast<Eigen::Index>(std::floor(pos));
        const Eigen::Index hi = std::min(lo + 1, n - 1);
        return sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
    };
    const double iqr = quantile(0.75) - quantile(0.25);
    double scale = sd;
    if (iqr > 0.0) scale = std::min(sd, iqr / 1.34);
    return 0.9 * scale * std::pow(static_cast<double>(n), -0.2);
}

/// Gaussian-kernel KDE over the eigenvalues, scaled by the level count, on a
/// uniform grid spanning the spectral interval (padded by 4 bandwidths so the
/// kernel mass stays on the grid).
inline DosCurve density_of_states(const VecR& evals, std::optional<double> bandwidth = {},
                                  int grid_points = 512) {
    if (evals.size() < 2)
        throw std::invalid_argument("density_of_states: need at least 2 eigenvalues");
    double h = bandwidth.value_or(0.0);
    if (!bandwidth) {
        h = silverman_bandwidth(evals);
        if (h <= 0.0)
            throw std::invalid_argument(
                "density_of_states: degenerate spectrum, supply a bandwidth");
    }
    if (h <= 0.0) throw std::invalid_argument("density_of_states: bandwidth must be positive");
    const double lo = evals.minCoeff() - 4.0 * h;
    const double hi = evals.maxCoeff() + 4.0 * h;
    DosCurve curve;
    curve.bandwidth = h;
    curve.energy = VecR::LinSpaced(grid_points, lo, hi);
    curve.density = VecR::Zero(grid_points);
    const double norm = 1.0 / (h * std::sqrt(2.0 * M_PI));
    for (int g = 0; g < grid_points; ++g) {
        double acc = 0.0;
        for (Eigen::Index k = 0; k < evals.size(); ++k) {
            const double u = (curve.energy[g] - evals[k]) / h;
            acc += std::exp(-0.5 * u * u);
        }
        curve.density[g] = norm * acc;
    }
    return curve;
}

/// Trapezoid integral of a sampled curve; the DOS integral check in tests.
inline double trapezoid(const VecR& x, const VecR& y) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i + 1 < x.size(); ++i)
        acc += 0.5 * (y[i] + y[i + 1]) * (x[i + 1] - x[i]);
    return acc;
}

// ============================================================================
// Thermal references
// ============================================================================

/// Gibbs state at the inverse temperature whose mean energy matches a target.
/// Weights are stored in the energy eigenbasis; the dense matrix is
/// materialized on demand.
struct ThermalReference {
    double beta_star = 0.0;
    double log_z = 0.0;
    double target_energy = 0.0;
    bool at_mean_energy = false;  // beta* == 0 within solver tolerance
    VecR weights;                 // Gibbs populations, sum to 1
    std::shared_ptr<const Spectrum> spectrum;

    double thermal_energy() const { return weights.dot(spectrum->eigenvalues); }

    MatR gibbs_matrix() const {
        return spectrum->eigenvectors * weights.asDiagonal() *
               spectrum->eigenvectors.transpose();
    }
};

namespace detail {

struct GibbsMoments {
    double energy;
    double log_z;
    VecR weights;
};

inline GibbsMoments gibbs_moments(const VecR& evals, double beta) {
    VecR a = -beta * evals;
    const double m = a.maxCoeff();
    VecR w = (a.array() - m).exp();
    const double z = w.sum();
    w /= z;
    return {w.dot(evals), m + std::log(z), std::move(w)};
}

}  // namespace detail

/// Solve Tr[H e^{-beta H}]/Z = e0 for beta by bracketed bisection; E(beta) is
/// strictly decreasing (variance positivity), so the bracket is expanded by
/// doubling until it contains the target. beta may be negative.
inline ThermalReference solve_beta_star(std::shared_ptr<const Spectrum> spectrum, double e0,
                                        double tol_scale = 1e-9) {
    const VecR& evals = spectrum->eigenvalues;
    const double e_min = evals.minCoeff();
    const double e_max = evals.maxCoeff();
    if (!(e_min < e0 && e0 < e_max))
        throw std::domain_error("solve_beta_star: target energy " + std::to_string(e0) +
                                " outside open spectral interval (" + std::to_string(e_min) +
                                ", " + std::to_string(e_max) + ")");
    const double tol = tol_scale * (e_max - e_min);

    auto finish = [&](double beta) {
        detail::GibbsMoments g = detail::gibbs_moments(evals, beta);
        ThermalReference ref;
        ref.beta_star = beta;
        ref.log_z = g.log_z;
        ref.target_energy = e0;
        ref.at_mean_energy = (beta == 0.0);
        ref.weights = std::move(g.weights);
        ref.spectrum = std::move(spectrum);
        return ref;
    };

    const double e_at_zero = detail::gibbs_moments(evals, 0.0).energy;
    if (std::abs(e_at_zero - e0) <= tol) return finish(0.0);

    // E(beta) decreasing: target above the infinite-temperature mean needs
    // beta < 0, below needs beta > 0.
    double beta_lo = 0.0, beta_hi = 0.0;  // E(beta_lo) > e0 > E(beta_hi)
    double span = 1.0;
    if (e0 > e_at_zero) {
        beta_hi = 0.0;
        beta_lo = -span;
        while (detail::gibbs_moments(evals, beta_lo).energy < e0) {
            span *= 2.0;
            beta_lo = -span;
            if (span > 1e12)
                throw std::runtime_error("solve_beta_star: bracket expansion failed");
        }
    } else {
        beta_lo = 0.0;
        beta_hi = span;
        while (detail::gibbs_moments(evals, beta_hi).energy > e0) {
            span *= 2.0;
            beta_hi = span;
            if (span > 1e12)
                throw std::runtime_error("solve_beta_star: bracket expansion failed");
        }
    }

    for (int iter = 0; iter < 400; ++iter) {
        const double mid = 0.5 * (beta_lo + beta_hi);
        const double e_mid = detail::gibbs_moments(evals, mid).energy;
        if (std::abs(e_mid - e0) <= tol) return finish(mid);
        if (e_mid > e0)
            beta_lo = mid;
        else
            beta_hi = mid;
        if (std::abs(beta_hi - beta_lo) < 1e-15 * std::max(1.0, std::abs(beta_lo))) break;
    }
    return finish(0.5 * (beta_lo + beta_hi));
}

enum class ThermalMode { kExact, kLocal };

/// Eq.-2-style reduction: Tr over the complement of the full Gibbs matrix.
inline MatC thermal_reduced_exact(const ThermalReference& ref, const SubsetIndex& idx) {
    const MatR gibbs = ref.gibbs_matrix();
    return partial_trace_density(gibbs, idx);
}

/// Eq.-3-style local approximation: e^{-beta H_A}/Tr[...], where H_A keeps
/// only the bonds with both endpoints inside the subset (no boundary
/// compensation). Lives on the full 2^|A| local space.
inline MatC thermal_reduced_local(const ThermalReference& ref, const CouplingParams& params,
                                  const SiteSubset& subset) {
    const int m = subset.size();
    const int ld = 1 << m;
    auto pos_of = [&](int site) {
        for (int k = 0; k < m; ++k)
            if (subset.sites[k] == site) return k;
        return -1;
    };
    MatR h_local = MatR::Zero(ld, ld);
    auto add_bond = [&](int i, int j, double jxx, double jzz) {
        const int a = pos_of(i), b = pos_of(j);
        if (a < 0 || b < 0) return;
        for (int pat = 0; pat < ld; ++pat) {
            const double za = ((pat >> a) & 1) ? 1.0 : -1.0;
            const double zb = ((pat >> b) & 1) ? 1.0 : -1.0;
            h_local(pat, pat) += jzz * za * zb;
            const int flipped = pat ^ ((1 << a) | (1 << b));
            h_local(pat, flipped) += -jxx;
        }
    };
    const int length = ref.spectrum->basis.length;
    for (int i = 0; i + 1 < length; ++i) add_bond(i, i + 1, params.j, params.j_perp);
    for (int i = 0; i + 2 < length; ++i) add_bond(i, i + 2, params.j_prime, params.j_prime_perp);

    const EighReal e = eigh(h_local);
    VecR a = -ref.beta_star * e.eigenvalues;
    const double mx = a.maxCoeff();
    VecR w = (a.array() - mx).exp();
    w /= w.sum();
    const MatR rho = e.eigenvectors * w.asDiagonal() * e.eigenvectors.transpose();
    return rho.cast<cx>();
}

/// Dispatcher matching the two readings of the thermal reduced state. The
/// local mode needs the couplings to assemble H_A.
inline MatC thermal_reduced(const ThermalReference& ref, const SubsetIndex& idx, ThermalMode mode,
                            const CouplingParams* params = nullptr) {
    if (mode == ThermalMode::kExact) return thermal_reduced_exact(ref, idx);
    if (!params)
        throw std::invalid_argument("thermal_reduced: local mode requires couplings");
    return thermal_reduced_local(ref, *params, idx.subset());
}

/// |subset| >= L/2 voids the thermal-convergence guarantee; callers warn.
inline bool thermal_convergence_warning(const SiteSubset& subset, int length) {
    return 2 * subset.size() >= length;
}

/// <psi0|H|psi0> for a computational-basis product state: only the diagonal
/// ZZ terms contribute.
inline double product_state_energy(std::uint64_t mask, int length, const CouplingParams& params) {
    return detail::zz_energy(mask, length, params);
}

}  // namespace gibbsforge
