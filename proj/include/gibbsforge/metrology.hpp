#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "gibbsforge/hilbert.hpp"
#include "gibbsforge/linalg.hpp"

namespace gibbsforge {

// Distance, entropy and correlation observables. Natural logarithm throughout;
// entropies are in nats. Eigenvalues are clipped at kEigClip before logs and
// square roots.

// ============================================================================
// Reduced states and partial traces
// ============================================================================

struct ReducedState {
    SiteSubset subset;
    MatC matrix;

    int dim() const { return static_cast<int>(matrix.rows()); }
};

/// Tr over the complement of idx.subset() for a pure state. Works for sector
/// and full bases; sector configurations absent from the basis carry zero
/// weight on the full 2^|subset| local space.
inline MatC partial_trace(const VecC& psi, const SubsetIndex& idx) {
    if (psi.size() != idx.basis_dim())
        throw BasisMismatchError("partial_trace: state dimension mismatch");
    const int ld = idx.local_dim();
    MatC rho = MatC::Zero(ld, ld);
    VecC scratch(ld);
    for (int g = 0; g < idx.group_count(); ++g) {
        scratch.setZero();
        for (const auto* e = idx.group_begin(g); e != idx.group_end(g); ++e)
            scratch(e->local) = psi(e->global);
        // rank-1 update restricted to the patterns present in the group
        for (const auto* a = idx.group_begin(g); a != idx.group_end(g); ++a)
            for (const auto* b = idx.group_begin(g); b != idx.group_end(g); ++b)
                rho(a->local, b->local) += scratch(a->local) * std::conj(scratch(b->local));
    }
    return rho;
}

/// Tr over the complement for a density matrix in the same basis.
template <typename Derived>
inline MatC partial_trace_density(const Eigen::MatrixBase<Derived>& rho, const SubsetIndex& idx) {
    if (rho.rows() != idx.basis_dim() || rho.cols() != idx.basis_dim())
        throw BasisMismatchError("partial_trace: density matrix dimension mismatch");
    const int ld = idx.local_dim();
    MatC out = MatC::Zero(ld, ld);
    for (int g = 0; g < idx.group_count(); ++g) {
        for (const auto* a = idx.group_begin(g); a != idx.group_end(g); ++a)
            for (const auto* b = idx.group_begin(g); b != idx.group_end(g); ++b)
                out(a->local, b->local) += cx(rho(a->global, b->global));
    }
    return out;
}

// ============================================================================
// Distances
// ============================================================================

/// S(rho || sigma) = Tr[rho (ln rho - ln sigma)], with 0 ln 0 := 0. Throws
/// SupportViolationError when rho carries weight outside supp(sigma).
inline double relative_entropy(const MatC& rho, const MatC& sigma, double clip = kEigClip,
                               double support_tol = 1e-8) {
    const EighComplex er = eigh(hermitize(rho));
    const EighComplex es = eigh(hermitize(sigma));

    // weight of rho on the numerical null space of sigma
    double offending = 0.0;
    for (Eigen::Index k = 0; k < es.eigenvalues.size(); ++k) {
        if (es.eigenvalues[k] < clip) {
            const VecC v = es.eigenvectors.col(k);
            offending += std::abs((v.adjoint() * rho * v)(0, 0).real());
        }
    }
    if (offending > support_tol)
        throw SupportViolationError("relative_entropy: rho has weight " +
                                    std::to_string(offending) + " outside supp(sigma)");

    double s = 0.0;
    for (Eigen::Index k = 0; k < er.eigenvalues.size(); ++k) {
        const double p = er.eigenvalues[k];
        if (p > clip) s += p * std::log(p);
    }
    const MatC log_sigma = es.eigenvectors *
                           es.eigenvalues.unaryExpr([clip](double x) {
                               return std::log(std::max(x, clip));
                           }).asDiagonal() *
                           es.eigenvectors.adjoint();
    s -= (rho * log_sigma).trace().real();
    return std::max(s, 0.0);
}

/// (1/2) Tr |rho - sigma|.
inline double trace_distance(const MatC& rho, const MatC& sigma) {
    if (rho.rows() != sigma.rows())
        throw std::invalid_argument("trace_distance: dimension mismatch");
    const EighComplex e = eigh(hermitize(rho - sigma));
    return 0.5 * e.eigenvalues.cwiseAbs().sum();
}

/// Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2, computed through
/// the Hermitianized inner product, never through the product rho*sigma.
inline double fidelity(const MatC& rho, const MatC& sigma) {
    const MatC sr = matrix_sqrt_psd(rho);
    const MatC inner = hermitize(sr * sigma * sr);
    const EighComplex e = eigh(inner);
    double t = 0.0;
    for (Eigen::Index k = 0; k < e.eigenvalues.size(); ++k)
        t += std::sqrt(std::max(e.eigenvalues[k], 0.0));
    return std::min(t * t, 1.0);
}

inline double one_minus_fidelity(const MatC& rho, const MatC& sigma) {
    return std::max(0.0, 1.0 - fidelity(rho, sigma));
}

// ============================================================================
// Entropies and correlations
// ============================================================================

inline double von_neumann_entropy(const MatC& rho, double clip = kEigClip) {
    const EighComplex e = eigh(hermitize(rho));
    double s = 0.0;
    for (Eigen::Index k = 0; k < e.eigenvalues.size(); ++k) {
        const double p = e.eigenvalues[k];
        if (p > clip) s -= p * std::log(p);
    }
    return s;
}

inline double purity(const MatC& rho) { return (rho * rho).trace().real(); }

inline double renyi2_entropy(const MatC& rho) {
    return -std::log(std::max(purity(rho), kEigClip));
}

/// Hilbert-Schmidt distance to the infinite-temperature state on the same
/// space: Tr[rho^2] - 1/d. Also carries purity and the Renyi-2 entropy.
struct HsReport {
    double hs_distance;
    double purity;
    double renyi2;
};

inline HsReport hs_distance_to_infinite_temperature(const MatC& rho) {
    const double pur = purity(rho);
    const double d = static_cast<double>(rho.rows());
    return {pur - 1.0 / d, pur, -std::log(std::max(pur, kEigClip))};
}

/// I(N:T) = S_N + S_T - S_{NT} from precomputed reductions.
inline double mutual_information(const MatC& rho_n, const MatC& rho_t, const MatC& rho_nt) {
    return von_neumann_entropy(rho_n) + von_neumann_entropy(rho_t) -
           von_neumann_entropy(rho_nt);
}

/// Union of two subsets with duplicates removed, first-subset order first.
inline SiteSubset subset_union(const SiteSubset& a, const SiteSubset& b) {
    SiteSubset u;
    u.sites = a.sites;
    for (int s : b.sites)
        if (!u.contains(s)) u.sites.push_back(s);
    return u;
}

/// I(N:T) for a pure state; N and T may overlap (union taken with duplicates
/// removed).
inline double mutual_information(const VecC& psi, const SectorBasis& basis, const SiteSubset& n,
                                 const SiteSubset& t) {
    SubsetIndex in(basis, n), it(basis, t), iu(basis, subset_union(n, t));
    return mutual_information(partial_trace(psi, in), partial_trace(psi, it),
                              partial_trace(psi, iu));
}

// ============================================================================
// Energy ratio
// ============================================================================

/// (E_max - e) / (E_max - e_thermal): energies measured from the top of the
/// spectrum. 1 for the thermal state, 0 for the top eigenstate. Returns
/// nullopt when E_max == e_thermal (undefined).
inline std::optional<double> energy_ratio(double e_max, double e_state, double e_thermal) {
    const double denom = e_max - e_thermal;
    if (denom == 0.0) return std::nullopt;
    return (e_max - e_state) / denom;
}

// ============================================================================
// Metric samples
// ============================================================================

enum class Metric {
    kRelEntropy,
    kTraceDist,
    kOneMinusFidelity,
    kMutualInfo,
    kHsDist,
    kEnergyRatio,
    kRenyi2,
};

inline std::string metric_name(Metric m) {
    switch (m) {
        case Metric::kRelEntropy: return "rel_entropy";
        case Metric::kTraceDist: return "trace_dist";
        case Metric::kOneMinusFidelity: return "one_minus_fidelity";
        case Metric::kMutualInfo: return "mutual_info";
        case Metric::kHsDist: return "hs_dist";
        case Metric::kEnergyRatio: return "energy_ratio";
        case Metric::kRenyi2: return "renyi2";
    }
    return "unknown";
}

inline std::optional<Metric> metric_from_name(const std::string& name) {
    for (Metric m : {Metric::kRelEntropy, Metric::kTraceDist, Metric::kOneMinusFidelity,
                     Metric::kMutualInfo, Metric::kHsDist, Metric::kEnergyRatio, Metric::kRenyi2})
        if (metric_name(m) == name) return m;
    return std::nullopt;
}

struct MetricSample {
    double time;
    Metric metric;
    double value;
    std::string subset_tag;
    std::string protocol;
    std::uint64_t seed;
};

}  // namespace gibbsforge
