#pragma once

#include <random>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "gibbsforge/hilbert.hpp"
#include "gibbsforge/linalg.hpp"

namespace gibbsforge {

enum class NoiseKind { kHaarBlock, kPhaseFlip, kPauli };

// ============================================================================
// Haar sampling
// ============================================================================

/// Haar-distributed n x n unitary: QR of a complex Ginibre matrix with the
/// phase correction that makes the distribution exactly Haar.
inline MatC haar_unitary(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    MatC g(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) g(i, j) = cx(gauss(rng), gauss(rng));
    Eigen::HouseholderQR<MatC> qr(g);
    MatC q = qr.householderQ() * MatC::Identity(n, n);
    const MatC r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < n; ++j) {
        const cx d = r(j, j);
        const double mag = std::abs(d);
        q.col(j) *= (mag > 0.0) ? d / mag : cx(1.0, 0.0);
    }
    return q;
}

/// Local unitary on the noisy sites, block diagonal in local up-count:
/// identity on the 0-up and |N|-up blocks, an independent Haar draw on every
/// intermediate block. Local basis: bit k of a pattern is subset site k.
struct HaarBlockUnitary {
    SiteSubset subset;
    MatC local_matrix;
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> block_seeds;  // per intermediate up-count block
};

inline HaarBlockUnitary sample_haar_block(const SiteSubset& subset, std::uint64_t seed,
                                          int site_cap = 6) {
    const int m = subset.size();
    if (m < 1 || m > site_cap)
        throw std::invalid_argument("sample_haar_block: subset size outside [1, cap]");
    const int ld = 1 << m;

    std::vector<std::vector<int>> blocks(m + 1);
    for (int pat = 0; pat < ld; ++pat)
        blocks[std::popcount(static_cast<unsigned>(pat))].push_back(pat);

    HaarBlockUnitary out;
    out.subset = subset;
    out.seed = seed;
    out.local_matrix = MatC::Identity(ld, ld);
    for (int k = 1; k < m; ++k) {
        const std::uint64_t block_seed = derive_seed(seed, {static_cast<std::uint64_t>(k)});
        out.block_seeds.push_back(block_seed);
        std::mt19937_64 rng = make_rng(block_seed);
        const int bd = static_cast<int>(blocks[k].size());
        const MatC u = haar_unitary(bd, rng);
        for (int a = 0; a < bd; ++a)
            for (int b = 0; b < bd; ++b)
                out.local_matrix(blocks[k][a], blocks[k][b]) = u(a, b);
    }
    return out;
}

// ============================================================================
// Phase-flip channel
// ============================================================================

/// E(rho) = (1-p) rho + p Sz rho Sz with Sz the sigma^z product over all
/// subset sites; `signs` carries the +-1 eigenvalue of Sz per basis state
/// (BasisContext::phase_flip_signs). Trace preserving, unital, diagonal
/// preserving.
inline MatC apply_phase_flip(const MatC& rho, const VecR& signs, double p) {
    if (p < 0.0 || p > 1.0)
        throw std::invalid_argument("apply_phase_flip: probability outside [0, 1]");
    if (rho.rows() != signs.size())
        throw BasisMismatchError("apply_phase_flip: sign vector dimension mismatch");
    MatC flipped = rho;
    for (Eigen::Index j = 0; j < rho.cols(); ++j)
        for (Eigen::Index i = 0; i < rho.rows(); ++i)
            flipped(i, j) *= signs(i) * signs(j);
    return (1.0 - p) * rho + p * flipped;
}

// ============================================================================
// Conservation-constrained Pauli channel
// ============================================================================

/// M[rho] = sum_l p_l P_l rho P_l with P_l a Pauli string on the support,
/// optionally multiplied by the antiparallel projector (I - Z...Z)/2. The
/// admissible non-unitary elements leave a completeness deficit; it is
/// absorbed into the identity Kraus operator so the map is exactly trace
/// preserving, and the validator reports the correction that was applied.
struct PauliChannelSpec {
    struct Term {
        std::string letters;     // one of I, X, Z per support site
        std::vector<int> sites;  // support, subset order
        bool zz_projector = false;
        double prob = 0.0;
    };

    std::vector<Term> terms;

    SiteSubset support() const {
        SiteSubset u;
        for (const Term& t : terms)
            for (int s : t.sites)
                if (!u.contains(s)) u.sites.push_back(s);
        u.role = SubsetRole::kNoisy;
        return u;
    }

    struct KrausSet {
        SiteSubset support;
        std::vector<MatC> ops;           // sqrt(p_l) P_l, identity term corrected
        double residual_before = 0.0;    // || I - sum K'K || before correction
        double correction_norm = 0.0;    // || K_id^2 - p_id I ||
        bool corrected = false;
    };

    /// Local matrix of one term on the union support (dim 2^m).
    static MatC term_matrix(const Term& term, const SiteSubset& support) {
        const int m = support.size();
        const int ld = 1 << m;
        if (term.letters.size() != term.sites.size())
            throw std::invalid_argument("PauliChannelSpec: letters/sites length mismatch");
        int xmask = 0, zmask = 0;
        for (std::size_t k = 0; k < term.sites.size(); ++k) {
            int pos = -1;
            for (int q = 0; q < m; ++q)
                if (support.sites[q] == term.sites[k]) pos = q;
            if (pos < 0) throw std::invalid_argument("PauliChannelSpec: site outside support");
            switch (term.letters[k]) {
                case 'I': break;
                case 'X': xmask |= 1 << pos; break;
                case 'Z': zmask |= 1 << pos; break;
                default:
                    throw std::invalid_argument("PauliChannelSpec: letters must be I, X or Z");
            }
        }
        int all_z = (1 << m) - 1;  // projector parity over every support site
        MatC op = MatC::Zero(ld, ld);
        for (int col = 0; col < ld; ++col) {
            double val = (std::popcount(static_cast<unsigned>(~col & zmask) &
                                        static_cast<unsigned>((1 << m) - 1)) %
                          2)
                             ? -1.0
                             : 1.0;
            if (term.zz_projector) {
                const int downs = m - std::popcount(static_cast<unsigned>(col & all_z));
                const double z_all = (downs % 2 == 0) ? 1.0 : -1.0;
                if (z_all > 0) continue;  // projector kills even-parity states
            }
            op(col ^ xmask, col) = val;
        }
        return op;
    }

    void validate(double prob_tol = 1e-12, double conserve_tol = 1e-10) const {
        if (terms.empty()) throw std::invalid_argument("PauliChannelSpec: no terms");
        double total = 0.0;
        for (const Term& t : terms) {
            if (t.prob < 0.0) throw std::invalid_argument("PauliChannelSpec: negative weight");
            total += t.prob;
        }
        if (std::abs(total - 1.0) > prob_tol)
            throw std::invalid_argument("PauliChannelSpec: probabilities sum to " +
                                        std::to_string(total));
        // every string must conserve the declared quantity: [P_l, Z...Z] = 0
        const SiteSubset sup = support();
        const int ld = 1 << sup.size();
        MatC z_all = MatC::Zero(ld, ld);
        for (int i = 0; i < ld; ++i) {
            const int downs = sup.size() - std::popcount(static_cast<unsigned>(i));
            z_all(i, i) = (downs % 2 == 0) ? 1.0 : -1.0;
        }
        for (const Term& t : terms) {
            const MatC op = term_matrix(t, sup);
            const double comm = (op * z_all - z_all * op).norm();
            if (comm > conserve_tol)
                throw std::invalid_argument(
                    "PauliChannelSpec: term violates the conserved quantity, ||[P,Z..Z]|| = " +
                    std::to_string(comm));
        }
    }

    KrausSet build_kraus(double completeness_tol = 1e-10) const {
        validate();
        KrausSet set;
        set.support = support();
        const int ld = 1 << set.support.size();
        int identity_index = -1;
        for (std::size_t l = 0; l < terms.size(); ++l) {
            const Term& t = terms[l];
            const bool is_identity =
                !t.zz_projector &&
                t.letters.find_first_not_of('I') == std::string::npos;
            if (is_identity) identity_index = static_cast<int>(l);
            set.ops.push_back(std::sqrt(t.prob) * term_matrix(t, set.support));
        }
        MatC completeness = MatC::Zero(ld, ld);
        for (const MatC& k : set.ops) completeness += k.adjoint() * k;
        const MatC deficit = MatC::Identity(ld, ld) - completeness;
        set.residual_before = deficit.norm();
        if (set.residual_before > completeness_tol) {
            if (identity_index < 0)
                throw std::invalid_argument(
                    "PauliChannelSpec: completeness violated (residual " +
                    std::to_string(set.residual_before) + ") and no identity term to absorb it");
            const double p_id = terms[identity_index].prob;
            const MatC target = hermitize(p_id * MatC::Identity(ld, ld) + deficit);
            if (min_eigenvalue(target) < -1e-12)
                throw std::invalid_argument(
                    "PauliChannelSpec: completeness violated (residual " +
                    std::to_string(set.residual_before) +
                    "), identity weight cannot absorb the deficit");
            set.ops[identity_index] = matrix_sqrt_psd(target);
            set.correction_norm = (set.ops[identity_index] * set.ops[identity_index] -
                                   p_id * MatC::Identity(ld, ld))
                                      .norm();
            set.corrected = true;
        }
        return set;
    }
};

/// Apply the channel to a density matrix via the embedded Kraus sum. Dense
/// path, intended for moderate dimensions; trajectory ensembles apply the
/// Kraus operators member-wise instead.
inline MatC apply_pauli_channel(const MatC& rho, const PauliChannelSpec& spec,
                                const BasisContext& ctx) {
    const PauliChannelSpec::KrausSet kraus = spec.build_kraus();
    const SubsetIndex& idx = ctx.subset_index(kraus.support);
    MatC out = MatC::Zero(rho.rows(), rho.cols());
    for (const MatC& k : kraus.ops) {
        const MatC k_emb = embed_local_operator(k, idx, ctx.is_sector());
        out += k_emb * rho * k_emb.adjoint();
    }
    return out;
}

// ============================================================================
// Thermalizing-condition check
// ============================================================================

/// Necessary-condition report for a noise operator: it can thermalize iff it
/// fails to commute with H or its support straddles the A|B cut.
struct ThermalizingReport {
    double commutator_norm = 0.0;  // Frobenius ||[M, H]||
    bool straddles = false;
    bool candidate = false;
};

inline ThermalizingReport check_thermalizing_conditions(const MatC& m_op,
                                                        const SiteSubset& support,
                                                        const MatC& hamiltonian,
                                                        int boundary_cut,
                                                        double tol = 1e-10) {
    if (m_op.rows() != hamiltonian.rows())
        throw BasisMismatchError("check_thermalizing_conditions: dimension mismatch");
    ThermalizingReport report;
    report.commutator_norm = (m_op * hamiltonian - hamiltonian * m_op).norm();
    bool left = false, right = false;
    for (int s : support.sites) {
        if (s < boundary_cut) left = true;
        if (s >= boundary_cut) right = true;
    }
    report.straddles = left && right;
    report.candidate = report.commutator_norm > tol || report.straddles;
    return report;
}

}  // namespace gibbsforge
