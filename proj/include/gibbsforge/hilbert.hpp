#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "gibbsforge/common.hpp"

namespace gibbsforge {

// Bit convention, uniform across the project: bit i of a basis mask is site i,
// a set bit is an up spin (sigma^z eigenvalue +1). Sites are 0-based, 0..L-1,
// open boundary: bonds (i, i+1) exist for i <= L-2 and (i, i+2) for i <= L-3.

// ============================================================================
// Lattice and site subsets
// ============================================================================

struct LatticeSpec {
    int length = 0;    // L, number of sites
    int up_count = 0;  // p, number of up spins in the sector

    void validate() const {
        if (length < 1 || length > 62)
            throw std::invalid_argument("LatticeSpec: length must be in [1, 62]");
        if (up_count < 0 || up_count > length)
            throw std::invalid_argument("LatticeSpec: up_count must satisfy 0 <= p <= L");
    }
};

enum class SubsetRole { kNone, kNoisy, kTest, kInitial };

/// Identity of the vector space a state or spectrum lives in. Operations that
/// combine objects check keys and raise BasisMismatchError on disagreement.
struct BasisKey {
    int length = 0;
    int up_count = -1;  // -1 for the full 2^L basis
    bool sector = false;

    static BasisKey sector_of(const LatticeSpec& spec) {
        return {spec.length, spec.up_count, true};
    }
    static BasisKey full(int length) { return {length, -1, false}; }

    bool operator==(const BasisKey&) const = default;

    std::string describe() const {
        if (sector)
            return "sector(L=" + std::to_string(length) + ",p=" + std::to_string(up_count) + ")";
        return "full(L=" + std::to_string(length) + ")";
    }
};

/// Ordered list of distinct site indices. The order fixes the bit order of
/// local patterns: bit k of a local pattern is site `sites[k]`.
struct SiteSubset {
    std::vector<int> sites;
    SubsetRole role = SubsetRole::kNone;

    SiteSubset() = default;
    SiteSubset(std::vector<int> s, SubsetRole r = SubsetRole::kNone)
        : sites(std::move(s)), role(r) {}

    int size() const { return static_cast<int>(sites.size()); }

    bool contains(int site) const {
        return std::find(sites.begin(), sites.end(), site) != sites.end();
    }

    std::uint64_t site_mask() const {
        std::uint64_t m = 0;
        for (int s : sites) m |= std::uint64_t{1} << s;
        return m;
    }

    void validate_for(int length) const {
        std::uint64_t seen = 0;
        for (int s : sites) {
            if (s < 0 || s >= length)
                throw std::invalid_argument("SiteSubset: site " + std::to_string(s) +
                                            " outside lattice of length " + std::to_string(length));
            const std::uint64_t bit = std::uint64_t{1} << s;
            if (seen & bit) throw std::invalid_argument("SiteSubset: duplicate site");
            seen |= bit;
        }
    }
};

/// Pattern of `mask` restricted to the subset sites, in subset order.
inline std::uint64_t local_pattern(std::uint64_t mask, const SiteSubset& subset) {
    std::uint64_t out = 0;
    for (int k = 0; k < subset.size(); ++k)
        out |= ((mask >> subset.sites[k]) & 1ULL) << k;
    return out;
}

// ============================================================================
// Sector basis
// ============================================================================

/// All L-bit masks with exactly p set bits, in increasing integer order, with
/// the inverse map. Immutable after construction.
class SectorBasis {
  public:
    static SectorBasis enumerate(LatticeSpec spec, std::size_t dim_cap = kSectorDimCap) {
        spec.validate();
        const std::uint64_t dim = binomial(spec.length, spec.up_count);
        if (dim > dim_cap)
            throw DimensionCapError("sector dimension " + std::to_string(dim) +
                                    " exceeds cap " + std::to_string(dim_cap));
        SectorBasis basis;
        basis.spec_ = spec;
        basis.states_.reserve(dim);
        if (spec.up_count == 0) {
            basis.states_.push_back(0);
        } else {
            // Gosper's hack walks the masks in increasing order.
            std::uint64_t v = (std::uint64_t{1} << spec.up_count) - 1;
            const std::uint64_t limit = std::uint64_t{1} << spec.length;
            while (v < limit) {
                basis.states_.push_back(v);
                const std::uint64_t t = v | (v - 1);
                v = (t + 1) | (((~t & (t + 1)) - 1) >> (std::countr_zero(v) + 1));
            }
        }
        return basis;
    }

    const LatticeSpec& spec() const { return spec_; }
    int length() const { return spec_.length; }
    int up_count() const { return spec_.up_count; }
    int dim() const { return static_cast<int>(states_.size()); }
    std::uint64_t state(int k) const { return states_[static_cast<std::size_t>(k)]; }
    const std::vector<std::uint64_t>& states() const { return states_; }

    /// Ordinal of a mask, or -1 if the mask is not in the sector.
    int index_of(std::uint64_t mask) const {
        auto it = std::lower_bound(states_.begin(), states_.end(), mask);
        if (it == states_.end() || *it != mask) return -1;
        return static_cast<int>(it - states_.begin());
    }

  private:
    LatticeSpec spec_;
    std::vector<std::uint64_t> states_;
};

// ============================================================================
// Subset factorization
// ============================================================================

/// Precomputed local/environment factorization of a basis over a site subset:
/// basis states grouped by their pattern on the complement of the subset.
/// Within one group, states differ only on the subset sites. This is the
/// workhorse behind partial traces and local-operator application. For a
/// sector basis every state in a group carries the same local up-count.
class SubsetIndex {
  public:
    struct Entry {
        std::uint32_t local;   // local pattern in subset order
        std::uint32_t global;  // index into the basis
    };

    SubsetIndex(const SectorBasis& basis, const SiteSubset& subset)
        : subset_(subset), local_dim_(1 << subset.size()) {
        subset.validate_for(basis.length());
        build(basis.states(), subset);
        basis_dim_ = basis.dim();
    }

    /// Full computational basis on `length` sites.
    SubsetIndex(int length, const SiteSubset& subset)
        : subset_(subset), local_dim_(1 << subset.size()) {
        subset.validate_for(length);
        if (length > 30) throw DimensionCapError("full basis too large for SubsetIndex");
        const std::uint64_t dim = std::uint64_t{1} << length;
        std::vector<std::uint64_t> states(dim);
        for (std::uint64_t m = 0; m < dim; ++m) states[m] = m;
        build(states, subset);
        basis_dim_ = static_cast<int>(dim);
    }

    const SiteSubset& subset() const { return subset_; }
    int local_dim() const { return local_dim_; }
    int basis_dim() const { return basis_dim_; }
    int group_count() const { return static_cast<int>(offsets_.size()) - 1; }

    const Entry* group_begin(int g) const { return entries_.data() + offsets_[g]; }
    const Entry* group_end(int g) const { return entries_.data() + offsets_[g + 1]; }
    int group_size(int g) const { return static_cast<int>(offsets_[g + 1] - offsets_[g]); }

  private:
    void build(const std::vector<std::uint64_t>& states, const SiteSubset& subset) {
        const std::uint64_t smask = subset.site_mask();
        const std::size_t n = states.size();
        std::vector<std::pair<std::uint64_t, Entry>> keyed(n);
        for (std::size_t i = 0; i < n; ++i) {
            keyed[i].first = states[i] & ~smask;
            keyed[i].second = {static_cast<std::uint32_t>(local_pattern(states[i], subset)),
                               static_cast<std::uint32_t>(i)};
        }
        std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first < b.first;
            return a.second.local < b.second.local;
        });
        entries_.resize(n);
        offsets_.push_back(0);
        for (std::size_t i = 0; i < n; ++i) {
            entries_[i] = keyed[i].second;
            if (i + 1 == n || keyed[i + 1].first != keyed[i].first)
                offsets_.push_back(i + 1);
        }
    }

    SiteSubset subset_;
    int local_dim_ = 0;
    int basis_dim_ = 0;
    std::vector<Entry> entries_;
    std::vector<std::size_t> offsets_;
};

// ============================================================================
// Basis context
// ============================================================================

/// One basis (sector or full) plus cached subset factorizations. Immutable
/// basis data; the cache is guarded so contexts can be shared across workers.
class BasisContext {
  public:
    explicit BasisContext(std::shared_ptr<const SectorBasis> basis)
        : sector_(std::move(basis)), key_(BasisKey::sector_of(sector_->spec())) {}

    explicit BasisContext(int length) : key_(BasisKey::full(length)) {
        if (length < 1 || length > 30)
            throw std::invalid_argument("BasisContext: full basis length out of range");
    }

    const BasisKey& key() const { return key_; }
    bool is_sector() const { return key_.sector; }
    int length() const { return key_.length; }
    int dim() const {
        return is_sector() ? sector_->dim() : (1 << key_.length);
    }
    const SectorBasis* sector() const { return sector_.get(); }

    std::uint64_t state_mask(int index) const {
        return is_sector() ? sector_->state(index) : static_cast<std::uint64_t>(index);
    }

    const SubsetIndex& subset_index(const SiteSubset& subset) const {
        std::lock_guard<std::mutex> lock(cache_mutex_);
        auto it = cache_.find(subset.sites);
        if (it == cache_.end()) {
            auto idx = is_sector() ? std::make_unique<SubsetIndex>(*sector_, subset)
                                   : std::make_unique<SubsetIndex>(key_.length, subset);
            it = cache_.emplace(subset.sites, std::move(idx)).first;
        }
        return *it->second;
    }

    /// Eigenvalue of the sigma^z product over `subset` per basis state (+-1).
    VecR phase_flip_signs(const SiteSubset& subset) const {
        const std::uint64_t smask = subset.site_mask();
        const int d = dim();
        VecR signs(d);
        for (int i = 0; i < d; ++i) {
            const int downs = subset.size() -
                              std::popcount(state_mask(i) & smask);
            signs(i) = (downs % 2 == 0) ? 1.0 : -1.0;
        }
        return signs;
    }

  private:
    std::shared_ptr<const SectorBasis> sector_;  // null for the full basis
    BasisKey key_;
    mutable std::mutex cache_mutex_;
    mutable std::map<std::vector<int>, std::unique_ptr<SubsetIndex>> cache_;
};

// ============================================================================
// Local operator embedding
// ============================================================================

/// True if `op` (dim 2^m) has no matrix elements between local up-count blocks.
inline bool conserves_local_up_count(const MatC& op, double tol = 1e-12) {
    const int d = static_cast<int>(op.rows());
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
            if (std::popcount(static_cast<unsigned>(a)) !=
                    std::popcount(static_cast<unsigned>(b)) &&
                std::abs(op(a, b)) > tol)
                return false;
    return true;
}

namespace detail {

inline void check_local_op_dims(const MatC& op, const SubsetIndex& idx) {
    if (op.rows() != op.cols() || op.rows() != idx.local_dim())
        throw std::invalid_argument("local operator dim must be 2^|subset|");
}

}  // namespace detail

/// Operator acting as `op` on the subset and identity elsewhere, expressed in
/// the basis behind `idx`. Embedding into a sector basis requires `op` to be
/// block diagonal in local magnetization; otherwise the result would leak out
/// of the sector.
inline MatC embed_local_operator(const MatC& op, const SubsetIndex& idx, bool sector_basis) {
    detail::check_local_op_dims(op, idx);
    if (static_cast<std::size_t>(idx.basis_dim()) > kDenseOperatorCap)
        throw DimensionCapError("embed_local_operator: dense result exceeds cap");
    if (sector_basis && !conserves_local_up_count(op))
        throw SectorViolationError(
            "embed_local_operator: operator couples local magnetization blocks");
    MatC out = MatC::Zero(idx.basis_dim(), idx.basis_dim());
    for (int g = 0; g < idx.group_count(); ++g) {
        for (const auto* a = idx.group_begin(g); a != idx.group_end(g); ++a)
            for (const auto* b = idx.group_begin(g); b != idx.group_end(g); ++b)
                out(a->global, b->global) = op(a->local, b->local);
    }
    return out;
}

inline MatC embed_local_operator(const MatC& op, const SiteSubset& subset,
                                 const SectorBasis& basis) {
    if (static_cast<std::size_t>(basis.dim()) > kDenseOperatorCap)
        throw DimensionCapError("embed_local_operator: basis dimension exceeds dense cap");
    SubsetIndex idx(basis, subset);
    return embed_local_operator(op, idx, /*sector_basis=*/true);
}

inline MatC embed_local_operator_full(const MatC& op, const SiteSubset& subset, int length) {
    if ((std::uint64_t{1} << length) > kDenseOperatorCap)
        throw DimensionCapError("embed_local_operator_full: 2^L exceeds dense cap");
    SubsetIndex idx(length, subset);
    return embed_local_operator(op, idx, /*sector_basis=*/false);
}

/// Apply `op` on `subset` to a state vector without materializing the embedded
/// matrix. Embedding into a sector basis requires `op` to be block diagonal in
/// local magnetization.
inline VecC apply_local_operator(const MatC& op, const SubsetIndex& idx, const VecC& psi,
                                 bool sector_basis) {
    detail::check_local_op_dims(op, idx);
    if (psi.size() != idx.basis_dim())
        throw BasisMismatchError("apply_local_operator: state dimension mismatch");
    if (sector_basis && !conserves_local_up_count(op))
        throw SectorViolationError(
            "apply_local_operator: operator couples local magnetization blocks");
    VecC out = VecC::Zero(psi.size());
    const int ld = idx.local_dim();
    VecC scratch(ld), result(ld);
    for (int g = 0; g < idx.group_count(); ++g) {
        scratch.setZero();
        for (const auto* e = idx.group_begin(g); e != idx.group_end(g); ++e)
            scratch(e->local) = psi(e->global);
        result.noalias() = op * scratch;
        for (const auto* e = idx.group_begin(g); e != idx.group_end(g); ++e)
            out(e->global) = result(e->local);
    }
    return out;
}

}  // namespace gibbsforge
