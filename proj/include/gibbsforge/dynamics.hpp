#pragma once

#include <memory>
#include <optional>
#include <ostream>
#include <variant>

#include "gibbsforge/metrology.hpp"
#include "gibbsforge/noise.hpp"
#include "gibbsforge/spinmodel.hpp"

namespace gibbsforge {

// ============================================================================
// Schedules and events
// ============================================================================

/// One scheduled channel application. Haar shocks redraw their unitary per
/// event from a seed chained off the trajectory stream.
struct NoiseEvent {
    NoiseKind kind = NoiseKind::kHaarBlock;
    SiteSubset sites;          // noisy sites N (concrete; sampling happens upstream)
    double probability = 0.5;  // phase-flip weight
    std::shared_ptr<const PauliChannelSpec> pauli;  // when kind == kPauli
};

struct EvolutionSchedule {
    double t_max = 20.0;
    int n_steps = 50;  // uniform sampling intervals; samples at k*dt, k = 0..n_steps
    std::vector<int> shock_steps;    // sorted, within [0, n_steps)
    std::vector<NoiseEvent> events;  // aligned with shock_steps

    double dt() const { return t_max / n_steps; }

    void validate(int length) const {
        if (t_max <= 0.0) throw std::invalid_argument("EvolutionSchedule: t_max must be > 0");
        if (n_steps < 1) throw std::invalid_argument("EvolutionSchedule: n_steps must be >= 1");
        if (shock_steps.size() != events.size())
            throw std::invalid_argument("EvolutionSchedule: shock/event lists differ in length");
        int prev = -1;
        for (int s : shock_steps) {
            if (s < 0 || s >= n_steps)
                throw std::invalid_argument("EvolutionSchedule: shock step outside [0, n_steps)");
            if (s < prev) throw std::invalid_argument("EvolutionSchedule: shock steps not sorted");
            prev = s;
        }
        for (const NoiseEvent& e : events) e.sites.validate_for(length);
    }
};

// ============================================================================
// Exact evolution primitives
// ============================================================================

/// e^{-iH dt} |psi> through the eigendecomposition; norm preserved exactly up
/// to rounding.
inline VecC evolve_pure(const VecC& psi, const Spectrum& spectrum, double dt) {
    if (psi.size() != spectrum.dim())
        throw BasisMismatchError("evolve_pure: state not in the spectrum's basis");
    VecC phi = spectrum.to_eigenbasis(psi);
    for (Eigen::Index k = 0; k < phi.size(); ++k)
        phi(k) *= std::polar(1.0, -spectrum.eigenvalues(k) * dt);
    return spectrum.from_eigenbasis(phi);
}

/// U rho U^dagger with U = e^{-iH dt}; spectrum of rho is preserved.
inline MatC evolve_density(const MatC& rho, const Spectrum& spectrum, double dt) {
    if (rho.rows() != spectrum.dim() || rho.cols() != spectrum.dim())
        throw BasisMismatchError("evolve_density: density matrix not in the spectrum's basis");
    const MatR& v = spectrum.eigenvectors;
    MatC tilde = v.transpose() * rho * v;
    for (Eigen::Index l = 0; l < tilde.cols(); ++l)
        for (Eigen::Index k = 0; k < tilde.rows(); ++k)
            tilde(k, l) *= std::polar(1.0, -(spectrum.eigenvalues(k) - spectrum.eigenvalues(l)) * dt);
    return v * tilde * v.transpose();
}

// ============================================================================
// Trajectory state: exact weighted pure-state ensemble with dense fallback
// ============================================================================

/// Mixing channels split a trajectory into weighted pure branches; the
/// mixture is the exact channel output (deterministic, no sampling). Members
/// are stored in the energy eigenbasis, where evolution is a phase multiply.
struct StateEnsemble {
    struct Member {
        double weight;
        VecC phi;  // eigenbasis amplitudes
    };
    std::vector<Member> members;

    int branch_count() const { return static_cast<int>(members.size()); }

    double energy(const Spectrum& spectrum) const {
        double e = 0.0;
        for (const Member& m : members)
            e += m.weight * m.phi.cwiseAbs2().dot(spectrum.eigenvalues);
        return e;
    }
};

struct TrajectoryRecord {
    std::vector<double> times;
    std::string protocol;
    std::uint64_t seed = 0;
    std::vector<SiteSubset> subsets;
    std::vector<std::vector<MatC>> reduced;  // [subset][sample]
    std::vector<double> energy;              // <H> per sample
    std::vector<int> branch_count;           // ensemble size per sample (0 = dense)
    int representation_switch_step = -1;     // sample step where dense mode began
    std::vector<MatC> full_states;           // computational-basis rho, when retained
};

struct ProtocolOptions {
    int branch_cap = 512;          // ensemble size beyond which the run goes dense
    bool keep_full_states = false; // retain full density matrices per sample
    double prune_weight = 1e-15;
    std::ostream* log = nullptr;   // representation switches are always recorded,
                                   // and echoed here when a stream is given
};

namespace detail {

struct TrajectoryState {
    StateEnsemble ensemble;       // valid while dense == false
    MatC rho_eigen;               // eigenbasis density matrix once dense
    bool dense = false;

    void evolve(const Spectrum& spectrum, double dt) {
        if (!dense) {
            for (auto& m : ensemble.members)
                for (Eigen::Index k = 0; k < m.phi.size(); ++k)
                    m.phi(k) *= std::polar(1.0, -spectrum.eigenvalues(k) * dt);
        } else {
            for (Eigen::Index l = 0; l < rho_eigen.cols(); ++l)
                for (Eigen::Index k = 0; k < rho_eigen.rows(); ++k)
                    rho_eigen(k, l) *=
                        std::polar(1.0, -(spectrum.eigenvalues(k) - spectrum.eigenvalues(l)) * dt);
        }
    }

    MatC computational_density(const Spectrum& spectrum) const {
        if (dense) {
            const MatR& v = spectrum.eigenvectors;
            return v * rho_eigen * v.transpose();
        }
        MatC rho = MatC::Zero(spectrum.dim(), spectrum.dim());
        for (const auto& m : ensemble.members) {
            const VecC psi = spectrum.from_eigenbasis(m.phi);
            rho.noalias() += m.weight * (psi * psi.adjoint());
        }
        return rho;
    }

    double energy(const Spectrum& spectrum) const {
        if (!dense) return ensemble.energy(spectrum);
        double e = 0.0;
        for (Eigen::Index k = 0; k < rho_eigen.rows(); ++k)
            e += rho_eigen(k, k).real() * spectrum.eigenvalues(k);
        return e;
    }

    void to_dense(const Spectrum& spectrum) {
        if (dense) return;
        rho_eigen = MatC::Zero(spectrum.dim(), spectrum.dim());
        for (const auto& m : ensemble.members)
            rho_eigen.noalias() += m.weight * (m.phi * m.phi.adjoint());
        ensemble.members.clear();
        dense = true;
    }
};

}  // namespace detail

// ============================================================================
// Protocol runner
// ============================================================================

/// Evolve |psi0> under the schedule: unitary dynamics between samples, the
/// scheduled channel at each shock step (applied after reaching that sample
/// time, before recording). Haar events keep the trajectory pure; mixing
/// channels split it into an exact weighted pure-state ensemble, falling back
/// to a dense density matrix beyond options.branch_cap (recorded, never
/// silent). Deterministic for a fixed (seed, schedule).
inline TrajectoryRecord run_protocol(const VecC& psi0, const Spectrum& spectrum,
                                     const BasisContext& ctx, const EvolutionSchedule& schedule,
                                     const std::vector<SiteSubset>& record_subsets,
                                     std::uint64_t seed, const ProtocolOptions& options = {}) {
    if (psi0.size() != spectrum.dim())
        throw BasisMismatchError("run_protocol: initial state not in the spectrum's basis");
    if (ctx.dim() != spectrum.dim())
        throw BasisMismatchError("run_protocol: basis context does not match spectrum");
    if (std::abs(psi0.norm() - 1.0) > 1e-10)
        throw std::invalid_argument("run_protocol: initial state not normalized");
    schedule.validate(ctx.length());

    TrajectoryRecord record;
    record.seed = seed;
    record.protocol = schedule.shock_steps.empty()
                          ? "plain"
                          : (schedule.shock_steps.size() == 1 ? "shock" : "cascade");
    record.subsets = record_subsets;
    record.reduced.resize(record_subsets.size());

    detail::TrajectoryState state;
    state.ensemble.members.push_back({1.0, spectrum.to_eigenbasis(psi0)});

    const double dt = schedule.dt();

    auto apply_event = [&](const NoiseEvent& event, int event_ordinal) {
        switch (event.kind) {
            case NoiseKind::kHaarBlock: {
                const std::uint64_t draw_seed =
                    derive_seed(seed, {0x4aa2ULL, static_cast<std::uint64_t>(event_ordinal)});
                const HaarBlockUnitary haar = sample_haar_block(event.sites, draw_seed);
                const SubsetIndex& idx = ctx.subset_index(event.sites);
                if (!state.dense) {
                    for (auto& m : state.ensemble.members) {
                        VecC psi = spectrum.from_eigenbasis(m.phi);
                        psi = apply_local_operator(haar.local_matrix, idx, psi, ctx.is_sector());
                        m.phi = spectrum.to_eigenbasis(psi);
                    }
                } else {
                    const MatC u = embed_local_operator(haar.local_matrix, idx, ctx.is_sector());
                    const MatR& v = spectrum.eigenvectors;
                    MatC rho = v * state.rho_eigen * v.transpose();
                    rho = u * rho * u.adjoint();
                    state.rho_eigen = v.transpose() * rho * v;
                }
                break;
            }
            case NoiseKind::kPhaseFlip: {
                const double p = event.probability;
                if (p < 0.0 || p > 1.0)
                    throw std::invalid_argument("run_protocol: phase-flip probability outside [0,1]");
                const VecR signs = ctx.phase_flip_signs(event.sites);
                if (!state.dense) {
                    std::vector<StateEnsemble::Member> next;
                    next.reserve(state.ensemble.members.size() * 2);
                    for (auto& m : state.ensemble.members) {
                        if (1.0 - p > options.prune_weight)
                            next.push_back({m.weight * (1.0 - p), m.phi});
                        if (p > options.prune_weight) {
                            VecC psi = spectrum.from_eigenbasis(m.phi);
                            psi.array() *= signs.array().cast<cx>();
                            next.push_back({m.weight * p, spectrum.to_eigenbasis(psi)});
                        }
                    }
                    state.ensemble.members = std::move(next);
                } else {
                    const MatR& v = spectrum.eigenvectors;
                    MatC rho = v * state.rho_eigen * v.transpose();
                    rho = apply_phase_flip(rho, signs, p);
                    state.rho_eigen = v.transpose() * rho * v;
                }
                break;
            }
            case NoiseKind::kPauli: {
                if (!event.pauli)
                    throw std::invalid_argument("run_protocol: Pauli event without a channel spec");
                const PauliChannelSpec::KrausSet kraus = event.pauli->build_kraus();
                const SubsetIndex& idx = ctx.subset_index(kraus.support);
                if (!state.dense) {
                    std::vector<StateEnsemble::Member> next;
                    for (auto& m : state.ensemble.members) {
                        const VecC psi = spectrum.from_eigenbasis(m.phi);
                        for (const MatC& k : kraus.ops) {
                            VecC branch = apply_local_operator(k, idx, psi, ctx.is_sector());
                            const double q = branch.squaredNorm();
                            if (m.weight * q > options.prune_weight)
                                next.push_back({m.weight * q,
                                                spectrum.to_eigenbasis(VecC(branch / std::sqrt(q)))});
                        }
                    }
                    state.ensemble.members = std::move(next);
                } else {
                    const MatR& v = spectrum.eigenvectors;
                    MatC rho = v * state.rho_eigen * v.transpose();
                    MatC out = MatC::Zero(rho.rows(), rho.cols());
                    for (const MatC& k : kraus.ops) {
                        const MatC k_emb = embed_local_operator(k, idx, ctx.is_sector());
                        out += k_emb * rho * k_emb.adjoint();
                    }
                    state.rho_eigen = v.transpose() * out * v;
                }
                break;
            }
        }
    };

    auto record_sample = [&](double t) {
        record.times.push_back(t);
        record.energy.push_back(state.energy(spectrum));
        record.branch_count.push_back(state.dense ? 0 : state.ensemble.branch_count());
        std::optional<MatC> rho_full;
        if (options.keep_full_states || state.dense)
            rho_full = state.computational_density(spectrum);
        for (std::size_t s = 0; s < record.subsets.size(); ++s) {
            const SubsetIndex& idx = ctx.subset_index(record.subsets[s]);
            if (state.dense) {
                record.reduced[s].push_back(partial_trace_density(*rho_full, idx));
            } else {
                MatC rho_a = MatC::Zero(idx.local_dim(), idx.local_dim());
                for (const auto& m : state.ensemble.members) {
                    const VecC psi = spectrum.from_eigenbasis(m.phi);
                    rho_a.noalias() += m.weight * partial_trace(psi, idx);
                }
                record.reduced[s].push_back(std::move(rho_a));
            }
        }
        if (options.keep_full_states) record.full_states.push_back(std::move(*rho_full));
    };

    std::size_t next_shock = 0;
    for (int step = 0; step <= schedule.n_steps; ++step) {
        if (step > 0) state.evolve(spectrum, dt);
        while (next_shock < schedule.shock_steps.size() &&
               schedule.shock_steps[next_shock] == step) {
            apply_event(schedule.events[next_shock], static_cast<int>(next_shock));
            ++next_shock;
            if (!state.dense && state.ensemble.branch_count() > options.branch_cap) {
                state.to_dense(spectrum);
                record.representation_switch_step = step;
                if (options.log)
                    (*options.log) << "run_protocol: ensemble exceeded branch cap at step "
                                   << step << ", switched to dense density matrix\n";
            }
        }
        record_sample(step * dt);
    }
    return record;
}

}  // namespace gibbsforge
