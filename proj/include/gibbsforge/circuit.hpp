#pragma once

#include <cmath>
#include <ostream>

#include "gibbsforge/metrology.hpp"
#include "gibbsforge/spinmodel.hpp"
#include "gibbsforge/threads.hpp"

namespace gibbsforge {

// Trotterized circuit simulator on the full 2^L computational basis.
// Gate conventions, fixed and used everywhere:
//   RXX(theta) = exp(-i theta/2 X.X),  RZZ(theta) = exp(-i theta/2 Z.Z).
// Basis: bit q of an index is qubit q, |1> = up (sigma^z = +1).

// ============================================================================
// Gates
// ============================================================================

struct GateOp {
    enum class Kind { kRxx, kRzz };
    Kind kind;
    int q0, q1;
    double angle;
};

/// Apply a two-qubit gate in place via bit-paired sweeps; O(2^L).
inline void apply_gate(VecC& state, const GateOp& gate, int length) {
    const std::uint64_t dim = std::uint64_t{1} << length;
    if (static_cast<std::uint64_t>(state.size()) != dim)
        throw BasisMismatchError("apply_gate: state dimension is not 2^L");
    if (gate.q0 < 0 || gate.q0 >= length || gate.q1 < 0 || gate.q1 >= length ||
        gate.q0 == gate.q1)
        throw std::invalid_argument("apply_gate: qubit out of range");
    const std::uint64_t b0 = std::uint64_t{1} << gate.q0;
    const std::uint64_t b1 = std::uint64_t{1} << gate.q1;
    if (gate.kind == GateOp::Kind::kRzz) {
        const cx phase_aligned = std::polar(1.0, -0.5 * gate.angle);
        const cx phase_opposed = std::polar(1.0, 0.5 * gate.angle);
        for (std::uint64_t m = 0; m < dim; ++m) {
            const bool eq = (((m & b0) != 0) == ((m & b1) != 0));
            state(m) *= eq ? phase_aligned : phase_opposed;
        }
    } else {
        const double c = std::cos(0.5 * gate.angle);
        const cx mis(0.0, -std::sin(0.5 * gate.angle));
        const std::uint64_t both = b0 | b1;
        for (std::uint64_t m = 0; m < dim; ++m) {
            if (m & b0) continue;  // visit each pair once, from the q0=0 side
            const std::uint64_t partner = m ^ both;
            const cx a = state(m), b = state(partner);
            state(m) = c * a + mis * b;
            state(partner) = c * b + mis * a;
        }
    }
}

/// sigma^z sigma^z on a qubit pair: sign flip for antiparallel configurations.
inline void apply_zz_flip(VecC& state, int q0, int q1, int length) {
    const std::uint64_t dim = std::uint64_t{1} << length;
    const std::uint64_t b0 = std::uint64_t{1} << q0;
    const std::uint64_t b1 = std::uint64_t{1} << q1;
    for (std::uint64_t m = 0; m < dim; ++m)
        if (((m & b0) != 0) != ((m & b1) != 0)) state(m) = -state(m);
}

// ============================================================================
// Circuit assembly
// ============================================================================

struct TrotterCircuit {
    int length = 0;
    CouplingParams params;
    double t_max = 20.0;
    int n_steps = 1;
    double noise_p = 0.0;  // per-gate phase-flip probability
    std::uint64_t initial_pattern = 0;
    int order = 1;                    // 1 or 2 (Strang)
    std::vector<GateOp> step_gates;   // one first-order sweep

    int gates_per_step() const {
        return static_cast<int>(step_gates.size()) * (order == 2 ? 2 : 1);
    }
};

/// n_steps such that every gate angle stays below max_angle (default 0.5 rad).
inline int default_trotter_steps(const CouplingParams& p, double t_max,
                                 double max_angle = 0.5) {
    const double j_max = std::max({std::abs(p.j), std::abs(p.j_perp), std::abs(p.j_prime),
                                   std::abs(p.j_prime_perp), 1e-12});
    return std::max(1, static_cast<int>(std::ceil(2.0 * j_max * t_max / max_angle)));
}

/// First-order step: per nearest bond RXX(-2J dt) then RZZ(2Jperp dt) sweeping
/// i = 0..L-2, then the same pattern over next-nearest bonds. Gates with zero
/// coupling are omitted.
inline TrotterCircuit trotterize(const CouplingParams& params, int length, double t_max,
                                 int n_steps, double noise_p = 0.0,
                                 std::uint64_t initial_pattern = 0, int order = 1) {
    if (n_steps < 1) throw std::invalid_argument("trotterize: n_steps must be >= 1");
    if (length < 2 || length > 24) throw std::invalid_argument("trotterize: length out of range");
    if (order != 1 && order != 2) throw std::invalid_argument("trotterize: order must be 1 or 2");
    TrotterCircuit circuit;
    circuit.length = length;
    circuit.params = params;
    circuit.t_max = t_max;
    circuit.n_steps = n_steps;
    circuit.noise_p = noise_p;
    circuit.initial_pattern = initial_pattern;
    circuit.order = order;
    const double dt = t_max / n_steps;
    for (int i = 0; i + 1 < length; ++i) {
        if (params.j != 0.0)
            circuit.step_gates.push_back({GateOp::Kind::kRxx, i, i + 1, -2.0 * params.j * dt});
        if (params.j_perp != 0.0)
            circuit.step_gates.push_back({GateOp::Kind::kRzz, i, i + 1, 2.0 * params.j_perp * dt});
    }
    for (int i = 0; i + 2 < length; ++i) {
        if (params.j_prime != 0.0)
            circuit.step_gates.push_back(
                {GateOp::Kind::kRxx, i, i + 2, -2.0 * params.j_prime * dt});
        if (params.j_prime_perp != 0.0)
            circuit.step_gates.push_back(
                {GateOp::Kind::kRzz, i, i + 2, 2.0 * params.j_prime_perp * dt});
    }
    return circuit;
}

inline void dump_circuit(const TrotterCircuit& circuit, std::ostream& os) {
    os << "# step gate qubits angle\n";
    for (int step = 0; step < circuit.n_steps; ++step) {
        auto emit = [&](const GateOp& g, double scale) {
            os << step << ' ' << (g.kind == GateOp::Kind::kRxx ? "RXX" : "RZZ") << " ("
               << g.q0 << ',' << g.q1 << ") " << g.angle * scale << '\n';
        };
        if (circuit.order == 1) {
            for (const GateOp& g : circuit.step_gates) emit(g, 1.0);
        } else {
            for (const GateOp& g : circuit.step_gates) emit(g, 0.5);
            for (auto it = circuit.step_gates.rbegin(); it != circuit.step_gates.rend(); ++it)
                emit(*it, 0.5);
        }
    }
}

// ============================================================================
// Runners
// ============================================================================

namespace detail {

/// One Trotter step; calls per_gate(q0, q1) after every applied gate.
template <typename PerGate>
inline void run_step(VecC& state, const TrotterCircuit& circuit, PerGate&& per_gate) {
    if (circuit.order == 1) {
        for (const GateOp& g : circuit.step_gates) {
            apply_gate(state, g, circuit.length);
            per_gate(g.q0, g.q1);
        }
    } else {
        for (const GateOp& g : circuit.step_gates) {
            GateOp half = g;
            half.angle *= 0.5;
            apply_gate(state, half, circuit.length);
            per_gate(g.q0, g.q1);
        }
        for (auto it = circuit.step_gates.rbegin(); it != circuit.step_gates.rend(); ++it) {
            GateOp half = *it;
            half.angle *= 0.5;
            apply_gate(state, half, circuit.length);
            per_gate(it->q0, it->q1);
        }
    }
}

}  // namespace detail

/// Noiseless Trotter evolution; returns the state after every step (index 0
/// is the initial state).
inline std::vector<VecC> simulate_noiseless(const TrotterCircuit& circuit) {
    const std::uint64_t dim = std::uint64_t{1} << circuit.length;
    VecC state = VecC::Zero(dim);
    state(circuit.initial_pattern) = 1.0;
    std::vector<VecC> states;
    states.reserve(circuit.n_steps + 1);
    states.push_back(state);
    for (int step = 0; step < circuit.n_steps; ++step) {
        detail::run_step(state, circuit, [](int, int) {});
        states.push_back(state);
    }
    return states;
}

struct CircuitRunResult {
    std::vector<double> times;           // sample times (t = 0 first)
    std::vector<SiteSubset> subsets;
    std::vector<std::vector<MatC>> avg_reduced;  // [subset][sample]
    int n_traj = 0;
    int record_stride = 1;
};

struct CircuitRunOptions {
    int record_stride = 1;
    int threads = 1;
};

/// Trajectory average of the per-gate stochastic phase-flip circuit: after
/// every gate, with probability noise_p, sigma^z sigma^z fires on that gate's
/// qubit pair. Reduced density matrices on the registered subsets are
/// accumulated at each recorded step. Deterministic under
/// (master_seed, trajectory index); the trajectory sum is reassociated over
/// fixed-size worker chunks, so results are bit-identical for a fixed thread
/// count and equal within rounding across thread counts.
inline CircuitRunResult run_noisy_trajectories(const TrotterCircuit& circuit,
                                               const std::vector<SiteSubset>& subsets,
                                               int n_traj, std::uint64_t master_seed,
                                               const CircuitRunOptions& options = {}) {
    if (n_traj < 1) throw std::invalid_argument("run_noisy_trajectories: n_traj must be >= 1");
    if (circuit.noise_p == 0.0) n_traj = 1;  // all trajectories identical

    BasisContext ctx(circuit.length);
    std::vector<const SubsetIndex*> idx;
    for (const SiteSubset& s : subsets) idx.push_back(&ctx.subset_index(s));

    const int n_records = circuit.n_steps / options.record_stride + 1;
    CircuitRunResult result;
    result.subsets = subsets;
    result.n_traj = n_traj;
    result.record_stride = options.record_stride;
    for (int r = 0; r < n_records; ++r)
        result.times.push_back(r * options.record_stride * circuit.t_max / circuit.n_steps);
    result.avg_reduced.assign(subsets.size(),
                              std::vector<MatC>(n_records, MatC()));

    const int threads = std::min(resolve_thread_count(options.threads), n_traj);
    const int n_chunks = threads;
    const int chunk_size = (n_traj + n_chunks - 1) / n_chunks;

    using Accum = std::vector<std::vector<MatC>>;  // [subset][record]
    std::vector<Accum> partial(n_chunks);

    parallel_for_indexed(n_chunks, threads, [&](int chunk) {
        Accum acc(subsets.size());
        for (std::size_t s = 0; s < subsets.size(); ++s)
            acc[s].assign(n_records,
                          MatC::Zero(idx[s]->local_dim(), idx[s]->local_dim()));
        const std::uint64_t dim = std::uint64_t{1} << circuit.length;
        const int lo = chunk * chunk_size;
        const int hi = std::min(n_traj, lo + chunk_size);
        for (int traj = lo; traj < hi; ++traj) {
            std::mt19937_64 rng =
                make_rng(derive_seed(master_seed, {static_cast<std::uint64_t>(traj)}));
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            VecC state = VecC::Zero(dim);
            state(circuit.initial_pattern) = 1.0;
            int record = 0;
            auto note = [&](int step) {
                if (step % options.record_stride != 0) return;
                for (std::size_t s = 0; s < subsets.size(); ++s)
                    acc[s][record] += partial_trace(state, *idx[s]);
                ++record;
            };
            note(0);
            for (int step = 1; step <= circuit.n_steps; ++step) {
                detail::run_step(state, circuit, [&](int q0, int q1) {
                    if (circuit.noise_p > 0.0 && unit(rng) < circuit.noise_p)
                        apply_zz_flip(state, q0, q1, circuit.length);
                });
                note(step);
            }
        }
        partial[chunk] = std::move(acc);
    });

    for (std::size_t s = 0; s < subsets.size(); ++s)
        for (int r = 0; r < n_records; ++r) {
            MatC sum = MatC::Zero(idx[s]->local_dim(), idx[s]->local_dim());
            for (int chunk = 0; chunk < n_chunks; ++chunk) sum += partial[chunk][s][r];
            result.avg_reduced[s][r] = sum / static_cast<double>(n_traj);
        }
    return result;
}

/// Exact-channel counterpart: evolves the full density matrix, applying the
/// per-gate phase-flip channel deterministically. The oracle partner of the
/// trajectory average; guarded to small L.
inline CircuitRunResult run_exact_channel(const TrotterCircuit& circuit,
                                          const std::vector<SiteSubset>& subsets,
                                          const CircuitRunOptions& options = {}) {
    if (circuit.length > 8)
        throw DimensionCapError("run_exact_channel: guarded to L <= 8");
    BasisContext ctx(circuit.length);
    std::vector<const SubsetIndex*> idx;
    for (const SiteSubset& s : subsets) idx.push_back(&ctx.subset_index(s));

    const std::uint64_t dim = std::uint64_t{1} << circuit.length;
    MatC rho = MatC::Zero(dim, dim);
    rho(circuit.initial_pattern, circuit.initial_pattern) = 1.0;

    auto apply_gate_density = [&](const GateOp& g) {
        for (std::uint64_t col = 0; col < dim; ++col) {
            VecC column = rho.col(col);
            apply_gate(column, g, circuit.length);
            rho.col(col) = column;
        }
        GateOp conj_gate = g;
        conj_gate.angle = -g.angle;  // row action uses the conjugate gate
        for (std::uint64_t row = 0; row < dim; ++row) {
            VecC r = rho.row(row).transpose();
            apply_gate(r, conj_gate, circuit.length);
            rho.row(row) = r.transpose();
        }
    };
    auto apply_noise_density = [&](int q0, int q1) {
        if (circuit.noise_p <= 0.0) return;
        const std::uint64_t b0 = std::uint64_t{1} << q0;
        const std::uint64_t b1 = std::uint64_t{1} << q1;
        auto sign = [&](std::uint64_t m) {
            return (((m & b0) != 0) != ((m & b1) != 0)) ? -1.0 : 1.0;
        };
        for (std::uint64_t j = 0; j < dim; ++j)
            for (std::uint64_t i = 0; i < dim; ++i) {
                const double s = sign(i) * sign(j);
                rho(i, j) = (1.0 - circuit.noise_p) * rho(i, j) +
                            circuit.noise_p * s * rho(i, j);
            }
    };

    const int n_records = circuit.n_steps / options.record_stride + 1;
    CircuitRunResult result;
    result.subsets = subsets;
    result.n_traj = 0;
    result.record_stride = options.record_stride;
    result.avg_reduced.assign(subsets.size(), {});
    auto note = [&](int step) {
        if (step % options.record_stride != 0) return;
        result.times.push_back(step * circuit.t_max / circuit.n_steps);
        for (std::size_t s = 0; s < subsets.size(); ++s)
            result.avg_reduced[s].push_back(partial_trace_density(rho, *idx[s]));
    };
    note(0);
    for (int step = 1; step <= circuit.n_steps; ++step) {
        auto per_gate = [&](int q0, int q1) { apply_noise_density(q0, q1); };
        if (circuit.order == 1) {
            for (const GateOp& g : circuit.step_gates) {
                apply_gate_density(g);
                per_gate(g.q0, g.q1);
            }
        } else {
            for (const GateOp& g : circuit.step_gates) {
                GateOp half = g;
                half.angle *= 0.5;
                apply_gate_density(half);
                per_gate(g.q0, g.q1);
            }
            for (auto it = circuit.step_gates.rbegin(); it != circuit.step_gates.rend(); ++it) {
                GateOp half = *it;
                half.angle *= 0.5;
                apply_gate_density(half);
                per_gate(it->q0, it->q1);
            }
        }
        note(step);
    }
    (void)n_records;
    return result;
}

}  // namespace gibbsforge
