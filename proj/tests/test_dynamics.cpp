#include <catch2/catch_amalgamated.hpp>

#include "gibbsforge/dynamics.hpp"
#include "oracles.hpp"

using namespace gibbsforge;

namespace {

struct SectorFixture {
    std::shared_ptr<SectorBasis> basis;
    std::shared_ptr<Spectrum> spectrum;
    BasisContext ctx;
    MatR h;

    SectorFixture(int length, int p, CouplingParams params = {1.0, 1.0, 0.5, 0.5})
        : basis(std::make_shared<SectorBasis>(SectorBasis::enumerate({length, p}))),
          spectrum(nullptr),
          ctx(basis),
          h(build_hamiltonian(params, *basis)) {
        spectrum = std::make_shared<Spectrum>(
            Spectrum::compute(h, BasisKey::sector_of(basis->spec())));
    }
};

VecC random_state(int dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    VecC psi(dim);
    for (int i = 0; i < dim; ++i) psi(i) = cx(gauss(rng), gauss(rng));
    psi.normalize();
    return psi;
}

}  // namespace

TEST_CASE("evolve_pure basics", "[dynamics]") {
    SectorFixture fx(4, 2);
    const VecC psi = random_state(fx.basis->dim(), 1);

    SECTION("dt = 0 is the identity") {
        CHECK((evolve_pure(psi, *fx.spectrum, 0.0) - psi).norm() < 1e-14);
    }
    SECTION("eigenstates only pick up a phase") {
        const VecC v0 = fx.spectrum->eigenvectors.col(0).cast<cx>();
        const VecC evolved = evolve_pure(v0, *fx.spectrum, 0.7);
        const cx phase = std::polar(1.0, -fx.spectrum->eigenvalues(0) * 0.7);
        CHECK((evolved - phase * v0).norm() < 1e-12);
    }
    SECTION("norm is preserved") {
        CHECK(std::abs(evolve_pure(psi, *fx.spectrum, 1.3).norm() - 1.0) < 1e-12);
    }
    SECTION("basis mismatch is rejected") {
        CHECK_THROWS_AS(evolve_pure(random_state(4, 2), *fx.spectrum, 0.1),
                        BasisMismatchError);
    }
}

TEST_CASE("evolve_pure matches an RK4 integration", "[dynamics]") {
    SectorFixture fx(4, 2);
    const VecC psi = random_state(fx.basis->dim(), 3);
    const VecC spectral = evolve_pure(psi, *fx.spectrum, 0.3);
    const VecC rk4 = oracle::rk4_schrodinger(fx.h.cast<cx>(), psi, 0.3, 1e-4);
    CHECK((spectral - rk4).norm() < 1e-6);
}

TEST_CASE("evolution composes", "[dynamics]") {
    SectorFixture fx(6, 2);
    const VecC psi = random_state(fx.basis->dim(), 4);
    const VecC two_step = evolve_pure(evolve_pure(psi, *fx.spectrum, 0.8), *fx.spectrum, 1.1);
    const VecC one_step = evolve_pure(psi, *fx.spectrum, 1.9);
    CHECK((two_step - one_step).norm() < 1e-10);
}

TEST_CASE("evolve_density basics", "[dynamics]") {
    SectorFixture fx(4, 2);

    SECTION("the Gibbs state of the same H is a fixed point") {
        const ThermalReference ref = solve_beta_star(fx.spectrum, -1.0);
        const MatC gibbs = ref.gibbs_matrix().cast<cx>();
        CHECK((evolve_density(gibbs, *fx.spectrum, 2.0) - gibbs).norm() < 1e-12);
    }
    SECTION("pure density matrices evolve consistently with evolve_pure") {
        const VecC psi = random_state(fx.basis->dim(), 5);
        const MatC via_density =
            evolve_density(psi * psi.adjoint(), *fx.spectrum, 0.9);
        const VecC evolved = evolve_pure(psi, *fx.spectrum, 0.9);
        CHECK((via_density - evolved * evolved.adjoint()).norm() < 1e-12);
    }
    SECTION("spectrum of rho is preserved") {
        std::mt19937_64 rng(6);
        std::normal_distribution<double> gauss;
        MatC g(6, 6);
        for (int j = 0; j < 6; ++j)
            for (int i = 0; i < 6; ++i) g(i, j) = cx(gauss(rng), gauss(rng));
        MatC rho = g * g.adjoint();
        rho /= rho.trace().real();
        const MatC out = evolve_density(rho, *fx.spectrum, 1.4);
        VecR before = eigh(rho).eigenvalues, after = eigh(out).eigenvalues;
        CHECK((before - after).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(std::abs(out.trace().real() - 1.0) < 1e-12);
    }
}

TEST_CASE("run_protocol without shocks reproduces plain evolution", "[dynamics]") {
    SectorFixture fx(6, 2);
    const VecC psi0 = random_state(fx.basis->dim(), 7);
    EvolutionSchedule schedule;
    schedule.t_max = 2.0;
    schedule.n_steps = 10;
    const SiteSubset test({4, 5});
    const TrajectoryRecord rec =
        run_protocol(psi0, *fx.spectrum, fx.ctx, schedule, {test}, 11);
    REQUIRE(rec.protocol == "plain");
    REQUIRE(rec.times.size() == 11);
    CHECK(rec.times.front() == 0.0);
    CHECK(rec.times.back() == Catch::Approx(2.0));

    const SubsetIndex& idx = fx.ctx.subset_index(test);
    for (int k = 0; k <= 10; ++k) {
        const VecC direct = evolve_pure(psi0, *fx.spectrum, 0.2 * k);
        CHECK((rec.reduced[0][k] - partial_trace(direct, idx)).norm() < 1e-11);
    }
}

TEST_CASE("an identity shock leaves the trajectory unchanged", "[dynamics]") {
    SectorFixture fx(6, 2);
    const VecC psi0 = random_state(fx.basis->dim(), 8);
    const SiteSubset test({4, 5});

    EvolutionSchedule plain;
    plain.t_max = 2.0;
    plain.n_steps = 10;

    EvolutionSchedule shocked = plain;
    NoiseEvent event;
    event.kind = NoiseKind::kPhaseFlip;
    event.sites = SiteSubset({0, 1, 2});
    event.probability = 0.0;  // identity channel
    shocked.shock_steps = {2};
    shocked.events = {event};

    const TrajectoryRecord a = run_protocol(psi0, *fx.spectrum, fx.ctx, plain, {test}, 1);
    const TrajectoryRecord b = run_protocol(psi0, *fx.spectrum, fx.ctx, shocked, {test}, 1);
    for (std::size_t k = 0; k < a.times.size(); ++k)
        CHECK((a.reduced[0][k] - b.reduced[0][k]).norm() < 1e-12);
}

TEST_CASE("haar shock: curves coincide before the shock and diverge after", "[dynamics]") {
    SectorFixture fx(8, 2);
    const std::uint64_t pattern = 0b11;
    VecC psi0 = VecC::Zero(fx.basis->dim());
    psi0(fx.basis->index_of(pattern)) = 1.0;
    const SiteSubset test({6, 7});

    EvolutionSchedule plain;
    plain.t_max = 4.0;
    plain.n_steps = 10;

    EvolutionSchedule shocked = plain;
    NoiseEvent event;
    event.kind = NoiseKind::kHaarBlock;
    event.sites = SiteSubset({2, 3, 4});
    shocked.shock_steps = {2};
    shocked.events = {event};

    const TrajectoryRecord a = run_protocol(psi0, *fx.spectrum, fx.ctx, plain, {test}, 21);
    const TrajectoryRecord b = run_protocol(psi0, *fx.spectrum, fx.ctx, shocked, {test}, 21);
    REQUIRE(b.protocol == "shock");
    for (int k = 0; k <= 1; ++k)
        CHECK((a.reduced[0][k] - b.reduced[0][k]).norm() < 1e-12);
    double post = 0.0;
    for (std::size_t k = 2; k < a.times.size(); ++k)
        post += (a.reduced[0][k] - b.reduced[0][k]).norm();
    CHECK(post > 1e-6);
}

TEST_CASE("energy is conserved piecewise", "[dynamics]") {
    SectorFixture fx(8, 2);
    VecC psi0 = VecC::Zero(fx.basis->dim());
    psi0(fx.basis->index_of(0b11)) = 1.0;

    EvolutionSchedule shocked;
    shocked.t_max = 4.0;
    shocked.n_steps = 10;
    NoiseEvent event;
    event.kind = NoiseKind::kHaarBlock;
    event.sites = SiteSubset({3, 4, 5});
    shocked.shock_steps = {5};
    shocked.events = {event};

    const TrajectoryRecord rec =
        run_protocol(psi0, *fx.spectrum, fx.ctx, shocked, {SiteSubset({6, 7})}, 31);
    const double scale = std::abs(rec.energy[0]) + 1.0;
    for (int k = 1; k <= 4; ++k)
        CHECK(std::abs(rec.energy[k] - rec.energy[0]) < 1e-10 * scale);
    for (std::size_t k = 6; k < rec.energy.size(); ++k)
        CHECK(std::abs(rec.energy[k] - rec.energy[5]) < 1e-10 * scale);
    // the shock generically moves the energy
    CHECK(std::abs(rec.energy[5] - rec.energy[0]) > 1e-8);
}

TEST_CASE("phase-flip shock: exact ensemble equals the dense channel route", "[dynamics]") {
    SectorFixture fx(8, 3);
    VecC psi0 = VecC::Zero(fx.basis->dim());
    psi0(fx.basis->index_of(0b111)) = 1.0;
    const SiteSubset test({6, 7});

    EvolutionSchedule shocked;
    shocked.t_max = 3.0;
    shocked.n_steps = 6;
    NoiseEvent event;
    event.kind = NoiseKind::kPhaseFlip;
    event.sites = SiteSubset({2, 3, 4});
    event.probability = 0.4;
    shocked.shock_steps = {2};
    shocked.events = {event};

    const TrajectoryRecord ensemble =
        run_protocol(psi0, *fx.spectrum, fx.ctx, shocked, {test}, 1);
    CHECK(ensemble.representation_switch_step == -1);
    CHECK(ensemble.branch_count.back() == 2);

    ProtocolOptions dense_options;
    dense_options.branch_cap = 1;  // force the dense fallback at the shock
    const TrajectoryRecord dense =
        run_protocol(psi0, *fx.spectrum, fx.ctx, shocked, {test}, 1, dense_options);
    CHECK(dense.representation_switch_step == 2);
    CHECK(dense.branch_count.back() == 0);

    for (std::size_t k = 0; k < ensemble.times.size(); ++k) {
        CHECK((ensemble.reduced[0][k] - dense.reduced[0][k]).norm() < 1e-10);
        CHECK(std::abs(ensemble.energy[k] - dense.energy[k]) < 1e-9);
    }
}

TEST_CASE("pauli shock agrees with the dense channel application", "[dynamics]") {
    SectorFixture fx(6, 3);
    VecC psi0 = VecC::Zero(fx.basis->dim());
    psi0(fx.basis->index_of(0b111)) = 1.0;
    const SiteSubset test({4, 5});

    auto spec = std::make_shared<PauliChannelSpec>();
    spec->terms.push_back({"ZZ", {1, 2}, false, 0.3});
    spec->terms.push_back({"XX", {1, 2}, true, 0.2});
    spec->terms.push_back({"II", {1, 2}, false, 0.5});

    EvolutionSchedule shocked;
    shocked.t_max = 2.0;
    shocked.n_steps = 4;
    NoiseEvent event;
    event.kind = NoiseKind::kPauli;
    event.sites = SiteSubset({1, 2});
    event.pauli = spec;
    shocked.shock_steps = {2};
    shocked.events = {event};

    const TrajectoryRecord rec =
        run_protocol(psi0, *fx.spectrum, fx.ctx, shocked, {test}, 1);

    // independent route: evolve, apply the dense channel, evolve, trace
    const VecC at_shock = evolve_pure(psi0, *fx.spectrum, 1.0);
    MatC rho = at_shock * at_shock.adjoint();
    rho = apply_pauli_channel(rho, *spec, fx.ctx);
    rho = evolve_density(rho, *fx.spectrum, 1.0);
    const MatC expected = partial_trace_density(rho, fx.ctx.subset_index(test));
    CHECK((rec.reduced[0].back() - expected).norm() < 1e-11);

    double weight = 0.0;
    for (const MatC& r : rec.reduced[0]) weight += std::abs(r.trace().real() - 1.0);
    CHECK(weight < 1e-10);
}

TEST_CASE("schedule validation", "[dynamics]") {
    EvolutionSchedule schedule;
    schedule.t_max = -1.0;
    CHECK_THROWS_AS(schedule.validate(4), std::invalid_argument);
    schedule.t_max = 1.0;
    schedule.shock_steps = {5};
    CHECK_THROWS_AS(schedule.validate(4), std::invalid_argument);  // events missing
    schedule.events.resize(1);
    schedule.shock_steps = {99};
    CHECK_THROWS_AS(schedule.validate(4), std::invalid_argument);
}

TEST_CASE("unnormalized initial states are rejected", "[dynamics]") {
    SectorFixture fx(4, 2);
    VecC psi = VecC::Zero(fx.basis->dim());
    psi(0) = 2.0;
    EvolutionSchedule schedule;
    CHECK_THROWS_AS(run_protocol(psi, *fx.spectrum, fx.ctx, schedule, {}, 1),
                    std::invalid_argument);
}
