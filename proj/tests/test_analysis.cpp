#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "gibbsforge/analysis.hpp"

using namespace gibbsforge;

namespace {

std::pair<std::vector<double>, std::vector<double>> synthetic(double a, double kappa, double c,
                                                              int n, double t_max,
                                                              double noise_sd = 0.0,
                                                              std::uint64_t seed = 0) {
    std::vector<double> t(n), y(n);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, noise_sd);
    for (int i = 0; i < n; ++i) {
        t[i] = t_max * i / (n - 1);
        y[i] = a * std::exp(-kappa * t[i]) + c;
        if (noise_sd > 0.0) y[i] += gauss(rng) * y[i];
    }
    return {t, y};
}

}  // namespace

TEST_CASE("fit_decay recovers an exact exponential", "[analysis]") {
    const auto [t, y] = synthetic(2.0, 3.0, 0.1, 50, 5.0);
    const DecayFit fit = fit_decay(t, y, 0.0, 5.0);
    CHECK(fit.converged);
    CHECK(!fit.flat);
    CHECK(fit.kappa == Catch::Approx(3.0).margin(1e-6));
    CHECK(fit.amplitude == Catch::Approx(2.0).margin(1e-6));
    CHECK(fit.offset == Catch::Approx(0.1).margin(1e-6));
    CHECK(fit.rms_residual < 1e-8);
}

TEST_CASE("fit_decay flags constant series", "[analysis]") {
    std::vector<double> t(20), y(20, 0.7);
    for (int i = 0; i < 20; ++i) t[i] = i * 0.1;
    const DecayFit fit = fit_decay(t, y, 0.0, 2.0);
    CHECK(fit.flat);
    CHECK(fit.kappa == Catch::Approx(0.0).margin(1e-12));
    CHECK(fit.offset == Catch::Approx(0.7));
}

TEST_CASE("fit_decay tolerates multiplicative noise", "[analysis]") {
    const auto [t, y] = synthetic(2.0, 3.0, 0.1, 200, 4.0, 0.02, 99);
    const DecayFit fit = fit_decay(t, y, 0.0, 4.0);
    CHECK(fit.converged);
    CHECK(fit.kappa == Catch::Approx(3.0).epsilon(0.05));
    CHECK(fit.kappa_std > 0.0);
}

TEST_CASE("fit_decay is self-consistent", "[analysis]") {
    const auto [t, y] = synthetic(1.3, 0.8, 0.25, 80, 10.0, 0.05, 7);
    const DecayFit first = fit_decay(t, y, 0.0, 10.0);
    std::vector<double> resampled(t.size());
    for (std::size_t i = 0; i < t.size(); ++i)
        resampled[i] = first.amplitude * std::exp(-first.kappa * t[i]) + first.offset;
    const DecayFit second = fit_decay(t, resampled, 0.0, 10.0);
    CHECK(second.kappa == Catch::Approx(first.kappa).margin(1e-8));
    CHECK(second.amplitude == Catch::Approx(first.amplitude).margin(1e-8));
    CHECK(second.offset == Catch::Approx(first.offset).margin(1e-8));
}

TEST_CASE("fit_decay needs at least six points in the window", "[analysis]") {
    const auto [t, y] = synthetic(1.0, 1.0, 0.0, 5, 1.0);
    CHECK_THROWS_AS(fit_decay(t, y, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("kappa_ratio", "[analysis]") {
    const auto [t, y] = synthetic(2.0, 1.2, 0.05, 50, 5.0);
    const DecayFit noisy = fit_decay(t, y, 0.0, 5.0);

    SECTION("identical fits give 1") {
        const KappaRatio r = kappa_ratio(noisy, noisy);
        CHECK(r.value == Catch::Approx(1.0));
        CHECK(!r.plain_non_thermalizing);
    }
    SECTION("flat plain run returns the marker") {
        std::vector<double> tc(30), yc(30, 0.4);
        for (int i = 0; i < 30; ++i) tc[i] = i * 0.2;
        const DecayFit plain = fit_decay(tc, yc, 0.0, 6.0);
        const KappaRatio r = kappa_ratio(noisy, plain);
        CHECK(r.plain_non_thermalizing);
    }
    SECTION("propagated uncertainty is finite and positive for noisy fits") {
        const auto [tn, yn] = synthetic(2.0, 0.6, 0.05, 60, 6.0, 0.03, 3);
        const DecayFit plain = fit_decay(tn, yn, 0.0, 6.0);
        const KappaRatio r = kappa_ratio(noisy, plain);
        CHECK(r.std_error > 0.0);
        CHECK(std::isfinite(r.std_error));
    }
}

TEST_CASE("recurrence_score basics", "[analysis]") {
    SECTION("monotone decay has no recurrences") {
        const auto [t, y] = synthetic(1.0, 1.0, 0.0, 60, 6.0);
        const RecurrenceScore score = recurrence_score(t, y, 0.0, 6.0);
        CHECK(score.count == 0);
        CHECK(score.mean_prominence == 0.0);
    }
    SECTION("three sinusoid periods give three peaks") {
        std::vector<double> t(301), y(301);
        for (int i = 0; i <= 300; ++i) {
            t[i] = 3.0 * i / 300.0;
            y[i] = std::sin(2.0 * M_PI * t[i] - M_PI / 2.0);  // maxima at 0.5, 1.5, 2.5
        }
        const RecurrenceScore score = recurrence_score(t, y, 0.0, 3.0);
        CHECK(score.count == 3);
        CHECK(score.mean_prominence > 1.0);
    }
    SECTION("window must hold at least ten points") {
        std::vector<double> t(5), y(5);
        CHECK_THROWS_AS(recurrence_score(t, y, 0.0, 1.0), std::invalid_argument);
    }
}

TEST_CASE("median, quantile, iqr", "[analysis]") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
    CHECK(iqr({1.0, 2.0, 3.0, 4.0, 5.0}) == Catch::Approx(2.0));
    CHECK_THROWS_AS(median({}), std::invalid_argument);
}

TEST_CASE("run_sweep aggregates and records failures", "[analysis]") {
    SECTION("single-point grid equals a direct run") {
        auto runner = [](double value, int seed) {
            KappaRatio r;
            r.value = value + 0.1 * seed;
            return r;
        };
        const SweepResult result = run_sweep("frequency", {2.0}, 3, runner);
        REQUIRE(result.points.size() == 1);
        CHECK(result.points[0].ratio_median == Catch::Approx(2.1));
        CHECK(result.points[0].n_seeds == 3);
    }
    SECTION("non-thermalizing markers and exceptions are recorded") {
        auto runner = [](double value, int seed) -> KappaRatio {
            if (seed == 1) throw std::runtime_error("synthetic failure");
            KappaRatio r;
            if (value < 1.5)
                r.plain_non_thermalizing = true;
            else
                r.value = 2.0;
            return r;
        };
        const SweepResult result = run_sweep("j_perp", {1.0, 2.0}, 3, runner);
        CHECK(result.points[0].n_non_thermalizing == 2);
        CHECK(result.points[0].flags.size() == 1);
        CHECK(std::isnan(result.points[0].ratio_median));
        CHECK(result.points[1].ratio_median == Catch::Approx(2.0));
    }
    SECTION("empty grid is rejected") {
        CHECK_THROWS_AS(run_sweep("size", {}, 1, {}), std::invalid_argument);
    }
}
