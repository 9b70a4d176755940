#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "gibbsforge/analysis.hpp"
#include "gibbsforge/circuit.hpp"
#include "gibbsforge/config.hpp"
#include "gibbsforge/dynamics.hpp"
#include "gibbsforge/svg.hpp"
#include "gibbsforge/threads.hpp"

namespace gibbsforge {

constexpr const char* kVersion = "0.1.0";

using json = nlohmann::json;

// ============================================================================
// Output plumbing
// ============================================================================

struct OutputFormats {
    bool csv = true, json_out = true, svg = true;
};

/// Shared CSV schema for all metric streams:
/// time,subset,metric,value,protocol,seed
class MetricCsv {
  public:
    explicit MetricCsv(const std::filesystem::path& path) : out_(path) {
        if (!out_) throw std::runtime_error("cannot open " + path.string());
        out_ << "time,subset,metric,value,protocol,seed\n";
        out_ << std::setprecision(17);
    }
    void row(double time, const std::string& subset, const std::string& metric, double value,
             const std::string& protocol, std::uint64_t seed) {
        out_ << time << ',' << subset << ',' << metric << ',' << value << ',' << protocol << ','
             << seed << '\n';
    }

  private:
    std::ofstream out_;
};

inline std::string subset_tag(const SiteSubset& subset, const std::string& prefix) {
    std::string tag = prefix + "[";
    for (int i = 0; i < subset.size(); ++i) {
        if (i) tag += ' ';
        tag += std::to_string(subset.sites[i]);
    }
    return tag + "]";
}

/// Every run directory gets the resolved config echo plus a manifest tying
/// outputs to (config hash, version, master seed).
class RunDirectory {
  public:
    RunDirectory(const std::filesystem::path& dir, const ExperimentConfig& config)
        : dir_(dir), config_hash_(fnv1a(config.source_text)), master_seed_(config.master_seed) {
        std::filesystem::create_directories(dir_);
        std::ofstream echo(dir_ / "resolved_config.txt");
        echo << config.source_text;
        emitted_.push_back("resolved_config.txt");
        start_ = std::chrono::steady_clock::now();
    }

    const std::filesystem::path& path() const { return dir_; }

    std::filesystem::path file(const std::string& name) {
        emitted_.push_back(name);
        return dir_ / name;
    }

    void write_manifest() {
        json manifest;
        manifest["config_hash"] = config_hash_;
        manifest["version"] = kVersion;
        manifest["master_seed"] = master_seed_;
        manifest["wall_time_s"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        manifest["files"] = emitted_;
        std::ofstream out(dir_ / "manifest.json");
        out << manifest.dump(2) << '\n';
    }

    void write_error(const std::string& stage, const std::string& message) {
        json err;
        err["stage"] = stage;
        err["error"] = message;
        std::ofstream out(dir_ / "error.json");
        out << err.dump(2) << '\n';
        std::cerr << "gibbsforge: " << stage << ": " << message << '\n';
    }

  private:
    std::filesystem::path dir_;
    std::uint64_t config_hash_;
    std::uint64_t master_seed_;
    std::vector<std::string> emitted_;
    std::chrono::steady_clock::time_point start_;
};

// ============================================================================
// Model assembly
// ============================================================================

/// Everything one sector-exact experiment needs, built once and shared.
struct ModelBundle {
    std::shared_ptr<const SectorBasis> basis;  // null in full-basis mode
    std::shared_ptr<BasisContext> ctx;
    std::shared_ptr<const Spectrum> spectrum;
    ThermalReference thermal;
    VecC psi0;
    double e0 = 0.0;
    CouplingParams couplings;
};

inline ModelBundle build_sector_model(const ExperimentConfig& cfg) {
    ModelBundle model;
    model.couplings = cfg.couplings;
    auto basis = std::make_shared<SectorBasis>(
        SectorBasis::enumerate({cfg.length, cfg.up_count}));
    model.basis = basis;
    model.ctx = std::make_shared<BasisContext>(basis);
    const MatR h = build_hamiltonian(cfg.couplings, *basis);
    model.spectrum = std::make_shared<Spectrum>(
        Spectrum::compute(h, BasisKey::sector_of(basis->spec())));

    const std::uint64_t pattern = cfg.initial_pattern();
    const int index = basis->index_of(pattern);
    if (index < 0) throw ConfigError("initial pattern not in the magnetization sector");
    model.psi0 = VecC::Zero(basis->dim());
    model.psi0(index) = 1.0;
    model.e0 = product_state_energy(pattern, cfg.length, cfg.couplings);
    model.thermal = solve_beta_star(model.spectrum, model.e0);
    return model;
}

inline ModelBundle build_full_model(const ExperimentConfig& cfg) {
    if (cfg.length > 13)
        throw DimensionCapError("full-basis model limited to L <= 13 (dense spectra)");
    ModelBundle model;
    model.couplings = cfg.couplings;
    model.ctx = std::make_shared<BasisContext>(cfg.length);
    const MatR h = build_hamiltonian_full(cfg.couplings, cfg.length);
    model.spectrum =
        std::make_shared<Spectrum>(Spectrum::compute(h, BasisKey::full(cfg.length)));
    const std::uint64_t pattern = cfg.initial_pattern();
    model.psi0 = VecC::Zero(1 << cfg.length);
    model.psi0(pattern) = 1.0;
    model.e0 = product_state_energy(pattern, cfg.length, cfg.couplings);
    model.thermal = solve_beta_star(model.spectrum, model.e0);
    return model;
}

/// n distinct sites drawn uniformly, avoiding `exclude`; ascending order.
inline SiteSubset sample_noisy_sites(int length, int n_sites, const std::vector<int>& exclude,
                                     std::uint64_t seed) {
    std::vector<int> pool;
    for (int s = 0; s < length; ++s)
        if (std::find(exclude.begin(), exclude.end(), s) == exclude.end()) pool.push_back(s);
    if (static_cast<int>(pool.size()) < n_sites)
        throw ConfigError("sample_noisy_sites: not enough sites outside the excluded set");
    std::mt19937_64 rng = make_rng(seed);
    for (int k = 0; k < n_sites; ++k) {  // partial Fisher-Yates
        std::uniform_int_distribution<int> pick(k, static_cast<int>(pool.size()) - 1);
        std::swap(pool[k], pool[pick(rng)]);
    }
    std::vector<int> sites(pool.begin(), pool.begin() + n_sites);
    std::sort(sites.begin(), sites.end());
    return SiteSubset(sites, SubsetRole::kNoisy);
}

/// Resolve the noisy set for one run: explicit list (cycled over runs) or a
/// per-seed sample.
inline SiteSubset resolve_noisy_sites(const ExperimentConfig& cfg, int seed_index) {
    if (!cfg.shock.sites.empty()) {
        const auto& set = cfg.shock.sites[seed_index % cfg.shock.sites.size()];
        return SiteSubset(set, SubsetRole::kNoisy);
    }
    const std::vector<int> exclude = cfg.shock.exclude_test ? cfg.test_sites : std::vector<int>{};
    return sample_noisy_sites(cfg.length, cfg.shock.n_sites, exclude,
                              derive_seed(cfg.master_seed, {0x51735ULL,
                                                            static_cast<std::uint64_t>(seed_index)}));
}

inline EvolutionSchedule make_schedule(const ExperimentConfig& cfg, const SiteSubset& noisy,
                                       bool with_shocks) {
    EvolutionSchedule schedule;
    schedule.t_max = cfg.t_max;
    schedule.n_steps = cfg.n_steps;
    if (!with_shocks) return schedule;
    NoiseEvent event;
    event.kind = cfg.shock.kind;
    event.sites = noisy;
    event.probability = cfg.shock.probability;
    event.pauli = cfg.shock.pauli;
    for (int step : cfg.shock_steps()) {
        schedule.shock_steps.push_back(step);
        schedule.events.push_back(event);
    }
    return schedule;
}

// ============================================================================
// Metric evaluation
// ============================================================================

struct MetricSeries {
    std::string subset;
    Metric metric;
    std::string protocol;
    std::uint64_t seed = 0;
    std::vector<double> t, v;
};

/// Evaluate the configured metrics against the thermal reference. The record
/// must carry reductions for T (index 0) and, when mutual information is
/// requested, N (1) and N union T (2).
inline std::vector<MetricSeries> evaluate_metrics(const TrajectoryRecord& rec,
                                                  const ModelBundle& model,
                                                  const ExperimentConfig& cfg,
                                                  const SiteSubset& test,
                                                  const MatC& thermal_test) {
    std::vector<MetricSeries> out;
    const std::string test_tag = subset_tag(test, "T");
    for (const std::string& name : cfg.metrics) {
        const Metric metric = *metric_from_name(name);
        MetricSeries series;
        series.metric = metric;
        series.protocol = rec.protocol;
        series.seed = rec.seed;
        series.subset = test_tag;
        series.t = rec.times;
        series.v.reserve(rec.times.size());
        for (std::size_t k = 0; k < rec.times.size(); ++k) {
            double value = 0.0;
            switch (metric) {
                case Metric::kRelEntropy:
                    value = relative_entropy(rec.reduced[0][k], thermal_test);
                    break;
                case Metric::kTraceDist:
                    value = trace_distance(rec.reduced[0][k], thermal_test);
                    break;
                case Metric::kOneMinusFidelity:
                    value = one_minus_fidelity(rec.reduced[0][k], thermal_test);
                    break;
                case Metric::kHsDist:
                    value = hs_distance_to_infinite_temperature(rec.reduced[0][k]).hs_distance;
                    break;
                case Metric::kRenyi2:
                    value = hs_distance_to_infinite_temperature(rec.reduced[0][k]).renyi2;
                    break;
                case Metric::kEnergyRatio: {
                    const auto ratio = energy_ratio(model.spectrum->top_energy(), rec.energy[k],
                                                    model.thermal.thermal_energy());
                    value = ratio ? *ratio : std::numeric_limits<double>::quiet_NaN();
                    break;
                }
                case Metric::kMutualInfo: {
                    if (rec.reduced.size() < 3)
                        throw std::logic_error("mutual_info requested without N/NT reductions");
                    value = mutual_information(rec.reduced[1][k], rec.reduced[0][k],
                                               rec.reduced[2][k]);
                    break;
                }
            }
            series.v.push_back(value);
        }
        out.push_back(std::move(series));
    }
    return out;
}

/// Fit window resolution: explicit config wins; otherwise one sample after
/// the last shock for single-shock runs, t_max/5 for cascades, and the full
/// range for plain runs compared against shock runs.
inline std::pair<double, double> fit_window(const ExperimentConfig& cfg) {
    double lo = cfg.fit_window_lo, hi = cfg.fit_window_hi;
    const std::vector<int> steps = cfg.shock_steps();
    const double dt = cfg.t_max / cfg.n_steps;
    if (lo < 0.0) {
        if (steps.size() <= 1)
            lo = (steps.empty() ? 1 : steps.back() + 1) * dt;
        else
            lo = cfg.t_max / 5.0;
    }
    if (hi < 0.0) hi = cfg.t_max;
    return {lo, hi};
}

// ============================================================================
// Commands
// ============================================================================

inline json fit_to_json(const DecayFit& fit) {
    return json{{"kappa", fit.kappa},
                {"amplitude", fit.amplitude},
                {"offset", fit.offset},
                {"kappa_std", fit.kappa_std},
                {"rms_residual", fit.rms_residual},
                {"window", {fit.t_lo, fit.t_hi}},
                {"n_points", fit.n_points},
                {"converged", fit.converged},
                {"flat", fit.flat},
                {"series_id", fit.series_id}};
}

inline int cmd_spectrum(const ExperimentConfig& cfg, const OutputFormats& formats) {
    RunDirectory run(cfg.out_dir, cfg);
    try {
        const ModelBundle model =
            cfg.mode == RunMode::kCircuit ? build_full_model(cfg) : build_sector_model(cfg);
        if (formats.csv) {
            std::ofstream out(run.file("spectrum.csv"));
            out << "index,eigenvalue\n" << std::setprecision(17);
            for (int k = 0; k < model.spectrum->dim(); ++k)
                out << k << ',' << model.spectrum->eigenvalues(k) << '\n';
        }
        std::optional<double> bandwidth;
        if (cfg.dos_bandwidth > 0.0) bandwidth = cfg.dos_bandwidth;
        const DosCurve dos =
            density_of_states(model.spectrum->eigenvalues, bandwidth, cfg.dos_grid_points);
        if (formats.csv) {
            std::ofstream out(run.file("dos.csv"));
            out << "energy,scaled_density\n" << std::setprecision(17);
            for (Eigen::Index g = 0; g < dos.energy.size(); ++g)
                out << dos.energy(g) << ',' << dos.density(g) << '\n';
        }
        if (formats.json_out) {
            json j;
            j["beta_star"] = model.thermal.beta_star;
            j["log_z"] = model.thermal.log_z;
            j["target_energy"] = model.thermal.target_energy;
            j["thermal_energy"] = model.thermal.thermal_energy();
            j["at_mean_energy"] = model.thermal.at_mean_energy;
            j["e_min"] = model.spectrum->ground_energy();
            j["e_max"] = model.spectrum->top_energy();
            j["dim"] = model.spectrum->dim();
            j["dos_bandwidth"] = dos.bandwidth;
            std::ofstream out(run.file("beta_star.json"));
            out << j.dump(2) << '\n';
        }
        if (formats.svg) {
            PlotSpec plot;
            plot.title = "Density of states";
            plot.xlabel = "energy";
            plot.ylabel = "scaled density";
            PlotSeries s;
            s.x.assign(dos.energy.data(), dos.energy.data() + dos.energy.size());
            s.y.assign(dos.density.data(), dos.density.data() + dos.density.size());
            s.label = "KDE";
            plot.series.push_back(std::move(s));
            plot.vlines.push_back(model.e0);  // initial-state energy marker
            std::ofstream out(run.file("spectrum.svg"));
            render_svg(plot, out);
        }
        run.write_manifest();
        return 0;
    } catch (const std::exception& e) {
        run.write_error("spectrum", e.what());
        return 1;
    }
}

namespace detail {

/// Record subsets for one protocol run: T first, then N and N union T when
/// mutual information is requested.
inline std::vector<SiteSubset> record_subsets_for(const ExperimentConfig& cfg,
                                                  const SiteSubset& test,
                                                  const SiteSubset& noisy) {
    std::vector<SiteSubset> subsets = {test};
    for (const std::string& m : cfg.metrics)
        if (m == "mutual_info") {
            subsets.push_back(noisy);
            subsets.push_back(subset_union(noisy, test));
            break;
        }
    return subsets;
}

inline void emit_series(MetricCsv& csv, const std::vector<MetricSeries>& series) {
    for (const MetricSeries& s : series)
        for (std::size_t k = 0; k < s.t.size(); ++k)
            csv.row(s.t[k], s.subset, metric_name(s.metric), s.v[k], s.protocol, s.seed);
}

inline const MetricSeries& find_series(const std::vector<MetricSeries>& series, Metric metric) {
    for (const MetricSeries& s : series)
        if (s.metric == metric) return s;
    throw std::logic_error("metric series not found");
}

inline Metric fit_metric(const ExperimentConfig& cfg) {
    for (const std::string& m : cfg.metrics)
        if (m == "trace_dist") return Metric::kTraceDist;
    return *metric_from_name(cfg.metrics.front());
}

}  // namespace detail

inline int cmd_thermalize(const ExperimentConfig& cfg, const OutputFormats& formats) {
    RunDirectory run(cfg.out_dir, cfg);
    try {
        if (cfg.test_sites.empty()) throw ConfigError("thermalize: [subsets].test is required");
        const ModelBundle model = build_sector_model(cfg);
        const SiteSubset test(cfg.test_sites, SubsetRole::kTest);
        if (thermal_convergence_warning(test, cfg.length))
            std::cerr << "warning: |T| >= L/2 voids the thermal-convergence guarantee\n";
        const MatC thermal_test =
            thermal_reduced_exact(model.thermal, model.ctx->subset_index(test));

        std::optional<MetricCsv> csv;
        if (formats.csv) csv.emplace(run.file("metrics.csv"));

        const auto [win_lo, win_hi] = fit_window(cfg);
        const Metric fit_on = detail::fit_metric(cfg);

        // plain reference run (seed independent)
        const SiteSubset no_noise;
        TrajectoryRecord plain =
            run_protocol(model.psi0, *model.spectrum, *model.ctx,
                         make_schedule(cfg, no_noise, false),
                         detail::record_subsets_for(cfg, test, test), cfg.master_seed);
        const auto plain_series = evaluate_metrics(plain, model, cfg, test, thermal_test);
        if (csv) detail::emit_series(*csv, plain_series);
        const MetricSeries& plain_fit_series = detail::find_series(plain_series, fit_on);
        FitOptions fit_options;
        fit_options.flat_kappa = cfg.flat_kappa;
        fit_options.series_id = "plain";
        const DecayFit plain_fit =
            fit_decay(plain_fit_series.t, plain_fit_series.v, win_lo, win_hi, fit_options);
        const RecurrenceScore plain_rec =
            recurrence_score(plain_fit_series.t, plain_fit_series.v, win_lo, win_hi);

        // noisy ensemble
        json noisy_json = json::array();
        std::vector<double> ratios;
        std::vector<DecayFit> noisy_fits;
        std::vector<std::vector<double>> noisy_curves;
        int n_markers = 0;
        for (int s = 0; s < cfg.n_seeds; ++s) {
            const SiteSubset noisy = resolve_noisy_sites(cfg, s);
            const std::uint64_t seed = derive_seed(cfg.master_seed, {1, static_cast<std::uint64_t>(s)});
            TrajectoryRecord rec = run_protocol(model.psi0, *model.spectrum, *model.ctx,
                                                make_schedule(cfg, noisy, true),
                                                detail::record_subsets_for(cfg, test, noisy), seed);
            const auto series = evaluate_metrics(rec, model, cfg, test, thermal_test);
            if (csv) detail::emit_series(*csv, series);
            const MetricSeries& fit_series = detail::find_series(series, fit_on);
            noisy_curves.push_back(fit_series.v);
            fit_options.series_id = "noisy/seed" + std::to_string(s);
            const DecayFit fit = fit_decay(fit_series.t, fit_series.v, win_lo, win_hi, fit_options);
            noisy_fits.push_back(fit);
            const KappaRatio ratio = kappa_ratio(fit, plain_fit, cfg.flat_kappa);
            if (ratio.plain_non_thermalizing)
                ++n_markers;
            else
                ratios.push_back(ratio.value);
            json item = fit_to_json(fit);
            item["seed_index"] = s;
            item["noisy_sites"] = noisy.sites;
            item["ratio"] = ratio.plain_non_thermalizing ? json(nullptr) : json(ratio.value);
            noisy_json.push_back(std::move(item));
        }

        if (formats.json_out) {
            json j;
            j["fit_metric"] = metric_name(fit_on);
            j["window"] = {win_lo, win_hi};
            j["plain"] = fit_to_json(plain_fit);
            j["plain_recurrences"] = {{"count", plain_rec.count},
                                      {"mean_prominence", plain_rec.mean_prominence}};
            j["plain_non_thermalizing"] = plain_fit.flat || plain_fit.kappa < cfg.flat_kappa;
            j["noisy"] = noisy_json;
            if (!ratios.empty()) {
                j["ratio_median"] = median(ratios);
                j["ratio_iqr"] = iqr(ratios);
            }
            j["ratio_markers"] = n_markers;
            std::ofstream out(run.file("fits.json"));
            out << j.dump(2) << '\n';
        }

        if (formats.svg && !noisy_curves.empty()) {
            PlotSpec plot;
            plot.title = "Distance to thermal reference";
            plot.xlabel = "time";
            plot.ylabel = metric_name(fit_on);
            PlotSeries med;
            med.label = "noisy (median)";
            med.color = "#2ca02c";
            med.x = plain_fit_series.t;
            for (std::size_t k = 0; k < plain_fit_series.t.size(); ++k) {
                std::vector<double> vals;
                for (const auto& curve : noisy_curves) vals.push_back(curve[k]);
                med.y.push_back(median(vals));
            }
            PlotSeries pl;
            pl.label = "plain";
            pl.color = "#1f77b4";
            pl.dashed = true;
            pl.x = plain_fit_series.t;
            pl.y = plain_fit_series.v;
            plot.series = {std::move(med), std::move(pl)};
            std::ofstream out(run.file("thermalize.svg"));
            render_svg(plot, out);
        }
        run.write_manifest();
        return 0;
    } catch (const std::exception& e) {
        run.write_error("thermalize", e.what());
        return 1;
    }
}

inline int cmd_mi(const ExperimentConfig& cfg, const OutputFormats& formats) {
    RunDirectory run(cfg.out_dir, cfg);
    try {
        if (cfg.test_sites.empty()) throw ConfigError("mi: [subsets].test is required");
        if (cfg.noisy_sets.empty()) throw ConfigError("mi: [subsets].noisy_sets is required");
        const ModelBundle model = build_sector_model(cfg);
        const SiteSubset test(cfg.test_sites, SubsetRole::kTest);

        std::optional<MetricCsv> csv;
        if (formats.csv) csv.emplace(run.file("mi.csv"));

        json summary = json::array();
        PlotSpec plot;
        plot.title = "Mutual information I(N:T)";
        plot.xlabel = "time";
        plot.ylabel = "I (nats)";
        const char* colors[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#8c564b"};

        for (std::size_t ni = 0; ni < cfg.noisy_sets.size(); ++ni) {
            const SiteSubset noisy(cfg.noisy_sets[ni], SubsetRole::kNoisy);
            const std::string tag = subset_tag(noisy, "N");
            const std::vector<SiteSubset> subsets = {test, noisy, subset_union(noisy, test)};

            auto mi_series = [&](const TrajectoryRecord& rec) {
                std::vector<double> v;
                for (std::size_t k = 0; k < rec.times.size(); ++k)
                    v.push_back(mutual_information(rec.reduced[1][k], rec.reduced[0][k],
                                                   rec.reduced[2][k]));
                return v;
            };

            // coherent-transport reference
            TrajectoryRecord plain = run_protocol(model.psi0, *model.spectrum, *model.ctx,
                                                  make_schedule(cfg, noisy, false), subsets,
                                                  cfg.master_seed);
            const std::vector<double> plain_mi = mi_series(plain);
            if (csv)
                for (std::size_t k = 0; k < plain.times.size(); ++k)
                    csv->row(plain.times[k], tag, "mutual_info", plain_mi[k], "plain", 0);

            std::vector<std::vector<double>> curves;
            for (int s = 0; s < cfg.n_seeds; ++s) {
                const std::uint64_t seed = derive_seed(
                    cfg.master_seed, {ni + 2, static_cast<std::uint64_t>(s)});
                TrajectoryRecord rec =
                    run_protocol(model.psi0, *model.spectrum, *model.ctx,
                                 make_schedule(cfg, noisy, true), subsets, seed);
                const std::vector<double> mi = mi_series(rec);
                curves.push_back(mi);
                if (csv)
                    for (std::size_t k = 0; k < rec.times.size(); ++k)
                        csv->row(rec.times[k], tag, "mutual_info", mi[k], rec.protocol, seed);
            }

            // medians, plateau (late-window mean of the median curve), onset
            std::vector<double> med_curve, iqr_curve;
            for (std::size_t k = 0; k < plain.times.size(); ++k) {
                std::vector<double> vals;
                for (const auto& c : curves) vals.push_back(c[k]);
                med_curve.push_back(median(vals));
                iqr_curve.push_back(iqr(vals));
            }
            const std::size_t tail = std::max<std::size_t>(3, med_curve.size() / 5);
            double plateau = 0.0;
            for (std::size_t k = med_curve.size() - tail; k < med_curve.size(); ++k)
                plateau += med_curve[k];
            plateau /= tail;
            double onset = std::numeric_limits<double>::quiet_NaN();
            for (std::size_t k = 0; k < med_curve.size(); ++k)
                if (med_curve[k] >= 0.1 * plateau) {
                    onset = plain.times[k];
                    break;
                }

            json item;
            item["noisy_sites"] = noisy.sites;
            item["plateau"] = plateau;
            item["onset_time_10pct"] = onset;
            item["median_curve"] = med_curve;
            item["iqr_curve"] = iqr_curve;
            item["times"] = plain.times;
            summary.push_back(std::move(item));

            PlotSeries s_noisy;
            s_noisy.label = tag + " noisy";
            s_noisy.color = colors[ni % 5];
            s_noisy.x = plain.times;
            s_noisy.y = med_curve;
            PlotSeries s_plain;
            s_plain.label = tag + " plain";
            s_plain.color = colors[ni % 5];
            s_plain.dashed = true;
            s_plain.x = plain.times;
            s_plain.y = plain_mi;
            plot.series.push_back(std::move(s_noisy));
            plot.series.push_back(std::move(s_plain));
        }

        if (formats.json_out) {
            std::ofstream out(run.file("mi_summary.json"));
            out << json{{"test_sites", cfg.test_sites}, {"sets", summary}}.dump(2) << '\n';
        }
        if (formats.svg) {
            std::ofstream out(run.file("mi.svg"));
            render_svg(plot, out);
        }
        run.write_manifest();
        return 0;
    } catch (const std::exception& e) {
        run.write_error("mi", e.what());
        return 1;
    }
}

inline int cmd_circuit(const ExperimentConfig& cfg, const OutputFormats& formats) {
    RunDirectory run(cfg.out_dir, cfg);
    try {
        if (cfg.test_sites.empty()) throw ConfigError("circuit: [subsets].test is required");
        const ModelBundle model = build_full_model(cfg);
        const SiteSubset test(cfg.test_sites, SubsetRole::kTest);
        const MatC thermal_test =
            thermal_reduced_exact(model.thermal, model.ctx->subset_index(test));

        const int n_steps = cfg.circuit.n_steps > 0
                                ? cfg.circuit.n_steps
                                : default_trotter_steps(cfg.couplings, cfg.t_max);
        TrotterCircuit noiseless = trotterize(cfg.couplings, cfg.length, cfg.t_max, n_steps, 0.0,
                                              cfg.initial_pattern(), cfg.circuit.order);
        TrotterCircuit noisy = noiseless;
        noisy.noise_p = cfg.circuit.noise_p;

        {
            std::ofstream out(run.file("circuit.txt"));
            dump_circuit(noiseless, out);
        }

        CircuitRunOptions options;
        options.record_stride = cfg.circuit.record_stride;
        options.threads = cfg.threads;
        const CircuitRunResult base = run_noisy_trajectories(noiseless, {test}, 1,
                                                             cfg.master_seed, options);
        const CircuitRunResult averaged = run_noisy_trajectories(
            noisy, {test}, cfg.circuit.n_traj, cfg.master_seed, options);

        std::optional<MetricCsv> csv;
        if (formats.csv) csv.emplace(run.file("metrics.csv"));
        auto emit = [&](const CircuitRunResult& result, const std::string& protocol,
                        std::vector<double>& fidelity_series) {
            for (std::size_t k = 0; k < result.times.size(); ++k) {
                const MatC& rho = result.avg_reduced[0][k];
                const double omf = one_minus_fidelity(rho, thermal_test);
                fidelity_series.push_back(omf);
                if (csv) {
                    csv->row(result.times[k], subset_tag(test, "T"), "one_minus_fidelity", omf,
                             protocol, cfg.master_seed);
                    csv->row(result.times[k], subset_tag(test, "T"), "trace_dist",
                             trace_distance(rho, thermal_test), protocol, cfg.master_seed);
                }
            }
        };
        std::vector<double> f_noiseless, f_noisy;
        emit(base, "noiseless", f_noiseless);
        emit(averaged, "noisy", f_noisy);

        const RecurrenceScore rec_plain =
            recurrence_score(base.times, f_noiseless, 0.0, cfg.t_max);
        const RecurrenceScore rec_noisy =
            recurrence_score(averaged.times, f_noisy, 0.0, cfg.t_max);

        if (formats.json_out) {
            json j;
            j["n_steps"] = n_steps;
            j["n_traj"] = cfg.circuit.n_traj;
            j["noise_p"] = cfg.circuit.noise_p;
            j["beta_star"] = model.thermal.beta_star;
            j["noiseless"] = {{"recurrences", rec_plain.count},
                              {"mean_prominence", rec_plain.mean_prominence},
                              {"final_one_minus_fidelity", f_noiseless.back()}};
            j["noisy"] = {{"recurrences", rec_noisy.count},
                          {"mean_prominence", rec_noisy.mean_prominence},
                          {"final_one_minus_fidelity", f_noisy.back()}};
            std::ofstream out(run.file("recurrence.json"));
            out << j.dump(2) << '\n';
        }
        if (formats.svg) {
            PlotSpec plot;
            plot.title = "Circuit distance to thermal reference";
            plot.xlabel = "time";
            plot.ylabel = "1 - F";
            PlotSeries a;
            a.label = "noiseless";
            a.color = "#1f77b4";
            a.dashed = true;
            a.x = base.times;
            a.y = f_noiseless;
            PlotSeries b;
            b.label = "noisy";
            b.color = "#2ca02c";
            b.x = averaged.times;
            b.y = f_noisy;
            plot.series = {std::move(a), std::move(b)};
            std::ofstream out(run.file("circuit.svg"));
            render_svg(plot, out);
        }
        run.write_manifest();
        return 0;
    } catch (const std::exception& e) {
        run.write_error("circuit", e.what());
        return 1;
    }
}

// ============================================================================
// Sweeps
// ============================================================================

namespace detail {

/// Apply one sweep-axis value to a copy of the base config.
inline ExperimentConfig apply_axis(const ExperimentConfig& base, const std::string& axis,
                                   double value) {
    ExperimentConfig cfg = base;
    if (axis == "frequency") {
        cfg.shock.steps.clear();
        cfg.shock.cascade_count = static_cast<int>(std::lround(value));
    } else if (axis == "n_noisy") {
        cfg.shock.n_sites = static_cast<int>(std::lround(value));
        cfg.shock.sites.clear();
    } else if (axis == "size") {
        const int length = static_cast<int>(std::lround(value));
        const int t_size = static_cast<int>(base.test_sites.size());
        cfg.length = length;
        cfg.test_sites.clear();
        for (int s = length - t_size; s < length; ++s) cfg.test_sites.push_back(s);
    } else if (axis == "j_perp") {
        cfg.couplings.j_perp = value;
    } else {
        throw ConfigError("sweep: unknown axis '" + axis + "'");
    }
    return cfg;
}

}  // namespace detail

inline int cmd_sweep(const ExperimentConfig& cfg, const OutputFormats& formats) {
    RunDirectory run(cfg.out_dir, cfg);
    try {
        if (cfg.sweep.axis.empty() || cfg.sweep.grid.empty())
            throw ConfigError("sweep: [sweep].axis and [sweep].grid are required");
        if (cfg.test_sites.empty()) throw ConfigError("sweep: [subsets].test is required");

        struct PointState {
            double value;
            ExperimentConfig cfg;
            ModelBundle model;
            MatC thermal_test;
            SiteSubset test;
            DecayFit plain_fit;
            double win_lo, win_hi;
        };
        std::optional<PointState> point;

        struct RawRow {
            double value;
            int seed;
            double kappa_plain, kappa_noisy;
            double ratio;
            bool marker;
        };
        std::vector<RawRow> raw;

        const std::uint64_t axis_salt = fnv1a(cfg.sweep.axis);

        auto runner = [&](double value, int seed_index) -> KappaRatio {
            if (!point || point->value != value) {
                PointState st;
                st.value = value;
                st.cfg = detail::apply_axis(cfg, cfg.sweep.axis, value);
                st.cfg.validate();
                st.model = build_sector_model(st.cfg);
                st.test = SiteSubset(st.cfg.test_sites, SubsetRole::kTest);
                st.thermal_test = thermal_reduced_exact(st.model.thermal,
                                                        st.model.ctx->subset_index(st.test));
                std::tie(st.win_lo, st.win_hi) = fit_window(st.cfg);
                const SiteSubset no_noise;
                TrajectoryRecord plain = run_protocol(
                    st.model.psi0, *st.model.spectrum, *st.model.ctx,
                    make_schedule(st.cfg, no_noise, false), {st.test}, st.cfg.master_seed);
                const auto series =
                    evaluate_metrics(plain, st.model, st.cfg, st.test, st.thermal_test);
                const MetricSeries& fs = detail::find_series(series, detail::fit_metric(st.cfg));
                FitOptions fo;
                fo.flat_kappa = st.cfg.flat_kappa;
                fo.series_id = "plain";
                st.plain_fit = fit_decay(fs.t, fs.v, st.win_lo, st.win_hi, fo);
                point.emplace(std::move(st));
            }
            PointState& st = *point;
            ExperimentConfig run_cfg = st.cfg;
            run_cfg.master_seed =
                derive_seed(cfg.master_seed, {axis_salt, static_cast<std::uint64_t>(seed_index)});
            const SiteSubset noisy = resolve_noisy_sites(run_cfg, seed_index);
            TrajectoryRecord rec = run_protocol(st.model.psi0, *st.model.spectrum, *st.model.ctx,
                                                make_schedule(run_cfg, noisy, true), {st.test},
                                                run_cfg.master_seed);
            const auto series = evaluate_metrics(rec, st.model, run_cfg, st.test, st.thermal_test);
            const MetricSeries& fs = detail::find_series(series, detail::fit_metric(run_cfg));
            FitOptions fo;
            fo.flat_kappa = run_cfg.flat_kappa;
            fo.series_id = "noisy";
            const DecayFit fit = fit_decay(fs.t, fs.v, st.win_lo, st.win_hi, fo);
            const KappaRatio ratio = kappa_ratio(fit, st.plain_fit, run_cfg.flat_kappa);
            raw.push_back({value, seed_index, st.plain_fit.kappa, fit.kappa,
                           ratio.plain_non_thermalizing
                               ? std::numeric_limits<double>::quiet_NaN()
                               : ratio.value,
                           ratio.plain_non_thermalizing});
            return ratio;
        };

        const SweepResult result = run_sweep(cfg.sweep.axis, cfg.sweep.grid, cfg.n_seeds, runner);

        if (formats.csv) {
            std::ofstream out(run.file("sweep.csv"));
            out << "axis_value,seed,kappa_plain,kappa_noisy,ratio,plain_non_thermalizing\n"
                << std::setprecision(17);
            for (const RawRow& r : raw)
                out << r.value << ',' << r.seed << ',' << r.kappa_plain << ',' << r.kappa_noisy
                    << ',' << r.ratio << ',' << (r.marker ? 1 : 0) << '\n';
        }
        if (formats.json_out) {
            json points = json::array();
            for (const SweepPoint& p : result.points) {
                json item;
                item["value"] = p.axis_value;
                item["ratio_median"] = std::isfinite(p.ratio_median) ? json(p.ratio_median)
                                                                     : json(nullptr);
                item["ratio_iqr"] = p.ratio_iqr;
                item["n_seeds"] = p.n_seeds;
                item["flags"] = p.flags;
                item["n_non_thermalizing"] = p.n_non_thermalizing;
                points.push_back(std::move(item));
            }
            std::ofstream out(run.file("sweep.json"));
            out << json{{"axis", result.axis}, {"points", points}}.dump(2) << '\n';
        }
        if (formats.svg) {
            PlotSpec plot;
            plot.title = "kappa_noisy / kappa_plain";
            plot.xlabel = cfg.sweep.axis;
            plot.ylabel = "ratio";
            plot.logx = (cfg.sweep.axis == "frequency");
            PlotSeries s;
            s.label = "median";
            for (const SweepPoint& p : result.points)
                if (std::isfinite(p.ratio_median)) {
                    s.x.push_back(p.axis_value);
                    s.y.push_back(p.ratio_median);
                }
            plot.series.push_back(std::move(s));
            std::ofstream out(run.file("sweep.svg"));
            render_svg(plot, out);
        }
        run.write_manifest();
        return 0;
    } catch (const std::exception& e) {
        run.write_error("sweep", e.what());
        return 1;
    }
}

// ============================================================================
// Replot
// ============================================================================

/// Re-render an SVG from an existing metrics CSV (no recomputation): one
/// median curve per (subset, metric, protocol) group.
inline int cmd_plot(const std::filesystem::path& csv_path, const std::filesystem::path& svg_path,
                    const std::string& metric_filter = "") {
    std::ifstream in(csv_path);
    if (!in) {
        std::cerr << "gibbsforge: plot: cannot open " << csv_path << '\n';
        return 1;
    }
    std::string line;
    std::getline(in, line);  // header
    struct Key {
        std::string subset, metric, protocol;
        auto operator<=>(const Key&) const = default;
    };
    std::map<Key, std::map<double, std::vector<double>>> groups;
    while (std::getline(in, line)) {
        std::istringstream row(line);
        std::string time_s, subset, metric, value_s, protocol, seed_s;
        if (!std::getline(row, time_s, ',') || !std::getline(row, subset, ',') ||
            !std::getline(row, metric, ',') || !std::getline(row, value_s, ',') ||
            !std::getline(row, protocol, ',') || !std::getline(row, seed_s, ','))
            continue;
        if (!metric_filter.empty() && metric != metric_filter) continue;
        groups[{subset, metric, protocol}][std::stod(time_s)].push_back(std::stod(value_s));
    }
    if (groups.empty()) {
        std::cerr << "gibbsforge: plot: no rows matched\n";
        return 1;
    }
    PlotSpec plot;
    plot.title = csv_path.filename().string();
    plot.xlabel = "time";
    plot.ylabel = metric_filter.empty() ? "value" : metric_filter;
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    int c = 0;
    for (const auto& [key, by_time] : groups) {
        PlotSeries s;
        s.label = key.subset + " " + key.metric + " " + key.protocol;
        s.color = colors[c++ % 6];
        s.dashed = (key.protocol == "plain" || key.protocol == "noiseless");
        for (const auto& [t, vals] : by_time) {
            s.x.push_back(t);
            s.y.push_back(median(vals));
        }
        plot.series.push_back(std::move(s));
    }
    std::ofstream out(svg_path);
    if (!out) {
        std::cerr << "gibbsforge: plot: cannot write " << svg_path << '\n';
        return 1;
    }
    render_svg(plot, out);
    return 0;
}

}  // namespace gibbsforge
