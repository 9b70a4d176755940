#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gibbsforge/common.hpp"

namespace gibbsforge {

// ============================================================================
// Exponential decay fits
// ============================================================================

struct DecayFit {
    double kappa = 0.0;      // decay rate, 1/time
    double amplitude = 0.0;  // A in A e^{-kappa t} + C
    double offset = 0.0;     // C
    double t_lo = 0.0, t_hi = 0.0;
    double rms_residual = 0.0;
    double kappa_std = 0.0;  // residual-based standard error
    int n_points = 0;
    bool converged = false;
    bool flat = false;  // series carries no usable decay
    std::string series_id;
};

struct FitOptions {
    int max_iterations = 200;
    double flat_range_fraction = 1e-3;  // relative range below which a series is flat
    double flat_kappa = 0.02;           // fitted rates below this flag as flat
    std::string series_id;
};

/// Least-squares fit of A e^{-kappa t} + C over the window: offset estimate
/// and log-linear initialization, refined by damped Gauss-Newton.
/// Deterministic; flat series come back flagged with kappa ~ 0 instead of
/// failing.
inline DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& y,
                          double window_lo, double window_hi, const FitOptions& options = {}) {
    if (t.size() != y.size()) throw std::invalid_argument("fit_decay: t/y size mismatch");
    std::vector<double> tw, yw;
    for (std::size_t i = 0; i < t.size(); ++i)
        if (t[i] >= window_lo && t[i] <= window_hi) {
            tw.push_back(t[i]);
            yw.push_back(y[i]);
        }
    DecayFit fit;
    fit.series_id = options.series_id;
    fit.t_lo = window_lo;
    fit.t_hi = window_hi;
    fit.n_points = static_cast<int>(tw.size());
    if (fit.n_points < 6)
        throw std::invalid_argument("fit_decay: need at least 6 points in the window");

    const double y_min = *std::min_element(yw.begin(), yw.end());
    const double y_max = *std::max_element(yw.begin(), yw.end());
    const double range = y_max - y_min;
    const double scale = std::max({std::abs(y_max), std::abs(y_min), 1e-300});
    double mean = 0.0;
    for (double v : yw) mean += v;
    mean /= fit.n_points;

    if (range <= options.flat_range_fraction * scale) {
        fit.kappa = 0.0;
        fit.amplitude = 0.0;
        fit.offset = mean;
        fit.flat = true;
        fit.converged = true;
        double rss = 0.0;
        for (double v : yw) rss += (v - mean) * (v - mean);
        fit.rms_residual = std::sqrt(rss / fit.n_points);
        return fit;
    }

    // Initialization: offset from the tail, rate from the log-linear fit.
    const int tail = std::max(3, fit.n_points / 5);
    double c0 = 0.0;
    for (int i = fit.n_points - tail; i < fit.n_points; ++i) c0 += yw[i];
    c0 /= tail;
    c0 = std::min(c0, y_min);  // keep y - C positive where possible
    c0 -= 1e-3 * range;

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n_log = 0;
    for (int i = 0; i < fit.n_points; ++i) {
        const double d = yw[i] - c0;
        if (d <= 1e-12 * scale) continue;
        const double ly = std::log(d);
        sx += tw[i];
        sy += ly;
        sxx += tw[i] * tw[i];
        sxy += tw[i] * ly;
        ++n_log;
    }
    double kappa0 = 0.5, log_a0 = std::log(std::max(range, 1e-12));
    if (n_log >= 2 && (n_log * sxx - sx * sx) > 0) {
        const double slope = (n_log * sxy - sx * sy) / (n_log * sxx - sx * sx);
        kappa0 = std::max(-slope, 1e-6);
        log_a0 = (sy - (-kappa0) * sx) / n_log;
    }

    Eigen::Vector3d p(std::exp(log_a0), kappa0, c0);  // (A, kappa, C)
    auto rss_of = [&](const Eigen::Vector3d& q) {
        double rss = 0.0;
        for (int i = 0; i < fit.n_points; ++i) {
            const double r = q(0) * std::exp(-q(1) * tw[i]) + q(2) - yw[i];
            rss += r * r;
        }
        return rss;
    };

    double lambda = 1e-3;
    double rss = rss_of(p);
    bool converged = false;
    for (int iter = 0; iter < options.max_iterations; ++iter) {
        Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
        Eigen::Vector3d jtr = Eigen::Vector3d::Zero();
        for (int i = 0; i < fit.n_points; ++i) {
            const double e = std::exp(-p(1) * tw[i]);
            const double r = p(0) * e + p(2) - yw[i];
            Eigen::Vector3d j(e, -p(0) * tw[i] * e, 1.0);
            jtj += j * j.transpose();
            jtr += j * r;
        }
        Eigen::Matrix3d damped = jtj;
        damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
        const Eigen::Vector3d step = damped.ldlt().solve(jtr);
        Eigen::Vector3d trial = p - step;
        const double trial_rss = rss_of(trial);
        if (trial_rss < rss) {
            const double improvement = (rss - trial_rss) / std::max(rss, 1e-300);
            p = trial;
            rss = trial_rss;
            lambda = std::max(lambda * 0.3, 1e-12);
            if (improvement < 1e-12 && step.cwiseAbs().maxCoeff() < 1e-10) {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if (lambda > 1e12) break;
        }
    }

    fit.amplitude = p(0);
    fit.kappa = p(1);
    fit.offset = p(2);
    fit.rms_residual = std::sqrt(rss / fit.n_points);
    fit.converged = converged || rss <= rss_of(Eigen::Vector3d(std::exp(log_a0), kappa0, c0));

    // kappa standard error from the Gauss-Newton covariance
    if (fit.n_points > 3) {
        Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
        for (int i = 0; i < fit.n_points; ++i) {
            const double e = std::exp(-p(1) * tw[i]);
            Eigen::Vector3d j(e, -p(0) * tw[i] * e, 1.0);
            jtj += j * j.transpose();
        }
        const double sigma2 = rss / (fit.n_points - 3);
        const Eigen::Matrix3d cov = sigma2 * jtj.inverse();
        if (cov(1, 1) > 0) fit.kappa_std = std::sqrt(cov(1, 1));
    }

    if (std::abs(fit.kappa) < options.flat_kappa) fit.flat = true;
    if (!std::isfinite(fit.kappa) || !std::isfinite(fit.amplitude) || !std::isfinite(fit.offset))
        throw std::runtime_error("fit_decay: non-finite fit parameters (rss=" +
                                 std::to_string(rss) + ")");
    return fit;
}

// ============================================================================
// Rate ratios
// ============================================================================

/// kappa_noisy / kappa_plain with residual-based uncertainty. When the plain
/// fit sits below the flatness threshold (integrable plain runs) there is no
/// meaningful ratio; the marker is returned instead.
struct KappaRatio {
    double value = std::numeric_limits<double>::quiet_NaN();
    double std_error = 0.0;
    bool plain_non_thermalizing = false;
};

inline KappaRatio kappa_ratio(const DecayFit& noisy, const DecayFit& plain,
                              double flat_kappa_threshold = 0.02) {
    if (!noisy.converged || !plain.converged)
        throw std::invalid_argument("kappa_ratio: both fits must have converged");
    KappaRatio r;
    if (plain.flat || plain.kappa < flat_kappa_threshold) {
        r.plain_non_thermalizing = true;
        return r;
    }
    r.value = noisy.kappa / plain.kappa;
    const double rel_n = noisy.kappa != 0.0 ? noisy.kappa_std / std::abs(noisy.kappa) : 0.0;
    const double rel_p = plain.kappa_std / std::abs(plain.kappa);
    r.std_error = std::abs(r.value) * std::sqrt(rel_n * rel_n + rel_p * rel_p);
    return r;
}

// ============================================================================
// Recurrence scoring
// ============================================================================

struct RecurrenceScore {
    int count = 0;
    double mean_prominence = 0.0;
};

/// Count local maxima in the window whose prominence exceeds a fraction of
/// the windowed series range.
inline RecurrenceScore recurrence_score(const std::vector<double>& t,
                                        const std::vector<double>& y, double window_lo,
                                        double window_hi, double prominence_fraction = 0.10) {
    if (t.size() != y.size()) throw std::invalid_argument("recurrence_score: size mismatch");
    std::vector<double> yw;
    for (std::size_t i = 0; i < t.size(); ++i)
        if (t[i] >= window_lo && t[i] <= window_hi) yw.push_back(y[i]);
    const int n = static_cast<int>(yw.size());
    if (n < 10) throw std::invalid_argument("recurrence_score: window must contain >= 10 points");
    const double range =
        *std::max_element(yw.begin(), yw.end()) - *std::min_element(yw.begin(), yw.end());
    RecurrenceScore score;
    if (range <= 0.0) return score;
    const double threshold = prominence_fraction * range;
    double prominence_sum = 0.0;
    for (int i = 1; i + 1 < n; ++i) {
        if (!(yw[i] > yw[i - 1] && yw[i] >= yw[i + 1])) continue;
        // walk outward to the nearest higher point; the valley minima on the
        // way bound the prominence
        double left_min = yw[i], right_min = yw[i];
        for (int j = i - 1; j >= 0; --j) {
            if (yw[j] > yw[i]) break;
            left_min = std::min(left_min, yw[j]);
        }
        for (int j = i + 1; j < n; ++j) {
            if (yw[j] > yw[i]) break;
            right_min = std::min(right_min, yw[j]);
        }
        const double prominence = yw[i] - std::max(left_min, right_min);
        if (prominence >= threshold) {
            ++score.count;
            prominence_sum += prominence;
        }
    }
    if (score.count > 0) score.mean_prominence = prominence_sum / score.count;
    return score;
}

// ============================================================================
// Aggregation and sweeps
// ============================================================================

inline double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median: empty sample");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return (n % 2 == 1) ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

inline double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("quantile: empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * (values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - lo) * (values[hi] - values[lo]);
}

inline double iqr(const std::vector<double>& values) {
    return quantile(values, 0.75) - quantile(values, 0.25);
}

struct SweepPoint {
    double axis_value = 0.0;
    double ratio_median = std::numeric_limits<double>::quiet_NaN();
    double ratio_iqr = 0.0;
    int n_seeds = 0;
    int n_non_thermalizing = 0;  // seeds whose plain fit tripped the marker
    std::vector<double> ratios;  // per-seed values that produced the medians
    std::vector<std::string> flags;
};

struct SweepResult {
    std::string axis;
    std::vector<SweepPoint> points;
};

/// Execute `runner(axis_value, seed_index)` over the grid x seed ensemble and
/// aggregate the kappa ratios (medians and IQR; Haar shocks give heavy-tailed
/// per-seed rates). Per-point failures are recorded as flags and the sweep
/// continues.
inline SweepResult run_sweep(const std::string& axis, const std::vector<double>& grid,
                             int n_seeds,
                             const std::function<KappaRatio(double, int)>& runner) {
    if (grid.empty()) throw std::invalid_argument("run_sweep: empty grid");
    if (n_seeds < 1) throw std::invalid_argument("run_sweep: need at least one seed");
    SweepResult result;
    result.axis = axis;
    for (double value : grid) {
        SweepPoint point;
        point.axis_value = value;
        for (int s = 0; s < n_seeds; ++s) {
            try {
                const KappaRatio r = runner(value, s);
                if (r.plain_non_thermalizing) {
                    ++point.n_non_thermalizing;
                } else if (std::isfinite(r.value)) {
                    point.ratios.push_back(r.value);
                }
                ++point.n_seeds;
            } catch (const std::exception& e) {
                point.flags.push_back(std::string("seed ") + std::to_string(s) + ": " + e.what());
            }
        }
        if (!point.ratios.empty()) {
            point.ratio_median = median(point.ratios);
            point.ratio_iqr = iqr(point.ratios);
        }
        result.points.push_back(std::move(point));
    }
    return result;
}

}  // namespace gibbsforge
