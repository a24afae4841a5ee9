#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace derflex {

// PJM-style regulation performance scores.
//
// Everything is evaluated on a 10 s grid. A k-hour horizon holds
// n_k = floor((6k - 1)/4) scoring windows of 50 minutes, spread evenly from
// the start to the end of the horizon. Inside a window, accuracy correlates
// the reference over the window minus 5 minutes against the response shifted
// by 0, 10, ..., 300 s. The aggregate of each score is its minimum over the
// windows.

inline constexpr double kScoreGridSeconds = 10.0;
inline constexpr double kScoreWindowSeconds = 3000.0;
inline constexpr double kMaxLagSeconds = 300.0;

struct AccuracyResult {
    double x_a = 0.0;
    double t_k = 0.0;  // lag of maximum correlation, seconds
};

struct WindowScore {
    std::size_t index = 0;
    double t_start_s = 0.0;
    double x_a = 0.0;
    double x_d = 0.0;
    double x_p = 0.0;
    double t_k = 0.0;
};

struct ScoreReport {
    double accuracy = 0.0;
    double delay = 0.0;
    double precision = 0.0;
    double composite = 0.0;
    double best_lag_s = 0.0;  // t_k of the window that sets the delay score
    std::vector<WindowScore> per_window;
};

/// Mean-downsamples `series` sampled at dt_s onto a grid of step `grid_s`.
/// grid_s must be an integer multiple of dt_s; a trailing partial cell is dropped.
std::vector<double> resample_mean(std::span<const double> series, double dt_s, double grid_s = kScoreGridSeconds);

/// Pearson correlation; when either side has zero variance the result is 1
/// if both are constant and 0 otherwise.
double correlation(std::span<const double> a, std::span<const double> b);

/// `ref` and `dem` on the same grid of step dt_s, equal length. The
/// correlation span is the window length minus max_lag_s.
AccuracyResult accuracy(std::span<const double> ref, std::span<const double> dem, double dt_s,
                        double max_lag_s = kMaxLagSeconds);

/// min(1, |t_k - 300| / 300).
double delay_score(double t_k_s);

/// 1 - mean|ref - dem| / mean|ref|. Throws std::domain_error when the
/// reference is identically zero.
double precision(std::span<const double> ref, std::span<const double> dem);

/// floor((6k - 1)/4), generalised to horizons measured in 10-minute units.
std::size_t window_count(double horizon_s);
std::vector<std::size_t> window_starts(std::size_t grid_samples, std::size_t window_samples, std::size_t count);

/// Full report for series sampled at dt_s (any multiple-of-10 s divisor).
ScoreReport score(std::span<const double> p_ref, std::span<const double> p_dem, double dt_s);

/// Aggregates per-window triples: minimum of each score, composite = mean of the three.
ScoreReport composite(const std::vector<WindowScore>& windows);

/// `window_index,t_start_s,x_a,x_d,x_p` rows, a `summary` row of the
/// aggregates (lag in the time column) and a `composite` row.
void write_score_csv(std::ostream& out, const ScoreReport& report);

}  // namespace derflex
