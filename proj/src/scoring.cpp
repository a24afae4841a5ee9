#include "derflex/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace derflex {

std::vector<double> resample_mean(std::span<const double> series, double dt_s, double grid_s) {
    const double ratio = grid_s / dt_s;
    const auto per_cell = static_cast<std::size_t>(std::llround(ratio));
    if (per_cell == 0 || std::abs(ratio - static_cast<double>(per_cell)) > 1e-9) {
        throw std::invalid_argument("score grid must be an integer multiple of the sample interval");
    }
    std::vector<double> out(series.size() / per_cell);
    for (std::size_t c = 0; c < out.size(); ++c) {
        double sum = 0.0;
        for (std::size_t j = 0; j < per_cell; ++j) sum += series[c * per_cell + j];
        out[c] = sum / static_cast<double>(per_cell);
    }
    return out;
}

double correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("correlation needs equal, >= 2 lengths");
    const double n = static_cast<double>(a.size());
    double ma = 0.0;
    double mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return (saa == 0.0 && sbb == 0.0) ? 1.0 : 0.0;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

AccuracyResult accuracy(std::span<const double> ref, std::span<const double> dem, double dt_s, double max_lag_s) {
    if (ref.size() != dem.size()) throw std::invalid_argument("accuracy needs equal-length series");
    const auto max_lag = static_cast<std::size_t>(std::llround(max_lag_s / dt_s));
    if (ref.size() < max_lag + 2) throw std::invalid_argument("accuracy window shorter than the lag range");
    const std::size_t span = ref.size() - max_lag;

    AccuracyResult best{-2.0, 0.0};
    const auto base = ref.subspan(0, span);
    for (std::size_t lag = 0; lag <= max_lag; ++lag) {
        const double r = correlation(base, dem.subspan(lag, span));
        if (r > best.x_a) best = {r, static_cast<double>(lag) * dt_s};
    }
    return best;
}

double delay_score(double t_k_s) { return std::min(1.0, std::abs(t_k_s - kMaxLagSeconds) / kMaxLagSeconds); }

double precision(std::span<const double> ref, std::span<const double> dem) {
    if (ref.size() != dem.size() || ref.empty()) throw std::invalid_argument("precision needs equal, nonempty series");
    double abs_ref = 0.0;
    double abs_err = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        abs_ref += std::abs(ref[i]);
        abs_err += std::abs(ref[i] - dem[i]);
    }
    if (abs_ref == 0.0) throw std::domain_error("precision undefined for an identically zero reference");
    return 1.0 - abs_err / abs_ref;
}

std::size_t window_count(double horizon_s) {
    const auto tens = static_cast<long>(std::floor(horizon_s / 600.0 + 1e-9));
    if (tens < 5) return 0;
    return static_cast<std::size_t>((tens - 1) / 4);
}

std::vector<std::size_t> window_starts(std::size_t grid_samples, std::size_t window_samples, std::size_t count) {
    if (count == 0 || grid_samples < window_samples) throw std::invalid_argument("horizon shorter than one window");
    std::vector<std::size_t> starts(count, 0);
    if (count == 1) return starts;
    const double slack = static_cast<double>(grid_samples - window_samples);
    for (std::size_t i = 0; i < count; ++i) {
        starts[i] = static_cast<std::size_t>(std::llround(slack * static_cast<double>(i) / static_cast<double>(count - 1)));
    }
    return starts;
}

ScoreReport composite(const std::vector<WindowScore>& windows) {
    if (windows.empty()) throw std::invalid_argument("composite needs at least one window");
    ScoreReport r;
    r.per_window = windows;
    r.accuracy = windows.front().x_a;
    r.delay = windows.front().x_d;
    r.precision = windows.front().x_p;
    r.best_lag_s = windows.front().t_k;
    for (const auto& w : windows) {
        r.accuracy = std::min(r.accuracy, w.x_a);
        if (w.x_d < r.delay) {
            r.delay = w.x_d;
            r.best_lag_s = w.t_k;
        }
        r.precision = std::min(r.precision, w.x_p);
    }
    r.composite = (r.accuracy + r.delay + r.precision) / 3.0;
    return r;
}

ScoreReport score(std::span<const double> p_ref, std::span<const double> p_dem, double dt_s) {
    if (p_ref.size() != p_dem.size()) throw std::invalid_argument("score needs equal-length series");
    const auto ref = resample_mean(p_ref, dt_s);
    const auto dem = resample_mean(p_dem, dt_s);
    const double horizon = static_cast<double>(ref.size()) * kScoreGridSeconds;
    const std::size_t count = window_count(horizon);
    if (count == 0) throw std::invalid_argument("horizon shorter than one 50-minute scoring window");
    const auto window = static_cast<std::size_t>(kScoreWindowSeconds / kScoreGridSeconds);

    std::vector<WindowScore> windows;
    const auto starts = window_starts(ref.size(), window, count);
    for (std::size_t i = 0; i < starts.size(); ++i) {
        const auto r = std::span<const double>(ref).subspan(starts[i], window);
        const auto d = std::span<const double>(dem).subspan(starts[i], window);
        const auto acc = accuracy(r, d, kScoreGridSeconds);
        windows.push_back({i, static_cast<double>(starts[i]) * kScoreGridSeconds, acc.x_a, delay_score(acc.t_k),
                           precision(r, d), acc.t_k});
    }
    return composite(windows);
}

void write_score_csv(std::ostream& out, const ScoreReport& report) {
    out << "window_index,t_start_s,x_a,x_d,x_p\n" << std::setprecision(12);
    for (const auto& w : report.per_window) {
        out << w.index << ',' << w.t_start_s << ',' << w.x_a << ',' << w.x_d << ',' << w.x_p << '\n';
    }
    // The summary row carries the aggregate lag in the t_start_s column.
    out << "summary," << report.best_lag_s << ',' << report.accuracy << ',' << report.delay << ','
        << report.precision << '\n';
    out << "composite," << report.composite << ",,,\n";
}

}  // namespace derflex
