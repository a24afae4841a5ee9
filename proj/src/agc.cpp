#include "derflex/agc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "derflex/errors.hpp"
#include "derflex/parallel.hpp"

namespace derflex {

std::size_t AgcTrace::samples_per_hour() const {
    const double n = 3600.0 / dt_seconds;
    const auto rounded = static_cast<std::size_t>(std::llround(n));
    if (rounded == 0 || std::abs(n - static_cast<double>(rounded)) > 1e-9) {
        throw std::invalid_argument("AGC resolution must divide one hour evenly");
    }
    return rounded;
}

std::size_t AgcTrace::whole_hours() const { return samples.size() / samples_per_hour(); }

AgcTrace AgcTrace::hour(std::size_t h) const {
    const std::size_t n = samples_per_hour();
    if (h >= whole_hours()) {
        throw std::out_of_range("hour index beyond the last whole hour");
    }
    AgcTrace out;
    out.dt_seconds = dt_seconds;
    out.start_index = start_index + h * n;
    out.samples.assign(samples.begin() + static_cast<std::ptrdiff_t>(h * n),
                       samples.begin() + static_cast<std::ptrdiff_t>((h + 1) * n));
    return out;
}

void AgcTrace::validate() const {
    if (samples.empty()) throw std::invalid_argument("AGC trace is empty");
    if (!(dt_seconds > 0.0)) throw std::invalid_argument("AGC resolution must be positive");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!(samples[i] >= -1.0 && samples[i] <= 1.0)) {
            throw std::invalid_argument("AGC sample " + std::to_string(i) + " outside [-1, 1]");
        }
    }
}

AgcTrace parse_agc(std::istream& in, double dt_seconds) {
    if (!(dt_seconds > 0.0)) throw std::invalid_argument("AGC resolution must be positive");
    AgcTrace trace;
    trace.dt_seconds = dt_seconds;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        double value = 0.0;
        std::size_t used = 0;
        try {
            value = std::stod(line.substr(first), &used);
        } catch (const std::exception&) {
            throw DataError("AGC line " + std::to_string(line_no) + ": not a number: '" + line + "'");
        }
        const auto rest = line.find_first_not_of(" \t", first + used);
        if (rest != std::string::npos) {
            throw DataError("AGC line " + std::to_string(line_no) + ": trailing characters: '" + line + "'");
        }
        if (!(value >= -1.0 && value <= 1.0)) {
            throw DataError("AGC line " + std::to_string(line_no) + ": sample " + line.substr(first) +
                            " outside [-1, 1]");
        }
        trace.samples.push_back(value);
    }
    if (trace.samples.empty()) throw DataError("AGC input contains no samples");
    return trace;
}

AgcTrace load_agc(const std::filesystem::path& path, double dt_seconds) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open AGC file: " + path.string());
    return parse_agc(in, dt_seconds);
}

AgcStats hourly_stats(const AgcTrace& trace) {
    const std::size_t per_hour = trace.samples_per_hour();
    const std::size_t hours = trace.samples.size() / per_hour;
    if (hours == 0) throw std::invalid_argument("AGC trace shorter than one hour");

    AgcStats stats;
    stats.hourly_means.reserve(hours);
    for (std::size_t h = 0; h < hours; ++h) {
        const auto begin = trace.samples.begin() + static_cast<std::ptrdiff_t>(h * per_hour);
        const double sum = std::accumulate(begin, begin + static_cast<std::ptrdiff_t>(per_hour), 0.0);
        stats.hourly_means.push_back(sum / static_cast<double>(per_hour));
    }
    const double n = static_cast<double>(hours);
    stats.mu_agc = std::accumulate(stats.hourly_means.begin(), stats.hourly_means.end(), 0.0) / n;
    double ss = 0.0;
    for (double m : stats.hourly_means) ss += (m - stats.mu_agc) * (m - stats.mu_agc);
    stats.sigma_agc = std::sqrt(ss / n);
    return stats;
}

Selection select_representative(const AgcTrace& trace, const AgcStats& stats, std::uint64_t seed,
                                 double tolerance_sigma) {
    if (!(tolerance_sigma > 0.0)) throw std::invalid_argument("selection tolerance must be positive");
    const double sigma = stats.sigma_agc;
    if (!(sigma > 0.0)) throw InfeasibleError("hourly means have zero spread; no representative hours");
    const double bound = 3.0 * sigma;

    std::mt19937_64 rng(seed);
    std::vector<bool> taken(stats.hourly_means.size(), false);
    Selection out;

    for (double multiple : kRepresentativeTargets) {
        const double target = multiple * sigma;
        double band = tolerance_sigma * sigma;
        std::vector<std::size_t> qualifiers;
        for (;;) {
            qualifiers.clear();
            for (std::size_t h = 0; h < stats.hourly_means.size(); ++h) {
                const double m = stats.hourly_means[h];
                if (!taken[h] && std::abs(m - target) <= band && std::abs(m) <= bound) qualifiers.push_back(h);
            }
            if (!qualifiers.empty() || band >= 2.0 * bound) break;
            band *= 2.0;
        }
        if (qualifiers.empty()) {
            std::ostringstream msg;
            msg << "no hour qualifies for target " << multiple << " sigma (" << target << ")";
            throw InfeasibleError(msg.str());
        }
        std::uniform_int_distribution<std::size_t> pick(0, qualifiers.size() - 1);
        const std::size_t h = qualifiers[pick(rng)];
        taken[h] = true;
        out.hours.push_back(trace.hour(h));
        out.records.push_back({target, h, stats.hourly_means[h]});
    }
    return out;
}

void write_selection_csv(std::ostream& out, const Selection& selection) {
    out << "target,hour_index,realized_mean\n";
    out << std::setprecision(12);
    for (const auto& r : selection.records) {
        out << r.target << ',' << r.hour_index << ',' << r.realized_mean << '\n';
    }
}

namespace {

double reflect_unit(double x) {
    while (x > 1.0 || x < -1.0) {
        x = x > 1.0 ? 2.0 - x : -2.0 - x;
    }
    return x;
}

double clipped_mean(std::span<const double> xs, double shift) {
    double sum = 0.0;
    for (double x : xs) sum += std::clamp(x + shift, -1.0, 1.0);
    return sum / static_cast<double>(xs.size());
}

}  // namespace

AgcTrace synthesize_agc(std::uint64_t seed, std::size_t hours, std::span<const double> target_hourly_means,
                        const SynthesisOptions& options) {
    if (hours == 0) throw std::invalid_argument("synthesize_agc needs at least one hour");
    if (target_hourly_means.size() != hours) {
        throw std::invalid_argument("synthesize_agc needs one target mean per hour");
    }
    for (double m : target_hourly_means) {
        if (!(m > -1.0 && m < 1.0)) {
            throw InfeasibleError("target hourly mean outside (-1, 1) cannot be reached by a clipped signal");
        }
    }
    if (!(options.time_constant_s > 0.0) || !(options.stationary_sd > 0.0)) {
        throw std::invalid_argument("synthesis time constant and spread must be positive");
    }

    AgcTrace trace;
    trace.dt_seconds = options.dt_seconds;
    const std::size_t per_hour = trace.samples_per_hour();
    trace.samples.resize(hours * per_hour);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double phi = std::exp(-options.dt_seconds / options.time_constant_s);
    const double innovation = options.stationary_sd * std::sqrt(1.0 - phi * phi);

    double x = reflect_unit(options.stationary_sd * normal(rng));
    for (double& s : trace.samples) {
        s = x;
        x = reflect_unit(phi * x + innovation * normal(rng));
    }

    for (std::size_t h = 0; h < hours; ++h) {
        std::span<double> hour(trace.samples.data() + h * per_hour, per_hour);
        const double target = target_hourly_means[h];
        // clipped_mean is nondecreasing in the shift and spans [-1, 1] on [-2, 2].
        double lo = -2.0;
        double hi = 2.0;
        for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (clipped_mean(hour, mid) < target) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        const double shift = 0.5 * (lo + hi);
        for (double& s : hour) s = std::clamp(s + shift, -1.0, 1.0);
    }
    return trace;
}

AgcTrace synthesize_year(std::uint64_t seed, const SyntheticYear& spec) {
    if (spec.hours == 0) throw std::invalid_argument("synthetic year needs at least one hour");
    if (!(spec.target_sd >= 0.0) || !(spec.max_abs_target > 0.0 && spec.max_abs_target < 1.0) ||
        !(std::abs(spec.target_mean) < spec.max_abs_target)) {
        throw std::invalid_argument("synthetic target statistics are out of range");
    }
    std::mt19937_64 rng(derive_seed(seed, {0}));
    std::normal_distribution<double> dist(spec.target_mean, spec.target_sd);
    std::vector<double> targets(spec.hours);
    for (double& t : targets) {
        do {
            t = dist(rng);
        } while (std::abs(t) > spec.max_abs_target);
    }
    return synthesize_agc(derive_seed(seed, {1}), spec.hours, targets, spec.synthesis);
}

ReferenceSignal make_reference(const AgcTrace& hour, double scale_mw, int k_hours, double baseload_mw) {
    if (hour.samples.size() != hour.samples_per_hour()) {
        throw std::invalid_argument("make_reference expects exactly one hour of AGC");
    }
    if (!(scale_mw > 0.0)) throw std::invalid_argument("reference scale must be positive");
    if (k_hours < 1) throw std::invalid_argument("reference horizon must be at least one hour");
    if (!(baseload_mw >= 0.0)) throw std::invalid_argument("baseload must be nonnegative");

    ReferenceSignal ref;
    ref.dt_seconds = hour.dt_seconds;
    ref.k_hours = k_hours;
    ref.baseload_mw = baseload_mw;
    ref.samples.reserve(hour.samples.size() * static_cast<std::size_t>(k_hours));
    for (int k = 0; k < k_hours; ++k) {
        for (double s : hour.samples) ref.samples.push_back(baseload_mw + scale_mw * s);
    }
    return ref;
}

}  // namespace derflex
