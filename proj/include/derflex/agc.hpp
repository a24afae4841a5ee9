#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace derflex {

/// Normalized regulation signal, samples in [-1, 1] at a fixed resolution.
struct AgcTrace {
    std::vector<double> samples;
    double dt_seconds = 2.0;
    std::size_t start_index = 0;  // offset into the source dataset

    std::size_t samples_per_hour() const;
    std::size_t whole_hours() const;
    /// Copy of hour `h` (0-based) as its own one-hour trace.
    AgcTrace hour(std::size_t h) const;
    /// Throws std::invalid_argument when the invariants do not hold.
    void validate() const;
};

struct AgcStats {
    std::vector<double> hourly_means;
    double mu_agc = 0.0;
    double sigma_agc = 0.0;  // population standard deviation of hourly_means
};

/// Reference power for the fleet, in MW.
struct ReferenceSignal {
    std::vector<double> samples;
    double dt_seconds = 2.0;
    int k_hours = 1;
    double baseload_mw = 0.0;

    double horizon_seconds() const { return static_cast<double>(samples.size()) * dt_seconds; }
};

struct SelectionRecord {
    double target = 0.0;
    std::size_t hour_index = 0;
    double realized_mean = 0.0;
};

struct Selection {
    std::vector<AgcTrace> hours;
    std::vector<SelectionRecord> records;
};

/// Reads one sample per line; '#'-prefixed and blank lines are skipped.
/// Throws DataError naming the offending line for non-numeric or out-of-range
/// records, and when the file cannot be opened.
AgcTrace load_agc(const std::filesystem::path& path, double dt_seconds);
AgcTrace parse_agc(std::istream& in, double dt_seconds);

/// Per-hour arithmetic means over whole hours; the trailing partial hour is dropped.
AgcStats hourly_stats(const AgcTrace& trace);

/// Multiples of sigma used as selection targets, in selection order.
inline constexpr double kRepresentativeTargets[6] = {+2.0, +2.0, -2.0, -2.0, +3.0, -3.0};

/// Picks six distinct one-hour traces whose means match {+2,+2,-2,-2,+3,-3}
/// sigma. The match band starts at `tolerance_sigma`*sigma and doubles until
/// enough distinct hours qualify; candidates are restricted to [-3 sigma, 3 sigma].
/// Throws InfeasibleError naming the target when no band up to the full
/// interval yields a qualifier.
Selection select_representative(const AgcTrace& trace, const AgcStats& stats, std::uint64_t seed,
                                 double tolerance_sigma = 0.1);

void write_selection_csv(std::ostream& out, const Selection& selection);

struct SynthesisOptions {
    double dt_seconds = 2.0;
    double time_constant_s = 120.0;  // mean-reversion time of the OU recurrence
    double stationary_sd = 0.5;
};

/// Mean-reverting noise, reflected at +-1, then shifted per hour so each
/// hour's realized mean equals its target (to 1e-9) with samples kept in [-1, 1].
/// `target_hourly_means` must have `hours` entries, each in (-1, 1).
AgcTrace synthesize_agc(std::uint64_t seed, std::size_t hours, std::span<const double> target_hourly_means,
                        const SynthesisOptions& options = {});

struct SyntheticYear {
    std::size_t hours = 8760;
    double target_mean = -0.021;  // hourly-mean statistics the targets are drawn from
    double target_sd = 0.272;
    double max_abs_target = 0.95;  // targets are redrawn outside this bound
    SynthesisOptions synthesis{};
};

/// Draws hourly targets from N(target_mean, target_sd), then synthesizes.
AgcTrace synthesize_year(std::uint64_t seed, const SyntheticYear& spec = {});

/// baseload_mw + scale_mw * (hour repeated k_hours times).
ReferenceSignal make_reference(const AgcTrace& hour, double scale_mw, int k_hours, double baseload_mw);

}  // namespace derflex
