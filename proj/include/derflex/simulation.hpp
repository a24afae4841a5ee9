#pragma once

#include <cmath>
#include <stdexcept>

#include "derflex/agc.hpp"
#include "derflex/devices.hpp"

namespace derflex {

struct SimOptions {
    // Simulated time at the reference baseload before the recorded horizon.
    double burn_in_s = 0.0;
    // Hour of day at the start of the recorded horizon; selects water draw.
    int start_hour = 0;
};

/// Water draw for simulation time t (seconds from the start of the recorded
/// horizon; negative during burn-in).
inline double draw_at(const Fleet& fleet, const SimOptions& options, double t) {
    const double hours = static_cast<double>(options.start_hour) + t / 3600.0;
    long h = static_cast<long>(std::floor(hours)) % 24;
    if (h < 0) h += 24;
    return fleet.water_draw_profile[static_cast<std::size_t>(h)];
}

/// Aggregate grid power of the fleet in kW.
inline double aggregate_power_kw(const Fleet& fleet) {
    double p = 0.0;
    for (const auto& d : fleet.devices) p += d.power_kw();
    return p;
}

inline void check_dt(const Fleet& fleet, const ReferenceSignal& ref) {
    if (std::abs(fleet.dt_seconds - ref.dt_seconds) > 1e-12) {
        throw std::invalid_argument("reference dt does not match fleet dt");
    }
}

}  // namespace derflex
