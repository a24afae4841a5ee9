#include "derflex/coordinator_cc.hpp"

#include <algorithm>
#include <cmath>

namespace derflex {

namespace {

bool can_charge(const Device& d) {
    if (d.kind() == DeviceKind::Ess) return d.state.x < 1.0;
    return d.state.x < d.x_hi() + kEwhSafetyMarginF;
}

bool can_discharge(const Device& d) { return d.kind() == DeviceKind::Ess && d.state.x > 0.0; }

// Devices in `mode` passing `eligible`, ordered by x (ties by index).
template <class Pred>
std::vector<std::size_t> ordered(const Fleet& fleet, Mode mode, Pred eligible, bool descending) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < fleet.devices.size(); ++i) {
        const auto& d = fleet.devices[i];
        if (d.state.mode == mode && eligible(d)) idx.push_back(i);
    }
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const double xa = fleet.devices[a].state.x;
        const double xb = fleet.devices[b].state.x;
        if (xa != xb) return descending ? xa > xb : xa < xb;
        return a < b;
    });
    return idx;
}

// Walks `candidates`, applying `delta` (the change in P_dem) while it
// strictly reduces |e|.
template <class Delta>
void close_gap(const Fleet& fleet, const std::vector<std::size_t>& candidates, Mode target, Delta delta,
               double& error, std::vector<CcCommand>& out) {
    for (std::size_t i : candidates) {
        const double next = error - delta(fleet.devices[i]);
        if (!(std::abs(next) < std::abs(error))) break;
        error = next;
        out.push_back({i, target});
    }
}

}  // namespace

std::vector<CcCommand> cc_dispatch(const Fleet& fleet, double p_ref_kw, double p_dem_kw) {
    std::vector<CcCommand> out;
    double error = p_ref_kw - p_dem_kw;
    if (error > 0.0) {
        close_gap(fleet, ordered(fleet, Mode::Standby, can_charge, false), Mode::Charge,
                  [](const Device& d) { return d.charge_rate_kw(); }, error, out);
        if (error > 0.0) {
            close_gap(fleet, ordered(fleet, Mode::Discharge, [](const Device&) { return true; }, false),
                      Mode::Standby, [](const Device& d) { return d.discharge_rate_kw(); }, error, out);
        }
    } else if (error < 0.0) {
        close_gap(fleet, ordered(fleet, Mode::Standby, can_discharge, true), Mode::Discharge,
                  [](const Device& d) { return -d.discharge_rate_kw(); }, error, out);
        if (error < 0.0) {
            close_gap(fleet, ordered(fleet, Mode::Charge, [](const Device&) { return true; }, true),
                      Mode::Standby, [](const Device& d) { return -d.charge_rate_kw(); }, error, out);
        }
    }
    return out;
}

void apply_commands(Fleet& fleet, const std::vector<CcCommand>& commands) {
    for (const auto& c : commands) {
        auto& s = fleet.devices.at(c.device_index).state;
        s.mode = c.target_mode;
        s.optout = OptOutAction::None;
        s.packet_remaining_s = 0.0;
    }
}

void force_idle_at_limits(Fleet& fleet) {
    for (auto& d : fleet.devices) {
        auto& s = d.state;
        if (s.mode == Mode::Charge && !can_charge(d)) s.mode = Mode::Standby;
        if (s.mode == Mode::Discharge && !can_discharge(d)) s.mode = Mode::Standby;
    }
}

FleetTrace simulate_cc(Fleet fleet, const ReferenceSignal& ref, std::uint64_t /*seed*/, const SimOptions& options) {
    check_dt(fleet, ref);
    const double dt = fleet.dt_seconds;
    const auto burn_steps = static_cast<long>(std::llround(options.burn_in_s / dt));

    FleetTrace trace;
    trace.dt_seconds = dt;
    trace.baseload_kw = ref.baseload_mw * 1000.0;
    trace.reserve(ref.samples.size(), false);

    double p_dem = aggregate_power_kw(fleet);
    const long total = burn_steps + static_cast<long>(ref.samples.size());
    for (long step = 0; step < total; ++step) {
        const long k = step - burn_steps;
        const double t = static_cast<double>(k) * dt;
        const double p_ref = k < 0 ? trace.baseload_kw : ref.samples[static_cast<std::size_t>(k)] * 1000.0;

        apply_commands(fleet, cc_dispatch(fleet, p_ref, p_dem));
        p_dem = aggregate_power_kw(fleet);
        if (k >= 0) trace.record(t, p_ref, p_dem, fleet);

        const double draw = draw_at(fleet, options, t);
        for (auto& d : fleet.devices) step_device(d, dt, draw);
        force_idle_at_limits(fleet);
        p_dem = aggregate_power_kw(fleet);
    }
    return trace;
}

}  // namespace derflex
