#include "derflex/coordinator_pem.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "derflex/errors.hpp"

namespace derflex {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

// Uniform on [0, 1) from the top 53 bits.
inline double unit01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
}

void PemParams::validate() const {
    if (!(packet_length_s > 0.0) || !(mttr_s > 0.0) || !(poll_dt_s > 0.0)) {
        throw std::invalid_argument("PEM packet length, MTTR and poll interval must be positive");
    }
}

DeadBand dead_band(const EssParams& p) { return {p.x_lo, p.x_set, p.x_hi}; }
DeadBand dead_band(const EwhParams& p) { return {p.x_lo, p.x_set, p.x_hi}; }

double charge_request_rate(double x, const DeadBand& b, const PemParams& pem) {
    if (x >= b.hi) return 0.0;
    if (x <= b.lo) return kInf;
    return ((b.hi - x) / (x - b.lo)) * ((b.set - b.lo) / (b.hi - b.set)) / pem.mttr_s;
}

double charge_request_rate(double x, const EssParams& params, const PemParams& pem) {
    return charge_request_rate(x, dead_band(params), pem);
}

double charge_request_rate(double x, const EwhParams& params, const PemParams& pem) {
    return charge_request_rate(x, dead_band(params), pem);
}

double discharge_request_rate(double x, const DeadBand& b, const PemParams& pem) {
    if (x <= b.lo) return 0.0;
    if (x >= b.hi) return kInf;
    return ((x - b.lo) / (b.hi - x)) * ((b.hi - b.set) / (b.set - b.lo)) / pem.mttr_s;
}

double discharge_request_rate(double x, const EssParams& params, const PemParams& pem) {
    return discharge_request_rate(x, dead_band(params), pem);
}

double discharge_request_rate(double, const EwhParams&, const PemParams&) {
    throw UnsupportedDirection("water heaters cannot request discharge packets");
}

double request_probability(double mu, double dt_s) {
    if (mu < 0.0) throw std::invalid_argument("request rate must be nonnegative");
    if (std::isinf(mu)) return 1.0;
    return -std::expm1(-mu * dt_s);
}

std::vector<PemRequest> pem_poll(const Fleet& fleet, const PemParams& pem, std::mt19937_64& rng) {
    std::vector<PemRequest> out;
    for (std::size_t i = 0; i < fleet.devices.size(); ++i) {
        const auto& d = fleet.devices[i];
        if (d.state.mode != Mode::Standby) continue;
        const double x = d.state.x;
        double mu_c = 0.0;
        double mu_d = 0.0;
        if (const auto* ess = std::get_if<EssParams>(&d.params)) {
            if (x < ess->x_lo || x > ess->x_hi) continue;
            mu_c = charge_request_rate(x, *ess, pem);
            mu_d = discharge_request_rate(x, *ess, pem);
        } else {
            const auto& ewh = std::get<EwhParams>(d.params);
            if (x < ewh.x_lo || x > ewh.x_hi) continue;
            mu_c = charge_request_rate(x, ewh, pem);
        }
        const double total = mu_c + mu_d;
        if (total == 0.0) continue;
        if (unit01(rng) >= request_probability(total, pem.poll_dt_s)) continue;
        double p_charge = 0.0;
        if (std::isinf(mu_c)) {
            p_charge = 1.0;
        } else if (!std::isinf(mu_d)) {
            p_charge = mu_c / total;
        }
        const Direction dir = unit01(rng) < p_charge ? Direction::Charge : Direction::Discharge;
        out.push_back({i, dir});
    }
    return out;
}

std::vector<PemRequest> pem_grant(const std::vector<PemRequest>& requests, double p_dem_kw, double p_ref_kw,
                                  const Fleet& fleet) {
    std::vector<PemRequest> accepted;
    double error = p_ref_kw - p_dem_kw;
    for (const auto& r : requests) {
        if (r.direction != Direction::Charge) continue;
        const double next = error - fleet.devices[r.device_index].charge_rate_kw();
        if (!(std::abs(next) < std::abs(error))) break;
        error = next;
        accepted.push_back(r);
    }
    for (const auto& r : requests) {
        if (r.direction != Direction::Discharge) continue;
        const double next = error + fleet.devices[r.device_index].discharge_rate_kw();
        if (!(std::abs(next) < std::abs(error))) break;
        error = next;
        accepted.push_back(r);
    }
    return accepted;
}

std::vector<PemRequest> grant_fixed_fraction(const std::vector<PemRequest>& requests, double beta_c, double beta_d,
                                             std::mt19937_64& rng) {
    std::vector<PemRequest> accepted;
    for (const auto& r : requests) {
        const double beta = r.direction == Direction::Charge ? beta_c : beta_d;
        if (unit01(rng) < beta) accepted.push_back(r);
    }
    return accepted;
}

void apply_grants(Fleet& fleet, const std::vector<PemRequest>& granted, const PemParams& pem) {
    for (const auto& r : granted) {
        auto& s = fleet.devices.at(r.device_index).state;
        if (s.mode != Mode::Standby) throw std::logic_error("granted a device that is not in standby");
        s.mode = r.direction == Direction::Charge ? Mode::Charge : Mode::Discharge;
        s.packet_remaining_s = pem.packet_length_s;
    }
}

namespace {

struct StepTally {
    double power_during = 0.0;  // kW drawn while stepping
    double power_after = 0.0;   // kW implied by the modes after the step
    int counts[4] = {0, 0, 0, 0};
    std::size_t entered_optout = 0;
};

// One pass: tally the modes in force, advance physics and packet timers,
// apply the opt-out rules, and tally the resulting power.
StepTally step_fleet(Fleet& fleet, double dt_s, double draw_liters_per_s) {
    StepTally tally;
    for (auto& d : fleet.devices) {
        auto& s = d.state;
        ++tally.counts[static_cast<int>(s.mode)];
        tally.power_during += d.power_kw();

        step_device(d, dt_s, draw_liters_per_s);
        if (s.mode == Mode::Charge || s.mode == Mode::Discharge) {
            s.packet_remaining_s -= dt_s;
            // Tolerate accumulated rounding in the countdown.
            if (s.packet_remaining_s <= 1e-9) {
                s.packet_remaining_s = 0.0;
                s.mode = Mode::Standby;
            }
        }
        const double lo = d.x_lo();
        const double hi = d.x_hi();
        OptOutAction action = OptOutAction::None;
        if (s.x < lo) {
            action = OptOutAction::Charge;
        } else if (s.x > hi) {
            action = d.kind() == DeviceKind::Ess ? OptOutAction::Discharge : OptOutAction::Idle;
        }
        if (action != OptOutAction::None) {
            if (s.mode != Mode::OptOut) ++tally.entered_optout;
            s.mode = Mode::OptOut;
            s.optout = action;
            s.packet_remaining_s = 0.0;
        } else if (s.mode == Mode::OptOut) {
            s.mode = Mode::Standby;
            s.optout = OptOutAction::None;
        }
        tally.power_after += d.power_kw();
    }
    return tally;
}

}  // namespace

std::size_t pem_step_and_optout(Fleet& fleet, double dt_s, double draw_liters_per_s) {
    return step_fleet(fleet, dt_s, draw_liters_per_s).entered_optout;
}

FleetTrace simulate_pem(Fleet fleet, const ReferenceSignal& ref, const PemParams& pem, std::uint64_t seed,
                        const PemSimOptions& options) {
    pem.validate();
    check_dt(fleet, ref);
    if (std::abs(pem.poll_dt_s - fleet.dt_seconds) > 1e-12) {
        throw std::invalid_argument("PEM poll interval does not match fleet dt");
    }
    const double dt = fleet.dt_seconds;
    const auto burn_steps = static_cast<long>(std::llround(options.burn_in_s / dt));

    FleetTrace trace;
    trace.dt_seconds = dt;
    trace.baseload_kw = ref.baseload_mw * 1000.0;
    trace.reserve(ref.samples.size(), true);

    std::mt19937_64 rng(seed);
    double p_before = aggregate_power_kw(fleet);
    const long total = burn_steps + static_cast<long>(ref.samples.size());
    for (long step = 0; step < total; ++step) {
        const long k = step - burn_steps;
        const double t = static_cast<double>(k) * dt;
        const double p_ref = k < 0 ? trace.baseload_kw : ref.samples[static_cast<std::size_t>(k)] * 1000.0;

        const auto requests = pem_poll(fleet, pem, rng);
        const auto granted = options.policy.kind == GrantPolicy::Kind::Tracking
                                 ? pem_grant(requests, p_before, p_ref, fleet)
                                 : grant_fixed_fraction(requests, options.policy.beta_c, options.policy.beta_d, rng);
        apply_grants(fleet, granted, pem);

        const StepTally tally = step_fleet(fleet, dt, draw_at(fleet, options, t));
        p_before = tally.power_after;
        if (k < 0) continue;

        trace.t_s.push_back(t);
        trace.p_ref_kw.push_back(p_ref);
        trace.p_dem_kw.push_back(tally.power_during);
        trace.n_charge.push_back(tally.counts[static_cast<int>(Mode::Charge)]);
        trace.n_discharge.push_back(tally.counts[static_cast<int>(Mode::Discharge)]);
        trace.n_standby.push_back(tally.counts[static_cast<int>(Mode::Standby)]);
        trace.n_optout.push_back(tally.counts[static_cast<int>(Mode::OptOut)]);
        int rc = 0;
        int gc = 0;
        for (const auto& r : requests) rc += r.direction == Direction::Charge;
        for (const auto& r : granted) gc += r.direction == Direction::Charge;
        trace.n_req_c.push_back(rc);
        trace.n_req_d.push_back(static_cast<int>(requests.size()) - rc);
        trace.n_grant_c.push_back(gc);
        trace.n_grant_d.push_back(static_cast<int>(granted.size()) - gc);
        trace.optout_events += tally.entered_optout;
    }
    return trace;
}

}  // namespace derflex
