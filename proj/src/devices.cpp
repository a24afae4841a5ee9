#include "derflex/devices.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "derflex/errors.hpp"

namespace derflex {

bool EssParams::valid() const {
    return p_charge_rate > 0.0 && p_discharge_rate > 0.0 && eta_c > 0.0 && eta_c <= 1.0 && eta_d > 0.0 &&
           eta_d <= 1.0 && e_cap > 0.0 && 0.0 <= x_lo && x_lo < x_set && x_set < x_hi && x_hi <= 1.0;
}

bool EwhParams::valid() const {
    return p_charge_rate > 0.0 && tank_liters > 0.0 && loss_coeff >= 0.0 && x_lo < x_set && x_set < x_hi &&
           std::isfinite(x_amb) && std::isfinite(inlet_temp);
}

double EwhParams::heat_rate_f_per_s() const {
    return p_charge_rate * kBtuPerKwh / (tank_liters * kLbPerLiter) / 3600.0;
}

std::size_t Fleet::count(DeviceKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(devices.begin(), devices.end(), [kind](const Device& d) { return d.kind() == kind; }));
}

DeviceState ess_step(const DeviceState& state, const EssParams& params, double dt_s) {
    DeviceState next = state;
    const double dt_h = dt_s / 3600.0;
    if (is_charging(state)) {
        next.x += params.eta_c * params.p_charge_rate * dt_h / params.e_cap;
    } else if (is_discharging(state)) {
        next.x -= params.p_discharge_rate * dt_h / (params.eta_d * params.e_cap);
    }
    next.x = std::clamp(next.x, 0.0, 1.0);
    return next;
}

DeviceState ewh_step(const DeviceState& state, const EwhParams& params, double dt_s, double draw_liters_per_s) {
    DeviceState next = state;
    const double heat = is_charging(state) ? params.heat_rate_f_per_s() : 0.0;
    const double loss = params.loss_coeff * (state.x - params.x_amb);
    const double draw = (draw_liters_per_s / params.tank_liters) * (state.x - params.inlet_temp);
    next.x += dt_s * (heat - loss - draw);
    return next;
}

void step_device(Device& device, double dt_s, double draw_liters_per_s) {
    if (const auto* ess = std::get_if<EssParams>(&device.params)) {
        device.state = ess_step(device.state, *ess, dt_s);
    } else {
        device.state = ewh_step(device.state, std::get<EwhParams>(device.params), dt_s, draw_liters_per_s);
    }
}

namespace {

double draw_positive(std::mt19937_64& rng, double mean, double z) {
    if (z == 0.0) return mean;
    std::normal_distribution<double> dist(mean, z * std::abs(mean));
    for (;;) {
        const double v = dist(rng);
        if (v > 0.0) return v;
    }
}

double draw_in(std::mt19937_64& rng, double mean, double z, double lo_exclusive, double hi_inclusive) {
    if (z == 0.0) return mean;
    std::normal_distribution<double> dist(mean, z * std::abs(mean));
    for (;;) {
        const double v = dist(rng);
        if (v > lo_exclusive && v <= hi_inclusive) return v;
    }
}

// Redraws the whole (lo, set, hi) triple until it is ordered and inside [floor, ceil].
void draw_band(std::mt19937_64& rng, double z, double& lo, double& set, double& hi, double floor, double ceil) {
    if (z == 0.0) return;
    std::normal_distribution<double> dlo(lo, z * std::abs(lo));
    std::normal_distribution<double> dset(set, z * std::abs(set));
    std::normal_distribution<double> dhi(hi, z * std::abs(hi));
    for (;;) {
        const double a = dlo(rng);
        const double b = dset(rng);
        const double c = dhi(rng);
        if (floor <= a && a < b && b < c && c <= ceil) {
            lo = a;
            set = b;
            hi = c;
            return;
        }
    }
}

void check_build_args(std::size_t n, double z, double dt) {
    if (n == 0) throw std::invalid_argument("fleet must contain at least one device");
    if (!(z >= 0.0 && z <= 1.0)) throw std::invalid_argument("heterogeneity z must lie in [0, 1]");
    if (!(dt > 0.0)) throw std::invalid_argument("fleet dt must be positive");
}

}  // namespace

Fleet build_fleet(const EssParams& nominal, std::size_t n, double z, std::uint64_t seed,
                  const FleetBuildOptions& options) {
    check_build_args(n, z, options.dt_seconds);
    if (!nominal.valid()) throw std::invalid_argument("nominal ESS parameters are not physically valid");

    std::mt19937_64 rng(seed);
    Fleet fleet;
    fleet.dt_seconds = options.dt_seconds;
    fleet.water_draw_profile = options.draw_profile;
    fleet.devices.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        EssParams p = nominal;
        p.p_charge_rate = draw_positive(rng, nominal.p_charge_rate, z);
        p.p_discharge_rate = draw_positive(rng, nominal.p_discharge_rate, z);
        p.eta_c = draw_in(rng, nominal.eta_c, z, 0.0, 1.0);
        p.eta_d = draw_in(rng, nominal.eta_d, z, 0.0, 1.0);
        p.e_cap = draw_positive(rng, nominal.e_cap, z);
        draw_band(rng, z, p.x_lo, p.x_set, p.x_hi, 0.0, 1.0);

        std::uniform_real_distribution<double> init(p.x_lo, p.x_hi);
        DeviceState s;
        s.x = init(rng);
        s.rng_stream = i;
        fleet.devices.push_back({p, s});
    }
    return fleet;
}

Fleet build_fleet(const EwhParams& nominal, std::size_t n, double z, std::uint64_t seed,
                  const FleetBuildOptions& options) {
    check_build_args(n, z, options.dt_seconds);
    if (!nominal.valid()) throw std::invalid_argument("nominal EWH parameters are not physically valid");

    std::mt19937_64 rng(seed);
    Fleet fleet;
    fleet.dt_seconds = options.dt_seconds;
    fleet.water_draw_profile = options.draw_profile;
    fleet.devices.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        EwhParams p = nominal;
        p.p_charge_rate = draw_positive(rng, nominal.p_charge_rate, z);
        p.tank_liters = draw_positive(rng, nominal.tank_liters, z);
        draw_band(rng, z, p.x_lo, p.x_set, p.x_hi, -1e300, 1e300);
        // Ambient must stay below the dead-band or the tank could never cool into it.
        p.x_amb = z == 0.0 ? nominal.x_amb : draw_in(rng, nominal.x_amb, z, -1e300, p.x_lo);

        std::uniform_real_distribution<double> init(p.x_lo, p.x_hi);
        DeviceState s;
        s.x = init(rng);
        s.rng_stream = i;
        fleet.devices.push_back({p, s});
    }
    check_thermal_stability(fleet);
    return fleet;
}

Fleet merge_fleets(Fleet a, const Fleet& b) {
    if (a.dt_seconds != b.dt_seconds) throw std::invalid_argument("cannot merge fleets with different dt");
    const bool a_has_profile =
        std::any_of(a.water_draw_profile.begin(), a.water_draw_profile.end(), [](double v) { return v != 0.0; });
    if (!a_has_profile) a.water_draw_profile = b.water_draw_profile;
    const std::size_t offset = a.devices.size();
    for (Device d : b.devices) {
        d.state.rng_stream += offset;
        a.devices.push_back(d);
    }
    return a;
}

void check_thermal_stability(const Fleet& fleet) {
    const double max_draw = *std::max_element(fleet.water_draw_profile.begin(), fleet.water_draw_profile.end());
    for (const auto& d : fleet.devices) {
        if (const auto* ewh = std::get_if<EwhParams>(&d.params)) {
            const double bound = 0.1 / (ewh->loss_coeff + max_draw / ewh->tank_liters);
            if (fleet.dt_seconds > bound) {
                throw std::invalid_argument("fleet dt " + std::to_string(fleet.dt_seconds) +
                                            " s exceeds the thermal stability bound " + std::to_string(bound) +
                                            " s");
            }
        }
    }
}

DrawProfile default_draw_profile() {
    // Liters per second per heater: morning (8-11 am) and evening (8-11 pm)
    // peaks, trough at 3-5 pm.
    return {0.00015, 0.00010, 0.00010, 0.00010, 0.00015, 0.00030, 0.00070, 0.00100,
            0.00130, 0.00130, 0.00120, 0.00100, 0.00080, 0.00060, 0.00040, 0.00020,
            0.00020, 0.00040, 0.00070, 0.00090, 0.00120, 0.00120, 0.00100, 0.00050};
}

DrawProfile zero_draw_profile() { return DrawProfile{}; }

double water_draw(const DrawProfile& profile, int hour_of_day) {
    if (hour_of_day < 0 || hour_of_day > 23) {
        throw std::out_of_range("hour of day must be in 0..23, got " + std::to_string(hour_of_day));
    }
    return profile[static_cast<std::size_t>(hour_of_day)];
}

DrawProfile parse_draw_profile(std::istream& in) {
    DrawProfile profile{};
    std::array<bool, 24> seen{};
    std::string line;
    std::size_t line_no = 0;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw DataError("draw profile line " + std::to_string(line_no) + ": expected 'hour,liters_per_s'");
        }
        int hour = 0;
        double rate = 0.0;
        try {
            hour = std::stoi(line.substr(0, comma));
            rate = std::stod(line.substr(comma + 1));
        } catch (const std::exception&) {
            if (rows == 0 && line_no == 1) continue;  // header row
            throw DataError("draw profile line " + std::to_string(line_no) + ": not numeric: '" + line + "'");
        }
        if (hour < 0 || hour > 23 || seen[static_cast<std::size_t>(hour)]) {
            throw DataError("draw profile line " + std::to_string(line_no) + ": bad or repeated hour");
        }
        if (!(rate >= 0.0)) throw DataError("draw profile line " + std::to_string(line_no) + ": negative draw");
        seen[static_cast<std::size_t>(hour)] = true;
        profile[static_cast<std::size_t>(hour)] = rate;
        ++rows;
    }
    if (rows != 24) throw DataError("draw profile must have 24 rows, found " + std::to_string(rows));
    return profile;
}

DrawProfile load_draw_profile(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open draw profile: " + path.string());
    return parse_draw_profile(in);
}

double ewh_nominal_power_kw(const EwhParams& params, double draw_liters_per_s) {
    const double demand = params.loss_coeff * (params.x_set - params.x_amb) +
                          (draw_liters_per_s / params.tank_liters) * (params.x_set - params.inlet_temp);
    return params.p_charge_rate * std::max(0.0, demand) / params.heat_rate_f_per_s();
}

}  // namespace derflex
