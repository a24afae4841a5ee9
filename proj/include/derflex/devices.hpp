#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <variant>
#include <vector>

namespace derflex {

/// Battery energy storage. Rates in kW, capacity in kWh, x as SoC fraction.
struct EssParams {
    double p_charge_rate = 5.0;
    double p_discharge_rate = 5.0;
    double eta_c = 0.95;
    double eta_d = 0.95;
    double e_cap = 13.5;
    double x_set = 0.5;
    double x_lo = 0.1;
    double x_hi = 0.9;

    bool valid() const;
};

/// Electric water heater, single fully mixed tank. Temperatures in degrees F.
struct EwhParams {
    double p_charge_rate = 4.0;
    double tank_liters = 303.0;
    double x_amb = 70.0;
    double x_set = 130.0;
    double x_lo = 120.0;
    double x_hi = 140.0;
    double loss_coeff = 2.0e-6;  // 1/s
    double inlet_temp = 60.0;

    bool valid() const;
    /// Heating rate in degrees F per second while the element is on.
    double heat_rate_f_per_s() const;
};

// Heater power to temperature-rate conversion: 1 kWh = 3412 BTU, 1 L of
// water = 2.2046 lb, c_p = 1 BTU/(lb F).
inline constexpr double kBtuPerKwh = 3412.0;
inline constexpr double kLbPerLiter = 2.2046;

// Heating stays blocked above x_hi + margin even under central dispatch.
inline constexpr double kEwhSafetyMarginF = 10.0;

enum class DeviceKind { Ess, Ewh };
enum class Mode { Charge, Discharge, Standby, OptOut };
/// What an opted-out device does while it recovers its dead-band.
enum class OptOutAction { None, Charge, Discharge, Idle };

struct DeviceState {
    double x = 0.0;
    Mode mode = Mode::Standby;
    OptOutAction optout = OptOutAction::None;
    double packet_remaining_s = 0.0;
    std::uint64_t rng_stream = 0;
};

using DeviceParams = std::variant<EssParams, EwhParams>;

struct Device {
    DeviceParams params;
    DeviceState state;

    DeviceKind kind() const { return std::holds_alternative<EssParams>(params) ? DeviceKind::Ess : DeviceKind::Ewh; }
    /// Grid power in kW implied by the current mode (charging positive).
    double power_kw() const;
    double charge_rate_kw() const {
        return std::visit([](const auto& p) { return p.p_charge_rate; }, params);
    }
    /// Zero for water heaters.
    double discharge_rate_kw() const {
        if (const auto* ess = std::get_if<EssParams>(&params)) return ess->p_discharge_rate;
        return 0.0;
    }
    double x_lo() const {
        return std::visit([](const auto& p) { return p.x_lo; }, params);
    }
    double x_set() const {
        return std::visit([](const auto& p) { return p.x_set; }, params);
    }
    double x_hi() const {
        return std::visit([](const auto& p) { return p.x_hi; }, params);
    }
};

using DrawProfile = std::array<double, 24>;  // liters per second per device, by hour of day

struct Fleet {
    std::vector<Device> devices;
    double dt_seconds = 2.0;
    DrawProfile water_draw_profile{};

    std::size_t size() const { return devices.size(); }
    std::size_t count(DeviceKind kind) const;
};

DeviceState ess_step(const DeviceState& state, const EssParams& params, double dt_s);
DeviceState ewh_step(const DeviceState& state, const EwhParams& params, double dt_s, double draw_liters_per_s);

/// Advances one device by dt according to its current mode.
void step_device(Device& device, double dt_s, double draw_liters_per_s);

/// True when the mode draws charging power (Charge, or OptOut charging).
inline bool is_charging(const DeviceState& s) {
    return s.mode == Mode::Charge || (s.mode == Mode::OptOut && s.optout == OptOutAction::Charge);
}
/// True when the mode injects power (Discharge, or OptOut discharging).
inline bool is_discharging(const DeviceState& s) {
    return s.mode == Mode::Discharge || (s.mode == Mode::OptOut && s.optout == OptOutAction::Discharge);
}

inline double Device::power_kw() const {
    if (is_charging(state)) return charge_rate_kw();
    if (is_discharging(state)) return -discharge_rate_kw();
    return 0.0;
}

struct FleetBuildOptions {
    double dt_seconds = 2.0;
    DrawProfile draw_profile{};
};

/// n devices around `nominal`; each parameter is drawn from N(mu, z*mu) and
/// redrawn until physically valid. Initial x is uniform over the dead-band.
Fleet build_fleet(const EssParams& nominal, std::size_t n, double heterogeneity_z, std::uint64_t seed,
                  const FleetBuildOptions& options = {});
Fleet build_fleet(const EwhParams& nominal, std::size_t n, double heterogeneity_z, std::uint64_t seed,
                  const FleetBuildOptions& options = {});

/// Concatenates two fleets that share dt; the draw profile of `a` wins unless it is all zero.
Fleet merge_fleets(Fleet a, const Fleet& b);

/// Throws std::invalid_argument when dt exceeds the explicit-Euler bound for
/// any water heater in the fleet.
void check_thermal_stability(const Fleet& fleet);

DrawProfile default_draw_profile();
DrawProfile zero_draw_profile();
double water_draw(const DrawProfile& profile, int hour_of_day);

/// CSV with rows `hour,liters_per_s` for hours 0..23; a header row is allowed.
DrawProfile load_draw_profile(const std::filesystem::path& path);
DrawProfile parse_draw_profile(std::istream& in);

/// Energy-balance consumption of one heater held at its setpoint, in kW.
double ewh_nominal_power_kw(const EwhParams& params, double draw_liters_per_s);

}  // namespace derflex
