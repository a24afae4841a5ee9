#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "derflex/agc.hpp"
#include "derflex/devices.hpp"
#include "derflex/simulation.hpp"
#include "derflex/trace.hpp"

namespace derflex {

/// Centralized full-information coordinator.
///
/// Each interval the error e = P_ref - P_dem is closed greedily. For e > 0,
/// standby devices are switched to Charge in ascending x, then discharging
/// devices to Standby in ascending x. For e < 0, standby devices go to
/// Discharge in descending x, then charging devices to Standby in descending
/// x. A device is switched only if doing so strictly reduces |e|; the pass
/// over a group stops at the first device that would not. Ties in x go to the
/// lower index. A Charge->Discharge switch always takes two intervals.

struct CcCommand {
    std::size_t device_index = 0;
    Mode target_mode = Mode::Standby;  // never OptOut
};

std::vector<CcCommand> cc_dispatch(const Fleet& fleet, double p_ref_kw, double p_dem_kw);

void apply_commands(Fleet& fleet, const std::vector<CcCommand>& commands);

/// Devices at physical limits (empty/full battery, heater at the scald
/// limit) are returned to Standby.
void force_idle_at_limits(Fleet& fleet);

FleetTrace simulate_cc(Fleet fleet, const ReferenceSignal& ref, std::uint64_t seed, const SimOptions& options = {});

}  // namespace derflex
