#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "derflex/agc.hpp"
#include "derflex/devices.hpp"
#include "derflex/simulation.hpp"
#include "derflex/trace.hpp"

namespace derflex {

struct PemParams {
    double packet_length_s = 120.0;
    double mttr_s = 120.0;
    double poll_dt_s = 2.0;

    void validate() const;
};

struct DeadBand {
    double lo = 0.0;
    double set = 0.0;
    double hi = 0.0;
};

DeadBand dead_band(const EssParams& p);
DeadBand dead_band(const EwhParams& p);

enum class Direction { Charge, Discharge };

struct PemRequest {
    std::size_t device_index = 0;
    Direction direction = Direction::Charge;
};

/// Request rate (1/s). 0 at or above the upper band edge, +inf at or below the
/// lower edge; inside, (1/MTTR) * ((hi - x)/(x - lo)) * ((set - lo)/(hi - set)),
/// which equals 1/MTTR at the setpoint and falls strictly with x.
double charge_request_rate(double x, const DeadBand& band, const PemParams& pem);
double charge_request_rate(double x, const EssParams& params, const PemParams& pem);
double charge_request_rate(double x, const EwhParams& params, const PemParams& pem);

/// Mirror image of the charge rate: 0 at or below the lower edge, +inf at or
/// above the upper edge.
double discharge_request_rate(double x, const DeadBand& band, const PemParams& pem);
double discharge_request_rate(double x, const EssParams& params, const PemParams& pem);
/// Water heaters cannot discharge; always throws UnsupportedDirection.
double discharge_request_rate(double x, const EwhParams& params, const PemParams& pem);

/// 1 - exp(-mu dt); 1 for infinite mu.
double request_probability(double mu, double dt_s);

/// Standby devices inside their dead-band race a charge clock against a
/// discharge clock: a request fires with probability 1 - exp(-(mu_c+mu_d) dt)
/// and is a charge request with probability mu_c / (mu_c + mu_d).
std::vector<PemRequest> pem_poll(const Fleet& fleet, const PemParams& pem, std::mt19937_64& rng);

/// Greedy error reduction with e = P_ref - P_dem: charge requests in device
/// order are accepted while each acceptance strictly reduces |e|, then
/// discharge requests likewise. Returns the accepted requests.
std::vector<PemRequest> pem_grant(const std::vector<PemRequest>& requests, double p_dem_kw, double p_ref_kw,
                                  const Fleet& fleet);

/// Accepts each charge request with probability beta_c and each discharge
/// request with probability beta_d, independent of any reference.
std::vector<PemRequest> grant_fixed_fraction(const std::vector<PemRequest>& requests, double beta_c, double beta_d,
                                             std::mt19937_64& rng);

/// Granted devices enter the requested mode for one packet.
void apply_grants(Fleet& fleet, const std::vector<PemRequest>& granted, const PemParams& pem);

/// Physics for one dt, packet countdown (expiry returns to Standby), then the
/// opt-out rules: below the band a device charges until it is back inside;
/// above it an ESS discharges and a heater idles. Returns the number of
/// devices that entered OptOut during this step.
std::size_t pem_step_and_optout(Fleet& fleet, double dt_s, double draw_liters_per_s);

struct GrantPolicy {
    enum class Kind { Tracking, FixedFraction };
    Kind kind = Kind::Tracking;
    double beta_c = 0.0;
    double beta_d = 0.0;

    static GrantPolicy tracking() { return {}; }
    static GrantPolicy fixed(double beta_c, double beta_d) { return {Kind::FixedFraction, beta_c, beta_d}; }
};

/// Closed loop: poll, grant, record, step. Default burn-in is 15 minutes at
/// the reference baseload.
struct PemSimOptions : SimOptions {
    PemSimOptions() { burn_in_s = 900.0; }
    GrantPolicy policy{};
};

FleetTrace simulate_pem(Fleet fleet, const ReferenceSignal& ref, const PemParams& pem, std::uint64_t seed,
                        const PemSimOptions& options = {});

}  // namespace derflex
