#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include "derflex/agc.hpp"
#include "derflex/coordinator_pem.hpp"
#include "derflex/devices.hpp"
#include "derflex/errors.hpp"
#include "derflex/scoring.hpp"

namespace derflex {

enum class Coordinator { CC, PEM };

/// How a fleet of a given size is built and simulated.
struct SimulationSetup {
    DeviceKind kind = DeviceKind::Ess;
    EssParams ess{};
    EwhParams ewh{};
    double heterogeneity_z = 0.0;
    Coordinator coordinator = Coordinator::PEM;
    PemParams pem{};
    DrawProfile draw_profile{};
    int start_hour = 0;
    double burn_in_s = 900.0;
    std::size_t seeds = 3;  // replicate runs per evaluation; the median precision is used
    std::uint64_t base_seed = 1;
    double dt_seconds = 2.0;
};

struct FlexQuery {
    SimulationSetup setup{};
    int k_hours = 1;
    /// 1 MW-scaled AGC references without baseload; the evaluator adds the
    /// fleet's nominal consumption for water heaters.
    std::vector<ReferenceSignal> signals;
    double x_p_des = 0.70;
    std::size_t n_start = 100;
    std::size_t delta_n = 200;
    std::size_t n_max = 0;  // 0: 100 * (1000 kW / rated device power)
    unsigned threads = 1;

    void validate() const;
    std::size_t effective_n_max() const;
};

struct SearchPoint {
    std::size_t n = 0;
    double x_p = 0.0;
};

struct FlexResult {
    std::size_t n_min = 0;
    double kw_per_device = 0.0;
    std::vector<std::size_t> per_signal_n_min;
    std::vector<std::vector<SearchPoint>> score_trajectory;  // per signal
};

/// Raised when some signal still fails at the fleet-size cap.
class CapExceeded : public InfeasibleError {
public:
    CapExceeded(const std::string& what, std::vector<std::vector<SearchPoint>> trajectory, std::size_t cap)
        : InfeasibleError(what), trajectory_(std::move(trajectory)), cap_(cap) {}
    const std::vector<std::vector<SearchPoint>>& trajectory() const { return trajectory_; }
    std::size_t cap() const { return cap_; }

private:
    std::vector<std::vector<SearchPoint>> trajectory_;
    std::size_t cap_;
};

/// Precision achieved by a fleet of size n on signal i.
using Evaluator = std::function<double(std::size_t n, std::size_t signal_index)>;

/// Minimum fleet size search. Each signal starts at n_start and grows by
/// delta_n until its precision strictly exceeds x_p_des; the result is the
/// maximum over signals. Signals are searched concurrently.
FlexResult find_n_min(const FlexQuery& query, const Evaluator& evaluator);

/// 1000 / n.
double kw_per_device(std::size_t n_min);

/// Builds the fleet for (n, signal, replicate).
Fleet build_setup_fleet(const SimulationSetup& setup, std::size_t n, std::uint64_t seed);

/// Nominal consumption of a fleet at its setpoints for the given hour, kW.
double fleet_baseload_kw(const Fleet& fleet, int hour_of_day);

/// Simulates one replicate and returns the trace (reference includes baseload).
FleetTrace run_replicate(const SimulationSetup& setup, std::size_t n, const ReferenceSignal& signal,
                         std::size_t signal_index, std::size_t replicate);
FleetTrace run_fleet(const SimulationSetup& setup, Fleet fleet, const ReferenceSignal& signal, std::uint64_t seed);

/// Scores the regulation component of a trace (baseload removed from both sides).
ScoreReport score_trace(const FleetTrace& trace);

/// Median precision over `setup.seeds` replicates.
Evaluator make_simulation_evaluator(const FlexQuery& query);

double median(std::vector<double> values);

// ---- experiment drivers ----

struct HourlyOptions {
    std::size_t n_start_peak = 2500;
    std::size_t n_start_offpeak = 5000;
    std::size_t delta_n = 200;
};

struct HourlyFlex {
    int hour = 0;
    bool peak = false;
    double draw_liters_per_s = 0.0;
    double baseload_kw_per_device = 0.0;
    std::optional<FlexResult> result;  // empty when the cap was reached
    std::size_t cap = 0;
    /// kW-per-device, or the 1000/cap upper bound when capped.
    double zeta() const;
};

/// Peak hours are those whose draw is at least the daily mean draw.
bool is_peak_hour(const DrawProfile& profile, int hour);

/// Per-hour water-heater flexibility. `query.setup.kind` must be Ewh.
std::vector<HourlyFlex> hourly_ewh_flexibility(const FlexQuery& query, const std::vector<int>& hours,
                                               const HourlyOptions& options = {});

/// Device counts for a 1 MW mixture: round-half-up of 1000 z / zeta per type.
std::pair<std::size_t, std::size_t> mixture_fleet(double z_ess, double z_ewh, double zeta_ess, double zeta_ewh);

struct MixtureEvaluation {
    std::size_t n_ess = 0;
    std::size_t n_ewh = 0;
    std::vector<double> per_signal_precision;  // median over replicates
    double min_precision = 0.0;
};

/// Simulates the mixed fleet (PEM) on every signal of `query`.
MixtureEvaluation evaluate_mixture(const FlexQuery& query, std::size_t n_ess, std::size_t n_ewh);

struct PacketMttrPoint {
    double packet_length_s = 0.0;
    double mttr_s = 0.0;
};

struct SweepRow {
    double packet_length_s = 0.0;
    double mttr_s = 0.0;
    double z = 0.0;
    int k_hours = 1;
    std::optional<FlexResult> result;
    std::size_t cap = 0;
    double zeta() const;
};

std::vector<SweepRow> sweep_packet_mttr(const FlexQuery& query, const std::vector<PacketMttrPoint>& grid);
std::vector<SweepRow> sweep_heterogeneity(const FlexQuery& query, const std::vector<double>& z_values);
/// Builds k-hour references by repeating each hour, then searches per k.
std::vector<SweepRow> sweep_horizon(const FlexQuery& query, const std::vector<AgcTrace>& hours,
                                    const std::vector<int>& k_values);

/// Finite-horizon mean of squared samples (MW^2).
double average_power(const ReferenceSignal& signal);

void write_trajectory_csv(std::ostream& out, const FlexResult& result);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace derflex
