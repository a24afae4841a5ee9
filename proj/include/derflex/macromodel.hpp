#pragma once

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "derflex/coordinator_pem.hpp"
#include "derflex/devices.hpp"
#include "derflex/errors.hpp"

namespace derflex {

// Population model of a PEM battery fleet. The state q holds the fraction of
// the fleet in each (mode, SoC bin) cell, laid out as four blocks of n_b bins:
// charging, discharging, standby, opt-out. q is the occupancy after the
// coordinator has answered requests, so h(q) is the power drawn during the
// following step.
//
// One macro step, dt_m equal to the device step:
//   drift     charging mass moves up one bin with probability r_up, discharging
//             mass down with r_down; mass leaving the band enters the opt-out
//             block at that edge.
//   opt-out   edge opt-out mass returns to the standby edge bin with
//             probability 1 / (mean recovery steps).
//   expiry    a fraction beta_minus of charge/discharge mass drops to standby.
//   requests  standby bin b requests with probability 1 - exp(-(mu_c+mu_d) dt),
//             picks charge with probability mu_c/(mu_c+mu_d), and is accepted
//             with probability beta of that direction.

enum class MacroBlock { Charge = 0, Discharge = 1, Standby = 2, OptOut = 3 };

struct MacroBins {
    std::vector<double> edges;    // n_b + 1, strictly increasing
    std::vector<double> centers;  // n_b
    double width = 0.0;

    std::size_t size() const { return centers.size(); }
};

MacroBins build_bins(double x_lo, double x_hi, std::size_t n_b);
MacroBins build_bins(const EssParams& params, std::size_t n_b);

/// q_v: bin centres repeated for the four blocks.
std::vector<double> soc_weights(const MacroBins& bins);

struct ControlFractions {
    double beta_c = 0.0;
    double beta_d = 0.0;
    double beta_minus_c = 0.0;
    double beta_minus_d = 0.0;

    void validate() const;
    /// beta_minus = dt / packet length for both directions.
    static ControlFractions with_packet_expiry(double beta_c, double beta_d, double dt_s, double packet_length_s);
};

struct MacroModel {
    EssParams ess{};
    PemParams pem{};
    double dt_seconds = 2.0;
    std::size_t n_b = 20;

    void validate() const;
    std::size_t dim() const { return 4 * n_b; }
    MacroBins bins() const { return build_bins(ess, n_b); }
    /// Fraction of a bin crossed per step while charging / discharging.
    double drift_up() const;
    double drift_down() const;
    /// Expected steps an edge opt-out needs to re-enter the band.
    double optout_dwell_bottom() const;
    double optout_dwell_top() const;
    ControlFractions control(double beta_c, double beta_d) const {
        return ControlFractions::with_packet_expiry(beta_c, beta_d, dt_seconds, pem.packet_length_s);
    }
};

inline std::size_t macro_index(MacroBlock block, std::size_t bin, std::size_t n_b) {
    return static_cast<std::size_t>(block) * n_b + bin;
}

/// Throws std::invalid_argument unless q is a distribution of the right size.
void validate_macro_state(const std::vector<double>& q, std::size_t dim);

std::vector<double> macro_step(const MacroModel& model, const std::vector<double>& q, const ControlFractions& ctrl);

/// Column-stochastic transition matrix, row-major dim x dim: q' = A q.
std::vector<double> transition_matrix(const MacroModel& model, const ControlFractions& ctrl);

/// Power per device in kW for occupancy q. Opt-out bins in the lower half of
/// the band count as charging, the upper half as discharging.
double device_power_kw(const MacroModel& model, const std::vector<double>& q);
/// n devices.
double aggregate_power(const MacroModel& model, const std::vector<double>& q, double n);

/// Fleet-average SoC, (q)^T q_v.
double mean_soc(const MacroModel& model, const std::vector<double>& q);

/// All mass spread evenly over the standby block.
std::vector<double> uniform_standby(std::size_t n_b);
/// All mass spread evenly over every cell.
std::vector<double> uniform_state(std::size_t n_b);

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double spectral_gap) : std::runtime_error(what), gap_(spectral_gap) {}
    /// 1 - |lambda_2| of the transition matrix.
    double spectral_gap() const { return gap_; }

private:
    double gap_;
};

struct SteadyStateOptions {
    enum class Method { Direct, Iterate };
    Method method = Method::Direct;
    double tol = 1e-10;
    std::size_t max_iter = 5'000'000;
    /// Start for iteration; empty means uniform over all cells.
    std::vector<double> initial;
};

struct SteadyState {
    std::vector<double> q;
    double residual = 0.0;  // || q - f(q) ||_inf
    std::size_t iterations = 0;
    bool direct = false;
};

/// Stationary occupancy. Direct solves (A - I) q = 0 with sum(q) = 1 by LU and
/// falls back to iteration when the chain has several stationary states.
SteadyState steady_state(const MacroModel& model, const ControlFractions& ctrl, const SteadyStateOptions& options = {});

struct BetaPoint {
    double beta_c = 0.0;
    double beta_d = 0.0;
    double h_kw = 0.0;  // per device
    double soc = 0.0;
    double residual = 0.0;
};

/// Steady state on an n x n grid of beta in [0,1]^2 (beta_c major).
struct BetaGrid {
    std::size_t n = 0;
    std::vector<BetaPoint> points;
    const BetaPoint& at(std::size_t ic, std::size_t id) const { return points[ic * n + id]; }
};

BetaGrid evaluate_beta_grid(const MacroModel& model, std::size_t n = 101, unsigned threads = 1);
BetaPoint evaluate_beta(const MacroModel& model, double beta_c, double beta_d);

struct NominalObjective {
    enum class Kind { MinPower, MatchPower };
    Kind kind = Kind::MinPower;
    double target_kw = 0.0;  // per device, MatchPower only
};

struct NominalSolution {
    BetaPoint best;
    double objective = 0.0;
};

/// Minimises h(q*) or (h(q*) - target)^2 subject to mean SoC >= x_set. Grid
/// search, then one golden-section pass along each axis around the best cell.
/// Throws InfeasibleError reporting the highest SoC reached.
NominalSolution solve_nominal(const MacroModel& model, const BetaGrid& grid, const NominalObjective& objective,
                              bool refine = true);

struct SteadyFlexOptions {
    double eps_kw = 10.0;
    std::size_t n_start = 50;
    std::size_t delta_n = 50;
    std::size_t n_max = 0;  // 0: 100 * (1000 kW / rated power)
    std::size_t grid_n = 101;
    unsigned threads = 1;
};

struct SteadyFlexStep {
    std::size_t n = 0;
    std::vector<double> p_dem_kw;  // per signal
    bool pass = false;
};

struct SteadyFlexResult {
    std::size_t n_min = 0;
    double zeta_kw = 0.0;
    double eps_kw = 0.0;
    std::vector<double> target_kw;  // sqrt(P_avg) * 1000 per signal
    std::vector<NominalSolution> solutions;  // per signal at n_min
    std::vector<SteadyFlexStep> trajectory;
};

/// Smallest N with |N h(q*(beta)) - sqrt(P_avg,i)| <= eps for every signal,
/// where beta solves the match-power problem for that N. `avg_power_mw2`
/// holds P_avg per signal in MW^2.
SteadyFlexResult steady_state_flexibility(const MacroModel& model, const std::vector<double>& avg_power_mw2,
                                          const SteadyFlexOptions& options = {});

/// Grid table: beta_c,beta_d,feasible,h_kw,soc,slack,residual.
void write_grid_csv(std::ostream& out, const MacroModel& model, const BetaGrid& grid);
/// block,bin,center,q.
void write_state_csv(std::ostream& out, const MacroModel& model, const std::vector<double>& q);
void write_steady_flex_csv(std::ostream& out, const SteadyFlexResult& result);

}  // namespace derflex
