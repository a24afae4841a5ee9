#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "derflex/devices.hpp"

namespace derflex {

/// One simulation run over the scored horizon (burn-in steps are not recorded).
struct FleetTrace {
    double dt_seconds = 2.0;
    double baseload_kw = 0.0;
    std::vector<double> t_s;
    std::vector<double> p_ref_kw;
    std::vector<double> p_dem_kw;
    std::vector<int> n_charge;
    std::vector<int> n_discharge;
    std::vector<int> n_standby;
    std::vector<int> n_optout;
    // Request/grant counters; empty for centrally dispatched runs.
    std::vector<int> n_req_c;
    std::vector<int> n_req_d;
    std::vector<int> n_grant_c;
    std::vector<int> n_grant_d;
    // Number of times any device entered OptOut during the recorded horizon.
    std::size_t optout_events = 0;

    std::size_t size() const { return p_dem_kw.size(); }
    bool has_requests() const { return !n_req_c.empty(); }
    void reserve(std::size_t n, bool with_requests);
    /// Appends one step; mode counts are taken from the fleet as it is now.
    void record(double t, double ref_kw, double dem_kw, const Fleet& fleet);
};

/// Columns `t_s,p_ref_kw,p_dem_kw,n_charge,n_discharge,n_standby,n_optout`,
/// plus `n_req_c,n_req_d,n_grant_c,n_grant_d` when request counters exist.
void write_trace_csv(std::ostream& out, const FleetTrace& trace);
void write_trace_csv(const std::filesystem::path& path, const FleetTrace& trace);
FleetTrace read_trace_csv(std::istream& in);
FleetTrace read_trace_csv(const std::filesystem::path& path);

}  // namespace derflex
