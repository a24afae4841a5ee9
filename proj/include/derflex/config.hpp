#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "derflex/agc.hpp"
#include "derflex/flexibility.hpp"

namespace derflex {

inline constexpr const char* kVersion = "0.1.0";

struct SignalConfig {
    std::string source = "synthetic";  // synthetic | file
    std::string agc_file;
    double agc_dt_s = 2.0;
    SyntheticYear year{};
    double tolerance_sigma = 0.1;
    double scale_mw = 1.0;
    int k_hours = 1;
    std::vector<std::size_t> use;  // subset of the six selected hours; empty means all
};

struct SearchConfig {
    double x_p_des = 0.70;
    std::size_t n_start = 100;
    std::size_t delta_n = 200;
    std::size_t n_max = 0;
};

struct SimulateConfig {
    std::vector<std::size_t> fleet_sizes{500, 1500, 3500};
    std::size_t signal_index = 0;
};

struct SweepConfig {
    std::string type = "packet";  // packet | heterogeneity | horizon | hourly | mixture
    std::vector<PacketMttrPoint> packet_grid{{120.0, 120.0}, {300.0, 300.0}};
    std::vector<double> z_values{0.0, 0.2};
    std::vector<int> k_values{1, 2, 3, 4, 5, 6};
    std::vector<int> hours{8, 15};
    HourlyOptions hourly{};
    std::vector<double> ewh_shares{0.25, 0.5, 0.75};
    double zeta_ess = 0.91;
    double zeta_ewh = 0.25;
};

struct MacroConfig {
    std::size_t n_b = 20;
    std::size_t grid = 101;
    double eps_kw = 10.0;
    std::size_t n_start = 50;
    std::size_t delta_n = 50;
    std::size_t n_max = 0;
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::string out = "out";
    SimulationSetup setup{};
    std::string draw_profile = "default";  // default | zero | path to CSV
    SignalConfig signals{};
    SearchConfig search{};
    SimulateConfig simulate{};
    SweepConfig sweep{};
    MacroConfig macro{};
    std::string trace_file;  // input of `score`

    /// Module-level checks; throws ConfigError.
    void validate() const;
};

/// Parses a JSON document. Unknown keys and wrongly typed values raise
/// ConfigError naming the dotted key.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

/// Canonical JSON of everything that affects results (threads and the output
/// directory are left out).
std::string resolved_config_json(const ExperimentConfig& config);

/// 64-bit FNV-1a, lower-case hex.
std::string fnv1a_hex(const std::string& text);

}  // namespace derflex
