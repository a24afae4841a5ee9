#include "derflex/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "derflex/errors.hpp"

namespace derflex {

using nlohmann::json;

namespace {

// Reads known keys from one JSON object and rejects the rest.
class Reader {
public:
    Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) throw ConfigError("config section '" + label() + "' must be an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        if (!node_.contains(key)) return;
        seen_.insert(key);
        try {
            out = node_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config key '" + path_ + key + "' has the wrong type");
        }
    }

    bool has(const char* key) const { return node_.contains(key); }

    Reader section(const char* key) {
        seen_.insert(key);
        return Reader(node_.at(key), path_ + key + ".");
    }

    const json& raw(const char* key) {
        seen_.insert(key);
        return node_.at(key);
    }

    std::string key_path(const char* key) const { return path_ + key; }

    void finish() const {
        for (const auto& item : node_.items()) {
            if (!seen_.count(item.key())) throw ConfigError("unknown config key '" + path_ + item.key() + "'");
        }
    }

private:
    std::string label() const { return path_.empty() ? "<root>" : path_.substr(0, path_.size() - 1); }

    const json& node_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_ess(Reader r, EssParams& p) {
    r.get("p_charge_rate", p.p_charge_rate);
    r.get("p_discharge_rate", p.p_discharge_rate);
    r.get("eta_c", p.eta_c);
    r.get("eta_d", p.eta_d);
    r.get("e_cap", p.e_cap);
    r.get("x_set", p.x_set);
    r.get("x_lo", p.x_lo);
    r.get("x_hi", p.x_hi);
    r.finish();
}

void read_ewh(Reader r, EwhParams& p) {
    r.get("p_charge_rate", p.p_charge_rate);
    r.get("tank_liters", p.tank_liters);
    r.get("x_amb", p.x_amb);
    r.get("x_set", p.x_set);
    r.get("x_lo", p.x_lo);
    r.get("x_hi", p.x_hi);
    r.get("loss_coeff", p.loss_coeff);
    r.get("inlet_temp", p.inlet_temp);
    r.finish();
}

DeviceKind parse_kind(const std::string& s, const std::string& key) {
    if (s == "ess") return DeviceKind::Ess;
    if (s == "ewh") return DeviceKind::Ewh;
    throw ConfigError("config key '" + key + "' must be \"ess\" or \"ewh\"");
}

Coordinator parse_coordinator(const std::string& s, const std::string& key) {
    if (s == "pem") return Coordinator::PEM;
    if (s == "cc") return Coordinator::CC;
    throw ConfigError("config key '" + key + "' must be \"pem\" or \"cc\"");
}

void read_fleet(Reader r, ExperimentConfig& c) {
    if (r.has("kind")) {
        std::string kind;
        r.get("kind", kind);
        c.setup.kind = parse_kind(kind, r.key_path("kind"));
    }
    r.get("heterogeneity_z", c.setup.heterogeneity_z);
    r.get("start_hour", c.setup.start_hour);
    r.get("dt_s", c.setup.dt_seconds);
    r.get("draw_profile", c.draw_profile);
    if (r.has("ess")) read_ess(r.section("ess"), c.setup.ess);
    if (r.has("ewh")) read_ewh(r.section("ewh"), c.setup.ewh);
    r.finish();
}

void read_coordinator(Reader r, ExperimentConfig& c) {
    if (r.has("type")) {
        std::string type;
        r.get("type", type);
        c.setup.coordinator = parse_coordinator(type, r.key_path("type"));
    }
    r.get("packet_length_s", c.setup.pem.packet_length_s);
    r.get("mttr_s", c.setup.pem.mttr_s);
    r.get("burn_in_s", c.setup.burn_in_s);
    r.finish();
}

void read_signals(Reader r, SignalConfig& s) {
    r.get("source", s.source);
    r.get("agc_file", s.agc_file);
    r.get("agc_dt_s", s.agc_dt_s);
    r.get("synthetic_hours", s.year.hours);
    r.get("target_mean", s.year.target_mean);
    r.get("target_sd", s.year.target_sd);
    r.get("time_constant_s", s.year.synthesis.time_constant_s);
    r.get("stationary_sd", s.year.synthesis.stationary_sd);
    r.get("tolerance_sigma", s.tolerance_sigma);
    r.get("scale_mw", s.scale_mw);
    r.get("k_hours", s.k_hours);
    r.get("use", s.use);
    r.finish();
}

void read_search(Reader r, ExperimentConfig& c) {
    r.get("x_p_des", c.search.x_p_des);
    r.get("n_start", c.search.n_start);
    r.get("delta_n", c.search.delta_n);
    r.get("n_max", c.search.n_max);
    r.get("seeds", c.setup.seeds);
    r.finish();
}

void read_simulate(Reader r, SimulateConfig& s) {
    r.get("fleet_sizes", s.fleet_sizes);
    r.get("signal_index", s.signal_index);
    r.finish();
}

void read_sweep(Reader r, SweepConfig& s) {
    r.get("type", s.type);
    if (r.has("packet_grid")) {
        const json& grid = r.raw("packet_grid");
        const std::string key = r.key_path("packet_grid");
        if (!grid.is_array()) throw ConfigError("config key '" + key + "' must be an array of [packet_s, mttr_s]");
        s.packet_grid.clear();
        for (const auto& pt : grid) {
            if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number()) {
                throw ConfigError("config key '" + key + "' must be an array of [packet_s, mttr_s]");
            }
            s.packet_grid.push_back({pt[0].get<double>(), pt[1].get<double>()});
        }
    }
    r.get("z_values", s.z_values);
    r.get("k_values", s.k_values);
    r.get("hours", s.hours);
    r.get("n_start_peak", s.hourly.n_start_peak);
    r.get("n_start_offpeak", s.hourly.n_start_offpeak);
    r.get("hourly_delta_n", s.hourly.delta_n);
    r.get("ewh_shares", s.ewh_shares);
    r.get("zeta_ess", s.zeta_ess);
    r.get("zeta_ewh", s.zeta_ewh);
    r.finish();
}

void read_macro(Reader r, MacroConfig& m) {
    r.get("n_b", m.n_b);
    r.get("grid", m.grid);
    r.get("eps_kw", m.eps_kw);
    r.get("n_start", m.n_start);
    r.get("delta_n", m.delta_n);
    r.get("n_max", m.n_max);
    r.finish();
}

void fail(const std::string& msg) { throw ConfigError(msg); }

}  // namespace

void ExperimentConfig::validate() const {
    if (threads < 1) fail("threads must be at least 1");
    if (!setup.ess.valid()) fail("fleet.ess parameters are invalid");
    if (!setup.ewh.valid()) fail("fleet.ewh parameters are invalid");
    if (!(setup.heterogeneity_z >= 0.0 && setup.heterogeneity_z < 1.0)) fail("fleet.heterogeneity_z must lie in [0, 1)");
    if (setup.start_hour < 0 || setup.start_hour > 23) fail("fleet.start_hour must lie in 0..23");
    if (!(setup.dt_seconds > 0.0)) fail("fleet.dt_s must be positive");
    if (!(setup.pem.packet_length_s >= setup.dt_seconds)) fail("coordinator.packet_length_s must be at least one step");
    if (!(setup.pem.mttr_s > 0.0)) fail("coordinator.mttr_s must be positive");
    if (!(setup.burn_in_s >= 0.0)) fail("coordinator.burn_in_s must be nonnegative");
    if (draw_profile != "default" && draw_profile != "zero" && !std::filesystem::exists(draw_profile)) {
        fail("fleet.draw_profile file not found: " + draw_profile);
    }
    if (signals.source != "synthetic" && signals.source != "file") {
        fail("signals.source must be \"synthetic\" or \"file\"");
    }
    if (signals.source == "file" && !std::filesystem::exists(signals.agc_file)) {
        fail("signals.agc_file not found: " + signals.agc_file);
    }
    if (std::abs(signals.agc_dt_s - setup.dt_seconds) > 1e-12) fail("signals.agc_dt_s must equal fleet.dt_s");
    if (signals.year.hours < 6) fail("signals.synthetic_hours must be at least 6");
    if (!(signals.tolerance_sigma > 0.0)) fail("signals.tolerance_sigma must be positive");
    if (!(signals.scale_mw > 0.0)) fail("signals.scale_mw must be positive");
    if (signals.k_hours < 1) fail("signals.k_hours must be at least 1");
    for (auto i : signals.use) {
        if (i >= 6) fail("signals.use indices must lie in 0..5");
    }
    if (!(search.x_p_des > 0.0 && search.x_p_des <= 1.0)) fail("search.x_p_des must lie in (0, 1]");
    if (search.n_start < 1 || search.delta_n < 1) fail("search.n_start and search.delta_n must be at least 1");
    if (setup.seeds < 1) fail("search.seeds must be at least 1");
    if (simulate.fleet_sizes.empty()) fail("simulate.fleet_sizes must not be empty");
    for (auto n : simulate.fleet_sizes) {
        if (n < 1) fail("simulate.fleet_sizes entries must be positive");
    }
    static const std::set<std::string> sweep_types{"packet", "heterogeneity", "horizon", "hourly", "mixture"};
    if (!sweep_types.count(sweep.type)) fail("sweep.type must be one of packet, heterogeneity, horizon, hourly, mixture");
    for (const auto& p : sweep.packet_grid) {
        if (!(p.packet_length_s >= setup.dt_seconds) || !(p.mttr_s > 0.0)) fail("sweep.packet_grid entries are invalid");
    }
    for (double z : sweep.z_values) {
        if (!(z >= 0.0 && z < 1.0)) fail("sweep.z_values must lie in [0, 1)");
    }
    for (int k : sweep.k_values) {
        if (k < 1) fail("sweep.k_values must be at least 1");
    }
    for (int h : sweep.hours) {
        if (h < 0 || h > 23) fail("sweep.hours must lie in 0..23");
    }
    for (double s : sweep.ewh_shares) {
        if (!(s >= 0.0 && s <= 1.0)) fail("sweep.ewh_shares must lie in [0, 1]");
    }
    if (!(sweep.zeta_ess > 0.0) || !(sweep.zeta_ewh > 0.0)) fail("sweep.zeta_ess and sweep.zeta_ewh must be positive");
    if (sweep.hourly.n_start_peak < 1 || sweep.hourly.n_start_offpeak < 1 || sweep.hourly.delta_n < 1) {
        fail("sweep hourly search sizes must be at least 1");
    }
    if (macro.n_b < 2) fail("macro.n_b must be at least 2");
    if (macro.grid < 2) fail("macro.grid must be at least 2");
    if (!(macro.eps_kw > 0.0)) fail("macro.eps_kw must be positive");
    if (macro.n_start < 1 || macro.delta_n < 1) fail("macro.n_start and macro.delta_n must be at least 1");
}

ExperimentConfig parse_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    ExperimentConfig c;
    Reader root(doc, "");
    root.get("seed", c.seed);
    root.get("threads", c.threads);
    root.get("out", c.out);
    if (root.has("fleet")) read_fleet(root.section("fleet"), c);
    if (root.has("coordinator")) read_coordinator(root.section("coordinator"), c);
    if (root.has("signals")) read_signals(root.section("signals"), c.signals);
    if (root.has("search")) read_search(root.section("search"), c);
    if (root.has("simulate")) read_simulate(root.section("simulate"), c.simulate);
    if (root.has("sweep")) read_sweep(root.section("sweep"), c.sweep);
    if (root.has("macro")) read_macro(root.section("macro"), c.macro);
    if (root.has("score")) {
        Reader r = root.section("score");
        r.get("trace", c.trace_file);
        r.finish();
    }
    root.finish();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

std::string resolved_config_json(const ExperimentConfig& c) {
    const auto& e = c.setup.ess;
    const auto& w = c.setup.ewh;
    json grid = json::array();
    for (const auto& p : c.sweep.packet_grid) grid.push_back({p.packet_length_s, p.mttr_s});
    json doc = {
        {"seed", c.seed},
        {"fleet",
         {{"kind", c.setup.kind == DeviceKind::Ess ? "ess" : "ewh"},
          {"heterogeneity_z", c.setup.heterogeneity_z},
          {"start_hour", c.setup.start_hour},
          {"dt_s", c.setup.dt_seconds},
          {"draw_profile", c.draw_profile},
          {"ess",
           {{"p_charge_rate", e.p_charge_rate},
            {"p_discharge_rate", e.p_discharge_rate},
            {"eta_c", e.eta_c},
            {"eta_d", e.eta_d},
            {"e_cap", e.e_cap},
            {"x_set", e.x_set},
            {"x_lo", e.x_lo},
            {"x_hi", e.x_hi}}},
          {"ewh",
           {{"p_charge_rate", w.p_charge_rate},
            {"tank_liters", w.tank_liters},
            {"x_amb", w.x_amb},
            {"x_set", w.x_set},
            {"x_lo", w.x_lo},
            {"x_hi", w.x_hi},
            {"loss_coeff", w.loss_coeff},
            {"inlet_temp", w.inlet_temp}}}}},
        {"coordinator",
         {{"type", c.setup.coordinator == Coordinator::PEM ? "pem" : "cc"},
          {"packet_length_s", c.setup.pem.packet_length_s},
          {"mttr_s", c.setup.pem.mttr_s},
          {"burn_in_s", c.setup.burn_in_s}}},
        {"signals",
         {{"source", c.signals.source},
          {"agc_file", c.signals.agc_file},
          {"agc_dt_s", c.signals.agc_dt_s},
          {"synthetic_hours", c.signals.year.hours},
          {"target_mean", c.signals.year.target_mean},
          {"target_sd", c.signals.year.target_sd},
          {"time_constant_s", c.signals.year.synthesis.time_constant_s},
          {"stationary_sd", c.signals.year.synthesis.stationary_sd},
          {"tolerance_sigma", c.signals.tolerance_sigma},
          {"scale_mw", c.signals.scale_mw},
          {"k_hours", c.signals.k_hours},
          {"use", c.signals.use}}},
        {"search",
         {{"x_p_des", c.search.x_p_des},
          {"n_start", c.search.n_start},
          {"delta_n", c.search.delta_n},
          {"n_max", c.search.n_max},
          {"seeds", c.setup.seeds}}},
        {"simulate", {{"fleet_sizes", c.simulate.fleet_sizes}, {"signal_index", c.simulate.signal_index}}},
        {"sweep",
         {{"type", c.sweep.type},
          {"packet_grid", grid},
          {"z_values", c.sweep.z_values},
          {"k_values", c.sweep.k_values},
          {"hours", c.sweep.hours},
          {"n_start_peak", c.sweep.hourly.n_start_peak},
          {"n_start_offpeak", c.sweep.hourly.n_start_offpeak},
          {"hourly_delta_n", c.sweep.hourly.delta_n},
          {"ewh_shares", c.sweep.ewh_shares},
          {"zeta_ess", c.sweep.zeta_ess},
          {"zeta_ewh", c.sweep.zeta_ewh}}},
        {"macro",
         {{"n_b", c.macro.n_b},
          {"grid", c.macro.grid},
          {"eps_kw", c.macro.eps_kw},
          {"n_start", c.macro.n_start},
          {"delta_n", c.macro.delta_n},
          {"n_max", c.macro.n_max}}},
        {"score", {{"trace", c.trace_file}}},
    };
    return doc.dump(2);
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace derflex
