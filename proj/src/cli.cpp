#include "derflex/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "derflex/errors.hpp"
#include "derflex/macromodel.hpp"
#include "derflex/parallel.hpp"
#include "derflex/scoring.hpp"
#include "derflex/trace.hpp"

namespace derflex {

namespace fs = std::filesystem;

namespace {

// Independent seed streams derived from the experiment seed.
enum SeedStream : std::uint64_t { kSeedSynthesis = 100, kSeedSelection = 101, kSeedSimulation = 102 };

SimulationSetup resolved_setup(const ExperimentConfig& c) {
    SimulationSetup s = c.setup;
    s.base_seed = derive_seed(c.seed, {kSeedSimulation});
    s.pem.poll_dt_s = s.dt_seconds;
    if (c.draw_profile == "default") {
        s.draw_profile = default_draw_profile();
    } else if (c.draw_profile == "zero") {
        s.draw_profile = zero_draw_profile();
    } else {
        s.draw_profile = load_draw_profile(c.draw_profile);
    }
    return s;
}

FlexQuery make_query(const ExperimentConfig& c, std::vector<ReferenceSignal> signals) {
    FlexQuery q;
    q.setup = resolved_setup(c);
    q.k_hours = c.signals.k_hours;
    q.signals = std::move(signals);
    q.x_p_des = c.search.x_p_des;
    q.n_start = c.search.n_start;
    q.delta_n = c.search.delta_n;
    q.n_max = c.search.n_max;
    q.threads = c.threads;
    return q;
}

std::ofstream open_out(const ExperimentConfig& c, const std::string& name, std::vector<std::string>& written) {
    std::ofstream out(fs::path(c.out) / name, std::ios::binary);
    if (!out) throw DataError("cannot write " + (fs::path(c.out) / name).string());
    written.push_back(name);
    return out;
}

void write_manifest(const ExperimentConfig& c, const std::string& sub, const std::vector<std::string>& outputs) {
    const std::string resolved = resolved_config_json(c);
    nlohmann::json m = {
        {"tool", "derflex"},
        {"version", kVersion},
        {"subcommand", sub},
        {"seed", c.seed},
        {"config_hash", fnv1a_hex(resolved)},
        {"config", nlohmann::json::parse(resolved)},
        {"outputs", outputs},
    };
    std::ofstream out(fs::path(c.out) / "manifest.json", std::ios::binary);
    if (!out) throw DataError("cannot write manifest.json");
    out << m.dump(2) << '\n';
}

void write_flex_csv(std::ostream& out, const FlexResult& r) {
    out << "signal,n_min,kw_per_device\n" << std::setprecision(12);
    for (std::size_t i = 0; i < r.per_signal_n_min.size(); ++i) {
        out << i << ',' << r.per_signal_n_min[i] << ',' << kw_per_device(r.per_signal_n_min[i]) << '\n';
    }
    out << "all," << r.n_min << ',' << r.kw_per_device << '\n';
}

void write_capped_trajectory(std::ostream& out, const CapExceeded& e) {
    FlexResult partial;
    partial.score_trajectory = e.trajectory();
    write_trajectory_csv(out, partial);
}

void run_simulate(const ExperimentConfig& c, std::vector<std::string>& written) {
    const auto signals = representative_signals(c);
    if (c.simulate.signal_index >= signals.size()) throw ConfigError("simulate.signal_index is out of range");
    const SimulationSetup setup = resolved_setup(c);
    const auto& signal = signals[c.simulate.signal_index];
    const auto& sizes = c.simulate.fleet_sizes;

    std::vector<FleetTrace> traces(sizes.size());
    parallel_for(sizes.size(), c.threads, [&](std::size_t j) {
        traces[j] = run_replicate(setup, sizes[j], signal, c.simulate.signal_index, 0);
    });

    auto summary = open_out(c, "simulate_summary.csv", written);
    summary << "n,x_a,x_d,x_p,x_c,baseload_kw,optout_events\n" << std::setprecision(12);
    for (std::size_t j = 0; j < sizes.size(); ++j) {
        const std::string tag = "n" + std::to_string(sizes[j]);
        auto trace_out = open_out(c, "trace_" + tag + ".csv", written);
        write_trace_csv(trace_out, traces[j]);
        const auto report = score_trace(traces[j]);
        auto score_out = open_out(c, "score_" + tag + ".csv", written);
        write_score_csv(score_out, report);
        summary << sizes[j] << ',' << report.accuracy << ',' << report.delay << ',' << report.precision << ','
                << report.composite << ',' << traces[j].baseload_kw << ',' << traces[j].optout_events << '\n';
    }
}

void run_score(const ExperimentConfig& c, std::vector<std::string>& written) {
    if (c.trace_file.empty()) throw ConfigError("score needs a trace file (score.trace or --trace)");
    const FleetTrace trace = read_trace_csv(c.trace_file);
    auto out = open_out(c, "score.csv", written);
    write_score_csv(out, score_trace(trace));
}

void run_flex(const ExperimentConfig& c, std::vector<std::string>& written) {
    Selection selection;
    const FlexQuery q = make_query(c, representative_signals(c, &selection));
    {
        auto sel = open_out(c, "selection.csv", written);
        write_selection_csv(sel, selection);
    }
    try {
        const FlexResult r = find_n_min(q, make_simulation_evaluator(q));
        auto traj = open_out(c, "flex_result.csv", written);
        write_trajectory_csv(traj, r);
        auto res = open_out(c, "zeta_summary.csv", written);
        write_flex_csv(res, r);
    } catch (const CapExceeded& e) {
        auto traj = open_out(c, "flex_result.csv", written);
        write_capped_trajectory(traj, e);
        write_manifest(c, "flex", written);
        throw;
    }
}

void run_sweep(const ExperimentConfig& c, std::vector<std::string>& written) {
    const auto& s = c.sweep;
    if (s.type == "horizon") {
        // k-hour references are built per row from the selected hours
        Selection selection;
        ExperimentConfig one_hour = c;
        one_hour.signals.k_hours = 1;
        const FlexQuery q = make_query(c, representative_signals(one_hour, &selection));
        auto out = open_out(c, "sweep.csv", written);
        write_sweep_csv(out, sweep_horizon(q, selection.hours, s.k_values));
        return;
    }
    const FlexQuery q = make_query(c, representative_signals(c));
    if (s.type == "packet") {
        auto out = open_out(c, "sweep.csv", written);
        write_sweep_csv(out, sweep_packet_mttr(q, s.packet_grid));
    } else if (s.type == "heterogeneity") {
        auto out = open_out(c, "sweep.csv", written);
        write_sweep_csv(out, sweep_heterogeneity(q, s.z_values));
    } else if (s.type == "hourly") {
        FlexQuery ewh = q;
        ewh.setup.kind = DeviceKind::Ewh;
        const auto rows = hourly_ewh_flexibility(ewh, s.hours, s.hourly);
        auto out = open_out(c, "hourly.csv", written);
        out << "hour,peak,draw_liters_per_s,baseload_kw_per_device,n_min,kw_per_device,capped\n"
            << std::setprecision(12);
        for (const auto& h : rows) {
            out << h.hour << ',' << (h.peak ? 1 : 0) << ',' << h.draw_liters_per_s << ',' << h.baseload_kw_per_device
                << ',' << (h.result ? h.result->n_min : h.cap) << ',' << h.zeta() << ',' << (h.result ? 0 : 1) << '\n';
        }
    } else if (s.type == "mixture") {
        auto out = open_out(c, "mixture.csv", written);
        out << "ewh_share,n_ess,n_ewh,min_precision";
        for (std::size_t i = 0; i < q.signals.size(); ++i) out << ",x_p_" << i;
        out << '\n' << std::setprecision(12);
        for (double share : s.ewh_shares) {
            const auto [n_ess, n_ewh] = mixture_fleet(1.0 - share, share, s.zeta_ess, s.zeta_ewh);
            const auto eval = evaluate_mixture(q, n_ess, n_ewh);
            out << share << ',' << n_ess << ',' << n_ewh << ',' << eval.min_precision;
            for (double p : eval.per_signal_precision) out << ',' << p;
            out << '\n';
        }
    }
}

void run_macro(const ExperimentConfig& c, std::vector<std::string>& written) {
    MacroModel model;
    model.ess = c.setup.ess;
    model.pem = c.setup.pem;
    model.pem.poll_dt_s = c.setup.dt_seconds;
    model.dt_seconds = c.setup.dt_seconds;
    model.n_b = c.macro.n_b;
    model.validate();

    const BetaGrid grid = evaluate_beta_grid(model, c.macro.grid, c.threads);
    {
        auto out = open_out(c, "macro_grid.csv", written);
        write_grid_csv(out, model, grid);
    }
    const NominalSolution min_power = solve_nominal(model, grid, {});

    std::vector<double> avg;
    for (const auto& s : representative_signals(c)) avg.push_back(average_power(s));
    SteadyFlexOptions opts;
    opts.eps_kw = c.macro.eps_kw;
    opts.n_start = c.macro.n_start;
    opts.delta_n = c.macro.delta_n;
    opts.n_max = c.macro.n_max;
    opts.grid_n = c.macro.grid;
    opts.threads = c.threads;
    const SteadyFlexResult flex = steady_state_flexibility(model, avg, opts);
    {
        auto out = open_out(c, "steady_flex.csv", written);
        write_steady_flex_csv(out, flex);
    }
    // operating point of the most demanding signal
    std::size_t worst = 0;
    for (std::size_t i = 1; i < flex.target_kw.size(); ++i) {
        if (flex.target_kw[i] > flex.target_kw[worst]) worst = i;
    }
    const auto& op = flex.solutions[worst].best;
    {
        const auto ss = steady_state(model, model.control(op.beta_c, op.beta_d));
        auto out = open_out(c, "q_star.csv", written);
        write_state_csv(out, model, ss.q);
    }
    auto out = open_out(c, "macro_report.csv", written);
    out << "quantity,value\n" << std::setprecision(12);
    out << "min_power_beta_c," << min_power.best.beta_c << '\n';
    out << "min_power_beta_d," << min_power.best.beta_d << '\n';
    out << "min_power_h_kw," << min_power.best.h_kw << '\n';
    out << "min_power_soc," << min_power.best.soc << '\n';
    out << "n_min," << flex.n_min << '\n';
    out << "zeta_ss_kw," << flex.zeta_kw << '\n';
    out << "operating_signal," << worst << '\n';
    out << "operating_beta_c," << op.beta_c << '\n';
    out << "operating_beta_d," << op.beta_d << '\n';
    out << "operating_h_kw," << op.h_kw << '\n';
    out << "operating_soc," << op.soc << '\n';
    out << "operating_residual," << op.residual << '\n';
}

void run_agc_stats(const ExperimentConfig& c, std::vector<std::string>& written) {
    const AgcTrace trace = load_signal_source(c);
    const AgcStats stats = hourly_stats(trace);
    {
        auto out = open_out(c, "hourly_means.csv", written);
        out << "hour,mean\n" << std::setprecision(12);
        for (std::size_t h = 0; h < stats.hourly_means.size(); ++h) out << h << ',' << stats.hourly_means[h] << '\n';
    }
    {
        auto out = open_out(c, "agc_stats.csv", written);
        out << "hours,mu_agc,sigma_agc\n" << std::setprecision(12);
        out << stats.hourly_means.size() << ',' << stats.mu_agc << ',' << stats.sigma_agc << '\n';
    }
    auto out = open_out(c, "selection.csv", written);
    write_selection_csv(out, select_representative(trace, stats, derive_seed(c.seed, {kSeedSelection}),
                                                   c.signals.tolerance_sigma));
}

}  // namespace

AgcTrace load_signal_source(const ExperimentConfig& c) {
    if (c.signals.source == "file") return load_agc(c.signals.agc_file, c.signals.agc_dt_s);
    SyntheticYear year = c.signals.year;
    year.synthesis.dt_seconds = c.setup.dt_seconds;
    return synthesize_year(derive_seed(c.seed, {kSeedSynthesis}), year);
}

std::vector<ReferenceSignal> representative_signals(const ExperimentConfig& c, Selection* selection) {
    const AgcTrace trace = load_signal_source(c);
    const AgcStats stats = hourly_stats(trace);
    Selection sel = select_representative(trace, stats, derive_seed(c.seed, {kSeedSelection}), c.signals.tolerance_sigma);
    std::vector<std::size_t> use = c.signals.use;
    if (use.empty()) {
        for (std::size_t i = 0; i < sel.hours.size(); ++i) use.push_back(i);
    }
    std::vector<ReferenceSignal> out;
    Selection kept;
    for (std::size_t i : use) {
        out.push_back(make_reference(sel.hours.at(i), c.signals.scale_mw, c.signals.k_hours, 0.0));
        kept.hours.push_back(sel.hours.at(i));
        kept.records.push_back(sel.records.at(i));
    }
    if (selection) *selection = std::move(kept);
    return out;
}

void run_subcommand(const std::string& name, const ExperimentConfig& config) {
    config.validate();
    fs::create_directories(config.out);
    std::vector<std::string> written;
    if (name == "simulate") {
        run_simulate(config, written);
    } else if (name == "score") {
        run_score(config, written);
    } else if (name == "flex") {
        run_flex(config, written);
    } else if (name == "sweep") {
        run_sweep(config, written);
    } else if (name == "macro") {
        run_macro(config, written);
    } else if (name == "agc-stats") {
        run_agc_stats(config, written);
    } else {
        throw ConfigError("unknown subcommand " + name);
    }
    write_manifest(config, name, written);
}

int cli_main(int argc, char** argv) {
    CLI::App app{"Flexibility of battery and water-heater fleets tracking regulation signals"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    struct Flags {
        std::string config;
        std::optional<std::uint64_t> seed;
        std::optional<std::string> out;
        std::optional<unsigned> threads;
        std::optional<std::vector<std::size_t>> fleet_sizes;
        std::optional<std::size_t> signal_index;
        std::optional<std::string> trace;
        std::optional<std::string> agc;
        std::optional<std::string> coordinator;
        std::optional<std::string> kind;
        std::optional<double> x_p_des;
        std::optional<std::size_t> n_start;
        std::optional<std::size_t> delta_n;
        std::optional<std::size_t> n_max;
        std::optional<std::size_t> seeds;
        std::optional<int> k_hours;
        std::optional<std::string> sweep_type;
        std::optional<std::size_t> n_b;
        std::optional<std::size_t> grid;
        std::optional<double> eps_kw;
    } f;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", f.config, "JSON experiment config");
        sub->add_option("--seed", f.seed, "experiment seed");
        sub->add_option("--out", f.out, "output directory");
        sub->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
    };
    auto search_flags = [&](CLI::App* sub) {
        sub->add_option("--coordinator", f.coordinator, "pem or cc");
        sub->add_option("--kind", f.kind, "ess or ewh");
        sub->add_option("--x-p-des", f.x_p_des, "precision threshold");
        sub->add_option("--n-start", f.n_start, "first fleet size");
        sub->add_option("--delta-n", f.delta_n, "fleet size increment");
        sub->add_option("--n-max", f.n_max, "fleet size cap (0: default)");
        sub->add_option("--seeds", f.seeds, "replicates per evaluation");
        sub->add_option("--k-hours", f.k_hours, "horizon in hours");
    };

    auto* sim = app.add_subcommand("simulate", "simulate fleets on one representative signal");
    common(sim);
    search_flags(sim);
    sim->add_option("--n", f.fleet_sizes, "fleet sizes");
    sim->add_option("--signal", f.signal_index, "index of the representative signal");

    auto* sc = app.add_subcommand("score", "score a trace CSV");
    common(sc);
    sc->add_option("--trace", f.trace, "trace CSV");

    auto* flex = app.add_subcommand("flex", "minimum fleet size and kW-per-device");
    common(flex);
    search_flags(flex);

    auto* sweep = app.add_subcommand("sweep", "parameter sweeps");
    common(sweep);
    search_flags(sweep);
    sweep->add_option("--type", f.sweep_type, "packet, heterogeneity, horizon, hourly or mixture");

    auto* macro = app.add_subcommand("macro", "macromodel steady state and flexibility");
    common(macro);
    macro->add_option("--n-b", f.n_b, "SoC bins");
    macro->add_option("--grid", f.grid, "beta grid points per axis");
    macro->add_option("--eps-kw", f.eps_kw, "power match tolerance, kW");

    auto* stats = app.add_subcommand("agc-stats", "hourly statistics and representative hours");
    common(stats);
    stats->add_option("--agc", f.agc, "AGC file, one sample per line");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        ExperimentConfig c = f.config.empty() ? ExperimentConfig{} : load_config(f.config);
        if (f.seed) c.seed = *f.seed;
        if (f.out) c.out = *f.out;
        if (f.threads) c.threads = *f.threads;
        if (f.fleet_sizes) c.simulate.fleet_sizes = *f.fleet_sizes;
        if (f.signal_index) c.simulate.signal_index = *f.signal_index;
        if (f.trace) c.trace_file = *f.trace;
        if (f.agc) {
            c.signals.source = "file";
            c.signals.agc_file = *f.agc;
        }
        if (f.coordinator) {
            if (*f.coordinator != "pem" && *f.coordinator != "cc") throw ConfigError("--coordinator must be pem or cc");
            c.setup.coordinator = *f.coordinator == "pem" ? Coordinator::PEM : Coordinator::CC;
        }
        if (f.kind) {
            if (*f.kind != "ess" && *f.kind != "ewh") throw ConfigError("--kind must be ess or ewh");
            c.setup.kind = *f.kind == "ess" ? DeviceKind::Ess : DeviceKind::Ewh;
        }
        if (f.x_p_des) c.search.x_p_des = *f.x_p_des;
        if (f.n_start) c.search.n_start = *f.n_start;
        if (f.delta_n) c.search.delta_n = *f.delta_n;
        if (f.n_max) c.search.n_max = *f.n_max;
        if (f.seeds) c.setup.seeds = *f.seeds;
        if (f.k_hours) c.signals.k_hours = *f.k_hours;
        if (f.sweep_type) c.sweep.type = *f.sweep_type;
        if (f.n_b) c.macro.n_b = *f.n_b;
        if (f.grid) c.macro.grid = *f.grid;
        if (f.eps_kw) c.macro.eps_kw = *f.eps_kw;

        run_subcommand(name, c);
        return kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << '\n';
        return kExitInfeasible;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace derflex
