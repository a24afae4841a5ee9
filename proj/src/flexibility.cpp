#include "derflex/flexibility.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "derflex/coordinator_cc.hpp"
#include "derflex/parallel.hpp"

namespace derflex {

void FlexQuery::validate() const {
    if (signals.empty()) throw std::invalid_argument("flexibility query needs at least one signal");
    if (n_start < 1 || delta_n < 1) throw std::invalid_argument("n_start and delta_n must be at least 1");
    if (!(x_p_des > 0.0 && x_p_des <= 1.0)) throw std::invalid_argument("desired precision must lie in (0, 1]");
    if (setup.seeds < 1) throw std::invalid_argument("at least one replicate seed is required");
    if (k_hours < 1) throw std::invalid_argument("horizon must be at least one hour");
}

std::size_t FlexQuery::effective_n_max() const {
    if (n_max > 0) return n_max;
    const double rated = setup.kind == DeviceKind::Ess ? std::max(setup.ess.p_charge_rate, setup.ess.p_discharge_rate)
                                                       : setup.ewh.p_charge_rate;
    return static_cast<std::size_t>(std::ceil(100.0 * 1000.0 / rated));
}

double kw_per_device(std::size_t n_min) {
    if (n_min == 0) throw std::invalid_argument("fleet size must be positive");
    return 1000.0 / static_cast<double>(n_min);
}

FlexResult find_n_min(const FlexQuery& query, const Evaluator& evaluator) {
    query.validate();
    const std::size_t m = query.signals.size();
    const std::size_t cap = query.effective_n_max();

    std::vector<std::vector<SearchPoint>> trajectory(m);
    std::vector<std::size_t> per_signal(m, 0);
    std::vector<char> capped(m, 0);

    parallel_for(m, query.threads, [&](std::size_t i) {
        std::size_t n = query.n_start;
        double x_p = evaluator(n, i);
        trajectory[i].push_back({n, x_p});
        while (!(x_p > query.x_p_des)) {
            n += query.delta_n;
            if (n > cap) {
                capped[i] = 1;
                return;
            }
            x_p = evaluator(n, i);
            trajectory[i].push_back({n, x_p});
        }
        per_signal[i] = n;
    });

    for (std::size_t i = 0; i < m; ++i) {
        if (capped[i]) {
            std::ostringstream msg;
            msg << "signal " << i << " did not reach precision " << query.x_p_des << " below the cap of " << cap
                << " devices";
            throw CapExceeded(msg.str(), trajectory, cap);
        }
    }

    FlexResult r;
    r.per_signal_n_min = per_signal;
    r.n_min = *std::max_element(per_signal.begin(), per_signal.end());
    r.kw_per_device = kw_per_device(r.n_min);
    r.score_trajectory = std::move(trajectory);
    return r;
}

Fleet build_setup_fleet(const SimulationSetup& setup, std::size_t n, std::uint64_t seed) {
    FleetBuildOptions opts{setup.dt_seconds, setup.draw_profile};
    if (setup.kind == DeviceKind::Ess) return build_fleet(setup.ess, n, setup.heterogeneity_z, seed, opts);
    return build_fleet(setup.ewh, n, setup.heterogeneity_z, seed, opts);
}

double fleet_baseload_kw(const Fleet& fleet, int hour_of_day) {
    const double draw = water_draw(fleet.water_draw_profile, hour_of_day);
    double total = 0.0;
    for (const auto& d : fleet.devices) {
        if (const auto* ewh = std::get_if<EwhParams>(&d.params)) total += ewh_nominal_power_kw(*ewh, draw);
    }
    return total;
}

FleetTrace run_fleet(const SimulationSetup& setup, Fleet fleet, const ReferenceSignal& signal, std::uint64_t seed) {
    const double baseload_kw = fleet_baseload_kw(fleet, setup.start_hour);
    ReferenceSignal ref = signal;
    if (baseload_kw > 0.0) {
        for (double& s : ref.samples) s += baseload_kw / 1000.0;
        ref.baseload_mw = signal.baseload_mw + baseload_kw / 1000.0;
    }
    if (setup.coordinator == Coordinator::CC) {
        SimOptions opts;
        opts.burn_in_s = setup.burn_in_s;
        opts.start_hour = setup.start_hour;
        return simulate_cc(std::move(fleet), ref, seed, opts);
    }
    PemSimOptions opts;
    opts.burn_in_s = setup.burn_in_s;
    opts.start_hour = setup.start_hour;
    PemParams pem = setup.pem;
    pem.poll_dt_s = setup.dt_seconds;
    return simulate_pem(std::move(fleet), ref, pem, seed, opts);
}

FleetTrace run_replicate(const SimulationSetup& setup, std::size_t n, const ReferenceSignal& signal,
                         std::size_t signal_index, std::size_t replicate) {
    const std::uint64_t fleet_seed = derive_seed(setup.base_seed, {n, signal_index, replicate, 0});
    const std::uint64_t sim_seed = derive_seed(setup.base_seed, {n, signal_index, replicate, 1});
    return run_fleet(setup, build_setup_fleet(setup, n, fleet_seed), signal, sim_seed);
}

ScoreReport score_trace(const FleetTrace& trace) {
    std::vector<double> ref(trace.p_ref_kw);
    std::vector<double> dem(trace.p_dem_kw);
    for (double& v : ref) v -= trace.baseload_kw;
    for (double& v : dem) v -= trace.baseload_kw;
    return score(ref, dem, trace.dt_seconds);
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of an empty set");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

Evaluator make_simulation_evaluator(const FlexQuery& query) {
    return [query](std::size_t n, std::size_t i) {
        std::vector<double> scores;
        for (std::size_t r = 0; r < query.setup.seeds; ++r) {
            scores.push_back(score_trace(run_replicate(query.setup, n, query.signals.at(i), i, r)).precision);
        }
        return median(std::move(scores));
    };
}

double HourlyFlex::zeta() const { return result ? result->kw_per_device : 1000.0 / static_cast<double>(cap); }

bool is_peak_hour(const DrawProfile& profile, int hour) {
    const double mean = std::accumulate(profile.begin(), profile.end(), 0.0) / 24.0;
    return water_draw(profile, hour) >= mean;
}

std::vector<HourlyFlex> hourly_ewh_flexibility(const FlexQuery& query, const std::vector<int>& hours,
                                               const HourlyOptions& options) {
    if (query.setup.kind != DeviceKind::Ewh) throw std::invalid_argument("hourly flexibility is for water heaters");
    std::vector<HourlyFlex> out;
    for (int hour : hours) {
        FlexQuery q = query;
        q.setup.start_hour = hour;
        HourlyFlex h;
        h.hour = hour;
        h.peak = is_peak_hour(q.setup.draw_profile, hour);
        h.draw_liters_per_s = water_draw(q.setup.draw_profile, hour);
        h.baseload_kw_per_device = ewh_nominal_power_kw(q.setup.ewh, h.draw_liters_per_s);
        q.n_start = h.peak ? options.n_start_peak : options.n_start_offpeak;
        q.delta_n = options.delta_n;
        h.cap = q.effective_n_max();
        try {
            h.result = find_n_min(q, make_simulation_evaluator(q));
        } catch (const CapExceeded&) {
            h.result.reset();
        }
        out.push_back(std::move(h));
    }
    return out;
}

std::pair<std::size_t, std::size_t> mixture_fleet(double z_ess, double z_ewh, double zeta_ess, double zeta_ewh) {
    if (!(z_ess >= 0.0 && z_ewh >= 0.0) || std::abs(z_ess + z_ewh - 1.0) > 1e-9) {
        throw std::invalid_argument("mixture proportions must be nonnegative and sum to 1");
    }
    if (!(zeta_ess > 0.0) || !(zeta_ewh > 0.0)) throw std::invalid_argument("kW-per-device values must be positive");
    const auto n_ess = static_cast<std::size_t>(std::floor(1000.0 * z_ess / zeta_ess + 0.5));
    const auto n_ewh = static_cast<std::size_t>(std::floor(1000.0 * z_ewh / zeta_ewh + 0.5));
    return {n_ess, n_ewh};
}

MixtureEvaluation evaluate_mixture(const FlexQuery& query, std::size_t n_ess, std::size_t n_ewh) {
    query.validate();
    if (n_ess + n_ewh == 0) throw std::invalid_argument("mixture fleet is empty");
    const auto& setup = query.setup;
    const std::size_t m = query.signals.size();
    MixtureEvaluation out;
    out.n_ess = n_ess;
    out.n_ewh = n_ewh;
    out.per_signal_precision.assign(m, 0.0);

    parallel_for(m, query.threads, [&](std::size_t i) {
        std::vector<double> scores;
        for (std::size_t r = 0; r < setup.seeds; ++r) {
            FleetBuildOptions opts{setup.dt_seconds, setup.draw_profile};
            Fleet fleet;
            fleet.dt_seconds = setup.dt_seconds;
            fleet.water_draw_profile = setup.draw_profile;
            if (n_ess > 0) {
                fleet = build_fleet(setup.ess, n_ess, setup.heterogeneity_z,
                                    derive_seed(setup.base_seed, {n_ess, n_ewh, i, r, 10}), opts);
            }
            if (n_ewh > 0) {
                Fleet ewh = build_fleet(setup.ewh, n_ewh, setup.heterogeneity_z,
                                        derive_seed(setup.base_seed, {n_ess, n_ewh, i, r, 11}), opts);
                fleet = n_ess > 0 ? merge_fleets(std::move(fleet), ewh) : std::move(ewh);
            }
            SimulationSetup mixed = setup;
            mixed.coordinator = Coordinator::PEM;
            const auto trace =
                run_fleet(mixed, std::move(fleet), query.signals[i], derive_seed(setup.base_seed, {n_ess, n_ewh, i, r, 12}));
            scores.push_back(score_trace(trace).precision);
        }
        out.per_signal_precision[i] = median(std::move(scores));
    });
    out.min_precision = *std::min_element(out.per_signal_precision.begin(), out.per_signal_precision.end());
    return out;
}

double SweepRow::zeta() const { return result ? result->kw_per_device : 1000.0 / static_cast<double>(cap); }

namespace {

SweepRow run_sweep_point(const FlexQuery& q) {
    SweepRow row;
    row.packet_length_s = q.setup.pem.packet_length_s;
    row.mttr_s = q.setup.pem.mttr_s;
    row.z = q.setup.heterogeneity_z;
    row.k_hours = q.k_hours;
    row.cap = q.effective_n_max();
    try {
        row.result = find_n_min(q, make_simulation_evaluator(q));
    } catch (const CapExceeded&) {
        row.result.reset();
    }
    return row;
}

}  // namespace

std::vector<SweepRow> sweep_packet_mttr(const FlexQuery& query, const std::vector<PacketMttrPoint>& grid) {
    if (query.setup.coordinator != Coordinator::PEM) throw std::invalid_argument("packet sweeps need the PEM coordinator");
    std::vector<SweepRow> rows;
    for (const auto& point : grid) {
        FlexQuery q = query;
        q.setup.pem.packet_length_s = point.packet_length_s;
        q.setup.pem.mttr_s = point.mttr_s;
        rows.push_back(run_sweep_point(q));
    }
    return rows;
}

std::vector<SweepRow> sweep_heterogeneity(const FlexQuery& query, const std::vector<double>& z_values) {
    std::vector<SweepRow> rows;
    for (double z : z_values) {
        FlexQuery q = query;
        q.setup.heterogeneity_z = z;
        rows.push_back(run_sweep_point(q));
    }
    return rows;
}

std::vector<SweepRow> sweep_horizon(const FlexQuery& query, const std::vector<AgcTrace>& hours,
                                    const std::vector<int>& k_values) {
    std::vector<SweepRow> rows;
    for (int k : k_values) {
        FlexQuery q = query;
        q.k_hours = k;
        q.signals.clear();
        for (const auto& h : hours) q.signals.push_back(make_reference(h, 1.0, k, 0.0));
        rows.push_back(run_sweep_point(q));
    }
    return rows;
}

double average_power(const ReferenceSignal& signal) {
    if (signal.samples.empty()) throw std::invalid_argument("average power of an empty signal");
    double sum = 0.0;
    for (double s : signal.samples) sum += s * s;
    return sum / static_cast<double>(signal.samples.size());
}

void write_trajectory_csv(std::ostream& out, const FlexResult& result) {
    out << "signal,iteration,n,x_p\n" << std::setprecision(12);
    for (std::size_t i = 0; i < result.score_trajectory.size(); ++i) {
        const auto& t = result.score_trajectory[i];
        for (std::size_t j = 0; j < t.size(); ++j) out << i << ',' << j << ',' << t[j].n << ',' << t[j].x_p << '\n';
    }
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "packet_length_s,mttr_s,z,k_hours,n_min,kw_per_device,capped\n" << std::setprecision(12);
    for (const auto& r : rows) {
        out << r.packet_length_s << ',' << r.mttr_s << ',' << r.z << ',' << r.k_hours << ','
            << (r.result ? r.result->n_min : r.cap) << ',' << r.zeta() << ',' << (r.result ? 0 : 1) << '\n';
    }
}

}  // namespace derflex
