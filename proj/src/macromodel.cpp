#include "derflex/macromodel.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "derflex/parallel.hpp"

namespace derflex {

MacroBins build_bins(double x_lo, double x_hi, std::size_t n_b) {
    if (n_b < 2) throw std::invalid_argument("macromodel needs at least two bins");
    if (!(x_lo < x_hi)) throw std::invalid_argument("bin range must be increasing");
    MacroBins bins;
    bins.width = (x_hi - x_lo) / static_cast<double>(n_b);
    bins.edges.resize(n_b + 1);
    bins.centers.resize(n_b);
    for (std::size_t i = 0; i <= n_b; ++i) bins.edges[i] = x_lo + bins.width * static_cast<double>(i);
    bins.edges[n_b] = x_hi;
    for (std::size_t i = 0; i < n_b; ++i) bins.centers[i] = 0.5 * (bins.edges[i] + bins.edges[i + 1]);
    return bins;
}

MacroBins build_bins(const EssParams& params, std::size_t n_b) { return build_bins(params.x_lo, params.x_hi, n_b); }

std::vector<double> soc_weights(const MacroBins& bins) {
    std::vector<double> v;
    v.reserve(4 * bins.size());
    for (int block = 0; block < 4; ++block) v.insert(v.end(), bins.centers.begin(), bins.centers.end());
    return v;
}

void ControlFractions::validate() const {
    for (double b : {beta_c, beta_d, beta_minus_c, beta_minus_d}) {
        if (!(b >= 0.0 && b <= 1.0)) throw std::invalid_argument("control fractions must lie in [0, 1]");
    }
}

ControlFractions ControlFractions::with_packet_expiry(double beta_c, double beta_d, double dt_s,
                                                      double packet_length_s) {
    if (!(dt_s > 0.0) || !(packet_length_s >= dt_s)) {
        throw std::invalid_argument("packet length must be at least one step");
    }
    const double bm = dt_s / packet_length_s;
    return {beta_c, beta_d, bm, bm};
}

void MacroModel::validate() const {
    if (!ess.valid()) throw std::invalid_argument("invalid battery parameters");
    pem.validate();
    if (!(dt_seconds > 0.0)) throw std::invalid_argument("macro step must be positive");
    if (n_b < 2) throw std::invalid_argument("macromodel needs at least two bins");
    if (drift_up() > 1.0 || drift_down() > 1.0) {
        throw std::invalid_argument("bins are narrower than one step of drift; use fewer bins or a shorter step");
    }
}

namespace {

double soc_rise_per_step(const EssParams& p, double dt) { return p.eta_c * p.p_charge_rate * dt / 3600.0 / p.e_cap; }
double soc_fall_per_step(const EssParams& p, double dt) {
    return p.p_discharge_rate * dt / 3600.0 / (p.eta_d * p.e_cap);
}

// Overshoot past an edge is spread over one step of inbound drift; recovery
// moves back at the outbound rate. Expected number of recovery steps.
double recovery_steps(double inbound, double outbound) {
    const double ratio = outbound / inbound;
    double steps = 0.0;
    for (int j = 1;; ++j) {
        const double p = 1.0 - static_cast<double>(j - 1) * ratio;
        if (p <= 0.0) break;
        steps += p;
    }
    return steps;
}

}  // namespace

double MacroModel::drift_up() const {
    return soc_rise_per_step(ess, dt_seconds) / ((ess.x_hi - ess.x_lo) / static_cast<double>(n_b));
}

double MacroModel::drift_down() const {
    return soc_fall_per_step(ess, dt_seconds) / ((ess.x_hi - ess.x_lo) / static_cast<double>(n_b));
}

double MacroModel::optout_dwell_bottom() const {
    return recovery_steps(soc_fall_per_step(ess, dt_seconds), soc_rise_per_step(ess, dt_seconds));
}

double MacroModel::optout_dwell_top() const {
    return recovery_steps(soc_rise_per_step(ess, dt_seconds), soc_fall_per_step(ess, dt_seconds));
}

void validate_macro_state(const std::vector<double>& q, std::size_t dim) {
    if (q.size() != dim) throw std::invalid_argument("macro state has the wrong size");
    double sum = 0.0;
    for (double v : q) {
        if (!(v >= 0.0)) throw std::invalid_argument("macro state has a negative or NaN entry");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-10) throw std::invalid_argument("macro state does not sum to one");
}

namespace {

// Per-model, per-control constants of one step.
struct Kernel {
    std::size_t n_b = 0;
    double up = 0.0;
    double down = 0.0;
    double exit_bottom = 0.0;
    double exit_top = 0.0;
    double expire_c = 0.0;
    double expire_d = 0.0;
    std::vector<double> to_charge;     // accepted request probability by bin
    std::vector<double> to_discharge;
};

Kernel make_kernel(const MacroModel& model, const ControlFractions& ctrl) {
    model.validate();
    ctrl.validate();
    Kernel k;
    k.n_b = model.n_b;
    k.up = model.drift_up();
    k.down = model.drift_down();
    k.exit_bottom = 1.0 / model.optout_dwell_bottom();
    k.exit_top = 1.0 / model.optout_dwell_top();
    k.expire_c = ctrl.beta_minus_c;
    k.expire_d = ctrl.beta_minus_d;
    const auto bins = model.bins();
    k.to_charge.resize(k.n_b);
    k.to_discharge.resize(k.n_b);
    for (std::size_t b = 0; b < k.n_b; ++b) {
        const double x = bins.centers[b];
        const double mu_c = charge_request_rate(x, model.ess, model.pem);
        const double mu_d = discharge_request_rate(x, model.ess, model.pem);
        const double total = mu_c + mu_d;
        const double p = total > 0.0 ? request_probability(total, model.dt_seconds) : 0.0;
        const double share_c = total > 0.0 ? mu_c / total : 0.0;
        k.to_charge[b] = ctrl.beta_c * p * share_c;
        k.to_discharge[b] = ctrl.beta_d * p * (1.0 - share_c);
    }
    return k;
}

// Linear map without checks or renormalisation.
void apply_kernel(const Kernel& k, const double* q, double* out) {
    const std::size_t n = k.n_b;
    const std::size_t C = 0, D = n, S = 2 * n, O = 3 * n;
    std::fill(out, out + 4 * n, 0.0);

    for (std::size_t b = 0; b < n; ++b) {
        // drift
        const double c = q[C + b];
        const double c_move = k.up * c;
        out[C + b] += c - c_move;
        out[b + 1 < n ? C + b + 1 : O + n - 1] += c_move;

        const double d = q[D + b];
        const double d_move = k.down * d;
        out[D + b] += d - d_move;
        out[b > 0 ? D + b - 1 : O] += d_move;

        out[S + b] += q[S + b];

        // opt-out recovery; interior opt-out cells are never fed and return at once
        const double o = q[O + b];
        const double exit = b == 0 ? k.exit_bottom : (b == n - 1 ? k.exit_top : 1.0);
        out[O + b] += o - exit * o;
        out[S + b] += exit * o;
    }
    for (std::size_t b = 0; b < n; ++b) {
        const double ec = k.expire_c * out[C + b];
        const double ed = k.expire_d * out[D + b];
        out[C + b] -= ec;
        out[D + b] -= ed;
        out[S + b] += ec + ed;
    }
    for (std::size_t b = 0; b < n; ++b) {
        const double s = out[S + b];
        const double gc = k.to_charge[b] * s;
        const double gd = k.to_discharge[b] * s;
        out[S + b] = s - gc - gd;
        out[C + b] += gc;
        out[D + b] += gd;
    }
}

Eigen::MatrixXd kernel_matrix(const Kernel& k) {
    const std::size_t dim = 4 * k.n_b;
    Eigen::MatrixXd a(dim, dim);
    std::vector<double> unit(dim, 0.0), col(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        unit[j] = 1.0;
        apply_kernel(k, unit.data(), col.data());
        unit[j] = 0.0;
        for (std::size_t i = 0; i < dim; ++i) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
    }
    return a;
}

double inf_norm_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

void normalize(std::vector<double>& q) {
    double sum = 0.0;
    for (double v : q) sum += v;
    if (sum != 1.0 && sum > 0.0) {
        for (double& v : q) v /= sum;
    }
}

double second_eigen_modulus(const Eigen::MatrixXd& a) {
    Eigen::EigenSolver<Eigen::MatrixXd> solver(a, false);
    std::vector<double> mods;
    for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) mods.push_back(std::abs(solver.eigenvalues()[i]));
    std::sort(mods.rbegin(), mods.rend());
    return mods.size() > 1 ? mods[1] : 0.0;
}

}  // namespace

std::vector<double> macro_step(const MacroModel& model, const std::vector<double>& q, const ControlFractions& ctrl) {
    validate_macro_state(q, model.dim());
    const Kernel k = make_kernel(model, ctrl);
    std::vector<double> out(model.dim());
    apply_kernel(k, q.data(), out.data());
    normalize(out);
    return out;
}

std::vector<double> transition_matrix(const MacroModel& model, const ControlFractions& ctrl) {
    const Kernel k = make_kernel(model, ctrl);
    const Eigen::MatrixXd a = kernel_matrix(k);
    std::vector<double> out(static_cast<std::size_t>(a.size()));
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) out[static_cast<std::size_t>(i * a.cols() + j)] = a(i, j);
    }
    return out;
}

double device_power_kw(const MacroModel& model, const std::vector<double>& q) {
    if (q.size() != model.dim()) throw std::invalid_argument("macro state has the wrong size");
    const std::size_t n = model.n_b;
    const double pc = model.ess.p_charge_rate;
    const double pd = model.ess.p_discharge_rate;
    double h = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        h += pc * q[macro_index(MacroBlock::Charge, b, n)];
        h -= pd * q[macro_index(MacroBlock::Discharge, b, n)];
        const double o = q[macro_index(MacroBlock::OptOut, b, n)];
        h += 2 * b + 1 < n ? pc * o : (2 * b + 1 > n ? -pd * o : 0.0);
    }
    return h;
}

double aggregate_power(const MacroModel& model, const std::vector<double>& q, double n) {
    return n * device_power_kw(model, q);
}

double mean_soc(const MacroModel& model, const std::vector<double>& q) {
    const auto v = soc_weights(model.bins());
    if (q.size() != v.size()) throw std::invalid_argument("macro state has the wrong size");
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += q[i] * v[i];
    return s;
}

std::vector<double> uniform_standby(std::size_t n_b) {
    std::vector<double> q(4 * n_b, 0.0);
    for (std::size_t b = 0; b < n_b; ++b) q[macro_index(MacroBlock::Standby, b, n_b)] = 1.0 / static_cast<double>(n_b);
    return q;
}

std::vector<double> uniform_state(std::size_t n_b) {
    return std::vector<double>(4 * n_b, 1.0 / static_cast<double>(4 * n_b));
}

namespace {

SteadyState iterate_to_fixed_point(const Kernel& k, const SteadyStateOptions& options) {
    const std::size_t dim = 4 * k.n_b;
    std::vector<double> q = options.initial.empty() ? uniform_state(k.n_b) : options.initial;
    validate_macro_state(q, dim);
    std::vector<double> next(dim);
    for (std::size_t it = 1; it <= options.max_iter; ++it) {
        apply_kernel(k, q.data(), next.data());
        normalize(next);
        const double change = inf_norm_diff(next, q);
        q.swap(next);
        if (change < options.tol) return {q, change, it, false};
    }
    const double lambda2 = second_eigen_modulus(kernel_matrix(k));
    std::ostringstream msg;
    msg << "macromodel fixed point did not converge in " << options.max_iter << " iterations (|lambda_2| = "
        << std::setprecision(12) << lambda2 << ")";
    throw ConvergenceError(msg.str(), 1.0 - lambda2);
}

}  // namespace

SteadyState steady_state(const MacroModel& model, const ControlFractions& ctrl, const SteadyStateOptions& options) {
    if (!(options.tol > 0.0)) throw std::invalid_argument("steady-state tolerance must be positive");
    const Kernel k = make_kernel(model, ctrl);
    if (options.method == SteadyStateOptions::Method::Iterate) return iterate_to_fixed_point(k, options);

    const auto dim = static_cast<Eigen::Index>(4 * k.n_b);
    const Eigen::MatrixXd a = kernel_matrix(k);
    Eigen::MatrixXd m = a - Eigen::MatrixXd::Identity(dim, dim);
    m.row(dim - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
    rhs(dim - 1) = 1.0;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    lu.setThreshold(1e-13);
    // Several stationary states (beta = 0): settle from the start state.
    if (!lu.isInvertible()) return iterate_to_fixed_point(k, options);
    Eigen::VectorXd x = lu.solve(rhs);
    for (int round = 0; round < 2; ++round) x += lu.solve(rhs - m * x);  // iterative refinement

    SteadyStateOptions polish = options;
    polish.initial.assign(static_cast<std::size_t>(dim), 0.0);
    for (Eigen::Index i = 0; i < dim; ++i) polish.initial[static_cast<std::size_t>(i)] = std::max(0.0, x(i));
    normalize(polish.initial);
    // The iteration only removes rounding left by the solve.
    SteadyState out = iterate_to_fixed_point(k, polish);
    out.direct = true;
    return out;
}

BetaPoint evaluate_beta(const MacroModel& model, double beta_c, double beta_d) {
    const auto ss = steady_state(model, model.control(beta_c, beta_d));
    return {beta_c, beta_d, device_power_kw(model, ss.q), mean_soc(model, ss.q), ss.residual};
}

BetaGrid evaluate_beta_grid(const MacroModel& model, std::size_t n, unsigned threads) {
    if (n < 2) throw std::invalid_argument("beta grid needs at least two points per axis");
    model.validate();
    BetaGrid grid;
    grid.n = n;
    grid.points.resize(n * n);
    const double step = 1.0 / static_cast<double>(n - 1);
    parallel_for(n * n, threads, [&](std::size_t idx) {
        const double bc = static_cast<double>(idx / n) * step;
        const double bd = static_cast<double>(idx % n) * step;
        grid.points[idx] = evaluate_beta(model, bc, bd);
    });
    return grid;
}

namespace {

double objective_value(const NominalObjective& obj, const BetaPoint& p, double x_set) {
    if (p.soc < x_set) return std::numeric_limits<double>::infinity();
    if (obj.kind == NominalObjective::Kind::MinPower) return p.h_kw;
    const double e = p.h_kw - obj.target_kw;
    return e * e;
}

// Golden-section search on [lo, hi] along one axis; returns the best point seen.
BetaPoint golden_axis(const MacroModel& model, const NominalObjective& obj, BetaPoint best, bool along_c, double lo,
                      double hi) {
    const double x_set = model.ess.x_set;
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    auto eval = [&](double v) {
        return along_c ? evaluate_beta(model, v, best.beta_d) : evaluate_beta(model, best.beta_c, v);
    };
    double best_f = objective_value(obj, best, x_set);
    double a = lo, b = hi;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    BetaPoint pc = eval(c), pd = eval(d);
    double fc = objective_value(obj, pc, x_set), fd = objective_value(obj, pd, x_set);
    for (int it = 0; it < 40 && b - a > 1e-9; ++it) {
        if (fc < best_f) best = pc, best_f = fc;
        if (fd < best_f) best = pd, best_f = fd;
        if (fc <= fd) {
            b = d;
            d = c;
            pd = pc;
            fd = fc;
            c = b - invphi * (b - a);
            pc = eval(c);
            fc = objective_value(obj, pc, x_set);
        } else {
            a = c;
            c = d;
            pc = pd;
            fc = fd;
            d = a + invphi * (b - a);
            pd = eval(d);
            fd = objective_value(obj, pd, x_set);
        }
    }
    if (fc < best_f) best = pc;
    return best;
}

}  // namespace

NominalSolution solve_nominal(const MacroModel& model, const BetaGrid& grid, const NominalObjective& objective,
                              bool refine) {
    if (grid.points.empty()) throw std::invalid_argument("empty beta grid");
    const double x_set = model.ess.x_set;
    const BetaPoint* best = nullptr;
    double best_f = std::numeric_limits<double>::infinity();
    double max_soc = -std::numeric_limits<double>::infinity();
    for (const auto& p : grid.points) {
        max_soc = std::max(max_soc, p.soc);
        const double f = objective_value(objective, p, x_set);
        if (f < best_f) {
            best_f = f;
            best = &p;
        }
    }
    if (!best) {
        std::ostringstream msg;
        msg << "no beta meets the SoC constraint " << x_set << "; highest steady SoC " << std::setprecision(6)
            << max_soc;
        throw InfeasibleError(msg.str());
    }
    BetaPoint point = *best;
    if (refine) {
        const double step = 1.0 / static_cast<double>(grid.n - 1);
        point = golden_axis(model, objective, point, true, std::max(0.0, point.beta_c - step),
                            std::min(1.0, point.beta_c + step));
        point = golden_axis(model, objective, point, false, std::max(0.0, point.beta_d - step),
                            std::min(1.0, point.beta_d + step));
    }
    return {point, objective_value(objective, point, x_set)};
}

SteadyFlexResult steady_state_flexibility(const MacroModel& model, const std::vector<double>& avg_power_mw2,
                                          const SteadyFlexOptions& options) {
    if (avg_power_mw2.empty()) throw std::invalid_argument("no signals");
    if (options.n_start == 0 || options.delta_n == 0) throw std::invalid_argument("n_start and delta_n must be positive");
    if (!(options.eps_kw > 0.0)) throw std::invalid_argument("eps must be positive");
    const std::size_t cap =
        options.n_max ? options.n_max
                      : static_cast<std::size_t>(std::llround(100.0 * 1000.0 / model.ess.p_charge_rate));

    SteadyFlexResult result;
    result.eps_kw = options.eps_kw;
    for (double p : avg_power_mw2) {
        if (!(p > 0.0)) throw std::invalid_argument("average signal power must be positive");
        result.target_kw.push_back(std::sqrt(p) * 1000.0);
    }
    const BetaGrid grid = evaluate_beta_grid(model, options.grid_n, options.threads);

    for (std::size_t n = options.n_start; n <= cap; n += options.delta_n) {
        SteadyFlexStep step;
        step.n = n;
        step.pass = true;
        std::vector<NominalSolution> sols(result.target_kw.size());
        parallel_for(sols.size(), options.threads, [&](std::size_t i) {
            sols[i] = solve_nominal(model, grid,
                                    {NominalObjective::Kind::MatchPower, result.target_kw[i] / static_cast<double>(n)});
        });
        for (std::size_t i = 0; i < sols.size(); ++i) {
            const double p_dem = static_cast<double>(n) * sols[i].best.h_kw;
            step.p_dem_kw.push_back(p_dem);
            if (!(std::abs(p_dem - result.target_kw[i]) <= options.eps_kw)) step.pass = false;
        }
        result.trajectory.push_back(step);
        if (step.pass) {
            result.n_min = n;
            result.zeta_kw = 1000.0 / static_cast<double>(n);
            result.solutions = std::move(sols);
            return result;
        }
    }
    std::ostringstream msg;
    msg << "steady-state power match not reached by N = " << cap;
    throw InfeasibleError(msg.str());
}

void write_grid_csv(std::ostream& out, const MacroModel& model, const BetaGrid& grid) {
    out << "beta_c,beta_d,feasible,h_kw,soc,slack,residual\n" << std::setprecision(12);
    for (const auto& p : grid.points) {
        const double slack = p.soc - model.ess.x_set;
        out << p.beta_c << ',' << p.beta_d << ',' << (slack >= 0.0 ? 1 : 0) << ',' << p.h_kw << ',' << p.soc << ','
            << slack << ',' << p.residual << '\n';
    }
}

void write_state_csv(std::ostream& out, const MacroModel& model, const std::vector<double>& q) {
    static const char* names[] = {"charge", "discharge", "standby", "optout"};
    const auto bins = model.bins();
    out << "block,bin,center,q\n" << std::setprecision(12);
    for (std::size_t blk = 0; blk < 4; ++blk) {
        for (std::size_t b = 0; b < model.n_b; ++b) {
            out << names[blk] << ',' << b << ',' << bins.centers[b] << ',' << q[blk * model.n_b + b] << '\n';
        }
    }
}

void write_steady_flex_csv(std::ostream& out, const SteadyFlexResult& result) {
    out << "n,signal,target_kw,p_dem_kw,pass\n" << std::setprecision(12);
    for (const auto& step : result.trajectory) {
        for (std::size_t i = 0; i < step.p_dem_kw.size(); ++i) {
            out << step.n << ',' << i << ',' << result.target_kw[i] << ',' << step.p_dem_kw[i] << ','
                << (std::abs(step.p_dem_kw[i] - result.target_kw[i]) <= result.eps_kw ? 1 : 0) << '\n';
        }
    }
}

}  // namespace derflex
