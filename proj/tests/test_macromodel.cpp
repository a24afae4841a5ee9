#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "derflex/macromodel.hpp"

using namespace derflex;

namespace {

double block_sum(const std::vector<double>& q, MacroBlock b, std::size_t n_b) {
    double s = 0.0;
    for (std::size_t i = 0; i < n_b; ++i) s += q[macro_index(b, i, n_b)];
    return s;
}

std::vector<double> random_state(std::mt19937_64& rng, std::size_t dim) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> q(dim);
    for (auto& v : q) v = u(rng);
    const double s = std::accumulate(q.begin(), q.end(), 0.0);
    for (auto& v : q) v /= s;
    return q;
}

}  // namespace

TEST_CASE("bins over the band") {
    const auto b = build_bins(0.1, 0.9, 2);
    REQUIRE(b.size() == 2);
    CHECK(b.centers[0] == doctest::Approx(0.3));
    CHECK(b.centers[1] == doctest::Approx(0.7));
    CHECK(b.width == doctest::Approx(0.4));
    CHECK(soc_weights(b).size() == 8);
}

TEST_CASE("drift fractions") {
    MacroModel m;
    const double w = 0.8 / 20.0;
    CHECK(m.drift_up() == doctest::Approx(0.95 * 5.0 * 2.0 / (3600.0 * 13.5 * w)));
    CHECK(m.drift_down() == doctest::Approx(5.0 * 2.0 / (0.95 * 13.5 * 3600.0 * w)));
    CHECK(m.optout_dwell_top() == doctest::Approx(1.0));
    CHECK(m.optout_dwell_bottom() >= 1.0);
}

TEST_CASE("standby is absorbing without grants or expiry") {
    MacroModel m;
    std::vector<double> q = uniform_standby(m.n_b);
    const auto next = macro_step(m, q, ControlFractions{});
    for (std::size_t i = 0; i < q.size(); ++i) CHECK(next[i] == doctest::Approx(q[i]).epsilon(1e-15));
}

TEST_CASE("full expiry sends charging mass to standby") {
    MacroModel m;
    std::vector<double> q(m.dim(), 0.0);
    q[macro_index(MacroBlock::Charge, 7, m.n_b)] = 1.0;
    ControlFractions c;
    c.beta_minus_c = 1.0;
    c.beta_minus_d = 1.0;
    const auto next = macro_step(m, q, c);
    CHECK(block_sum(next, MacroBlock::Charge, m.n_b) == 0.0);
    CHECK(block_sum(next, MacroBlock::Standby, m.n_b) == doctest::Approx(1.0));
    CHECK(next[macro_index(MacroBlock::Standby, 8, m.n_b)] == doctest::Approx(m.drift_up()));
    CHECK(next[macro_index(MacroBlock::Standby, 7, m.n_b)] == doctest::Approx(1.0 - m.drift_up()));
}

TEST_CASE("transition matrix is column stochastic and conserves mass over 1e4 steps") {
    MacroModel m;
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto ctrl = m.control(u(rng), u(rng));
    const auto a = transition_matrix(m, ctrl);
    const std::size_t d = m.dim();
    for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            REQUIRE(a[i * d + j] >= 0.0);
            s += a[i * d + j];
        }
        REQUIRE(std::abs(s - 1.0) < 1e-14);
    }
    auto q = random_state(rng, d);
    std::vector<double> next(d);
    for (int k = 0; k < 10000; ++k) {
        for (std::size_t i = 0; i < d; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += a[i * d + j] * q[j];
            next[i] = s;
        }
        q.swap(next);
    }
    CHECK(std::abs(std::accumulate(q.begin(), q.end(), 0.0) - 1.0) <= 1e-8);
}

TEST_CASE("macro_step agrees with the matrix and is linear") {
    MacroModel m;
    std::mt19937_64 rng(3);
    const auto ctrl = m.control(0.6, 0.3);
    const auto a = transition_matrix(m, ctrl);
    const auto q1 = random_state(rng, m.dim());
    const auto q2 = random_state(rng, m.dim());
    std::vector<double> mix(m.dim());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 0.3 * q1[i] + 0.7 * q2[i];
    const auto s1 = macro_step(m, q1, ctrl);
    const auto s2 = macro_step(m, q2, ctrl);
    const auto sm = macro_step(m, mix, ctrl);
    for (std::size_t i = 0; i < mix.size(); ++i) {
        double aq = 0.0;
        for (std::size_t j = 0; j < mix.size(); ++j) aq += a[i * m.dim() + j] * q1[j];
        CHECK(s1[i] == doctest::Approx(aq).epsilon(1e-12));
        CHECK(sm[i] == doctest::Approx(0.3 * s1[i] + 0.7 * s2[i]).epsilon(1e-12));
    }
}

TEST_CASE("aggregate power") {
    MacroModel m;
    CHECK(aggregate_power(m, uniform_standby(m.n_b), 1000.0) == 0.0);
    std::vector<double> q(m.dim(), 0.0);
    for (std::size_t b = 0; b < m.n_b; ++b) q[macro_index(MacroBlock::Charge, b, m.n_b)] = 1.0 / 20.0;
    CHECK(aggregate_power(m, q, 1000.0) == doctest::Approx(5000.0));
    CHECK(mean_soc(m, q) == doctest::Approx(0.5));
}

TEST_CASE("steady state residual and agreement of both solvers") {
    MacroModel m;
    const auto ctrl = m.control(0.8, 0.5);
    const auto direct = steady_state(m, ctrl);
    CHECK(direct.direct);
    CHECK(direct.residual <= 1e-10);

    SteadyStateOptions it;
    it.method = SteadyStateOptions::Method::Iterate;
    it.initial = uniform_standby(m.n_b);
    it.tol = 1e-14;
    const auto iter = steady_state(m, ctrl, it);
    CHECK(iter.residual <= 1e-10);
    double diff = 0.0;
    for (std::size_t i = 0; i < m.dim(); ++i) diff = std::max(diff, std::abs(direct.q[i] - iter.q[i]));
    CHECK(diff < 1e-7);
}

TEST_CASE("beta = 0 empties the packet blocks") {
    MacroModel m;
    SteadyStateOptions o;
    o.tol = 1e-14;
    const auto ss = steady_state(m, m.control(0.0, 0.0), o);
    CHECK(ss.residual <= 1e-14);
    CHECK(block_sum(ss.q, MacroBlock::Charge, m.n_b) < 1e-9);
    CHECK(block_sum(ss.q, MacroBlock::Discharge, m.n_b) < 1e-9);
    CHECK(device_power_kw(m, ss.q) == doctest::Approx(0.0).epsilon(1e-8));
}

TEST_CASE("vacuous SoC constraint gives the grid minimum") {
    MacroModel m;
    const auto grid = evaluate_beta_grid(m, 11);
    MacroModel free_soc = m;
    free_soc.ess.x_set = 0.0;
    const auto sol = solve_nominal(free_soc, grid, {}, false);
    double lowest = 1e300;
    for (const auto& p : grid.points) lowest = std::min(lowest, p.h_kw);
    CHECK(sol.best.h_kw == lowest);
}

TEST_CASE("an unreachable SoC constraint is infeasible") {
    MacroModel m;
    const auto grid = evaluate_beta_grid(m, 5);
    MacroModel strict = m;
    strict.ess.x_set = 0.89;
    CHECK_THROWS_AS(solve_nominal(strict, grid, {}), InfeasibleError);
}

TEST_CASE("matching an attainable power drives the objective to zero") {
    MacroModel m;
    const auto grid = evaluate_beta_grid(m, 11);
    const auto target = grid.at(10, 7);
    REQUIRE(target.soc >= m.ess.x_set);
    const auto sol = solve_nominal(m, grid, {NominalObjective::Kind::MatchPower, target.h_kw});
    CHECK(sol.objective < 1e-12);
}

TEST_CASE("min-power solutions agree across grid resolutions") {
    MacroModel m;
    const auto coarse = solve_nominal(m, evaluate_beta_grid(m, 21), {});
    const auto fine = solve_nominal(m, evaluate_beta_grid(m, 41), {});
    CHECK(std::abs(coarse.best.h_kw - fine.best.h_kw) < 0.01);
}

TEST_CASE("a huge tolerance stops the steady-state search at n_start") {
    MacroModel m;
    SteadyFlexOptions o;
    o.eps_kw = 1e9;
    o.grid_n = 5;
    const auto r = steady_state_flexibility(m, {0.2, 0.3}, o);
    CHECK(r.n_min == o.n_start);
    CHECK(r.zeta_kw == doctest::Approx(20.0));
    REQUIRE(r.target_kw.size() == 2);
    CHECK(r.target_kw[0] == doctest::Approx(std::sqrt(0.2) * 1000.0));
}

TEST_CASE("state csv has one row per cell") {
    MacroModel m;
    m.n_b = 4;
    std::ostringstream out;
    write_state_csv(out, m, uniform_state(4));
    const std::string text = out.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 17);
}
