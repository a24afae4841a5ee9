#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "derflex/coordinator_cc.hpp"
#include "derflex/coordinator_pem.hpp"
#include "derflex/errors.hpp"

using namespace derflex;

namespace {

Fleet ess_fleet(std::initializer_list<double> xs, Mode mode = Mode::Standby, double dt = 2.0) {
    Fleet f;
    f.dt_seconds = dt;
    for (double x : xs) {
        Device d{EssParams{}, {}};
        d.state.x = x;
        d.state.mode = mode;
        f.devices.push_back(d);
    }
    return f;
}

Fleet uniform_ess(std::size_t n, double x, double dt = 2.0) {
    Fleet f = build_fleet(EssParams{}, n, 0.0, 1, {dt, zero_draw_profile()});
    for (auto& d : f.devices) d.state.x = x;
    return f;
}

ReferenceSignal constant_reference(double mw, std::size_t samples) {
    ReferenceSignal r;
    r.samples.assign(samples, mw);
    return r;
}

}  // namespace

TEST_CASE("cc with no error issues no commands") {
    auto f = ess_fleet({0.2, 0.5, 0.8});
    CHECK(cc_dispatch(f, 0.0, 0.0).empty());
}

TEST_CASE("cc charges the emptiest standby devices first") {
    auto f = ess_fleet({0.8, 0.2, 0.5});
    const auto cmds = cc_dispatch(f, 10.0, 0.0);
    REQUIRE(cmds.size() == 2);
    CHECK(cmds[0].device_index == 1);
    CHECK(cmds[1].device_index == 2);
    CHECK(cmds[0].target_mode == Mode::Charge);
}

TEST_CASE("cc releases the fullest charging device on a small negative error") {
    auto f = ess_fleet({0.3, 0.7, 0.5}, Mode::Charge);
    const auto cmds = cc_dispatch(f, 10.0, 15.0);
    REQUIRE(cmds.size() == 1);
    CHECK(cmds[0].device_index == 1);
    CHECK(cmds[0].target_mode == Mode::Standby);
}

TEST_CASE("cc tracks a constant 1 MW with 200 batteries and saturates with 199") {
    const auto ref = constant_reference(1.0, 1800);
    const auto full = simulate_cc(uniform_ess(200, 0.5), ref, 1);
    for (double p : full.p_dem_kw) REQUIRE(p == doctest::Approx(1000.0));
    const auto short_fleet = simulate_cc(uniform_ess(199, 0.5), ref, 1);
    for (double p : short_fleet.p_dem_kw) REQUIRE(p == doctest::Approx(995.0));
}

TEST_CASE("cc holds a zero reference within one device quantum") {
    auto f = ess_fleet({0.3, 0.4, 0.5, 0.6, 0.7});
    const auto tr = simulate_cc(f, constant_reference(0.0, 600), 1);
    for (double p : tr.p_dem_kw) REQUIRE(std::abs(p) <= 5.0);
}

TEST_CASE("charge request rate") {
    PemParams pem;
    EssParams p;
    CHECK(charge_request_rate(p.x_hi, p, pem) == 0.0);
    CHECK(charge_request_rate(p.x_set, p, pem) == doctest::Approx(1.0 / 120.0).epsilon(1e-14));
    CHECK(charge_request_rate(0.3, p, pem) == doctest::Approx(0.025).epsilon(1e-14));
    CHECK(std::isinf(charge_request_rate(p.x_lo, p, pem)));
    CHECK(charge_request_rate(0.6, p, pem) < charge_request_rate(0.55, p, pem));
}

TEST_CASE("discharge request rate mirrors the charge rate") {
    PemParams pem;
    EssParams p;
    CHECK(discharge_request_rate(p.x_lo, p, pem) == 0.0);
    CHECK(discharge_request_rate(p.x_set, p, pem) == doctest::Approx(1.0 / 120.0).epsilon(1e-14));
    CHECK(discharge_request_rate(0.7, p, pem) == doctest::Approx(charge_request_rate(0.3, p, pem)).epsilon(1e-12));
    CHECK_THROWS_AS(discharge_request_rate(130.0, EwhParams{}, pem), UnsupportedDirection);
}

TEST_CASE("request probability") {
    CHECK(request_probability(0.0, 2.0) == 0.0);
    CHECK(request_probability(std::numeric_limits<double>::infinity(), 2.0) == 1.0);
    CHECK(request_probability(0.025, 4.0) == doctest::Approx(1.0 - std::exp(-0.1)).epsilon(1e-14));
    CHECK(request_probability(0.025, 4.0) == doctest::Approx(0.09516).epsilon(1e-4));
}

TEST_CASE("pem poll frequency at the setpoint matches the race form") {
    PemParams pem;
    pem.poll_dt_s = 4.0;
    const std::size_t n = 100000;
    const auto f = uniform_ess(n, 0.5, 4.0);
    std::mt19937_64 rng(21);
    const auto req = pem_poll(f, pem, rng);
    std::size_t charge = 0;
    for (const auto& r : req) charge += r.direction == Direction::Charge ? 1 : 0;
    const double p = (1.0 - std::exp(-2.0 * 4.0 / 120.0)) / 2.0;
    const double sd = std::sqrt(static_cast<double>(n) * p * (1.0 - p));
    CHECK(std::abs(static_cast<double>(charge) - static_cast<double>(n) * p) <= 3.0 * sd);
}

TEST_CASE("pem poll gates on mode and band edge") {
    PemParams pem;
    std::mt19937_64 rng(1);
    auto full = ess_fleet({0.9, 0.9, 0.9});
    for (int i = 0; i < 200; ++i) {
        for (const auto& r : pem_poll(full, pem, rng)) REQUIRE(r.direction == Direction::Discharge);
    }
    auto busy = ess_fleet({0.5, 0.5}, Mode::Charge);
    for (auto& d : busy.devices) d.state.packet_remaining_s = 60.0;
    for (int i = 0; i < 200; ++i) REQUIRE(pem_poll(busy, pem, rng).empty());
}

TEST_CASE("pem grant stops before overshooting") {
    const auto f = ess_fleet({0.5, 0.5, 0.5, 0.5});
    std::vector<PemRequest> req{{0, Direction::Charge}, {1, Direction::Charge}, {2, Direction::Charge}};
    CHECK(pem_grant(req, 0.0, 0.0, f).empty());
    const auto g = pem_grant(req, 0.0, 12.0, f);
    REQUIRE(g.size() == 2);
    CHECK(g[0].device_index == 0);
    CHECK(g[1].device_index == 1);

    std::vector<PemRequest> dis{{1, Direction::Discharge}, {2, Direction::Discharge}, {3, Direction::Discharge}};
    CHECK(pem_grant(dis, 0.0, -7.0, f).size() == 1);
}

TEST_CASE("fixed-fraction grants at the extremes") {
    std::vector<PemRequest> req{{0, Direction::Charge}, {1, Direction::Discharge}};
    std::mt19937_64 rng(3);
    CHECK(grant_fixed_fraction(req, 0.0, 0.0, rng).empty());
    CHECK(grant_fixed_fraction(req, 1.0, 1.0, rng).size() == 2);
    const auto only_c = grant_fixed_fraction(req, 1.0, 0.0, rng);
    REQUIRE(only_c.size() == 1);
    CHECK(only_c[0].direction == Direction::Charge);
}

TEST_CASE("packet expiry and opt-out rules") {
    auto f = ess_fleet({0.5, 0.09});
    f.devices[0].state.mode = Mode::Charge;
    f.devices[0].state.packet_remaining_s = 2.0;
    const auto entered = pem_step_and_optout(f, 2.0, 0.0);
    CHECK(f.devices[0].state.mode == Mode::Standby);
    CHECK(f.devices[1].state.mode == Mode::OptOut);
    CHECK(f.devices[1].state.optout == OptOutAction::Charge);
    CHECK(entered == 1);

    Fleet h;
    h.dt_seconds = 2.0;
    Device d{EwhParams{}, {}};
    d.state.x = EwhParams{}.x_hi + 1.0;
    h.devices.push_back(d);
    pem_step_and_optout(h, 2.0, 0.0);
    CHECK(h.devices[0].state.mode == Mode::OptOut);
    CHECK(h.devices[0].state.optout == OptOutAction::Idle);
    CHECK(h.devices[0].power_kw() == 0.0);
    const double before = h.devices[0].state.x;
    pem_step_and_optout(h, 2.0, 0.0);
    CHECK(h.devices[0].state.x < before);
}

TEST_CASE("pem simulation is reproducible and idle on a zero reference") {
    const auto ref = constant_reference(0.0, 900);
    const auto f = uniform_ess(200, 0.5);
    PemParams pem;
    const auto a = simulate_pem(f, ref, pem, 5);
    const auto b = simulate_pem(f, ref, pem, 5);
    CHECK(a.p_dem_kw == b.p_dem_kw);
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a.n_grant_c[i] == 0);
        REQUIRE(a.n_grant_d[i] == 0);
        REQUIRE(a.p_dem_kw[i] == 0.0);
    }
}

TEST_CASE("pem simulation rejects a mismatched step") {
    auto ref = constant_reference(0.1, 10);
    ref.dt_seconds = 4.0;
    CHECK_THROWS(simulate_pem(build_fleet(EssParams{}, 5, 0.0, 1), ref, PemParams{}, 1));
}
