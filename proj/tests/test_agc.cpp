#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "derflex/agc.hpp"
#include "derflex/errors.hpp"

using namespace derflex;

namespace {

double mean_of(const std::vector<double>& v, std::size_t from, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = from; i < from + n; ++i) s += v[i];
    return s / static_cast<double>(n);
}

AgcTrace constant_hours(std::initializer_list<double> means) {
    AgcTrace t;
    for (double m : means) t.samples.insert(t.samples.end(), 1800, m);
    return t;
}

}  // namespace

TEST_CASE("parse_agc reads samples and skips comments") {
    std::istringstream in("# header\n0.5\n\n-0.25\n1\n");
    const auto t = parse_agc(in, 2.0);
    REQUIRE(t.samples.size() == 3);
    CHECK(t.samples[1] == -0.25);
}

TEST_CASE("parse_agc rejects out-of-range and non-numeric lines") {
    std::istringstream bad("0.1\n1.5\n");
    CHECK_THROWS_AS(parse_agc(bad, 2.0), DataError);
    std::istringstream text("0.1\nabc\n");
    CHECK_THROWS_AS(parse_agc(text, 2.0), DataError);
}

TEST_CASE("an hour of 1800 two-second samples") {
    AgcTrace t = constant_hours({0.1});
    CHECK(t.samples_per_hour() == 1800);
    CHECK(t.whole_hours() == 1);
}

TEST_CASE("hourly_stats of constant and symmetric hours") {
    auto c = hourly_stats(constant_hours({0.3, 0.3, 0.3}));
    REQUIRE(c.hourly_means.size() == 3);
    CHECK(c.hourly_means[2] == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(c.sigma_agc == doctest::Approx(0.0));

    auto s = hourly_stats(constant_hours({0.4, -0.4}));
    CHECK(s.mu_agc == doctest::Approx(0.0));
    CHECK(s.sigma_agc == doctest::Approx(0.4));
}

TEST_CASE("hourly_stats drops a trailing partial hour") {
    AgcTrace t = constant_hours({0.2});
    t.samples.insert(t.samples.end(), 900, -1.0);
    CHECK(hourly_stats(t).hourly_means.size() == 1);
}

TEST_CASE("synthesize_agc hits hourly targets") {
    const double sigma = 0.272;
    const std::vector<double> targets{0.0, 2 * sigma, -3 * sigma, 0.1};
    const auto a = synthesize_agc(7, targets.size(), targets);
    const auto b = synthesize_agc(8, targets.size(), targets);
    REQUIRE(a.samples.size() == 4 * 1800);
    for (std::size_t h = 0; h < targets.size(); ++h) {
        CHECK(std::abs(mean_of(a.samples, h * 1800, 1800) - targets[h]) <= 1e-6);
        CHECK(std::abs(mean_of(b.samples, h * 1800, 1800) - targets[h]) <= 1e-6);
    }
    for (double v : a.samples) REQUIRE(std::abs(v) <= 1.0);
    CHECK(a.samples != b.samples);
}

TEST_CASE("synthesize_year follows the target statistics") {
    SyntheticYear spec;
    spec.hours = 2000;
    const auto year = synthesize_year(3, spec);
    const auto stats = hourly_stats(year);
    REQUIRE(stats.hourly_means.size() == 2000);
    CHECK(std::abs(stats.mu_agc - spec.target_mean) < 0.03);
    CHECK(std::abs(stats.sigma_agc - spec.target_sd) < 0.03);
}

TEST_CASE("select_representative picks the unique qualifying hours") {
    // sigma is fixed at a binary-exact value so the hour means sit exactly on the targets
    const double s = 0.125;
    AgcStats stats;
    stats.mu_agc = 0.0;
    stats.sigma_agc = s;
    AgcTrace t = constant_hours({2 * s, 0.01, 2 * s, -2 * s, 0.02, -2 * s, 3 * s, -3 * s, 0.0});
    stats.hourly_means = hourly_stats(t).hourly_means;
    const auto sel = select_representative(t, stats, 11);
    REQUIRE(sel.hours.size() == 6);
    std::vector<std::size_t> idx;
    for (const auto& r : sel.records) idx.push_back(r.hour_index);
    CHECK(idx[4] == 6);
    CHECK(idx[5] == 7);
    std::vector<std::size_t> plus{idx[0], idx[1]};
    std::sort(plus.begin(), plus.end());
    CHECK(plus == std::vector<std::size_t>{0, 2});
    std::vector<std::size_t> minus{idx[2], idx[3]};
    std::sort(minus.begin(), minus.end());
    CHECK(minus == std::vector<std::size_t>{3, 5});

    const auto again = select_representative(t, stats, 11);
    for (std::size_t i = 0; i < 6; ++i) CHECK(again.records[i].hour_index == sel.records[i].hour_index);
}

TEST_CASE("make_reference scales, repeats and offsets") {
    AgcTrace h = constant_hours({0.5});
    const auto r = make_reference(h, 1.0, 1, 0.0);
    CHECK(r.samples.front() == 0.5);
    CHECK(r.samples.back() == 0.5);

    AgcTrace v;
    for (int i = 0; i < 1800; ++i) v.samples.push_back(std::sin(0.01 * i) * 0.5);
    const auto r3 = make_reference(v, 1.0, 3, 0.0);
    REQUIRE(r3.samples.size() == 3 * 1800);
    CHECK(r3.samples[17] == r3.samples[17 + 1800]);
    CHECK(r3.samples[17] == r3.samples[17 + 3600]);

    const auto rb = make_reference(v, 1.0, 1, 2.0);
    const double m = std::accumulate(v.samples.begin(), v.samples.end(), 0.0) / 1800.0;
    const double mb = std::accumulate(rb.samples.begin(), rb.samples.end(), 0.0) / 1800.0;
    CHECK(mb == doctest::Approx(2.0 + m).epsilon(1e-12));
}
