#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "delta/dither.hpp"

using namespace delta;

TEST_CASE("waveform values at the start of the period") {
  const DitherSchedule d{4, 5.0, {}};
  const auto [dx0, ds0] = d.at(0, 0);
  CHECK(dx0 == 5.0);
  CHECK(ds0 == 0.0);

  const auto [dx1, ds1] = d.at(0, 1);
  CHECK(std::abs(dx1) <= 1e-15);
  CHECK(ds1 == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("bit-exact periodicity") {
  const DitherSchedule d{4, 5.0, {}};
  for (std::int64_t k : {0LL, 1LL, 2LL, 3LL, 17LL, 123456789LL, 99999999999LL}) {
    const auto a = d.at(0, k);
    const auto b = d.at(0, k + 4);
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
  }
}

TEST_CASE("one period traces distinct points on the amplitude circle") {
  const DitherSchedule d{4, 5.0, {}};
  std::set<std::pair<double, double>> points;
  for (int k = 0; k < 4; ++k) {
    const auto [dx, ds] = d.at(0, k);
    CHECK(std::hypot(dx, ds) == doctest::Approx(5.0).epsilon(1e-12));
    points.insert({dx, ds});
  }
  CHECK(points.size() == 4);
}

TEST_CASE("per-agent phase offsets shift the waveform") {
  const double quarter = std::acos(-1.0) / 2.0;
  const DitherSchedule d{4, 5.0, {0.0, quarter}};
  const auto agent0 = d.at(0, 0);
  const auto agent1 = d.at(1, 0);
  CHECK(agent0.first == 5.0);
  CHECK(agent1.second == doctest::Approx(5.0).epsilon(1e-12));
  // A quarter-period phase equals a one-step shift.
  const auto shifted = d.at(0, 1);
  CHECK(agent1.first == doctest::Approx(shifted.first).epsilon(1e-12));
}

TEST_CASE("validation") {
  CHECK_THROWS_AS((DitherSchedule{0, 5.0, {}}.validate(3)), ConfigError);
  CHECK_THROWS_AS((DitherSchedule{4, 0.0, {}}.validate(3)), ConfigError);
  CHECK_THROWS_AS((DitherSchedule{4, 5.0, {0.0}}.validate(3)), ConfigError);
  DitherSchedule{4, 5.0, {}}.validate(3);
  DitherSchedule{4, 5.0, {0.0, 0.1, 0.2}}.validate(3);
}
