#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cosmosfl/cost_meter.hpp"
#include "cosmosfl/error.hpp"
#include "cosmosfl/rng.hpp"

using namespace cosmosfl;
namespace fs = std::filesystem;

namespace {

std::vector<PowerSample> ramp(double t0, double t1, double step, double p0, double p1) {
  std::vector<PowerSample> s;
  for (double t = t0; t <= t1 + 1e-9; t += step) s.push_back({t, p0 + (p1 - p0) * (t - t0) / (t1 - t0)});
  return s;
}

fs::path csv(const std::string& name, const std::string& text) {
  const auto p = fs::temp_directory_path() / ("cosmosfl_power_" + name + ".csv");
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("constant power over ten seconds") {
  const auto s = ramp(0, 10000, 1000, 100, 100);
  const auto e = integrate_energy(s, {0, 10000});
  REQUIRE(e);
  CHECK(std::abs(*e - 1000.0) < 1e-9);
}

TEST_CASE("linear ramp integrates to the triangle area") {
  const auto s = ramp(0, 10000, 1000, 0, 100);
  const auto e = integrate_energy(s, {0, 10000});
  REQUIRE(e);
  CHECK(std::abs(*e - 500.0) < 1e-9);
  // Window cut between samples: exact for a linear trace.
  const auto part = integrate_energy(s, {2500, 7500});
  REQUIRE(part);
  CHECK(std::abs(*part - (25.0 + 75.0) / 2.0 * 5.0) < 1e-9);
}

TEST_CASE("no overlap, empty or degenerate input") {
  CHECK_FALSE(integrate_energy({}, {0, 10}));
  const std::vector<PowerSample> one{{5, 10}};
  CHECK_FALSE(integrate_energy(one, {0, 10}));
  const auto s = ramp(0, 1000, 100, 5, 5);
  CHECK_FALSE(integrate_energy(s, {2000, 3000}));
  CHECK_THROWS_AS(integrate_energy(s, {10, 10}), ValidationError);
  const std::vector<PowerSample> back{{0, 1}, {10, 1}, {5, 1}};
  CHECK_THROWS_AS(integrate_energy(back, {0, 10}), ValidationError);
  const std::vector<PowerSample> negative{{0, 1}, {10, -1}};
  CHECK_THROWS_AS(integrate_energy(negative, {0, 10}), ValidationError);
}

TEST_CASE("property: additivity and translation invariance") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<PowerSample> s;
    double t = rng.uniform(0, 100);
    for (int i = 0, n = 3 + static_cast<int>(rng.index(40)); i < n; ++i) {
      s.push_back({t, rng.uniform(0, 300)});
      t += rng.uniform(1, 250);
    }
    const TimeWindow whole{s.front().timestamp_ms, s.back().timestamp_ms};
    const auto split = s[1 + rng.index(s.size() - 2)].timestamp_ms;
    const auto total = *integrate_energy(s, whole);
    const auto left = *integrate_energy(s, {whole.start_ms, split});
    const auto right = *integrate_energy(s, {split, whole.end_ms});
    CHECK(std::abs(total - (left + right)) < 1e-9);

    const double shift = rng.uniform(-1e4, 1e4);
    auto moved = s;
    for (auto& p : moved) p.timestamp_ms += shift;
    const auto shifted = *integrate_energy(moved, {whole.start_ms + shift, whole.end_ms + shift});
    CHECK(std::abs(shifted - total) < 1e-6 * std::max(1.0, total));
  }
}

TEST_CASE("attach_energy fills energy and mean power") {
  CostRecord c;
  attach_energy(c, {0, 10000}, ramp(0, 10000, 1000, 100, 100));
  REQUIRE(c.energy_j);
  CHECK(*c.power_mean_w == doctest::Approx(100.0));
  CostRecord none;
  attach_energy(none, {50000, 60000}, ramp(0, 10000, 1000, 100, 100));
  CHECK_FALSE(none.energy_j);
  CHECK_FALSE(none.power_mean_w);
  CHECK_THROWS_AS(attach_energy(none, {5, 5}, {}), ValidationError);
}

TEST_CASE("power CSV ingestion") {
  const auto ok = ingest_power_csv(csv("ok", "timestamp_ms,power_w\n0,10.5\n100,11\n200,12\n"));
  REQUIRE(ok.size() == 3);
  CHECK(ok[2].power_w == 12.0);
  CHECK_THROWS_WITH_AS(ingest_power_csv(csv("dec", "timestamp_ms,power_w\n0,1\n100,1\n50,1\n")),
                       doctest::Contains("line 4"), ValidationError);
  CHECK_THROWS_WITH_AS(ingest_power_csv(csv("neg", "timestamp_ms,power_w\n0,1\n100,-2\n")),
                       doctest::Contains("line 3"), ValidationError);
  CHECK_THROWS_AS(ingest_power_csv(csv("hdr", "time,watts\n0,1\n")), ValidationError);
  CHECK_THROWS_AS(ingest_power_csv(csv("junk", "timestamp_ms,power_w\n0,abc\n")), ValidationError);
  CHECK_THROWS_AS(ingest_power_csv("/nonexistent/power.csv"), IoError);
}

TEST_CASE("token totals are derived") {
  TokenCount t{3, 4};
  CHECK(t.total() == 7);
  t += {10, 1};
  CHECK(t.total() == 18);
}

TEST_CASE("manual clock advances only when told") {
  ManualClock c(100);
  CHECK(c.now_ms() == 100);
  c.advance(25.5);
  CHECK(c.now_ms() == 125.5);
}
