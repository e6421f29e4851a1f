#pragma once

// Run cost accounting: tokens, wall time, and energy integrated from
// externally sampled power readings.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace cosmosfl {

struct PowerSample {
  double timestamp_ms = 0.0;  // since session start
  double power_w = 0.0;
};

struct TimeWindow {
  double start_ms = 0.0;
  double end_ms = 0.0;

  double seconds() const { return (end_ms - start_ms) / 1000.0; }
};

/// Token counts with the total derived, never stored separately.
struct TokenCount {
  std::int64_t in = 0;
  std::int64_t out = 0;

  std::int64_t total() const { return in + out; }
  TokenCount& operator+=(const TokenCount& o) {
    in += o.in;
    out += o.out;
    return *this;
  }
};

struct CostRecord {
  TokenCount tokens;
  std::int64_t wall_time_ms = 0;
  std::optional<double> energy_j;
  std::optional<double> power_mean_w;
};

/// Throws ValidationError unless timestamps strictly increase and powers are
/// non-negative.
void validate_power_samples(std::span<const PowerSample> samples);

/// Trapezoidal integral (joules) of the piecewise-linear power trace over the
/// part of `window` that the samples span. Empty when that overlap has zero
/// length. Throws ValidationError for a window with start >= end or for
/// invalid samples.
std::optional<double> integrate_energy(std::span<const PowerSample> samples, TimeWindow window);

/// Reads "timestamp_ms,power_w" CSV. Errors name the offending line.
std::vector<PowerSample> ingest_power_csv(const std::filesystem::path& path);

/// Fills energy_j and power_mean_w (energy over window seconds) from the
/// samples overlapping `window`; both stay empty without overlap.
/// Throws ValidationError for a zero-length window.
void attach_energy(CostRecord& cost, TimeWindow window, std::span<const PowerSample> samples);

/// Millisecond clock used to time runs.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now_ms() const = 0;
};

/// Monotonic wall clock measured from construction.
class SteadyClock final : public Clock {
 public:
  SteadyClock() : origin_(std::chrono::steady_clock::now()) {}
  double now_ms() const override {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - origin_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point origin_;
};

/// Simulated clock, advanced explicitly. Used for replayable experiments.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(double start_ms = 0.0) : now_(start_ms) {}
  double now_ms() const override { return now_.load(); }
  void advance(double ms) {
    double cur = now_.load();
    while (!now_.compare_exchange_weak(cur, cur + ms)) {
    }
  }

 private:
  std::atomic<double> now_;
};

}  // namespace cosmosfl
