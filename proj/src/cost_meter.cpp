#include "cosmosfl/cost_meter.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <string>
#include <string_view>

#include "cosmosfl/error.hpp"

namespace cosmosfl {

void validate_power_samples(std::span<const PowerSample> samples) {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!(samples[i].power_w >= 0.0)) {
      throw ValidationError("power sample " + std::to_string(i) + " is negative");
    }
    if (i > 0 && !(samples[i].timestamp_ms > samples[i - 1].timestamp_ms)) {
      throw ValidationError("power sample timestamps not strictly increasing at sample " +
                            std::to_string(i));
    }
  }
}

std::optional<double> integrate_energy(std::span<const PowerSample> samples, TimeWindow window) {
  if (!(window.start_ms < window.end_ms)) {
    throw ValidationError("energy window must satisfy start < end");
  }
  validate_power_samples(samples);
  if (samples.size() < 2) return std::nullopt;
  const double lo = std::max(window.start_ms, samples.front().timestamp_ms);
  const double hi = std::min(window.end_ms, samples.back().timestamp_ms);
  if (!(lo < hi)) return std::nullopt;

  const auto power_at = [](const PowerSample& a, const PowerSample& b, double t) {
    const double f = (t - a.timestamp_ms) / (b.timestamp_ms - a.timestamp_ms);
    return a.power_w + f * (b.power_w - a.power_w);
  };

  double joules = 0.0;
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const auto& a = samples[i - 1];
    const auto& b = samples[i];
    const double t0 = std::max(lo, a.timestamp_ms);
    const double t1 = std::min(hi, b.timestamp_ms);
    if (!(t0 < t1)) continue;
    const double p0 = t0 == a.timestamp_ms ? a.power_w : power_at(a, b, t0);
    const double p1 = t1 == b.timestamp_ms ? b.power_w : power_at(a, b, t1);
    joules += 0.5 * (p0 + p1) * (t1 - t0) / 1000.0;
  }
  return joules;
}

namespace {

double parse_number(std::string_view field, const std::string& where) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
    field.remove_suffix(1);
  }
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw ValidationError(where + ": not a number: '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

std::vector<PowerSample> ingest_power_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read power CSV " + path.string());
  std::string line;
  std::size_t lineno = 0;
  std::vector<PowerSample> samples;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = path.string() + ": line " + std::to_string(lineno);
    if (lineno == 1) {
      if (line != "timestamp_ms,power_w") {
        throw ValidationError(where + ": expected header 'timestamp_ms,power_w'");
      }
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw ValidationError(where + ": expected two comma-separated fields");
    }
    PowerSample s{parse_number(std::string_view(line).substr(0, comma), where),
                  parse_number(std::string_view(line).substr(comma + 1), where)};
    if (s.power_w < 0.0) throw ValidationError(where + ": negative power");
    if (!samples.empty() && !(s.timestamp_ms > samples.back().timestamp_ms)) {
      throw ValidationError(where + ": timestamps must strictly increase");
    }
    samples.push_back(s);
  }
  if (lineno == 0) throw ValidationError(path.string() + ": line 1: missing header");
  return samples;
}

void attach_energy(CostRecord& cost, TimeWindow window, std::span<const PowerSample> samples) {
  cost.energy_j = integrate_energy(samples, window);
  cost.power_mean_w.reset();
  if (cost.energy_j) cost.power_mean_w = *cost.energy_j / window.seconds();
}

}  // namespace cosmosfl
