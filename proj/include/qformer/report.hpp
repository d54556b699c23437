// Machine-readable run reports: every CLI command emits one RunReport
// naming the stages it executed and the fidelity, post-selection
// probability, and error ceiling each stage measured. The JSON form
// round-trips losslessly (doubles use shortest exact representations), so
// two runs of the same command and seed produce byte-identical reports
// except for the seconds fields.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qformer/reference.hpp"

namespace qf {

// One executed stage's measured outcome. Fields a stage does not produce
// stay at their defaults and still serialize, keeping the schema fixed.
struct StageRecord {
  std::string name;
  double fidelity = 0.0;
  double postselect_prob = 0.0;
  double max_abs_error = 0.0;
  double seconds = 0.0;

  bool operator==(const StageRecord&) const = default;
};

struct RunReport {
  std::string command;
  ModelDims dims;
  std::uint64_t seed = 0;
  std::vector<StageRecord> records;
  std::string version = kVersion;

  // Throws NumericError when any double field is not finite; non-finite
  // values cannot survive a JSON round trip.
  std::string to_json() const;
  // Throws IoError on malformed text or a missing field.
  static RunReport from_json(const std::string& text);
};

// Serialized report with every seconds field zeroed: the canonical form for
// byte comparisons between runs that should differ only in timing.
std::string report_without_timing(RunReport report);

}  // namespace qf
