#include "qformer/report.hpp"

#include <cmath>
#include <utility>

#include "json.hpp"

namespace qf {
namespace {

nlohmann::json dims_to_json(const ModelDims& dims) {
  return {{"n", dims.n},         {"d", dims.d},
          {"p", dims.p},         {"r", dims.r},
          {"heads", dims.heads}, {"d_ff", dims.d_ff},
          {"vocab", dims.vocab}, {"t_bits", dims.t_bits},
          {"b_bits", dims.b_bits}};
}

ModelDims dims_from_json(const nlohmann::json& dj) {
  ModelDims dims;
  dims.n = dj.at("n").get<int>();
  dims.d = dj.at("d").get<int>();
  dims.p = dj.at("p").get<int>();
  dims.r = dj.at("r").get<int>();
  dims.heads = dj.at("heads").get<int>();
  dims.d_ff = dj.at("d_ff").get<int>();
  dims.vocab = dj.at("vocab").get<int>();
  dims.t_bits = dj.at("t_bits").get<int>();
  dims.b_bits = dj.at("b_bits").get<int>();
  return dims;
}

void require_finite(double value, const char* field) {
  if (!std::isfinite(value)) {
    throw NumericError(std::string("report: non-finite ") + field);
  }
}

}  // namespace

std::string RunReport::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  j["dims"] = dims_to_json(dims);
  j["seed"] = seed;
  nlohmann::json rows = nlohmann::json::array();
  for (const StageRecord& record : records) {
    require_finite(record.fidelity, "fidelity");
    require_finite(record.postselect_prob, "postselect_prob");
    require_finite(record.max_abs_error, "max_abs_error");
    require_finite(record.seconds, "seconds");
    rows.push_back({{"name", record.name},
                    {"fidelity", record.fidelity},
                    {"postselect_prob", record.postselect_prob},
                    {"max_abs_error", record.max_abs_error},
                    {"seconds", record.seconds}});
  }
  j["records"] = std::move(rows);
  j["version"] = version;
  return j.dump(2);
}

RunReport RunReport::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& err) {
    throw IoError(std::string("report json: ") + err.what());
  }
  try {
    RunReport report;
    report.command = j.at("command").get<std::string>();
    report.dims = dims_from_json(j.at("dims"));
    report.seed = j.at("seed").get<std::uint64_t>();
    for (const nlohmann::json& row : j.at("records")) {
      StageRecord record;
      record.name = row.at("name").get<std::string>();
      record.fidelity = row.at("fidelity").get<double>();
      record.postselect_prob = row.at("postselect_prob").get<double>();
      record.max_abs_error = row.at("max_abs_error").get<double>();
      record.seconds = row.at("seconds").get<double>();
      report.records.push_back(std::move(record));
    }
    report.version = j.at("version").get<std::string>();
    return report;
  } catch (const nlohmann::json::exception& err) {
    throw IoError(std::string("report json: ") + err.what());
  }
}

std::string report_without_timing(RunReport report) {
  for (StageRecord& record : report.records) record.seconds = 0.0;
  return report.to_json();
}

}  // namespace qf
