#pragma once

// Append-only observation log (`observations.jsonl`) plus the latest fitted
// model per label (`model_<label>.json`) in the same directory. Single writer.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "oms/error.hpp"
#include "oms/geometry.hpp"
#include "oms/gmm.hpp"
#include "oms/model_io.hpp"
#include "oms/text.hpp"

namespace oms {

struct ObservationRecord {
  std::string label;
  Vec3 location = Vec3::Zero();
  double timestamp = 0;
  std::vector<std::string> source_view_ids;

  void validate() const {
    if (label.empty()) throw InputError("observation: label must be non-empty");
    if (!location.allFinite()) throw InputError("observation: location must be finite");
    if (!std::isfinite(timestamp)) throw InputError("observation: timestamp must be finite");
  }

  friend bool operator==(const ObservationRecord&, const ObservationRecord&) = default;
};

/// Half-open interval [begin, end).
struct TimeRange {
  double begin = -INFINITY;
  double end = INFINITY;
};

inline std::string encode_record(const ObservationRecord& r) {
  std::string line = "{\"label\":" + nlohmann::json(r.label).dump();
  line += ",\"x\":" + format_exact(r.location.x());
  line += ",\"y\":" + format_exact(r.location.y());
  line += ",\"z\":" + format_exact(r.location.z());
  line += ",\"t\":" + format_exact(r.timestamp);
  line += ",\"views\":" + nlohmann::json(r.source_view_ids).dump() + "}";
  return line;
}

inline ObservationRecord decode_record(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    ObservationRecord r;
    r.label = j.at("label").get<std::string>();
    r.location = Vec3(j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>());
    r.timestamp = j.at("t").get<double>();
    r.source_view_ids = j.value("views", std::vector<std::string>{});
    r.validate();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed observation record: ") + e.what());
  }
}

class ObjectMemory {
 public:
  /// `log_path` is the observations file; it need not exist yet.
  explicit ObjectMemory(std::filesystem::path log_path) : log_path_(std::move(log_path)) {
    for (const auto& r : read_all()) last_timestamp_[r.label] = r.timestamp;
  }

  const std::filesystem::path& log_path() const noexcept { return log_path_; }

  std::filesystem::path model_path(const std::string& label) const {
    return log_path_.parent_path() / ("model_" + label_to_filename(label) + ".json");
  }

  /// Appends and flushes one record. Timestamps per label must not go backwards.
  void append_observation(const ObservationRecord& record) {
    record.validate();
    if (auto it = last_timestamp_.find(record.label); it != last_timestamp_.end() && record.timestamp < it->second)
      throw OrderingError("observation for '" + record.label + "' at t=" + format_exact(record.timestamp) +
                          " is older than the last stored one (t=" + format_exact(it->second) + ")");
    if (!log_path_.parent_path().empty()) std::filesystem::create_directories(log_path_.parent_path());
    std::ofstream out(log_path_, std::ios::app);
    out << encode_record(record) << '\n';
    out.flush();
    if (!out) throw Error("failed to append to " + log_path_.string());
    last_timestamp_[record.label] = record.timestamp;
  }

  /// Records for `label`, in timestamp order, optionally restricted to [begin, end).
  /// Reads the log once per call.
  std::vector<ObservationRecord> query_observations(const std::string& label,
                                                    std::optional<TimeRange> range = std::nullopt) const {
    if (range && range->begin > range->end) throw InputError("query: inverted time range");
    std::vector<ObservationRecord> out;
    for (auto& r : read_all()) {
      if (r.label != label) continue;
      if (range && !(r.timestamp >= range->begin && r.timestamp < range->end)) continue;
      out.push_back(std::move(r));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    return out;
  }

  void save_model(const std::string& label, const GmmModel& model) const {
    write_model_file(model_path(label), model);
  }

  GmmModel load_model(const std::string& label) const {
    const auto path = model_path(label);
    if (!std::filesystem::exists(path)) throw NotFoundError("no model stored for '" + label + "'");
    return read_model_file(path);
  }

 private:
  std::vector<ObservationRecord> read_all() const {
    std::vector<ObservationRecord> out;
    std::ifstream in(log_path_);
    if (!in) return out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      try {
        out.push_back(decode_record(line));
      } catch (const InputError& e) {
        throw InputError(log_path_.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    return out;
  }

  std::filesystem::path log_path_;
  std::map<std::string, double> last_timestamp_;
};

inline std::vector<Vec3> locations_of(const std::vector<ObservationRecord>& records) {
  std::vector<Vec3> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.location);
  return out;
}

}  // namespace oms
