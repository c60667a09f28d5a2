#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "doctest.h"
#include "reenroll/error.hpp"
#include "reenroll/scheme.hpp"
#include "reenroll/trial_data.hpp"

namespace support {

using namespace reenroll;

struct Row {
  std::string id;
  int episode = 1;
  std::map<std::string, std::string> z;
  std::string arm;
  std::optional<double> y;
  std::map<std::string, CovariateValue> x = {};
  std::optional<std::string> substudy = std::nullopt;
};

inline Schema schema_for(const std::vector<Row>& rows) {
  Schema s;
  for (const auto& r : rows) {
    for (const auto& [k, v] : r.z) s.z_columns[k] = ValueType::categorical;
    for (const auto& [k, v] : r.x) {
      s.x_columns[k] = std::holds_alternative<std::string>(v) ? ValueType::categorical : ValueType::numeric;
    }
    if (r.substudy) s.substudy_column = "substudy";
  }
  return s;
}

inline RecordSet make_rs(const std::vector<Row>& rows, std::optional<Schema> schema = std::nullopt) {
  std::vector<EpisodeRecord> recs;
  for (const auto& r : rows) {
    EpisodeRecord e;
    e.participant_id = r.id;
    e.episode = r.episode;
    e.z_values = r.z;
    e.x_values = r.x;
    e.substudy = r.substudy;
    e.arm = r.arm;
    e.outcome = r.y;
    recs.push_back(std::move(e));
  }
  return RecordSet(std::move(recs), schema ? *schema : schema_for(rows));
}

/// Same probabilities for every (episode, z).
inline AssignmentScheme uniform_scheme(std::vector<std::string> arms) {
  SchemeRow row;
  row.probabilities.assign(arms.size(), 1.0 / static_cast<double>(arms.size()));
  return AssignmentScheme(std::move(arms), {row});
}

inline std::string read_data(const std::string& name) {
  return read_text_file(std::string(REENROLL_DATA_DIR) + "/" + name);
}

/// The message of the reenroll::Error thrown by f, or "" if none.
inline std::string error_of(const std::function<void()>& f, ErrorKind* kind = nullptr) {
  try {
    f();
  } catch (const Error& e) {
    if (kind) *kind = e.kind();
    return e.what();
  }
  return "";
}

inline bool contains(const std::string& s, const std::string& part) {
  return s.find(part) != std::string::npos;
}

inline bool close_rel(double a, double b, double rel) {
  const double scale = std::max({1.0, std::fabs(a), std::fabs(b)});
  return std::fabs(a - b) <= rel * scale;
}

}  // namespace support
