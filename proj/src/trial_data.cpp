#include "reenroll/trial_data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include "json.hpp"

#include "reenroll/error.hpp"

namespace reenroll {

namespace {

using nlohmann::json;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

bool is_missing(std::string_view cell) { return cell.empty() || cell == "NA"; }

ValueType parse_value_type(const json& j, const std::string& column) {
  if (!j.is_string()) {
    fail(ErrorKind::config, fmt::format("schema: type of '{}' must be a string", column));
  }
  const auto s = j.get<std::string>();
  if (s == "categorical") return ValueType::categorical;
  if (s == "numeric") return ValueType::numeric;
  fail(ErrorKind::config,
       fmt::format("schema: column '{}' has unknown type '{}'", column, s));
}

const char* value_type_name(ValueType t) {
  return t == ValueType::numeric ? "numeric" : "categorical";
}

// RFC-4180 style splitting: quoted fields may contain delimiters and "".
std::vector<std::string> split_row(const std::string& line, char delim,
                                   std::size_t line_no) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      out.push_back(trim(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  if (quoted) {
    fail(ErrorKind::parse, fmt::format("line {}: unterminated quoted field", line_no));
  }
  out.push_back(trim(field));
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return v;
}

std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return v;
}

std::string format_double(double v) { return fmt::format("{}", v); }

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Schema

Schema Schema::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, fmt::format("schema: invalid JSON: {}", e.what()));
  }
  if (!j.is_object()) fail(ErrorKind::config, "schema: top level must be an object");

  Schema s;
  if (auto it = j.find("columns"); it != j.end()) {
    for (auto& [role, col] : it->items()) {
      const auto name = col.get<std::string>();
      if (role == "participant_id") s.participant_column = name;
      else if (role == "episode") s.episode_column = name;
      else if (role == "arm") s.arm_column = name;
      else if (role == "outcome") s.outcome_column = name;
      else if (role == "substudy") s.substudy_column = name;
      else fail(ErrorKind::config, fmt::format("schema: unknown role '{}'", role));
    }
  }
  if (auto it = j.find("substudy"); it != j.end() && !it->is_null()) {
    s.substudy_column = it->get<std::string>();
  }
  if (auto it = j.find("z"); it != j.end()) {
    for (auto& [name, type] : it->items()) s.z_columns[name] = parse_value_type(type, name);
  }
  if (auto it = j.find("x"); it != j.end()) {
    for (auto& [name, type] : it->items()) s.x_columns[name] = parse_value_type(type, name);
  }
  if (auto it = j.find("derived_z"); it != j.end()) {
    for (auto& [name, spec] : it->items()) {
      DerivedZ d;
      d.source = spec.value("from", std::string("substudy"));
      d.lag = spec.value("lag", 1);
      if (d.source != "substudy" && d.source != "arm") {
        fail(ErrorKind::config,
             fmt::format("schema: derived z '{}' must come from 'substudy' or 'arm'", name));
      }
      if (d.source == "substudy" && !s.substudy_column) {
        fail(ErrorKind::config,
             fmt::format("schema: derived z '{}' needs a substudy column", name));
      }
      if (d.lag < 1) {
        fail(ErrorKind::config, fmt::format("schema: derived z '{}' needs lag >= 1", name));
      }
      s.derived_z[name] = d;
    }
  }
  for (const auto& [name, _] : s.z_columns) {
    if (s.x_columns.count(name)) {
      fail(ErrorKind::config, fmt::format("schema: column '{}' is both z and x", name));
    }
  }
  return s;
}

std::string Schema::to_json() const {
  json j;
  j["columns"] = {{"participant_id", participant_column},
                  {"episode", episode_column},
                  {"arm", arm_column},
                  {"outcome", outcome_column}};
  if (substudy_column) j["columns"]["substudy"] = *substudy_column;
  j["z"] = json::object();
  for (const auto& [n, t] : z_columns) j["z"][n] = value_type_name(t);
  j["x"] = json::object();
  for (const auto& [n, t] : x_columns) j["x"][n] = value_type_name(t);
  j["derived_z"] = json::object();
  for (const auto& [n, d] : derived_z) j["derived_z"][n] = {{"from", d.source}, {"lag", d.lag}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// RecordSet

RecordSet::RecordSet(std::vector<EpisodeRecord> records, Schema schema)
    : records_(std::move(records)), schema_(std::move(schema)) {
  std::set<std::string> arms;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.episode < 1) {
      fail(ErrorKind::validation,
           fmt::format("participant '{}': episode {} is not >= 1", r.participant_id, r.episode));
    }
    auto [it, inserted] = participant_lookup_.try_emplace(r.participant_id, participants_.size());
    if (inserted) {
      participants_.push_back(r.participant_id);
      index_.emplace_back();
    }
    index_[it->second].push_back(i);
    record_participant_.push_back(it->second);
    arms.insert(r.arm);
    max_episode_ = std::max(max_episode_, r.episode);
  }
  arm_set_.assign(arms.begin(), arms.end());

  for (std::size_t p = 0; p < index_.size(); ++p) {
    auto& idx = index_[p];
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return records_[a].episode < records_[b].episode;
    });
    for (std::size_t e = 0; e < idx.size(); ++e) {
      const int ep = records_[idx[e]].episode;
      if (e > 0 && ep == records_[idx[e - 1]].episode) {
        fail(ErrorKind::validation,
             fmt::format("participant '{}': duplicate episode {}", participants_[p], ep));
      }
      if (ep != static_cast<int>(e) + 1) {
        fail(ErrorKind::validation,
             fmt::format("participant '{}': episode gap (episode {} present without episode {})",
                         participants_[p], ep, e + 1));
      }
    }
    for (const auto& [name, d] : schema_.derived_z) {
      for (std::size_t e = 0; e < idx.size(); ++e) {
        const int src = static_cast<int>(e) - d.lag;
        std::string level = "none";
        if (src >= 0) {
          const auto& prev = records_[idx[static_cast<std::size_t>(src)]];
          level = d.source == "arm" ? prev.arm : prev.substudy.value_or("none");
        }
        records_[idx[e]].z_values[name] = level;
      }
    }
  }
}

std::span<const std::size_t> RecordSet::episodes_of(std::string_view participant) const {
  return index_[participant_index(participant)];
}

std::size_t RecordSet::participant_index(std::string_view participant) const {
  auto it = participant_lookup_.find(std::string(participant));
  if (it == participant_lookup_.end()) {
    fail(ErrorKind::validation, fmt::format("unknown participant '{}'", participant));
  }
  return it->second;
}

std::size_t RecordSetView::participant_count() const {
  std::set<std::size_t> seen;
  for (auto i : indices_) seen.insert(rs_->participant_of(i));
  return seen.size();
}

// ---------------------------------------------------------------------------
// Parsing and serialization

RecordSet parse_records(std::istream& source, const Schema& schema, char delimiter) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(source, line)) fail(ErrorKind::parse, "empty input: missing header row");
  ++line_no;
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_row(line, delimiter, line_no);

  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!col.emplace(header[i], i).second) {
      fail(ErrorKind::parse, fmt::format("line 1: duplicate column '{}'", header[i]));
    }
  }
  auto require = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) fail(ErrorKind::parse, fmt::format("missing required column '{}'", name));
    return it->second;
  };
  const auto c_id = require(schema.participant_column);
  const auto c_ep = require(schema.episode_column);
  const auto c_arm = require(schema.arm_column);
  const auto c_y = require(schema.outcome_column);
  std::optional<std::size_t> c_sub;
  if (schema.substudy_column) c_sub = require(*schema.substudy_column);

  std::vector<std::pair<std::string, std::size_t>> z_cols, x_cols;
  for (const auto& [name, _] : schema.z_columns) z_cols.emplace_back(name, require(name));
  for (const auto& [name, _] : schema.x_columns) x_cols.emplace_back(name, require(name));

  std::set<std::size_t> classified{c_id, c_ep, c_arm, c_y};
  if (c_sub) classified.insert(*c_sub);
  for (auto& [_, i] : z_cols) classified.insert(i);
  for (auto& [_, i] : x_cols) classified.insert(i);
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!classified.count(i)) {
      fail(ErrorKind::parse,
           fmt::format("column '{}' is not classified as z or x in the schema", header[i]));
    }
  }

  std::vector<EpisodeRecord> records;
  while (std::getline(source, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_row(line, delimiter, line_no);
    if (cells.size() != header.size()) {
      fail(ErrorKind::parse, fmt::format("line {}: expected {} fields, found {}", line_no,
                                         header.size(), cells.size()));
    }
    EpisodeRecord r;
    r.participant_id = cells[c_id];
    if (r.participant_id.empty()) {
      fail(ErrorKind::parse, fmt::format("line {}: empty participant id", line_no));
    }
    auto ep = parse_int(cells[c_ep]);
    if (!ep) {
      fail(ErrorKind::parse,
           fmt::format("line {}: episode '{}' is not an integer", line_no, cells[c_ep]));
    }
    r.episode = *ep;
    r.arm = cells[c_arm];
    if (r.arm.empty()) fail(ErrorKind::parse, fmt::format("line {}: empty arm", line_no));
    if (!is_missing(cells[c_y])) {
      auto y = parse_double(cells[c_y]);
      if (!y) {
        fail(ErrorKind::parse,
             fmt::format("line {}: outcome '{}' is not numeric", line_no, cells[c_y]));
      }
      r.outcome = *y;
    }
    if (c_sub && !is_missing(cells[*c_sub])) r.substudy = cells[*c_sub];
    for (const auto& [name, i] : z_cols) {
      if (!is_missing(cells[i])) r.z_values[name] = cells[i];
    }
    for (const auto& [name, i] : x_cols) {
      const auto& cell = cells[i];
      if (is_missing(cell)) {
        r.x_values[name] = std::monostate{};
      } else if (schema.x_columns.at(name) == ValueType::numeric) {
        auto v = parse_double(cell);
        if (!v) {
          fail(ErrorKind::parse,
               fmt::format("line {}: covariate '{}' value '{}' is not numeric", line_no, name, cell));
        }
        r.x_values[name] = *v;
      } else {
        r.x_values[name] = cell;
      }
    }
    records.push_back(std::move(r));
  }
  return RecordSet(std::move(records), schema);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::validation, fmt::format("cannot open '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RecordSet parse_records_file(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::validation, fmt::format("cannot open '{}'", path));
  return parse_records(in, schema);
}

void write_records(std::ostream& out, const RecordSet& rs) {
  const auto& s = rs.schema();
  std::vector<std::string> cols{s.participant_column, s.episode_column};
  for (const auto& [n, _] : s.z_columns) cols.push_back(n);
  for (const auto& [n, _] : s.x_columns) cols.push_back(n);
  if (s.substudy_column) cols.push_back(*s.substudy_column);
  cols.push_back(s.arm_column);
  cols.push_back(s.outcome_column);
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << quote_if_needed(cols[i]);
  out << '\n';

  for (const auto& r : rs.records()) {
    out << quote_if_needed(r.participant_id) << ',' << r.episode;
    for (const auto& [n, _] : s.z_columns) {
      auto it = r.z_values.find(n);
      out << ',' << (it == r.z_values.end() ? std::string("NA") : quote_if_needed(it->second));
    }
    for (const auto& [n, _] : s.x_columns) {
      out << ',';
      auto it = r.x_values.find(n);
      if (it == r.x_values.end() || std::holds_alternative<std::monostate>(it->second)) {
        out << "NA";
      } else if (auto d = std::get_if<double>(&it->second)) {
        out << format_double(*d);
      } else {
        out << quote_if_needed(std::get<std::string>(it->second));
      }
    }
    if (s.substudy_column) out << ',' << (r.substudy ? quote_if_needed(*r.substudy) : "NA");
    out << ',' << quote_if_needed(r.arm) << ',';
    out << (r.outcome ? format_double(*r.outcome) : std::string("NA")) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Missingness and slicing

std::pair<RecordSet, ValidationReport> apply_missingness_policy(const RecordSet& rs,
                                                                MissingnessPolicy policy) {
  ValidationReport report;
  std::vector<bool> drop(rs.size(), false);
  for (std::size_t p = 0; p < rs.n_participants(); ++p) {
    const auto& pid = rs.participants()[p];
    bool cascade = false;
    for (auto i : rs.episodes_of(pid)) {
      const auto& r = rs[i];
      const auto locator = fmt::format("{}@episode{}", pid, r.episode);
      if (!r.outcome) {
        report.errors.push_back({locator, "missing outcome"});
        if (policy == MissingnessPolicy::complete_case_record) {
          drop[i] = true;
          cascade = true;
          report.warnings.push_back({locator, "dropped: missing outcome"});
          continue;
        }
      } else if (cascade) {
        drop[i] = true;
        report.warnings.push_back({locator, "dropped: earlier episode missing outcome"});
      }
    }
  }
  if (policy == MissingnessPolicy::fail && !report.errors.empty()) {
    std::string msg = "missing outcomes at:";
    for (const auto& e : report.errors) msg += " " + e.locator;
    fail(ErrorKind::validation, msg);
  }
  std::vector<EpisodeRecord> kept;
  kept.reserve(rs.size());
  for (std::size_t i = 0; i < rs.size(); ++i) {
    if (drop[i]) {
      ++report.dropped_count;
    } else {
      kept.push_back(rs[i]);
    }
  }
  // Missing-outcome records were dropped, so they are no longer errors.
  report.errors.clear();
  return {RecordSet(std::move(kept), rs.schema()), std::move(report)};
}

RecordSetView episode_slice(const RecordSet& rs, int episode) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    if (rs[i].episode == episode) idx.push_back(i);
  }
  return RecordSetView(rs, std::move(idx));
}

}  // namespace reenroll
