#include "reenroll/scheme.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include "json.hpp"

#include "reenroll/error.hpp"

namespace reenroll {

namespace {

using nlohmann::json;

constexpr double kSumTolerance = 1e-12;

double parse_probability(const std::string& text, std::size_t row, const std::string& arm) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end || !(v >= 0.0 && v <= 1.0)) {
    fail(ErrorKind::config,
         fmt::format("scheme row {}: probability '{}' for arm '{}' is not a number in [0,1]",
                     row, text, arm));
  }
  return v;
}

std::string describe(const std::map<std::string, std::string>& z, int t) {
  std::string s = fmt::format("episode={}", t);
  for (const auto& [k, v] : z) s += fmt::format(", {}={}", k, v);
  return s;
}

}  // namespace

bool SchemeRow::matches(const std::map<std::string, std::string>& z, int t) const {
  if (episode && *episode != t) return false;
  for (const auto& [name, level] : z_pattern) {
    if (!level) continue;
    auto it = z.find(name);
    if (it == z.end() || it->second != *level) return false;
  }
  return true;
}

AssignmentScheme::AssignmentScheme(std::vector<std::string> arms, std::vector<SchemeRow> rows)
    : arms_(std::move(arms)), rows_(std::move(rows)) {
  if (arms_.empty()) fail(ErrorKind::config, "scheme: no arms declared");
  for (std::size_t a = 0; a < arms_.size(); ++a) {
    for (std::size_t b = a + 1; b < arms_.size(); ++b) {
      if (arms_[a] == arms_[b]) fail(ErrorKind::config, fmt::format("scheme: duplicate arm '{}'", arms_[a]));
    }
  }
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    auto& row = rows_[r];
    if (row.probabilities.size() != arms_.size()) {
      fail(ErrorKind::config, fmt::format("scheme row {}: expected {} probabilities", r, arms_.size()));
    }
    if (row.probability_text.empty()) {
      for (double p : row.probabilities) row.probability_text.push_back(fmt::format("{}", p));
    }
    const double total = std::accumulate(row.probabilities.begin(), row.probabilities.end(), 0.0);
    if (std::fabs(total - 1.0) > kSumTolerance) {
      fail(ErrorKind::config,
           fmt::format("scheme row {}: probabilities sum to {} and do not sum to 1", r, total));
    }
  }
}

AssignmentScheme AssignmentScheme::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, fmt::format("scheme: invalid JSON: {}", e.what()));
  }
  if (!j.is_object() || !j.contains("arms") || !j.contains("rows")) {
    fail(ErrorKind::config, "scheme: expected an object with 'arms' and 'rows'");
  }
  std::vector<std::string> arms;
  for (const auto& a : j["arms"]) arms.push_back(a.is_string() ? a.get<std::string>() : a.dump());

  std::vector<SchemeRow> rows;
  std::size_t r = 0;
  for (const auto& jr : j["rows"]) {
    SchemeRow row;
    if (auto it = jr.find("episode"); it != jr.end()) {
      if (it->is_number_integer()) {
        row.episode = it->get<int>();
      } else if (!(it->is_string() && it->get<std::string>() == "any")) {
        fail(ErrorKind::config, fmt::format("scheme row {}: episode must be an integer or \"any\"", r));
      }
    }
    if (auto it = jr.find("z"); it != jr.end()) {
      for (auto& [name, level] : it->items()) {
        const auto s = level.is_string() ? level.get<std::string>() : level.dump();
        row.z_pattern[name] = s == "any" ? std::nullopt : std::optional<std::string>(s);
      }
    }
    if (!jr.contains("p")) fail(ErrorKind::config, fmt::format("scheme row {}: missing 'p'", r));
    const auto& jp = jr["p"];
    for (auto& [arm, _] : jp.items()) {
      if (std::find(arms.begin(), arms.end(), arm) == arms.end()) {
        fail(ErrorKind::config, fmt::format("scheme row {}: unknown arm '{}'", r, arm));
      }
    }
    for (const auto& arm : arms) {
      std::string t = "0";
      if (auto it = jp.find(arm); it != jp.end()) {
        t = it->is_string() ? it->get<std::string>() : it->dump();
      }
      row.probability_text.push_back(t);
      row.probabilities.push_back(parse_probability(t, r, arm));
    }
    rows.push_back(std::move(row));
    ++r;
  }
  return AssignmentScheme(std::move(arms), std::move(rows));
}

std::string AssignmentScheme::to_json() const {
  json j;
  j["arms"] = arms_;
  j["rows"] = json::array();
  for (const auto& row : rows_) {
    json jr;
    jr["episode"] = row.episode ? json(*row.episode) : json("any");
    jr["z"] = json::object();
    for (const auto& [n, l] : row.z_pattern) jr["z"][n] = l ? *l : std::string("any");
    jr["p"] = json::object();
    for (std::size_t a = 0; a < arms_.size(); ++a) jr["p"][arms_[a]] = row.probability_text[a];
    j["rows"].push_back(jr);
  }
  return j.dump(2);
}

std::size_t AssignmentScheme::arm_index(std::string_view arm) const {
  for (std::size_t a = 0; a < arms_.size(); ++a) {
    if (arms_[a] == arm) return a;
  }
  fail(ErrorKind::validation, fmt::format("arm '{}' is not declared by the scheme", arm));
}

bool AssignmentScheme::has_arm(std::string_view arm) const {
  return std::find(arms_.begin(), arms_.end(), arm) != arms_.end();
}

std::size_t AssignmentScheme::match(const std::map<std::string, std::string>& z, int t) const {
  std::size_t found = rows_.size();
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    if (!rows_[r].matches(z, t)) continue;
    if (found != rows_.size()) {
      fail(ErrorKind::validation,
           fmt::format("ambiguous scheme: rows {} and {} both match ({})", found, r, describe(z, t)));
    }
    found = r;
  }
  if (found == rows_.size()) {
    fail(ErrorKind::validation, fmt::format("uncovered z-pattern: no scheme row matches ({})", describe(z, t)));
  }
  return found;
}

double AssignmentScheme::assignment_prob(const std::map<std::string, std::string>& z, int t,
                                         std::string_view arm) const {
  return rows_[match(z, t)].probabilities[arm_index(arm)];
}

DesignResolution::DesignResolution(const AssignmentScheme& scheme, const RecordSet& rs)
    : scheme_(&scheme), rs_(&rs) {
  row_.reserve(rs.size());
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const auto& r = rs[i];
    if (!scheme.has_arm(r.arm)) {
      fail(ErrorKind::validation, fmt::format("participant '{}' episode {}: arm '{}' is not declared by the scheme",
                                              r.participant_id, r.episode, r.arm));
    }
    try {
      row_.push_back(scheme.match(r.z_values, r.episode));
    } catch (const Error& e) {
      fail(e.kind(), fmt::format("participant '{}' episode {}: {}", r.participant_id, r.episode, e.what()));
    }
    const double p = scheme.rows()[row_.back()].probabilities[scheme.arm_index(r.arm)];
    if (p <= 0.0) {
      fail(ErrorKind::validation,
           fmt::format("participant '{}' episode {}: assigned arm '{}' has probability 0 under the scheme",
                       r.participant_id, r.episode, r.arm));
    }
  }
}

EcePopulation ece_population(const DesignResolution& design, std::string_view arm_j,
                             std::string_view arm_k, int episode) {
  if (arm_j == arm_k) fail(ErrorKind::config, "comparison arms must differ");
  const auto& scheme = design.scheme();
  const auto aj = scheme.arm_index(arm_j);
  const auto ak = scheme.arm_index(arm_k);
  EcePopulation pop{std::string(arm_j), std::string(arm_k), episode, {}, {}, {}};
  const auto& rs = design.records();
  for (std::size_t i = 0; i < rs.size(); ++i) {
    if (rs[i].episode != episode) continue;
    const double pj = design.prob(i, aj);
    const double pk = design.prob(i, ak);
    if (pj > 0.0 && pk > 0.0) {
      pop.members.push_back(i);
      pop.pi_j.push_back(pj);
      pop.pi_k.push_back(pk);
    }
  }
  return pop;
}

EcePopulation ece_population(const AssignmentScheme& scheme, const RecordSet& rs,
                             std::string_view arm_j, std::string_view arm_k, int episode) {
  return ece_population(DesignResolution(scheme, rs), arm_j, arm_k, episode);
}

StrataPartition derive_strata(const EcePopulation& pop) {
  StrataPartition part;
  std::vector<std::pair<double, double>> keys;
  keys.reserve(pop.size());
  for (std::size_t m = 0; m < pop.size(); ++m) keys.emplace_back(pop.pi_j[m], pop.pi_k[m]);
  auto distinct = keys;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  for (std::size_t h = 0; h < distinct.size(); ++h) {
    part.strata.push_back({static_cast<int>(h) + 1, distinct[h].first, distinct[h].second, {}});
  }
  part.stratum_of.resize(pop.size());
  for (std::size_t m = 0; m < pop.size(); ++m) {
    const auto h = static_cast<std::size_t>(
        std::lower_bound(distinct.begin(), distinct.end(), keys[m]) - distinct.begin());
    part.stratum_of[m] = h;
    part.strata[h].positions.push_back(m);
  }
  return part;
}

}  // namespace reenroll
