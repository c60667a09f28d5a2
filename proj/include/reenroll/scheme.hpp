#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reenroll/trial_data.hpp"

namespace reenroll {

/// One row of the randomization table. An empty optional means "any".
struct SchemeRow {
  std::optional<int> episode;
  std::map<std::string, std::optional<std::string>> z_pattern;
  std::vector<double> probabilities;       // aligned with AssignmentScheme::arms()
  std::vector<std::string> probability_text;  // as written in the file

  bool matches(const std::map<std::string, std::string>& z, int t) const;
};

/// The known assignment mechanism: (episode, z) -> probability over arms.
class AssignmentScheme {
 public:
  AssignmentScheme(std::vector<std::string> arms, std::vector<SchemeRow> rows);

  /// JSON: {"arms": [...], "rows": [{"episode": 1|"any",
  ///        "z": {"name": "level"|"any"}, "p": {"arm": "0.375"}}]}
  /// Arms missing from a row's "p" have probability 0.
  static AssignmentScheme from_json(std::string_view text);
  std::string to_json() const;

  std::span<const std::string> arms() const { return arms_; }
  std::span<const SchemeRow> rows() const { return rows_; }
  std::size_t arm_index(std::string_view arm) const;
  bool has_arm(std::string_view arm) const;

  /// Index of the unique matching row. Throws Error(validation) with
  /// "uncovered z-pattern" or "ambiguous scheme".
  std::size_t match(const std::map<std::string, std::string>& z, int t) const;

  double assignment_prob(const std::map<std::string, std::string>& z, int t,
                         std::string_view arm) const;

 private:
  std::vector<std::string> arms_;
  std::vector<SchemeRow> rows_;
};

/// Scheme row matched by every record, resolved once per RecordSet.
class DesignResolution {
 public:
  /// Throws Error(validation) on unknown arms, uncovered or ambiguous rows.
  DesignResolution(const AssignmentScheme& scheme, const RecordSet& rs);

  const AssignmentScheme& scheme() const { return *scheme_; }
  const RecordSet& records() const { return *rs_; }
  std::size_t row_of(std::size_t record) const { return row_[record]; }
  double prob(std::size_t record, std::size_t arm_index) const {
    return scheme_->rows()[row_[record]].probabilities[arm_index];
  }

 private:
  const AssignmentScheme* scheme_;
  const RecordSet* rs_;
  std::vector<std::size_t> row_;
};

/// Person-episodes at episode t with positive probability for both arms.
struct EcePopulation {
  std::string arm_j;
  std::string arm_k;
  int episode = 0;
  std::vector<std::size_t> members;  // record indices, ascending
  std::vector<double> pi_j;          // aligned with members
  std::vector<double> pi_k;

  std::size_t size() const { return members.size(); }
};

struct Stratum {
  int id = 0;  // 1-based, lexicographic in (pi_j, pi_k)
  double pi_j = 0.0;
  double pi_k = 0.0;
  std::vector<std::size_t> positions;  // positions within EcePopulation::members
};

struct StrataPartition {
  std::vector<Stratum> strata;
  std::vector<std::size_t> stratum_of;  // per member position -> index into strata

  std::size_t count() const { return strata.size(); }
};

EcePopulation ece_population(const DesignResolution& design, std::string_view arm_j,
                             std::string_view arm_k, int episode);
EcePopulation ece_population(const AssignmentScheme& scheme, const RecordSet& rs,
                             std::string_view arm_j, std::string_view arm_k, int episode);

/// Groups members by exact equality of their (pi_j, pi_k) pair.
StrataPartition derive_strata(const EcePopulation& pop);

}  // namespace reenroll
