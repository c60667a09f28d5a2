#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace reenroll {

enum class ValueType { categorical, numeric };

/// An adjustment covariate: missing, numeric, or a categorical level.
using CovariateValue = std::variant<std::monostate, double, std::string>;

/// One person-episode.
struct EpisodeRecord {
  std::string participant_id;
  int episode = 0;
  std::map<std::string, std::string> z_values;
  std::map<std::string, CovariateValue> x_values;
  std::optional<std::string> substudy;
  std::string arm;
  std::optional<double> outcome;

  bool operator==(const EpisodeRecord&) const = default;
};

/// A randomization input derived from the participant's own history, e.g.
/// `prior_substudy` = the substudy column `lag` episodes earlier. Episodes
/// with no such history get the level "none".
struct DerivedZ {
  std::string source;  // "substudy" or "arm"
  int lag = 1;

  bool operator==(const DerivedZ&) const = default;
};

/// Column-role map read from the sidecar JSON.
///
///   {
///     "columns": {"participant_id": "pid", ...},      // optional renames
///     "z": {"HS": "categorical", "EW": "categorical"},
///     "x": {"age": "numeric", "sex": "categorical"},
///     "derived_z": {"prior_substudy": {"from": "substudy", "lag": 1}}
///   }
struct Schema {
  std::string participant_column = "participant_id";
  std::string episode_column = "episode";
  std::string arm_column = "arm";
  std::string outcome_column = "outcome";
  std::optional<std::string> substudy_column;
  std::map<std::string, ValueType> z_columns;
  std::map<std::string, ValueType> x_columns;
  std::map<std::string, DerivedZ> derived_z;

  static Schema from_json(std::string_view text);
  std::string to_json() const;

  bool operator==(const Schema&) const = default;
};

struct ValidationReport {
  struct Entry {
    std::string locator;
    std::string message;
  };
  std::vector<Entry> errors;
  std::vector<Entry> warnings;
  std::size_t dropped_count = 0;
};

/// Immutable, validated collection of episode records indexed by participant.
class RecordSet {
 public:
  /// Validates the prefix invariant (episodes 1..T_i, no gaps, no duplicates)
  /// and fills derived z-values. Throws Error(validation) on violation.
  RecordSet(std::vector<EpisodeRecord> records, Schema schema);

  std::span<const EpisodeRecord> records() const { return records_; }
  const EpisodeRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t size() const { return records_.size(); }

  const Schema& schema() const { return schema_; }

  /// Unique participants in order of first appearance.
  std::span<const std::string> participants() const { return participants_; }
  std::size_t n_participants() const { return participants_.size(); }

  /// Record indices of one participant, sorted by episode.
  std::span<const std::size_t> episodes_of(std::string_view participant) const;
  std::size_t participant_index(std::string_view participant) const;
  /// Index into participants() for record i.
  std::size_t participant_of(std::size_t record) const {
    return record_participant_[record];
  }

  /// Sorted distinct arm labels.
  std::span<const std::string> arm_set() const { return arm_set_; }
  int max_episode() const { return max_episode_; }

 private:
  std::vector<EpisodeRecord> records_;
  Schema schema_;
  std::vector<std::string> participants_;
  std::unordered_map<std::string, std::size_t> participant_lookup_;
  std::vector<std::vector<std::size_t>> index_;
  std::vector<std::size_t> record_participant_;
  std::vector<std::string> arm_set_;
  int max_episode_ = 0;
};

/// Non-owning view of the records at one episode.
class RecordSetView {
 public:
  RecordSetView(const RecordSet& rs, std::vector<std::size_t> indices)
      : rs_(&rs), indices_(std::move(indices)) {}

  std::span<const std::size_t> indices() const { return indices_; }
  std::size_t size() const { return indices_.size(); }
  const EpisodeRecord& operator[](std::size_t i) const {
    return (*rs_)[indices_[i]];
  }
  /// Distinct participants in the view.
  std::size_t participant_count() const;

 private:
  const RecordSet* rs_;
  std::vector<std::size_t> indices_;
};

enum class MissingnessPolicy { complete_case_record, fail };

/// Reads delimited text with a header row. Empty cells and "NA" are missing.
RecordSet parse_records(std::istream& source, const Schema& schema,
                        char delimiter = ',');
RecordSet parse_records_file(const std::string& path, const Schema& schema);

/// Canonical CSV (schema column order: id, episode, z, x, substudy, arm,
/// outcome). Derived z-columns are not written; they are recomputed on parse.
void write_records(std::ostream& out, const RecordSet& rs);

/// Drops records with missing outcome. A dropped episode also drops every
/// later episode of the same participant so each history stays a prefix.
std::pair<RecordSet, ValidationReport> apply_missingness_policy(
    const RecordSet& rs, MissingnessPolicy policy);

RecordSetView episode_slice(const RecordSet& rs, int episode);

std::string read_text_file(const std::string& path);

}  // namespace reenroll
