#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "reenroll/scheme.hpp"
#include "reenroll/trial_data.hpp"

namespace reenroll {

/// Relative pivot tolerance of the rank-revealing QR.
inline constexpr double kRankTolerance = 1e-10;

struct DesignMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> column_names;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
};

struct LinearModel {
  Eigen::VectorXd coefficients;  // dropped columns carry 0
  std::vector<std::string> column_names;
  std::vector<std::string> dropped_columns;
  std::size_t n = 0;
  std::size_t rank = 0;
  double residual_variance = 0.0;

  double predict(const Eigen::Ref<const Eigen::RowVectorXd, 0, Eigen::InnerStride<>>& row) const {
    return row.dot(coefficients.transpose());
  }
};

/// Least squares through a column-pivoted Householder QR. Columns whose
/// pivot falls below kRankTolerance times the leading pivot are dropped.
LinearModel fit_ols(const DesignMatrix& x, std::span<const double> y);

/// Intercept plus reference-coded covariates. Categorical levels are taken
/// from the whole RecordSet so every record can be encoded; the reference
/// level is the first in sorted order.
class CovariateEncoder {
 public:
  CovariateEncoder() = default;
  CovariateEncoder(const RecordSet& rs, std::vector<std::string> covariates);

  std::size_t width() const { return names_.size(); }
  const std::vector<std::string>& column_names() const { return names_; }
  const std::vector<std::string>& covariates() const { return covariates_; }

  /// False when any requested covariate is missing on the record.
  bool encode(const EpisodeRecord& r, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) const;
  DesignMatrix design(const RecordSet& rs, std::span<const std::size_t> records) const;

 private:
  struct Column {
    std::string covariate;
    bool numeric = true;
    std::string level;  // indicator level when categorical
  };
  std::vector<std::string> covariates_;
  std::vector<Column> columns_;
  std::vector<std::string> names_;
};

class WorkingModel {
 public:
  WorkingModel(CovariateEncoder encoder, LinearModel model)
      : encoder_(std::move(encoder)), model_(std::move(model)) {}

  /// Throws Error(estimation) when a covariate is missing.
  double predict(const EpisodeRecord& r) const;
  bool try_predict(const EpisodeRecord& r, double& out) const;

  const LinearModel& model() const { return model_; }
  const CovariateEncoder& encoder() const { return encoder_; }

 private:
  CovariateEncoder encoder_;
  LinearModel model_;
};

enum class Pooling { per_episode, pooled };

/// mu-hat for one arm of a comparison, keyed by episode.
struct ArmWorkingModels {
  std::string arm;
  Pooling pooling = Pooling::per_episode;
  std::map<int, WorkingModel> by_episode;
};

/// Fits mu-hat on {members with A = arm} of each population (per_episode),
/// or once on their union (pooled) and shares it across episodes. Training
/// rows with a missing covariate are skipped.
ArmWorkingModels fit_working_model(const RecordSet& rs, std::span<const EcePopulation> pops,
                                   std::string_view arm,
                                   const std::vector<std::string>& covariates,
                                   Pooling pooling = Pooling::per_episode);

}  // namespace reenroll
