#include "reenroll/working_models.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "reenroll/error.hpp"

namespace reenroll {

LinearModel fit_ols(const DesignMatrix& x, std::span<const double> y) {
  if (x.rows() == 0) fail(ErrorKind::estimation, "cannot fit a linear model to zero rows");
  if (x.rows() != y.size()) {
    fail(ErrorKind::estimation,
         fmt::format("design has {} rows but response has {}", x.rows(), y.size()));
  }
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x.values.rows(), x.values.cols());
  qr.setThreshold(kRankTolerance);
  qr.compute(x.values);
  const auto rank = static_cast<Eigen::Index>(qr.rank());
  const auto& perm = qr.colsPermutation().indices();

  LinearModel m;
  m.column_names = x.column_names;
  m.n = x.rows();
  m.rank = static_cast<std::size_t>(rank);
  m.coefficients = Eigen::VectorXd::Zero(x.values.cols());

  if (rank > 0) {
    const Eigen::VectorXd qty = qr.householderQ().adjoint() * yv;
    const Eigen::VectorXd b = qr.matrixR()
                                  .topLeftCorner(rank, rank)
                                  .triangularView<Eigen::Upper>()
                                  .solve(qty.head(rank));
    for (Eigen::Index i = 0; i < rank; ++i) m.coefficients[perm[i]] = b[i];
  }
  std::vector<Eigen::Index> dropped(perm.data() + rank, perm.data() + perm.size());
  std::sort(dropped.begin(), dropped.end());
  for (auto c : dropped) m.dropped_columns.push_back(x.column_names[static_cast<std::size_t>(c)]);

  const Eigen::VectorXd resid = yv - x.values * m.coefficients;
  const auto dof = static_cast<double>(m.n) - static_cast<double>(m.rank);
  m.residual_variance = dof > 0 ? resid.squaredNorm() / dof : 0.0;
  return m;
}

CovariateEncoder::CovariateEncoder(const RecordSet& rs, std::vector<std::string> covariates)
    : covariates_(std::move(covariates)) {
  columns_.push_back({"(intercept)", true, {}});
  names_.push_back("(intercept)");
  const auto& schema = rs.schema();
  for (const auto& cov : covariates_) {
    auto it = schema.x_columns.find(cov);
    if (it == schema.x_columns.end()) {
      fail(ErrorKind::config, fmt::format("covariate '{}' is not an x column in the schema", cov));
    }
    if (it->second == ValueType::numeric) {
      columns_.push_back({cov, true, {}});
      names_.push_back(cov);
      continue;
    }
    std::set<std::string> levels;
    for (const auto& r : rs.records()) {
      auto v = r.x_values.find(cov);
      if (v != r.x_values.end()) {
        if (auto s = std::get_if<std::string>(&v->second)) levels.insert(*s);
      }
    }
    bool reference = true;
    for (const auto& level : levels) {
      if (reference) {
        reference = false;
        continue;
      }
      columns_.push_back({cov, false, level});
      names_.push_back(cov + "=" + level);
    }
  }
}

bool CovariateEncoder::encode(const EpisodeRecord& r, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) const {
  row[0] = 1.0;
  for (std::size_t c = 1; c < columns_.size(); ++c) {
    const auto& col = columns_[c];
    auto it = r.x_values.find(col.covariate);
    if (it == r.x_values.end() || std::holds_alternative<std::monostate>(it->second)) return false;
    const auto ci = static_cast<Eigen::Index>(c);
    if (col.numeric) {
      const auto* d = std::get_if<double>(&it->second);
      if (!d) return false;
      row[ci] = *d;
    } else {
      const auto* s = std::get_if<std::string>(&it->second);
      if (!s) return false;
      row[ci] = *s == col.level ? 1.0 : 0.0;
    }
  }
  return true;
}

DesignMatrix CovariateEncoder::design(const RecordSet& rs,
                                      std::span<const std::size_t> records) const {
  DesignMatrix d;
  d.column_names = names_;
  d.values.resize(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(width()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!encode(rs[records[i]], d.values.row(static_cast<Eigen::Index>(i)))) {
      const auto& r = rs[records[i]];
      fail(ErrorKind::estimation, fmt::format("missing covariate for participant '{}' episode {}",
                                              r.participant_id, r.episode));
    }
  }
  return d;
}

bool WorkingModel::try_predict(const EpisodeRecord& r, double& out) const {
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(encoder_.width()));
  if (!encoder_.encode(r, row)) return false;
  out = model_.predict(row);
  return true;
}

double WorkingModel::predict(const EpisodeRecord& r) const {
  double v = 0.0;
  if (!try_predict(r, v)) {
    fail(ErrorKind::estimation, fmt::format("working model undefined for participant '{}' episode {}: missing covariate",
                                            r.participant_id, r.episode));
  }
  return v;
}

ArmWorkingModels fit_working_model(const RecordSet& rs, std::span<const EcePopulation> pops,
                                   std::string_view arm,
                                   const std::vector<std::string>& covariates, Pooling pooling) {
  CovariateEncoder encoder(rs, covariates);
  ArmWorkingModels out{std::string(arm), pooling, {}};

  auto training_rows = [&](const EcePopulation& pop) {
    std::vector<std::size_t> rows;
    Eigen::RowVectorXd scratch(static_cast<Eigen::Index>(encoder.width()));
    for (auto i : pop.members) {
      const auto& r = rs[i];
      if (r.arm == arm && r.outcome && encoder.encode(r, scratch)) rows.push_back(i);
    }
    return rows;
  };
  auto fit = [&](const std::vector<std::size_t>& rows) {
    std::vector<double> y;
    y.reserve(rows.size());
    for (auto i : rows) y.push_back(*rs[i].outcome);
    return WorkingModel(encoder, fit_ols(encoder.design(rs, rows), y));
  };

  if (pooling == Pooling::per_episode) {
    for (const auto& pop : pops) {
      const auto rows = training_rows(pop);
      if (rows.empty()) {
        fail(ErrorKind::estimation,
             fmt::format("no arm-{} records in ECE population at episode {} (comparison {} vs {})",
                         arm, pop.episode, pop.arm_j, pop.arm_k));
      }
      out.by_episode.emplace(pop.episode, fit(rows));
    }
  } else {
    std::vector<std::size_t> rows;
    for (const auto& pop : pops) {
      const auto r = training_rows(pop);
      rows.insert(rows.end(), r.begin(), r.end());
    }
    if (rows.empty()) {
      fail(ErrorKind::estimation, fmt::format("no arm-{} records in any ECE population", arm));
    }
    const auto model = fit(rows);
    for (const auto& pop : pops) out.by_episode.emplace(pop.episode, model);
  }
  return out;
}

}  // namespace reenroll
