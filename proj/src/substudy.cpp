#include "reenroll/substudy.hpp"

#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>

#include "reenroll/error.hpp"
#include "reenroll/working_models.hpp"

namespace reenroll {

std::string_view substudy_method_name(SubstudyMethod m) {
  switch (m) {
    case SubstudyMethod::anova: return "anova";
    case SubstudyMethod::ancova: return "ancova";
    case SubstudyMethod::anhecova: return "anhecova";
  }
  return "?";
}

std::optional<SubstudyMethod> parse_substudy_method(std::string_view s) {
  for (auto m : kAllSubstudyMethods) {
    if (substudy_method_name(m) == s) return m;
  }
  return std::nullopt;
}

std::string infer_substudy(const RecordSet& rs, std::string_view treated,
                           std::string_view control) {
  std::map<std::string, std::pair<bool, bool>> seen;
  for (const auto& r : rs.records()) {
    if (!r.substudy) continue;
    auto& s = seen[*r.substudy];
    if (r.arm == treated) s.first = true;
    if (r.arm == control) s.second = true;
  }
  std::vector<std::string> both;
  for (const auto& [name, flags] : seen) {
    if (flags.first && flags.second) both.push_back(name);
  }
  if (both.size() != 1) {
    fail(ErrorKind::config,
         fmt::format("cannot infer the substudy for arms {} and {}: {} candidates", treated,
                     control, both.size()));
  }
  return both.front();
}

namespace {

// HC0 sandwich variance of coefficient `target` using only retained columns.
double hc0_variance(const DesignMatrix& x, const LinearModel& m, std::span<const double> y,
                    Eigen::Index target) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < x.values.cols(); ++c) {
    const auto& name = x.column_names[static_cast<std::size_t>(c)];
    bool dropped = false;
    for (const auto& d : m.dropped_columns) dropped = dropped || d == name;
    if (!dropped) keep.push_back(c);
  }
  Eigen::Index pos = -1;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i] == target) pos = static_cast<Eigen::Index>(i);
  }
  if (pos < 0) fail(ErrorKind::estimation, "treatment indicator is collinear with covariates");

  Eigen::MatrixXd xr(x.values.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) xr.col(static_cast<Eigen::Index>(i)) = x.values.col(keep[i]);
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
  const Eigen::VectorXd e = yv - x.values * m.coefficients;
  const Eigen::MatrixXd bread = (xr.transpose() * xr).ldlt().solve(
      Eigen::MatrixXd::Identity(xr.cols(), xr.cols()));
  const Eigen::MatrixXd meat = xr.transpose() * e.array().square().matrix().asDiagonal() * xr;
  return (bread * meat * bread)(pos, pos);
}

}  // namespace

SubstudyEstimate substudy_comparator(SubstudyMethod method, const RecordSet& rs,
                                     std::string_view substudy, std::string_view treated,
                                     std::string_view control,
                                     const std::vector<std::string>& covariates) {
  if (!rs.schema().substudy_column) {
    fail(ErrorKind::config, "substudy comparators need a substudy column");
  }
  SubstudyEstimate out;
  out.method = method;
  out.substudy = std::string(substudy);
  out.treated = std::string(treated);
  out.control = std::string(control);

  std::vector<std::size_t> rows;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const auto& r = rs[i];
    if (!r.substudy || *r.substudy != substudy) continue;
    if (!seen.insert(r.participant_id).second) {
      fail(ErrorKind::validation, fmt::format("participant '{}' appears more than once in substudy '{}'",
                                              r.participant_id, substudy));
    }
    if (r.arm != treated && r.arm != control) continue;
    if (!r.outcome) {
      fail(ErrorKind::validation, fmt::format("participant '{}' episode {}: missing outcome",
                                              r.participant_id, r.episode));
    }
    rows.push_back(i);
    (r.arm == treated ? out.n_treated : out.n_control)++;
  }
  out.n = rows.size();
  if (out.n_treated == 0 || out.n_control == 0) {
    fail(ErrorKind::estimation, fmt::format("substudy '{}': empty arm ({} treated, {} control)",
                                            substudy, out.n_treated, out.n_control));
  }

  const bool use_x = method != SubstudyMethod::anova;
  const CovariateEncoder enc(rs, use_x ? covariates : std::vector<std::string>{});
  const DesignMatrix base = enc.design(rs, rows);
  const Eigen::Index p = base.values.cols() - 1;  // covariate columns
  const auto n = static_cast<Eigen::Index>(rows.size());

  std::vector<double> y(rows.size());
  Eigen::VectorXd a(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rs[rows[static_cast<std::size_t>(i)]];
    y[static_cast<std::size_t>(i)] = *r.outcome;
    a[i] = r.arm == treated ? 1.0 : 0.0;
  }

  DesignMatrix x;
  x.column_names = {"(intercept)", "treatment"};
  if (method == SubstudyMethod::anhecova) {
    const Eigen::RowVectorXd mean = base.values.rightCols(p).colwise().mean();
    const Eigen::MatrixXd xc = base.values.rightCols(p).rowwise() - mean;
    x.values.resize(n, 2 + 2 * p);
    x.values.col(0).setOnes();
    x.values.col(1) = a;
    x.values.middleCols(2, p) = xc;
    x.values.rightCols(p) = xc.array().colwise() * a.array();
    for (Eigen::Index c = 1; c <= p; ++c) x.column_names.push_back(base.column_names[static_cast<std::size_t>(c)]);
    for (Eigen::Index c = 1; c <= p; ++c) x.column_names.push_back("treatment:" + base.column_names[static_cast<std::size_t>(c)]);
  } else {
    x.values.resize(n, 2 + p);
    x.values.col(0).setOnes();
    x.values.col(1) = a;
    x.values.rightCols(p) = base.values.rightCols(p);
    for (Eigen::Index c = 1; c <= p; ++c) x.column_names.push_back(base.column_names[static_cast<std::size_t>(c)]);
  }

  const LinearModel fit = fit_ols(x, y);
  out.value = fit.coefficients[1];

  if (method == SubstudyMethod::anhecova) {
    const double prop = static_cast<double>(out.n_treated) / static_cast<double>(out.n);
    Eigen::MatrixXd x1 = x.values, x0 = x.values;
    x1.col(1).setOnes();
    x1.rightCols(p) = x.values.middleCols(2, p);
    x0.col(1).setZero();
    x0.rightCols(p).setZero();
    const Eigen::VectorXd m1 = x1 * fit.coefficients;
    const Eigen::VectorXd m0 = x0 * fit.coefficients;
    double ss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double yi = y[static_cast<std::size_t>(i)];
      const double phi = a[i] / prop * (yi - m1[i]) - (1.0 - a[i]) / (1.0 - prop) * (yi - m0[i]) +
                         m1[i] - m0[i] - out.value;
      ss += phi * phi;
    }
    out.se = std::sqrt(ss) / static_cast<double>(n);
  } else {
    out.se = std::sqrt(hc0_variance(x, fit, y, 1));
  }
  return out;
}

}  // namespace reenroll
