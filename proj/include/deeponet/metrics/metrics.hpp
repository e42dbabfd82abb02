#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace deeponet::metrics {

using Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// ||pred - ref|| / ||ref|| over one spatial grid.
inline double relative_l2(const Vector& pred, const Vector& ref) {
  if (pred.size() != ref.size()) throw std::invalid_argument("relative_l2: grids differ");
  const double n = ref.norm();
  if (!(n > 0.0)) throw std::invalid_argument("relative_l2: reference has zero norm");
  return (pred - ref).norm() / n;
}

/// E(t_n) for every recorded time (rows of the fields).
inline Vector relative_l2_rows(const Matrix& pred, const Matrix& ref) {
  if (pred.rows() != ref.rows() || pred.cols() != ref.cols()) throw std::invalid_argument("relative_l2: fields differ in shape");
  Vector e(ref.rows());
  for (Index n = 0; n < ref.rows(); ++n) e(n) = relative_l2(pred.row(n).transpose(), ref.row(n).transpose());
  return e;
}

/// (1 / T) times the trapezoid integral of E over [t_0, t_end].
inline double average_error(const Vector& e, const Vector& t) {
  if (e.size() != t.size() || t.size() < 2) throw std::invalid_argument("average_error: need >= 2 matching time points");
  double acc = 0.0;
  for (Index n = 1; n < t.size(); ++n) acc += 0.5 * (t(n) - t(n - 1)) * (e(n) + e(n - 1));
  const double span = t(t.size() - 1) - t(0);
  if (!(span > 0.0)) throw std::invalid_argument("average_error: time grid must increase");
  return acc / span;
}

struct ErrorReport {
  Vector t;
  Vector per_time;
  double average = 0.0;
};

inline ErrorReport error_report(const Matrix& pred, const Matrix& ref, const Vector& t) {
  ErrorReport r{t, relative_l2_rows(pred, ref), 0.0};
  r.average = average_error(r.per_time, t);
  return r;
}

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population
  double min = 0.0;
  double max = 0.0;
  Index count = 0;
};

inline Summary aggregate(const std::vector<double>& samples) {
  if (samples.empty()) throw std::invalid_argument("aggregate: no samples");
  Summary s;
  s.count = static_cast<Index>(samples.size());
  for (double v : samples) s.mean += v;
  s.mean /= static_cast<double>(samples.size());
  for (double v : samples) s.std += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(samples.size()));
  s.min = *std::min_element(samples.begin(), samples.end());
  s.max = *std::max_element(samples.begin(), samples.end());
  return s;
}

inline Summary aggregate(const std::vector<ErrorReport>& reports) {
  std::vector<double> v;
  for (const auto& r : reports) v.push_back(r.average);
  return aggregate(v);
}

}  // namespace deeponet::metrics
