#include "deeponet/metrics/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace {

using namespace deeponet::metrics;

TEST(RelativeL2, BasicIdentities) {
  Vector s(4);
  s << 1.0, -2.0, 0.5, 3.0;
  EXPECT_EQ(relative_l2(s, s), 0.0);
  EXPECT_DOUBLE_EQ(relative_l2(Vector::Zero(4), s), 1.0);
  EXPECT_NEAR(relative_l2(1.1 * s, s), 0.1, 1e-14);
  const Vector p = s + Vector::Constant(4, 0.3);
  EXPECT_NEAR(relative_l2(-7.0 * p, -7.0 * s), relative_l2(p, s), 1e-15);
  EXPECT_THROW(relative_l2(s, Vector::Zero(4)), std::invalid_argument);
  EXPECT_THROW(relative_l2(s, Vector::Ones(3)), std::invalid_argument);
}

TEST(AverageError, TrapezoidRule) {
  const Vector t = Vector::LinSpaced(11, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(average_error(Vector::Constant(11, 0.03), t), 0.03);
  EXPECT_DOUBLE_EQ(average_error(t, t), 0.5);
  EXPECT_THROW(average_error(Vector::Ones(1), Vector::Zero(1)), std::invalid_argument);
}

TEST(AverageError, ConvergesToSimpsonAtSecondOrder) {
  auto e = [](double t) { return 0.01 * (1.0 + std::sin(3.0 * t)); };
  // Composite Simpson on a fine grid as the reference.
  const int n = 2000;
  double simpson = e(0.0) + e(1.0);
  for (int i = 1; i < n; ++i) simpson += (i % 2 ? 4.0 : 2.0) * e(static_cast<double>(i) / n);
  simpson /= 3.0 * n;
  double prev = 0.0;
  for (int m : {10, 20}) {
    const Vector t = Vector::LinSpaced(m + 1, 0.0, 1.0);
    Vector v(m + 1);
    for (int i = 0; i <= m; ++i) v(i) = e(t(i));
    const double err = std::abs(average_error(v, t) - simpson);
    if (prev > 0.0) EXPECT_NEAR(prev / err, 4.0, 0.2);
    prev = err;
  }
}

TEST(ErrorReportTest, AverageLiesWithinRange) {
  Matrix ref(3, 4), pred(3, 4);
  ref.setConstant(1.0);
  pred = ref;
  pred(1, 2) = 1.5;
  pred(2, 0) = 0.0;
  const ErrorReport r = error_report(pred, ref, Vector::LinSpaced(3, 0.0, 1.0));
  EXPECT_EQ(r.per_time(0), 0.0);
  EXPECT_GE(r.average, r.per_time.minCoeff());
  EXPECT_LE(r.average, r.per_time.maxCoeff());
}

TEST(Aggregate, PopulationStatistics) {
  const Summary one = aggregate(std::vector<double>{0.2});
  EXPECT_EQ(one.std, 0.0);
  const Summary two = aggregate(std::vector<double>{0.01, 0.03});
  EXPECT_NEAR(two.mean, 0.02, 1e-16);
  EXPECT_NEAR(two.std, 0.01, 1e-16);
  const Summary many = aggregate(std::vector<double>{0.3, 0.1, 0.7, 0.2});
  EXPECT_GE(many.mean, many.min);
  EXPECT_LE(many.mean, many.max);
  EXPECT_THROW(aggregate(std::vector<double>{}), std::invalid_argument);
}

}  // namespace
