#pragma once

#include <optional>
#include <span>
#include <vector>

namespace mirc::stats {

double mean(std::span<const double> xs);
/// Population standard deviation (divides by n).
double population_std(std::span<const double> xs);
/// Unbiased sample variance (divides by n-1).
double sample_variance(std::span<const double> xs);

/// Two-pass Pearson correlation; nullopt when either side has zero variance
/// or fewer than two points.
std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys);

/// Average ranks (1-based, ties share the mean rank).
std::vector<double> ranks(std::span<const double> xs);
std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys);

struct TTest {
  double t = 0.0;
  double df = 0.0;
  /// Two-sided.
  double p_value = 1.0;
};

/// Unequal-variance (Welch) two-sample test. nullopt when a group has < 2
/// values or both variances are zero.
std::optional<TTest> welch_t_test(std::span<const double> a, std::span<const double> b);
/// Pooled-variance (Student) two-sample test.
std::optional<TTest> student_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace mirc::stats
