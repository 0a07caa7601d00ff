#pragma once

#include <vector>

namespace trajdiff {

/// Probability that a random positive scores above a random negative, ties
/// counting one half.
double roc_auc(const std::vector<double>& positives, const std::vector<double>& negatives);

struct PairedComparison {
  int groups = 0;
  double mean_difference = 0.0;
  double standard_error = 0.0;
  double t_quantile = 0.0;
  /// One-sided lower confidence bound on the mean difference.
  double lower_bound = 0.0;
};

/// Paired t bound on mean(treatment - control) at the given one-sided level.
/// Needs at least two groups.
PairedComparison paired_lower_bound(const std::vector<double>& treatment,
                                    const std::vector<double>& control, double level = 0.95);

}  // namespace trajdiff
