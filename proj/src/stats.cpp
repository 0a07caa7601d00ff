#include "trajdiff/stats.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace trajdiff {

double roc_auc(const std::vector<double>& positives, const std::vector<double>& negatives) {
  if (positives.empty() || negatives.empty()) throw std::invalid_argument("roc_auc: both classes need samples");
  // Rank-sum form with midranks for ties.
  std::vector<std::pair<double, int>> all;
  all.reserve(positives.size() + negatives.size());
  for (double v : positives) all.emplace_back(v, 1);
  for (double v : negatives) all.emplace_back(v, 0);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double mid = 0.5 * static_cast<double>(i + j + 1);
    for (std::size_t k = i; k < j; ++k)
      if (all[k].second) rank_sum += mid;
    i = j;
  }
  const double np = static_cast<double>(positives.size());
  const double nn = static_cast<double>(negatives.size());
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

PairedComparison paired_lower_bound(const std::vector<double>& treatment,
                                    const std::vector<double>& control, double level) {
  if (treatment.size() != control.size()) throw std::invalid_argument("paired_lower_bound: group counts differ");
  if (treatment.size() < 2) throw std::invalid_argument("paired_lower_bound: need at least two groups");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("paired_lower_bound: level must lie in (0, 1)");
  PairedComparison r;
  r.groups = static_cast<int>(treatment.size());
  const double n = static_cast<double>(r.groups);
  std::vector<double> d(treatment.size());
  for (std::size_t g = 0; g < d.size(); ++g) d[g] = treatment[g] - control[g];
  for (double v : d) r.mean_difference += v;
  r.mean_difference /= n;
  double ss = 0.0;
  for (double v : d) ss += (v - r.mean_difference) * (v - r.mean_difference);
  r.standard_error = std::sqrt(ss / (n - 1.0) / n);
  r.t_quantile = boost::math::quantile(boost::math::students_t(n - 1.0), level);
  r.lower_bound = r.mean_difference - r.t_quantile * r.standard_error;
  return r;
}

}  // namespace trajdiff
