#ifndef QAFFDE_METRICS_HPP
#define QAFFDE_METRICS_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace qaffde {

/// One benchmark result row.
struct DensityReport {
  std::string dataset;
  std::string method;
  std::uint64_t seed = 0;
  double mae = 0.0;
  double spearman = 0.0;
  long n_eval = 0;
  double wall_time_ms = 0.0;
};

inline double mae(const Eigen::Ref<const Eigen::VectorXd>& truth,
                  const Eigen::Ref<const Eigen::VectorXd>& estimate) {
  if (truth.size() == 0 || truth.size() != estimate.size())
    throw std::invalid_argument("mae: vectors must be nonempty and equal length");
  return (truth - estimate).cwiseAbs().mean();
}

namespace detail {

// Fractional ranks (1-based) with ties assigned the average rank.
inline Eigen::VectorXd average_ranks(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const auto n = v.size();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return v(a) < v(b); });
  Eigen::VectorXd ranks(n);
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j + 1 < n && v(order[j + 1]) == v(order[i])) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index k = i; k <= j; ++k) ranks(order[k]) = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

/// Spearman rank correlation: Pearson correlation of average ranks.
inline double spearman(const Eigen::Ref<const Eigen::VectorXd>& truth,
                       const Eigen::Ref<const Eigen::VectorXd>& estimate) {
  if (truth.size() < 2 || truth.size() != estimate.size())
    throw std::invalid_argument("spearman: vectors must have equal length >= 2");
  const Eigen::VectorXd ra = detail::average_ranks(truth);
  const Eigen::VectorXd rb = detail::average_ranks(estimate);
  const Eigen::VectorXd da = ra.array() - ra.mean();
  const Eigen::VectorXd db = rb.array() - rb.mean();
  const double na = da.norm();
  const double nb = db.norm();
  if (na == 0.0 || nb == 0.0)
    throw std::domain_error("spearman: undefined for constant input");
  return da.dot(db) / (na * nb);
}

}  // namespace qaffde

#endif  // QAFFDE_METRICS_HPP
