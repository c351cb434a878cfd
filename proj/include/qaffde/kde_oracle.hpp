#ifndef QAFFDE_KDE_ORACLE_HPP
#define QAFFDE_KDE_ORACLE_HPP

#include <Eigen/Dense>
#include <stdexcept>

#include "qaffde/density_matrix.hpp"
#include "qaffde/kernelspace.hpp"

namespace qaffde {

/// Exact memory-based KDE. Deliberately a naive O(N) sum so it can serve as
/// a trivially correct oracle.
struct KdeModel {
  Matrix train_points;  // N x d
  KernelSpec spec;
  double norm_const = 1.0;
};

inline KdeModel make_kde(const Eigen::Ref<const Matrix>& train, const KernelSpec& spec) {
  spec.validate();
  if (train.rows() == 0) throw std::invalid_argument("make_kde: empty training set");
  if (train.cols() != spec.dim) throw std::invalid_argument("make_kde: dimension mismatch");
  return KdeModel{train, spec, normalizing_constant(spec)};
}

inline double kde_estimate(const KdeModel& model, const Eigen::Ref<const Vector>& x) {
  if (x.size() != model.spec.dim) throw std::invalid_argument("kde_estimate: dimension mismatch");
  const Vector sq = (model.train_points.rowwise() - x.transpose()).rowwise().squaredNorm();
  const double sum = (-model.spec.gamma * sq.array()).exp().sum();
  return sum / (model.norm_const * static_cast<double>(model.train_points.rows()));
}

inline Vector kde_batch(const KdeModel& model, const Eigen::Ref<const Matrix>& xs) {
  Vector out(xs.rows());
  for (Eigen::Index i = 0; i < xs.rows(); ++i)
    out(i) = kde_estimate(model, xs.row(i).transpose());
  return out;
}

}  // namespace qaffde

#endif  // QAFFDE_KDE_ORACLE_HPP
