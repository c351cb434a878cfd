#ifndef QAFFDE_DENSITY_MATRIX_HPP
#define QAFFDE_DENSITY_MATRIX_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "qaffde/errors.hpp"
#include "qaffde/kernelspace.hpp"

namespace qaffde {

/// How (V, Lambda) are obtained: spectral truncation of the averaged rho, or
/// log-likelihood gradient refinement on top of it.
enum class FitMode { estimate, sgd };

/// Low-rank factorized density matrix rho ~ V^T Lambda V together with the
/// feature map and normalizing constant needed for density readout.
struct DensityMatrixModel {
  Matrix V;        // r x D, rows are orthonormal eigenvectors
  Vector Lambda;   // r, nonnegative, descending
  FeatureMap feature_map;
  double norm_const = 1.0;
  int rank = 0;
};

/// Integral of exp(-gamma ||u||^2) over R^d, the KDE normalizing constant.
inline double normalizing_constant(const KernelSpec& spec) {
  spec.validate();
  return std::pow(M_PI / spec.gamma, 0.5 * spec.dim);
}

/// rho = (1/N) sum_i phi(x_i) phi(x_i)^T over the rows of `data`.
inline Matrix estimate_rho(const Eigen::Ref<const Matrix>& data, const FeatureMap& map) {
  if (data.rows() == 0) throw std::invalid_argument("estimate_rho: empty dataset");
  const Matrix Phi = embed_batch(map, data);
  Matrix rho = (Phi.transpose() * Phi) / static_cast<double>(data.rows());
  rho = 0.5 * (rho + rho.transpose()).eval();
  return rho;
}

namespace detail {

// Largest-magnitude entry of each eigenvector made positive so the
// decomposition is deterministic up to the solver's output.
inline void fix_row_signs(Matrix& V) {
  for (Eigen::Index i = 0; i < V.rows(); ++i) {
    Eigen::Index arg = 0;
    V.row(i).cwiseAbs().maxCoeff(&arg);
    if (V(i, arg) < 0.0) V.row(i) = -V.row(i);
  }
}

}  // namespace detail

/// Keeps the r largest eigenpairs of a symmetric PSD matrix.
inline DensityMatrixModel spectral_truncate(const Eigen::Ref<const Matrix>& rho, int r,
                                            const FeatureMap& map, double norm_const) {
  const auto D = rho.rows();
  if (rho.cols() != D) throw std::invalid_argument("spectral_truncate: matrix not square");
  if ((rho - rho.transpose()).cwiseAbs().maxCoeff() > 1e-8)
    throw std::invalid_argument("spectral_truncate: matrix not symmetric");
  if (r < 1 || r > D) throw std::invalid_argument("spectral_truncate: rank out of range");

  Eigen::SelfAdjointEigenSolver<Matrix> solver(rho);
  if (solver.info() != Eigen::Success)
    throw NumericError("spectral_truncate: eigensolver failed");

  DensityMatrixModel model;
  model.V.resize(r, D);
  model.Lambda.resize(r);
  // Eigen returns eigenvalues ascending; take the top r in descending order.
  for (int i = 0; i < r; ++i) {
    const auto src = D - 1 - i;
    model.Lambda(i) = std::max(solver.eigenvalues()(src), 0.0);
    model.V.row(i) = solver.eigenvectors().col(src).transpose();
  }
  detail::fix_row_signs(model.V);
  model.feature_map = map;
  model.norm_const = norm_const;
  model.rank = r;
  return model;
}

/// Density readout (1/M) * ||Lambda^{1/2} V phi(x)||^2.
inline double predict_density(const DensityMatrixModel& model, const Eigen::Ref<const Vector>& x) {
  const Vector proj = model.V * embed(model.feature_map, x);
  return proj.array().square().matrix().dot(model.Lambda) / model.norm_const;
}

inline Vector predict_batch(const DensityMatrixModel& model, const Eigen::Ref<const Matrix>& xs) {
  const Matrix Phi = embed_batch(model.feature_map, xs);
  const Matrix proj = Phi * model.V.transpose();  // N x r
  return (proj.array().square().matrix() * model.Lambda) / model.norm_const;
}

}  // namespace qaffde

#endif  // QAFFDE_DENSITY_MATRIX_HPP
