#ifndef QAFFDE_KERNELSPACE_HPP
#define QAFFDE_KERNELSPACE_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "qaffde/errors.hpp"
#include "qaffde/rng.hpp"

namespace qaffde {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Gaussian kernel exp(-gamma * ||x - y||^2) on R^dim.
struct KernelSpec {
  double gamma = 1.0;
  int dim = 1;

  void validate() const {
    if (!(gamma > 0.0)) throw std::invalid_argument("KernelSpec: gamma must be > 0");
    if (dim < 1) throw std::invalid_argument("KernelSpec: dim must be >= 1");
  }
};

/// Explicit Fourier feature map phi: R^d -> R^D with
/// phi_i(x) = sqrt(2/D) * cos(w_i . x + b_i), optionally L2-normalized.
/// The sqrt(2/D) factor makes <phi(x), phi(y)> an unbiased estimate of the
/// target kernel when the rows of W are drawn from its spectral measure.
struct FeatureMap {
  Matrix W;             // D x d, frequency vectors as rows
  Vector b;             // D, phase offsets
  double gamma_target = 1.0;
  bool normalize = false;

  int num_features() const { return static_cast<int>(W.rows()); }
  int dim() const { return static_cast<int>(W.cols()); }
};

inline double exact_kernel(const KernelSpec& spec, const Eigen::Ref<const Vector>& x,
                           const Eigen::Ref<const Vector>& y) {
  spec.validate();
  if (x.size() != spec.dim || y.size() != spec.dim)
    throw std::invalid_argument("exact_kernel: point dimension mismatch");
  return std::exp(-spec.gamma * (x - y).squaredNorm());
}

/// Draws a random Fourier feature map for the Gaussian kernel
/// exp(-gamma ||x-y||^2). The spectral measure of that kernel is
/// N(0, 2*gamma*I), and phases are Uniform[0, 2*pi).
inline FeatureMap sample_rff(const KernelSpec& spec, int num_features, std::uint64_t seed) {
  spec.validate();
  if (num_features < 1) throw std::invalid_argument("sample_rff: num_features must be >= 1");
  Rng rng(seed);
  FeatureMap map;
  map.W.resize(num_features, spec.dim);
  map.b.resize(num_features);
  const double scale = std::sqrt(2.0 * spec.gamma);
  for (int i = 0; i < num_features; ++i)
    for (int j = 0; j < spec.dim; ++j) map.W(i, j) = scale * rng.normal();
  for (int i = 0; i < num_features; ++i) map.b(i) = rng.uniform(0.0, 2.0 * M_PI);
  map.gamma_target = spec.gamma;
  map.normalize = false;
  return map;
}

/// Raw embedding, ignoring the normalize flag.
inline Vector embed_raw(const FeatureMap& map, const Eigen::Ref<const Vector>& x) {
  if (x.size() != map.dim()) throw std::invalid_argument("embed: point dimension mismatch");
  const double amp = std::sqrt(2.0 / map.num_features());
  return (amp * ((map.W * x + map.b).array().cos())).matrix();
}

inline Vector embed(const FeatureMap& map, const Eigen::Ref<const Vector>& x) {
  Vector phi = embed_raw(map, x);
  if (map.normalize) {
    const double n = phi.norm();
    if (n == 0.0) throw NumericError("embed: zero-norm embedding under normalization");
    phi /= n;
  }
  return phi;
}

/// Embeds each row of X; returns an N x D matrix of embeddings.
inline Matrix embed_batch(const FeatureMap& map, const Eigen::Ref<const Matrix>& X) {
  if (X.cols() != map.dim()) throw std::invalid_argument("embed_batch: dimension mismatch");
  const double amp = std::sqrt(2.0 / map.num_features());
  Matrix Phi = (((X * map.W.transpose()).rowwise() + map.b.transpose()).array().cos() * amp).matrix();
  if (map.normalize) {
    for (Eigen::Index i = 0; i < Phi.rows(); ++i) {
      const double n = Phi.row(i).norm();
      if (n == 0.0) throw NumericError("embed_batch: zero-norm embedding under normalization");
      Phi.row(i) /= n;
    }
  }
  return Phi;
}

/// Mean squared error of the feature approximation against the exact kernel
/// over the given pairs (rows of xs paired with rows of ys). With
/// squared=true the approximation is <phi(x),phi(y)>^2.
inline double kernel_mse(const FeatureMap& map, const KernelSpec& spec,
                         const Eigen::Ref<const Matrix>& xs, const Eigen::Ref<const Matrix>& ys,
                         bool squared) {
  spec.validate();
  if (xs.rows() == 0) throw std::invalid_argument("kernel_mse: empty pair list");
  if (xs.rows() != ys.rows() || xs.cols() != ys.cols())
    throw std::invalid_argument("kernel_mse: pair shape mismatch");
  const Matrix Px = embed_batch(map, xs);
  const Matrix Py = embed_batch(map, ys);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    double approx = Px.row(i).dot(Py.row(i));
    if (squared) approx *= approx;
    const double exact = exact_kernel(spec, xs.row(i).transpose(), ys.row(i).transpose());
    const double diff = exact - approx;
    acc += diff * diff;
  }
  return acc / static_cast<double>(xs.rows());
}

}  // namespace qaffde

#endif  // QAFFDE_KERNELSPACE_HPP
