#ifndef QAFFDE_AFF_TRAINER_HPP
#define QAFFDE_AFF_TRAINER_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qaffde/adam.hpp"
#include "qaffde/errors.hpp"
#include "qaffde/kernelspace.hpp"
#include "qaffde/rng.hpp"

namespace qaffde {

/// Pairs of data points with their exact kernel values as regression targets.
struct PairBatch {
  Matrix xs;       // m x d
  Matrix ys;       // m x d
  Vector targets;  // m

  Eigen::Index size() const { return xs.rows(); }
};

/// Samples m pairs uniformly with replacement from the rows of `data` and
/// fills targets with the exact kernel at `spec` (the bandwidth the feature
/// dot product is trained against).
inline PairBatch build_pairs(const Eigen::Ref<const Matrix>& data, Eigen::Index m,
                             const KernelSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (data.rows() == 0) throw std::invalid_argument("build_pairs: empty dataset");
  if (m < 1) throw std::invalid_argument("build_pairs: m must be >= 1");
  Rng rng(seed);
  PairBatch batch;
  batch.xs.resize(m, data.cols());
  batch.ys.resize(m, data.cols());
  batch.targets.resize(m);
  const auto n = static_cast<std::uint64_t>(data.rows());
  for (Eigen::Index i = 0; i < m; ++i) {
    batch.xs.row(i) = data.row(static_cast<Eigen::Index>(rng.index(n)));
    batch.ys.row(i) = data.row(static_cast<Eigen::Index>(rng.index(n)));
    batch.targets(i) =
        std::exp(-spec.gamma * (batch.xs.row(i) - batch.ys.row(i)).squaredNorm());
  }
  return batch;
}

namespace detail {

// Phases W*x + b for every pair side; cached by loss and gradient.
struct PairActivations {
  Matrix ax;  // m x D
  Matrix ay;  // m x D
};

inline PairActivations pair_activations(const FeatureMap& map, const PairBatch& batch) {
  if (batch.xs.cols() != map.dim())
    throw std::invalid_argument("aff: batch dimension does not match feature map");
  PairActivations act;
  act.ax = (batch.xs * map.W.transpose()).rowwise() + map.b.transpose();
  act.ay = (batch.ys * map.W.transpose()).rowwise() + map.b.transpose();
  return act;
}

}  // namespace detail

/// Mean squared error between batch targets and the raw feature dot product
/// <phi(x), phi(y)> (normalization is never applied here).
inline double aff_loss(const FeatureMap& map, const PairBatch& batch) {
  const auto act = detail::pair_activations(map, batch);
  const double inv_d = 2.0 / map.num_features();
  const Vector approx = inv_d * (act.ax.array().cos() * act.ay.array().cos()).rowwise().sum();
  return (approx - batch.targets).squaredNorm() / static_cast<double>(batch.size());
}

/// Analytic gradient of aff_loss with respect to W and b.
inline std::pair<Matrix, Vector> aff_grad(const FeatureMap& map, const PairBatch& batch) {
  const auto act = detail::pair_activations(map, batch);
  const Eigen::Index m = batch.size();
  const int D = map.num_features();
  const double inv_d = 2.0 / D;

  const Matrix cx = act.ax.array().cos();
  const Matrix cy = act.ay.array().cos();
  const Matrix sx = act.ax.array().sin();
  const Matrix sy = act.ay.array().sin();

  const Vector residual = inv_d * (cx.array() * cy.array()).rowwise().sum().matrix() - batch.targets;
  // d approx_j / d a_x(j,i) = -(2/D) sin(ax) cos(ay), symmetrically for a_y.
  const double coeff = 2.0 * inv_d / static_cast<double>(m);
  const Matrix gx = (sx.array() * cy.array()).colwise() * residual.array();  // m x D
  const Matrix gy = (cx.array() * sy.array()).colwise() * residual.array();

  Matrix dW = -coeff * (gx.transpose() * batch.xs + gy.transpose() * batch.ys);
  Vector db = -coeff * (gx + gy).transpose() * Vector::Ones(m);
  return {std::move(dW), std::move(db)};
}

/// Adaptive Fourier feature learning: fit <phi,phi> to the exact kernel on
/// sampled pairs by Adam, starting from a fresh RFF draw at spec.gamma.
/// Returns the checkpoint with the lowest loss over the full pair pool.
inline FeatureMap train_aff(const Eigen::Ref<const Matrix>& data, const KernelSpec& spec,
                            int num_features, const OptimizerConfig& cfg,
                            Eigen::Index num_pairs = 10000, long eval_every = 10) {
  cfg.validate();
  if (data.rows() == 0) throw std::invalid_argument("train_aff: empty dataset");
  FeatureMap map = sample_rff(spec, num_features, cfg.seed);
  if (cfg.steps == 0) return map;

  const PairBatch pool = build_pairs(data, num_pairs, spec, cfg.seed + 1);
  const int d = map.dim();
  const Eigen::Index n_params = static_cast<Eigen::Index>(num_features) * d + num_features;
  Adam adam(n_params, cfg);
  Rng rng(cfg.seed + 2);

  FeatureMap best = map;
  double best_loss = aff_loss(map, pool);

  PairBatch mini;
  mini.xs.resize(cfg.batch_size, d);
  mini.ys.resize(cfg.batch_size, d);
  mini.targets.resize(cfg.batch_size);
  Vector params(n_params), grad(n_params);

  for (long step = 0; step < cfg.steps; ++step) {
    for (int i = 0; i < cfg.batch_size; ++i) {
      const auto j = static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(pool.size())));
      mini.xs.row(i) = pool.xs.row(j);
      mini.ys.row(i) = pool.ys.row(j);
      mini.targets(i) = pool.targets(j);
    }
    const auto [dW, db] = aff_grad(map, mini);
    params << Eigen::Map<const Vector>(map.W.data(), map.W.size()), map.b;
    grad << Eigen::Map<const Vector>(dW.data(), dW.size()), db;
    adam.update(params, grad, step);
    map.W = Eigen::Map<const Matrix>(params.data(), num_features, d);
    map.b = params.tail(num_features);

    if (step % eval_every == eval_every - 1 || step == cfg.steps - 1) {
      const double loss = aff_loss(map, pool);
      if (!std::isfinite(loss)) throw TrainingDiverged("train_aff: non-finite loss", step);
      if (loss < best_loss) {
        best_loss = loss;
        best = map;
      }
    }
  }
  return best;
}

}  // namespace qaffde

#endif  // QAFFDE_AFF_TRAINER_HPP
