#ifndef QAFFDE_SGD_TRAINER_HPP
#define QAFFDE_SGD_TRAINER_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qaffde/adam.hpp"
#include "qaffde/density_matrix.hpp"
#include "qaffde/errors.hpp"
#include "qaffde/kernelspace.hpp"
#include "qaffde/rng.hpp"

namespace qaffde {

constexpr double kLikelihoodFloor = 1e-12;

/// Unconstrained parameters of the gradient-trained estimator. The realized
/// spectrum is softmax(lambda_logits) and the realized V is a deterministic
/// row-orthonormalization of V_free, so the trace-1 / PSD invariants hold at
/// every step by construction.
struct SgdModelParams {
  Matrix V_free;        // r x D
  Vector lambda_logits; // r
  FeatureMap map;       // frozen during SGD
  double norm_const = 1.0;

  int rank() const { return static_cast<int>(V_free.rows()); }
};

inline Vector softmax(const Eigen::Ref<const Vector>& logits) {
  const Vector shifted = (logits.array() - logits.maxCoeff()).exp();
  return shifted / shifted.sum();
}

namespace detail {

// One modified Gram-Schmidt sweep with enough state kept for an exact
// reverse pass. C(k,j) holds the projection coefficient of row k onto the
// already-orthonormalized row j; norms holds the pre-division row norms.
struct MgsTape {
  Matrix input;
  Matrix Q;
  Matrix C;
  Vector norms;
};

inline MgsTape mgs_forward(const Eigen::Ref<const Matrix>& V) {
  MgsTape tape;
  tape.input = V;
  tape.Q = V;
  const auto r = V.rows();
  tape.C = Matrix::Zero(r, r);
  tape.norms.resize(r);
  for (Eigen::Index k = 0; k < r; ++k) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const double c = tape.Q.row(j).dot(tape.Q.row(k));
      tape.C(k, j) = c;
      tape.Q.row(k) -= c * tape.Q.row(j);
    }
    const double n = tape.Q.row(k).norm();
    if (!(n > 0.0) || !std::isfinite(n))
      throw NumericError("orthonormalize: degenerate row in Gram-Schmidt");
    tape.norms(k) = n;
    tape.Q.row(k) /= n;
  }
  return tape;
}

inline Matrix mgs_backward(const MgsTape& tape, const Eigen::Ref<const Matrix>& dQ) {
  const auto r = tape.input.rows();
  const auto D = tape.input.cols();
  Matrix dQ_acc = dQ;
  Matrix dV = Matrix::Zero(r, D);
  Matrix u_seq(r, D);  // u^0..u^{k-1} of the row being processed
  for (Eigen::Index k = r - 1; k >= 0; --k) {
    // Recreate the intermediate states u^j of row k from the stored C.
    u_seq.row(0) = tape.input.row(k);
    for (Eigen::Index j = 0; j < k; ++j)
      if (j + 1 <= k) u_seq.row(j + 1) = u_seq.row(j) - tape.C(k, j) * tape.Q.row(j);
    // Through the normalization q = u / ||u||.
    const double n = tape.norms(k);
    Eigen::RowVectorXd du =
        (dQ_acc.row(k) - dQ_acc.row(k).dot(tape.Q.row(k)) * tape.Q.row(k)) / n;
    // Through each projection step, newest first.
    for (Eigen::Index j = k - 1; j >= 0; --j) {
      dQ_acc.row(j) -= du.dot(tape.Q.row(j)) * u_seq.row(j) + tape.C(k, j) * du;
      du -= du.dot(tape.Q.row(j)) * tape.Q.row(j);
    }
    dV.row(k) = du;
  }
  return dV;
}

struct OrthoTape {
  MgsTape pass1;
  MgsTape pass2;
};

}  // namespace detail

/// Deterministic row orthonormalization: two modified Gram-Schmidt sweeps.
inline Matrix orthonormalize_rows(const Eigen::Ref<const Matrix>& V) {
  return detail::mgs_forward(detail::mgs_forward(V).Q).Q;
}

namespace detail {

inline OrthoTape ortho_forward(const Eigen::Ref<const Matrix>& V) {
  OrthoTape tape;
  tape.pass1 = mgs_forward(V);
  tape.pass2 = mgs_forward(tape.pass1.Q);
  return tape;
}

inline Matrix ortho_backward(const OrthoTape& tape, const Eigen::Ref<const Matrix>& dQ) {
  return mgs_backward(tape.pass1, mgs_backward(tape.pass2, dQ));
}

}  // namespace detail

/// Mean negative log-likelihood -log(f_hat + eps) over the batch rows.
inline double nll_loss(const SgdModelParams& params, const Eigen::Ref<const Matrix>& batch) {
  if (batch.rows() == 0) throw std::invalid_argument("nll_loss: empty batch");
  const Matrix Q = orthonormalize_rows(params.V_free);
  const Vector lambda = softmax(params.lambda_logits);
  const Matrix Phi = embed_batch(params.map, batch);
  const Matrix S = Phi * Q.transpose();  // B x r
  const Vector f = (S.array().square().matrix() * lambda) / params.norm_const;
  return -(f.array() + kLikelihoodFloor).log().mean();
}

/// Exact gradient of nll_loss through the softmax and the two-sweep
/// Gram-Schmidt reparameterizations.
inline std::pair<Matrix, Vector> nll_grad(const SgdModelParams& params,
                                          const Eigen::Ref<const Matrix>& batch) {
  if (batch.rows() == 0) throw std::invalid_argument("nll_grad: empty batch");
  const auto B = batch.rows();
  const auto tape = detail::ortho_forward(params.V_free);
  const Matrix& Q = tape.pass2.Q;
  const Vector lambda = softmax(params.lambda_logits);
  const Matrix Phi = embed_batch(params.map, batch);
  const Matrix S = Phi * Q.transpose();
  const Vector f = (S.array().square().matrix() * lambda) / params.norm_const;
  // d loss / d f_x = -1 / ((f_x + eps) * B)
  const Vector g = (-1.0 / (static_cast<double>(B) * (f.array() + kLikelihoodFloor))).matrix();

  const Matrix S2 = S.array().square();
  Vector dlambda = S2.transpose() * g / params.norm_const;
  const Matrix T = S.array().colwise() * g.array();  // B x r
  Matrix dQ = (2.0 / params.norm_const) * lambda.asDiagonal() * (T.transpose() * Phi);

  Matrix dV = detail::ortho_backward(tape, dQ);
  Vector dlogits = lambda.array() * (dlambda.array() - lambda.dot(dlambda));
  return {std::move(dV), std::move(dlogits)};
}

namespace detail {

inline DensityMatrixModel realize_model(const SgdModelParams& params) {
  DensityMatrixModel model;
  const Matrix Q = orthonormalize_rows(params.V_free);
  const Vector lambda = softmax(params.lambda_logits);
  const int r = params.rank();
  std::vector<int> order(r);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return lambda(a) > lambda(b); });
  model.V.resize(r, Q.cols());
  model.Lambda.resize(r);
  for (int i = 0; i < r; ++i) {
    model.V.row(i) = Q.row(order[i]);
    model.Lambda(i) = lambda(order[i]);
  }
  fix_row_signs(model.V);
  model.feature_map = params.map;
  model.norm_const = params.norm_const;
  model.rank = r;
  return model;
}

}  // namespace detail

/// Log-likelihood refinement of (V, Lambda) on mini-batches (the feature map
/// stays frozen). Returns the checkpoint with the best NLL on a seeded 10%
/// validation holdout. Pass norm_const <= 0 to derive it from the feature
/// map's target bandwidth (density bandwidth = 2 * gamma_target) or from the
/// init model when given.
inline DensityMatrixModel train_sgd(const Eigen::Ref<const Matrix>& data, const FeatureMap& map,
                                    int r, const OptimizerConfig& cfg,
                                    const std::optional<DensityMatrixModel>& init = std::nullopt,
                                    double norm_const = 0.0,
                                    std::vector<std::array<double, 4>>* curve = nullptr) {
  cfg.validate();
  if (data.rows() == 0) throw std::invalid_argument("train_sgd: empty dataset");
  if (r < 1 || r > map.num_features())
    throw std::invalid_argument("train_sgd: rank out of range");
  if (init && init->rank < r)
    throw std::invalid_argument("train_sgd: init model rank is smaller than r");

  SgdModelParams params;
  params.map = map;
  if (norm_const > 0.0) {
    params.norm_const = norm_const;
  } else if (init) {
    params.norm_const = init->norm_const;
  } else {
    params.norm_const = normalizing_constant({2.0 * map.gamma_target, map.dim()});
  }
  if (init) {
    params.V_free = init->V.topRows(r);
    params.lambda_logits =
        init->Lambda.head(r).array().max(1e-30).log().matrix();
  } else {
    Rng init_rng(cfg.seed + 13);
    params.V_free.resize(r, map.num_features());
    for (Eigen::Index i = 0; i < params.V_free.size(); ++i)
      params.V_free.data()[i] = init_rng.normal();
    params.lambda_logits = Vector::Zero(r);
  }
  if (cfg.steps == 0) return detail::realize_model(params);

  // Seeded 10% validation holdout.
  const auto n = data.rows();
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng split_rng(cfg.seed + 11);
  for (Eigen::Index i = n - 1; i > 0; --i)
    std::swap(idx[i], idx[split_rng.index(static_cast<std::uint64_t>(i + 1))]);
  Eigen::Index n_val = std::max<Eigen::Index>(1, n / 10);
  if (n_val >= n) n_val = n - 1;
  Matrix val(n_val, data.cols()), train(n - n_val, data.cols());
  for (Eigen::Index i = 0; i < n_val; ++i) val.row(i) = data.row(idx[i]);
  for (Eigen::Index i = n_val; i < n; ++i) train.row(i - n_val) = data.row(idx[i]);

  const Eigen::Index n_params = params.V_free.size() + r;
  Adam adam(n_params, cfg);
  Rng batch_rng(cfg.seed + 17);
  Vector flat(n_params), grad(n_params);

  SgdModelParams best = params;
  double best_val = nll_loss(params, val);
  const long eval_every = 25;

  Matrix mini(cfg.batch_size, data.cols());
  for (long step = 0; step < cfg.steps; ++step) {
    for (int i = 0; i < cfg.batch_size; ++i)
      mini.row(i) = train.row(static_cast<Eigen::Index>(
          batch_rng.index(static_cast<std::uint64_t>(train.rows()))));
    const auto [dV, dlogits] = nll_grad(params, mini);
    flat << Eigen::Map<const Vector>(params.V_free.data(), params.V_free.size()),
        params.lambda_logits;
    grad << Eigen::Map<const Vector>(dV.data(), dV.size()), dlogits;
    adam.update(flat, grad, step);
    params.V_free = Eigen::Map<const Matrix>(flat.data(), r, map.num_features());
    params.lambda_logits = flat.tail(r);

    if (step % eval_every == eval_every - 1 || step == cfg.steps - 1) {
      const double train_nll = nll_loss(params, mini);
      if (!std::isfinite(train_nll))
        throw TrainingDiverged("train_sgd: non-finite loss", step);
      const double val_nll = nll_loss(params, val);
      if (curve) curve->push_back({static_cast<double>(step), cfg.lr_at(step), train_nll, val_nll});
      if (val_nll < best_val) {
        best_val = val_nll;
        best = params;
      }
    }
  }
  return detail::realize_model(best);
}

}  // namespace qaffde

#endif  // QAFFDE_SGD_TRAINER_HPP
