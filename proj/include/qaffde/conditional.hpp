#ifndef QAFFDE_CONDITIONAL_HPP
#define QAFFDE_CONDITIONAL_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qaffde/adam.hpp"
#include "qaffde/density_matrix.hpp"
#include "qaffde/sgd_trainer.hpp"

namespace qaffde {

/// One density model per class plus class priors; classification follows the
/// Bayes rule posterior_c proportional to prior_c * f_c(x).
struct ConditionalModel {
  std::vector<DensityMatrixModel> class_models;
  Vector priors;
  std::vector<int> labels;
};

struct ClassifyResult {
  int label = 0;
  Vector posterior;
  bool degenerate = false;  // all class densities were zero
};

/// Fits a per-class density model on each class subset. The feature map is
/// shared across classes. Priors default to empirical class frequencies.
inline ConditionalModel fit_conditional(const Eigen::Ref<const Matrix>& points,
                                        const std::vector<int>& labels, const FeatureMap& map,
                                        int r, FitMode mode,
                                        const std::optional<OptimizerConfig>& cfg = std::nullopt,
                                        double norm_const = 0.0, bool uniform_priors = false) {
  if (points.rows() == 0 || labels.size() != static_cast<std::size_t>(points.rows()))
    throw std::invalid_argument("fit_conditional: labels must match points");
  std::map<int, std::vector<Eigen::Index>> by_class;
  for (Eigen::Index i = 0; i < points.rows(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [label, rows] : by_class)
    if (rows.empty())
      throw std::invalid_argument("fit_conditional: empty class " + std::to_string(label));

  if (norm_const <= 0.0)
    norm_const = normalizing_constant({2.0 * map.gamma_target, map.dim()});

  ConditionalModel model;
  model.priors.resize(static_cast<Eigen::Index>(by_class.size()));
  Eigen::Index c = 0;
  for (const auto& [label, rows] : by_class) {
    Matrix subset(static_cast<Eigen::Index>(rows.size()), points.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) subset.row(static_cast<Eigen::Index>(i)) = points.row(rows[i]);
    if (mode == FitMode::estimate) {
      const Matrix rho = estimate_rho(subset, map);
      model.class_models.push_back(spectral_truncate(rho, r, map, norm_const));
    } else {
      if (!cfg) throw std::invalid_argument("fit_conditional: sgd mode needs an OptimizerConfig");
      const Matrix rho = estimate_rho(subset, map);
      const auto init = spectral_truncate(rho, r, map, norm_const);
      model.class_models.push_back(train_sgd(subset, map, r, *cfg, init, norm_const));
    }
    model.labels.push_back(label);
    model.priors(c++) = static_cast<double>(rows.size()) / points.rows();
  }
  if (uniform_priors) model.priors.setConstant(1.0 / static_cast<double>(model.priors.size()));
  return model;
}

/// Bayes classification: argmax of prior_c * f_c(x), lowest index on ties.
inline ClassifyResult classify(const ConditionalModel& model, const Eigen::Ref<const Vector>& x) {
  const auto k = static_cast<Eigen::Index>(model.class_models.size());
  Vector joint(k);
  for (Eigen::Index c = 0; c < k; ++c)
    joint(c) = model.priors(c) * predict_density(model.class_models[c], x);

  ClassifyResult result;
  const double total = joint.sum();
  if (total <= 0.0) {
    result.degenerate = true;
    result.posterior = Vector::Constant(k, 1.0 / static_cast<double>(k));
    Eigen::Index arg = 0;
    model.priors.maxCoeff(&arg);
    result.label = model.labels[static_cast<std::size_t>(arg)];
    return result;
  }
  result.posterior = joint / total;
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < k; ++c)
    if (joint(c) > joint(best)) best = c;
  result.label = model.labels[static_cast<std::size_t>(best)];
  return result;
}

}  // namespace qaffde

#endif  // QAFFDE_CONDITIONAL_HPP
