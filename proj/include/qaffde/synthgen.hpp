#ifndef QAFFDE_SYNTHGEN_HPP
#define QAFFDE_SYNTHGEN_HPP

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/QR>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "qaffde/errors.hpp"
#include "qaffde/parallel.hpp"
#include "qaffde/rng.hpp"

namespace qaffde {

/// Sampled points with (when available) the true density at each sample.
struct Dataset {
  Eigen::MatrixXd points;        // N x d
  Eigen::VectorXd true_density;  // N, or empty when unknown
  std::string name;
  std::uint64_t seed = 0;

  Eigen::Index size() const { return points.rows(); }
  int dim() const { return static_cast<int>(points.cols()); }
  bool has_density() const { return true_density.size() == points.rows(); }
};

/// Gaussian mixture with full covariances.
struct GmmSpec {
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covariances;
  Eigen::VectorXd weights;

  int dim() const { return means.empty() ? 0 : static_cast<int>(means[0].size()); }
  int components() const { return static_cast<int>(means.size()); }

  void validate() const {
    if (means.empty() || means.size() != covariances.size() ||
        weights.size() != static_cast<Eigen::Index>(means.size()))
      throw std::invalid_argument("GmmSpec: inconsistent component lists");
    if (std::abs(weights.sum() - 1.0) > 1e-9 || (weights.array() < 0.0).any())
      throw std::invalid_argument("GmmSpec: weights must be a probability vector");
  }
};

namespace detail {

// Cholesky factor and log normal constant per component, for stable pdfs.
struct GmmEval {
  std::vector<Eigen::MatrixXd> chol;   // lower factors L
  std::vector<double> log_norm;        // -d/2 log(2 pi) - sum log L_ii
};

inline GmmEval prepare_gmm(const GmmSpec& spec) {
  spec.validate();
  GmmEval eval;
  const int d = spec.dim();
  for (const auto& cov : spec.covariances) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
      throw NumericError("GmmSpec: covariance is not positive definite");
    Eigen::MatrixXd L = llt.matrixL();
    double log_det_half = 0.0;
    for (int i = 0; i < d; ++i) log_det_half += std::log(L(i, i));
    eval.chol.push_back(L);
    eval.log_norm.push_back(-0.5 * d * std::log(2.0 * M_PI) - log_det_half);
  }
  return eval;
}

}  // namespace detail

/// Exact mixture pdf via Cholesky-based component log-densities.
inline double true_gmm_density(const GmmSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const auto eval = detail::prepare_gmm(spec);
  double total = 0.0;
  for (int c = 0; c < spec.components(); ++c) {
    const Eigen::VectorXd z =
        eval.chol[c].triangularView<Eigen::Lower>().solve(x - spec.means[c]);
    total += spec.weights(c) * std::exp(eval.log_norm[c] - 0.5 * z.squaredNorm());
  }
  return total;
}

inline Eigen::VectorXd gmm_density_batch(const GmmSpec& spec,
                                         const Eigen::Ref<const Eigen::MatrixXd>& xs) {
  const auto eval = detail::prepare_gmm(spec);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(xs.rows());
  for (int c = 0; c < spec.components(); ++c) {
    const auto& L = eval.chol[c];
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
      const Eigen::VectorXd z = L.triangularView<Eigen::Lower>().solve(
          xs.row(i).transpose() - spec.means[c]);
      out(i) += spec.weights(c) * std::exp(eval.log_norm[c] - 0.5 * z.squaredNorm());
    }
  }
  return out;
}

/// Samples n points from the mixture.
inline Eigen::MatrixXd sample_gmm(const GmmSpec& spec, Eigen::Index n, Rng& rng) {
  const auto eval = detail::prepare_gmm(spec);
  const int d = spec.dim();
  Eigen::MatrixXd out(n, d);
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    double u = rng.uniform();
    int c = 0;
    while (c + 1 < spec.components() && u >= spec.weights(c)) {
      u -= spec.weights(c);
      ++c;
    }
    for (int j = 0; j < d; ++j) z(j) = rng.normal();
    out.row(i) = (spec.means[c] + eval.chol[c] * z).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// 2-D potential energies U1..U4 (planar-flow benchmark family).

namespace detail {

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

inline double potential_energy(int which, double z1, double z2) {
  const double w1 = std::sin(2.0 * M_PI * z1 / 4.0);
  switch (which) {
    case 1: {
      const double radius = std::sqrt(z1 * z1 + z2 * z2);
      const double ring = 0.5 * std::pow((radius - 2.0) / 0.4, 2.0);
      const double lobes = std::log(std::exp(-0.5 * std::pow((z1 - 2.0) / 0.6, 2.0)) +
                                    std::exp(-0.5 * std::pow((z1 + 2.0) / 0.6, 2.0)));
      return ring - lobes;
    }
    case 2:
      return 0.5 * std::pow((z2 - w1) / 0.4, 2.0);
    case 3: {
      const double w2 = 3.0 * std::exp(-0.5 * std::pow((z1 - 1.0) / 0.6, 2.0));
      return -std::log(std::exp(-0.5 * std::pow((z2 - w1) / 0.35, 2.0)) +
                       std::exp(-0.5 * std::pow((z2 - w1 + w2) / 0.35, 2.0)));
    }
    case 4: {
      const double w3 = 3.0 * sigmoid((z1 - 1.0) / 0.3);
      return -std::log(std::exp(-0.5 * std::pow((z2 - w1) / 0.4, 2.0)) +
                       std::exp(-0.5 * std::pow((z2 - w1 + w3) / 0.35, 2.0)));
    }
    default:
      throw std::invalid_argument("potential_energy: index must be 1..4");
  }
}

constexpr double kPotentialBox = 4.0;   // support box [-4,4]^2
constexpr int kPotentialGrid = 1000;
constexpr double kPotentialProposalSigma = 2.0;

// Midpoint-rule integral of exp(-U) over the box, plus the grid maximum of
// exp(-U(z)) / q(z) for the Gaussian rejection proposal q = N(0, sigma^2 I).
inline std::pair<double, double> potential_grid_stats(int which) {
  const double h = 2.0 * kPotentialBox / kPotentialGrid;
  const double s2 = kPotentialProposalSigma * kPotentialProposalSigma;
  const double prop_norm = 1.0 / (2.0 * M_PI * s2);
  double integral = 0.0;
  double max_ratio = 0.0;
  for (int i = 0; i < kPotentialGrid; ++i) {
    const double z1 = -kPotentialBox + (i + 0.5) * h;
    for (int j = 0; j < kPotentialGrid; ++j) {
      const double z2 = -kPotentialBox + (j + 0.5) * h;
      const double v = std::exp(-potential_energy(which, z1, z2));
      integral += v;
      const double q = prop_norm * std::exp(-(z1 * z1 + z2 * z2) / (2.0 * s2));
      max_ratio = std::max(max_ratio, v / q);
    }
  }
  return {integral * h * h, max_ratio};
}

inline const std::pair<double, double>& potential_stats_cached(int which) {
  static const std::pair<double, double> stats[4] = {
      potential_grid_stats(1), potential_grid_stats(2), potential_grid_stats(3),
      potential_grid_stats(4)};
  return stats[which - 1];
}

}  // namespace detail

/// Normalized potential density exp(-U_k)/Z_k on the box [-4,4]^2, 0 outside.
inline double potential_density(int which, double z1, double z2) {
  if (std::abs(z1) > detail::kPotentialBox || std::abs(z2) > detail::kPotentialBox) return 0.0;
  return std::exp(-detail::potential_energy(which, z1, z2)) /
         detail::potential_stats_cached(which).first;
}

// ---------------------------------------------------------------------------
// Swiss-roll tube: spiral center curve with an isotropic Gaussian cross
// section; the density is a quadrature along the curve parameter.

namespace detail {

constexpr double kSwissT0 = 1.5 * M_PI;
constexpr double kSwissT1 = 4.5 * M_PI;
constexpr double kSwissScale = 0.28;
constexpr double kSwissSigma = 0.25;
constexpr int kSwissQuadNodes = 2001;

inline Eigen::Vector2d swiss_center(double t) {
  return kSwissScale * Eigen::Vector2d(t * std::cos(t), t * std::sin(t));
}

inline double swiss_density(double x1, double x2) {
  // p(x) = (1/(t1-t0)) * int N(x; c(t), sigma^2 I) dt, Simpson's rule.
  const double h = (kSwissT1 - kSwissT0) / (kSwissQuadNodes - 1);
  const double inv2s2 = 1.0 / (2.0 * kSwissSigma * kSwissSigma);
  const double gauss_norm = 1.0 / (2.0 * M_PI * kSwissSigma * kSwissSigma);
  double acc = 0.0;
  for (int i = 0; i < kSwissQuadNodes; ++i) {
    const double t = kSwissT0 + i * h;
    const Eigen::Vector2d c = swiss_center(t);
    const double d1 = x1 - c(0);
    const double d2 = x2 - c(1);
    const double val = std::exp(-(d1 * d1 + d2 * d2) * inv2s2);
    const double w = (i == 0 || i == kSwissQuadNodes - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    acc += w * val;
  }
  return acc * (h / 3.0) * gauss_norm / (kSwissT1 - kSwissT0);
}

inline GmmSpec bimodal_spec() {
  GmmSpec spec;
  spec.means = {Eigen::Vector2d(-2.0, 0.0), Eigen::Vector2d(2.0, 0.0)};
  spec.covariances = {0.6 * Eigen::Matrix2d::Identity(), 0.6 * Eigen::Matrix2d::Identity()};
  spec.weights = Eigen::Vector2d(0.5, 0.5);
  return spec;
}

inline GmmSpec binomial_spec() {
  GmmSpec spec;
  Eigen::Matrix2d c1, c2;
  c1 << 0.8, 0.4, 0.4, 0.8;
  c2 << 0.8, -0.4, -0.4, 0.8;
  spec.means = {Eigen::Vector2d(-1.5, -1.5), Eigen::Vector2d(1.5, 1.5)};
  spec.covariances = {c1, c2};
  spec.weights = Eigen::Vector2d(0.5, 0.5);
  return spec;
}

inline GmmSpec star_eight_spec() {
  GmmSpec spec;
  const int k = 8;
  spec.weights = Eigen::VectorXd::Constant(k, 1.0 / k);
  for (int i = 0; i < k; ++i) {
    const double angle = 2.0 * M_PI * i / k;
    spec.means.push_back(2.5 * Eigen::Vector2d(std::cos(angle), std::sin(angle)));
    Eigen::Matrix2d rot;
    rot << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    // Elongated along the radial direction.
    const Eigen::Matrix2d base = Eigen::Vector2d(0.6, 0.03).asDiagonal();
    spec.covariances.push_back(rot * base * rot.transpose());
  }
  return spec;
}

inline double normal_pdf(double x, double mean, double variance) {
  const double diff = x - mean;
  return std::exp(-0.5 * diff * diff / variance) / std::sqrt(2.0 * M_PI * variance);
}

}  // namespace detail

/// Generates one of the reference 2-D synthetic datasets with the true
/// density at each sample. Names: arc, bimodal, binomial, potential_1..4,
/// star_eight, swiss_roll.
inline Dataset generate(const std::string& name, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("generate: n must be >= 1");
  Rng rng(seed);
  Dataset ds;
  ds.name = name;
  ds.seed = seed;
  ds.points.resize(n, 2);
  ds.true_density.resize(n);

  if (name == "arc") {
    // x2 ~ N(0, 4); x1 | x2 ~ N(x2^2 / 4, 1)
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x2 = 2.0 * rng.normal();
      const double x1 = 0.25 * x2 * x2 + rng.normal();
      ds.points(i, 0) = x1;
      ds.points(i, 1) = x2;
      ds.true_density(i) = detail::normal_pdf(x2, 0.0, 4.0) *
                           detail::normal_pdf(x1, 0.25 * x2 * x2, 1.0);
    }
    return ds;
  }
  if (name == "bimodal" || name == "binomial" || name == "star_eight") {
    const GmmSpec spec = name == "bimodal"    ? detail::bimodal_spec()
                         : name == "binomial" ? detail::binomial_spec()
                                              : detail::star_eight_spec();
    ds.points = sample_gmm(spec, n, rng);
    ds.true_density = gmm_density_batch(spec, ds.points);
    return ds;
  }
  if (name == "swiss_roll") {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = rng.uniform(detail::kSwissT0, detail::kSwissT1);
      const Eigen::Vector2d c = detail::swiss_center(t);
      ds.points(i, 0) = c(0) + detail::kSwissSigma * rng.normal();
      ds.points(i, 1) = c(1) + detail::kSwissSigma * rng.normal();
    }
    parallel_for(n, [&](long lo, long hi) {
      for (long i = lo; i < hi; ++i)
        ds.true_density(i) = detail::swiss_density(ds.points(i, 0), ds.points(i, 1));
    });
    return ds;
  }
  if (name.rfind("potential_", 0) == 0 && name.size() == 11) {
    const int which = name[10] - '0';
    if (which < 1 || which > 4) throw std::invalid_argument("generate: unknown dataset " + name);
    const auto& stats = detail::potential_stats_cached(which);
    const double z = stats.first;
    // Rejection from a broad Gaussian proposal; the envelope constant comes
    // from the grid maximum of p/q (with a safety margin for off-grid peaks).
    const double prop_sigma = detail::kPotentialProposalSigma;
    const double prop_norm = 1.0 / (2.0 * M_PI * prop_sigma * prop_sigma);
    const double bound = 1.3 * stats.second / z;
    long attempts = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (;;) {
        ++attempts;
        if (attempts > 10000 && static_cast<double>(i) / attempts < 1e-4)
          throw std::invalid_argument("generate: rejection sampler efficiency below 1e-4");
        const double z1 = prop_sigma * rng.normal();
        const double z2 = prop_sigma * rng.normal();
        const double p = potential_density(which, z1, z2);
        if (p == 0.0) continue;
        const double q = prop_norm * std::exp(-(z1 * z1 + z2 * z2) /
                                              (2.0 * prop_sigma * prop_sigma));
        if (rng.uniform() * bound * q < p) {
          ds.points(i, 0) = z1;
          ds.points(i, 1) = z2;
          ds.true_density(i) = p;
          break;
        }
      }
    }
    return ds;
  }
  throw std::invalid_argument("generate: unknown dataset " + name);
}

inline const std::vector<std::string>& synthetic_dataset_names() {
  static const std::vector<std::string> names = {
      "arc",         "bimodal",     "binomial",  "potential_1", "potential_2",
      "potential_3", "potential_4", "star_eight", "swiss_roll"};
  return names;
}

/// Random mixture family in d dimensions: 10*d components, means uniform on
/// the unit cube, covariances built by conjugating a uniform eigenvalue
/// vector with a random orthogonal matrix. Train/test draw equal
/// per-component counts.
inline std::tuple<GmmSpec, Dataset, Dataset> generate_random_gmm(int d, std::uint64_t seed,
                                                                 Eigen::Index n_train = 40000,
                                                                 Eigen::Index n_test = 10000) {
  if (d < 1) throw std::invalid_argument("generate_random_gmm: d must be >= 1");
  Rng rng(seed);
  const int k = 10 * d;
  GmmSpec spec;
  spec.weights = Eigen::VectorXd::Constant(k, 1.0 / k);
  for (int c = 0; c < k; ++c) {
    Eigen::VectorXd mean(d);
    for (int j = 0; j < d; ++j) mean(j) = rng.uniform();
    spec.means.push_back(mean);

    Eigen::VectorXd eigvals(d);
    for (int j = 0; j < d; ++j) eigvals(j) = rng.uniform(0.005, 0.05);
    Eigen::MatrixXd gauss(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) gauss(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
    Eigen::MatrixXd Q = qr.householderQ();
    const Eigen::MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < d; ++j)
      if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
    Eigen::MatrixXd cov = Q * eigvals.asDiagonal() * Q.transpose();
    cov = 0.5 * (cov + cov.transpose()).eval();
    if (Eigen::LLT<Eigen::MatrixXd>(cov).info() != Eigen::Success)
      throw NumericError("generate_random_gmm: constructed covariance is not SPD");
    spec.covariances.push_back(cov);
  }

  const auto eval = detail::prepare_gmm(spec);
  auto draw = [&](Eigen::Index n, const std::string& tag) {
    Dataset ds;
    ds.name = "gmm_d" + std::to_string(d) + "_" + tag;
    ds.seed = seed;
    ds.points.resize(n, d);
    Eigen::VectorXd z(d);
    // Equal per-component counts; remainder spread over the first components.
    Eigen::Index row = 0;
    for (int c = 0; c < k && row < n; ++c) {
      Eigen::Index count = n / k + (c < n % k ? 1 : 0);
      for (Eigen::Index i = 0; i < count; ++i, ++row) {
        for (int j = 0; j < d; ++j) z(j) = rng.normal();
        ds.points.row(row) = (spec.means[c] + eval.chol[c] * z).transpose();
      }
    }
    ds.true_density = gmm_density_batch(spec, ds.points);
    return ds;
  };
  Dataset train = draw(n_train, "train");
  Dataset test = draw(n_test, "test");
  return {spec, std::move(train), std::move(test)};
}

}  // namespace qaffde

#endif  // QAFFDE_SYNTHGEN_HPP
