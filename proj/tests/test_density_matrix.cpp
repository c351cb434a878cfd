#include <doctest.h>

#include "qaffde/density_matrix.hpp"
#include "qaffde/kde_oracle.hpp"
#include "qaffde/rng.hpp"

using namespace qaffde;

namespace {

Matrix standard_normal_data(Eigen::Index n, int d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix data(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) data(i, j) = rng.normal();
  return data;
}

}  // namespace

TEST_CASE("normalizing_constant closed forms") {
  CHECK(normalizing_constant({M_PI, 1}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(normalizing_constant({1.0, 2}) == doctest::Approx(M_PI).epsilon(1e-12));
}

TEST_CASE("normalizing_constant matches 1-D quadrature") {
  const double gamma = 0.7;
  const double half_width = 20.0;
  const long n = 2000000;
  const double h = 2.0 * half_width / n;
  double integral = 0.0;
  for (long i = 0; i < n; ++i) {
    const double u = -half_width + (i + 0.5) * h;
    integral += std::exp(-gamma * u * u);
  }
  integral *= h;
  CHECK(integral == doctest::Approx(normalizing_constant({gamma, 1})).epsilon(1e-6));
}

TEST_CASE("estimate_rho single point is a rank-one trace-one projector") {
  Matrix data(1, 2);
  data << 0.4, -0.2;
  auto map = sample_rff({1.0, 2}, 16, 1);
  map.normalize = true;
  const Matrix rho = estimate_rho(data, map);
  CHECK(rho.trace() == doctest::Approx(1.0).epsilon(1e-10));
  const Vector phi = embed(map, data.row(0).transpose());
  CHECK((rho - phi * phi.transpose()).cwiseAbs().maxCoeff() < 1e-14);

  Matrix empty(0, 2);
  CHECK_THROWS_AS(estimate_rho(empty, map), std::invalid_argument);
}

TEST_CASE("estimate_rho symmetry and trace") {
  const Matrix data = standard_normal_data(200, 2, 2);
  auto map = sample_rff({1.0, 2}, 32, 3);
  map.normalize = true;
  const Matrix rho = estimate_rho(data, map);
  CHECK((rho - rho.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(rho.trace() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("estimate_rho matches a scalar triple-loop oracle") {
  const Matrix data = standard_normal_data(50, 2, 4);
  auto map = sample_rff({0.8, 2}, 12, 5);
  map.normalize = true;
  const Matrix rho = estimate_rho(data, map);

  const int D = map.num_features();
  Matrix oracle = Matrix::Zero(D, D);
  for (Eigen::Index p = 0; p < data.rows(); ++p) {
    const Vector phi = embed(map, data.row(p).transpose());
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j) oracle(i, j) += phi(i) * phi(j);
  }
  oracle /= static_cast<double>(data.rows());
  CHECK((rho - oracle).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("estimate_rho is positive semidefinite") {
  const Matrix data = standard_normal_data(100, 2, 6);
  auto map = sample_rff({1.0, 2}, 24, 7);
  map.normalize = true;
  const Matrix rho = estimate_rho(data, map);
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    Vector v(24);
    for (int i = 0; i < 24; ++i) v(i) = rng.normal();
    CHECK(v.dot(rho * v) >= -1e-10);
  }
}

TEST_CASE("spectral_truncate isotropic case") {
  const int D = 16;
  auto map = sample_rff({1.0, 2}, D, 9);
  const Matrix rho = Matrix::Identity(D, D) / D;
  const auto model = spectral_truncate(rho, D, map, 1.0);
  for (int i = 0; i < D; ++i) CHECK(model.Lambda(i) == doctest::Approx(1.0 / D).epsilon(1e-12));
  const Matrix recon = model.V.transpose() * model.Lambda.asDiagonal() * model.V;
  CHECK((recon - rho).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("spectral_truncate full-rank reconstruction of random PSD") {
  const Matrix data = standard_normal_data(80, 2, 10);
  auto map = sample_rff({1.0, 2}, 20, 11);
  map.normalize = true;
  const Matrix rho = estimate_rho(data, map);
  const auto model = spectral_truncate(rho, 20, map, 1.0);
  const Matrix recon = model.V.transpose() * model.Lambda.asDiagonal() * model.V;
  CHECK((recon - rho).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((model.V * model.V.transpose() - Matrix::Identity(20, 20)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK_THROWS_AS(spectral_truncate(rho, 21, map, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(spectral_truncate(rho, 0, map, 1.0), std::invalid_argument);
}

TEST_CASE("spectral_truncate captured mass on a constructed spectrum") {
  // Build rho from a known orthonormal basis with eigenvalues .5/.3/.2.
  const int D = 3;
  Matrix basis(3, 3);
  basis << 1, 1, 1, 1, -1, 0, 1, 1, -2;
  // Orthogonalize the columns.
  Eigen::HouseholderQR<Matrix> qr(basis);
  Matrix Q = qr.householderQ();
  Vector eig(3);
  eig << 0.5, 0.3, 0.2;
  const Matrix rho = Q * eig.asDiagonal() * Q.transpose();
  auto map = sample_rff({1.0, 1}, D, 12);
  const auto model = spectral_truncate(rho, 2, map, 1.0);
  CHECK(model.Lambda.sum() == doctest::Approx(0.8).epsilon(1e-10));
}

TEST_CASE("captured eigenvalue mass is nondecreasing in rank") {
  const Matrix data = standard_normal_data(120, 2, 13);
  auto map = sample_rff({1.0, 2}, 24, 14);
  map.normalize = true;
  const Matrix rho = estimate_rho(data, map);
  double prev = 0.0;
  for (int r = 1; r <= 24; ++r) {
    const double mass = spectral_truncate(rho, r, map, 1.0).Lambda.sum();
    CHECK(mass >= prev - 1e-12);
    prev = mass;
  }
  // Total eigenvalue mass equals the trace.
  CHECK(prev == doctest::Approx(rho.trace()).epsilon(1e-8));
}

TEST_CASE("predict_density full-rank identity with the quadratic form") {
  const Matrix data = standard_normal_data(60, 2, 15);
  auto map = sample_rff({1.0, 2}, 16, 16);
  map.normalize = true;
  const double M = normalizing_constant({2.0, 2});
  const Matrix rho = estimate_rho(data, map);
  const auto model = spectral_truncate(rho, 16, map, M);
  Rng rng(17);
  for (int t = 0; t < 50; ++t) {
    Vector x(2);
    x << rng.normal(), rng.normal();
    const Vector phi = embed(map, x);
    const double quad = phi.dot(rho * phi) / M;
    CHECK(predict_density(model, x) == doctest::Approx(quad).epsilon(1e-10));
  }
}

TEST_CASE("predict_density zero spectrum gives zero") {
  auto map = sample_rff({1.0, 2}, 8, 18);
  DensityMatrixModel model;
  model.V = Matrix::Identity(8, 8);
  model.Lambda = Vector::Zero(8);
  model.feature_map = map;
  model.norm_const = 1.0;
  model.rank = 8;
  Vector x(2);
  x << 0.1, 0.2;
  CHECK(predict_density(model, x) == 0.0);
}

TEST_CASE("predict_batch equals the scalar path") {
  const Matrix data = standard_normal_data(100, 2, 19);
  auto map = sample_rff({1.0, 2}, 32, 20);
  map.normalize = true;
  const auto model = spectral_truncate(estimate_rho(data, map), 16, map, M_PI);
  const Matrix queries = standard_normal_data(1000, 2, 21);
  const Vector batch = predict_batch(model, queries);
  for (Eigen::Index i = 0; i < queries.rows(); ++i)
    CHECK(batch(i) == doctest::Approx(predict_density(model, queries.row(i).transpose()))
                          .epsilon(1e-12));
  // Permuted batch gives permuted outputs.
  Matrix reversed = queries.colwise().reverse();
  const Vector rev = predict_batch(model, reversed);
  CHECK((rev - batch.reverse()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("raw-feature full-rank model approaches the KDE oracle") {
  // 1-D standard normal, gamma = 4 density bandwidth; features target
  // gamma/2 so the squared dot product approximates the full kernel.
  const Matrix train = standard_normal_data(2000, 1, 22);
  const double gamma = 4.0;
  const auto kde = make_kde(train, {gamma, 1});
  const double M = normalizing_constant({gamma, 1});

  Matrix queries(200, 1);
  for (int i = 0; i < 200; ++i) queries(i, 0) = -3.0 + 6.0 * i / 199.0;
  const Vector truth = kde_batch(kde, queries);

  auto mean_rel_err = [&](int D) {
    auto map = sample_rff({0.5 * gamma, 1}, D, 23);
    map.normalize = false;
    const Matrix rho = estimate_rho(train, map);
    const Matrix Phi = embed_batch(map, queries);
    double acc = 0.0;
    for (int i = 0; i < 200; ++i) {
      const double est = Phi.row(i).dot(rho * Phi.row(i).transpose()) / M;
      acc += std::abs(est - truth(i)) / truth(i);
    }
    return acc / 200.0;
  };
  const double err_small = mean_rel_err(256);
  const double err_big = mean_rel_err(2048);
  CHECK(err_big < 0.10);
  CHECK(err_big < err_small);
}
