#pragma once

// Dense symmetric eigendecomposition of the covariance, for checking PCA.

#include <Eigen/Dense>

#include "lareqa/matrix.hpp"
#include "lareqa/rng.hpp"

namespace oracle {

struct DensePca {
  Eigen::VectorXd eigenvalues;   // descending
  Eigen::MatrixXd eigenvectors;  // columns, matching order
};

inline DensePca dense_pca(const lareqa::Matrix<double>& x) {
  Eigen::MatrixXd m(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) m(r, c) = x(r, c);
  }
  const Eigen::MatrixXd centered = m.rowwise() - m.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  DensePca out{solver.eigenvalues().reverse(), solver.eigenvectors().rowwise().reverse()};
  return out;
}

/// n points in d dimensions with axis standard deviations `scales`, rotated
/// by a random orthogonal matrix and shifted.
inline lareqa::Matrix<double> rotated_cloud(std::size_t n, const std::vector<double>& scales,
                                            std::uint64_t seed) {
  const std::size_t d = scales.size();
  lareqa::rng::Generator gen(seed);
  auto gauss = [&] {
    const double u1 = 1.0 - gen.uniform(), u2 = gen.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  };
  Eigen::MatrixXd a(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) a(i, j) = gauss();
  }
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
  Eigen::VectorXd shift(d);
  for (std::size_t j = 0; j < d; ++j) shift(j) = 3.0 * gauss();
  lareqa::Matrix<double> out(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    Eigen::VectorXd z(d);
    for (std::size_t j = 0; j < d; ++j) z(j) = scales[j] * gauss();
    const Eigen::VectorXd p = q * z + shift;
    for (std::size_t j = 0; j < d; ++j) out(r, j) = p(j);
  }
  return out;
}

}  // namespace oracle
