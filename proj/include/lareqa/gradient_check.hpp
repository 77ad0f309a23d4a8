#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include <json.hpp>

#include "lareqa/matrix.hpp"
#include "lareqa/rng.hpp"
#include "lareqa/training.hpp"

namespace lareqa {

/// Central differences of in_batch_softmax_loss with step h.
inline Matrix<double> numeric_loss_gradient(const Matrix<double>& s, const LossConfig& cfg,
                                            double h = 1e-4) {
  Matrix<double> g(s.rows(), s.cols());
  Matrix<double> probe = s;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    for (std::size_t j = 0; j < s.cols(); ++j) {
      const double orig = probe(i, j);
      probe(i, j) = orig + h;
      const double up = in_batch_softmax_loss(probe, cfg);
      probe(i, j) = orig - h;
      const double down = in_batch_softmax_loss(probe, cfg);
      probe(i, j) = orig;
      g(i, j) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

/// max |a-b| / max(|a|, |b|, floor) over all entries.
inline double max_relative_error(const Matrix<double>& a, const Matrix<double>& b, double floor = 1e-12) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double denom = std::max({std::abs(a(i, j)), std::abs(b(i, j)), floor});
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / denom);
    }
  }
  return worst;
}

struct GradientCheckOptions {
  std::size_t trials = 50;
  std::size_t size = 8;
  double scale = 1.0;
  double step = 1e-4;
  double threshold = 1e-5;
  std::uint64_t seed = 0;
};

struct GradientCheckResult {
  double max_error_exclusive = 0.0;
  double max_error_inclusive = 0.0;
  bool passed = false;
};

/// Analytic vs numeric gradient on random score matrices with entries in [-1, 1).
inline GradientCheckResult gradient_check(const GradientCheckOptions& opt) {
  rng::Generator gen(opt.seed);
  GradientCheckResult r;
  for (std::size_t t = 0; t < opt.trials; ++t) {
    Matrix<double> s(opt.size, opt.size);
    for (std::size_t i = 0; i < opt.size; ++i) {
      for (std::size_t j = 0; j < opt.size; ++j) s(i, j) = 2.0 * gen.uniform() - 1.0;
    }
    for (bool exclusive : {true, false}) {
      const LossConfig cfg{opt.scale, exclusive};
      const double err = max_relative_error(loss_gradient(s, cfg), numeric_loss_gradient(s, cfg, opt.step));
      double& worst = exclusive ? r.max_error_exclusive : r.max_error_inclusive;
      worst = std::max(worst, err);
    }
  }
  r.passed = r.max_error_exclusive < opt.threshold && r.max_error_inclusive < opt.threshold;
  return r;
}

}  // namespace lareqa
