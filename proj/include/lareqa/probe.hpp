#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lareqa/corpus.hpp"
#include "lareqa/embed.hpp"
#include "lareqa/error.hpp"
#include "lareqa/matrix.hpp"
#include "lareqa/rng.hpp"

namespace lareqa {

struct PowerIterationOptions {
  double tolerance = 1e-10;
  std::size_t max_iterations = 10000;
  std::uint64_t seed = 0x5EEDULL;
};

struct PcaResult {
  std::array<std::vector<double>, 2> components;
  std::array<double, 2> explained_variance{};
  std::vector<double> mean;
  /// Projected coordinates, one (x, y) per input row.
  std::vector<std::array<double, 2>> coords;
  double total_variance = 0.0;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline void scale_to_unit(std::vector<double>& v) {
  const double n = std::sqrt(dot(v, v));
  for (auto& x : v) x /= n;
}

/// Flip so the largest-magnitude entry (first on ties) is positive.
inline void apply_sign_convention(std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  }
  if (v[best] < 0) {
    for (auto& x : v) x = -x;
  }
}

/// Dominant eigenpair of a symmetric PSD matrix, orthogonal to `against`.
inline std::pair<double, std::vector<double>> power_iteration(
    const Matrix<double>& c, const std::vector<std::vector<double>>& against,
    const PowerIterationOptions& opt) {
  const std::size_t d = c.rows();
  auto orthogonalize = [&](std::vector<double>& v) {
    for (const auto& u : against) {
      const double p = dot(v, u);
      for (std::size_t i = 0; i < d; ++i) v[i] -= p * u[i];
    }
  };
  rng::Generator gen(opt.seed + against.size());
  std::vector<double> v(d);
  for (auto& x : v) x = 2.0 * gen.uniform() - 1.0;
  orthogonalize(v);
  scale_to_unit(v);

  std::vector<double> w(d);
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    for (std::size_t i = 0; i < d; ++i) w[i] = dot(c.row(i), v);
    orthogonalize(w);
    const double norm = std::sqrt(dot(w, w));
    if (!(norm > 1e-300)) return {0.0, {}};  // nothing left in this subspace
    double diff = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      w[i] /= norm;
      diff += (w[i] - v[i]) * (w[i] - v[i]);
    }
    std::swap(v, w);
    if (std::sqrt(diff) < opt.tolerance) break;
  }
  for (std::size_t i = 0; i < d; ++i) w[i] = dot(c.row(i), v);
  return {dot(v, w), v};
}

/// Any unit vector orthogonal to u (the basis vector with the largest residual).
inline std::vector<double> orthogonal_complement(const std::vector<double>& u) {
  std::size_t best = 0;
  double best_res = -1.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double res = 1.0 - u[k] * u[k];
    if (res > best_res + 1e-12) {
      best_res = res;
      best = k;
    }
  }
  std::vector<double> v(u.size(), 0.0);
  v[best] = 1.0;
  for (std::size_t i = 0; i < u.size(); ++i) v[i] -= u[best] * u[i];
  scale_to_unit(v);
  return v;
}

}  // namespace detail

/// Population covariance of the rows of x.
inline Matrix<double> covariance(const Matrix<double>& x, std::vector<double>* mean_out = nullptr) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  std::vector<double> mean(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < d; ++k) mean[k] += x(r, k);
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  Matrix<double> c(d, d, 0.0);
  std::vector<double> centered(d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < d; ++k) centered[k] = x(r, k) - mean[k];
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = a; b < d; ++b) c(a, b) += centered[a] * centered[b];
    }
  }
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a; b < d; ++b) {
      c(a, b) /= static_cast<double>(n);
      c(b, a) = c(a, b);
    }
  }
  if (mean_out) *mean_out = std::move(mean);
  return c;
}

/// First two principal components by power iteration with deflation.
inline PcaResult pca_2d(const Matrix<double>& x, const PowerIterationOptions& opt = {}) {
  if (x.rows() < 3) throw ValidationError("PCA needs at least 3 points");
  if (x.cols() < 2) throw ValidationError("PCA needs dimension at least 2");
  PcaResult out;
  const Matrix<double> c = covariance(x, &out.mean);
  for (std::size_t k = 0; k < c.rows(); ++k) out.total_variance += c(k, k);
  if (!(out.total_variance > 0.0)) {
    throw ValidationError("PCA input is rank deficient: all points are identical");
  }

  auto [l1, v1] = detail::power_iteration(c, {}, opt);
  if (v1.empty()) throw ValidationError("PCA input is rank deficient");
  // Deflate: C - λ1 v1 v1ᵀ, and keep the iterate orthogonal to v1.
  Matrix<double> deflated = c;
  for (std::size_t a = 0; a < c.rows(); ++a) {
    for (std::size_t b = 0; b < c.cols(); ++b) deflated(a, b) -= l1 * v1[a] * v1[b];
  }
  auto [l2, v2] = detail::power_iteration(deflated, {v1}, opt);
  if (v2.empty() || l2 <= 0.0) {
    l2 = 0.0;
    v2 = detail::orthogonal_complement(v1);
  } else {
    // Rayleigh quotient on the undeflated covariance.
    std::vector<double> w(v2.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = detail::dot(c.row(i), v2);
    l2 = std::max(0.0, detail::dot(v2, w));
  }
  detail::apply_sign_convention(v1);
  detail::apply_sign_convention(v2);
  out.components = {std::move(v1), std::move(v2)};
  out.explained_variance = {l1, l2};

  out.coords.reserve(x.rows());
  std::vector<double> centered(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t k = 0; k < x.cols(); ++k) centered[k] = x(r, k) - out.mean[k];
    out.coords.push_back({detail::dot(centered, out.components[0]),
                          detail::dot(centered, out.components[1])});
  }
  return out;
}

inline PcaResult pca_2d(const std::vector<std::vector<double>>& vectors,
                        const PowerIterationOptions& opt = {}) {
  return pca_2d(Matrix<double>::from_rows(vectors), opt);
}

// ---------------------------------------------------------------------------
// Labeled projections of task embeddings

struct ProjectedPoint {
  std::string id;
  double x = 0.0;
  double y = 0.0;
  LanguageCode language;
  EmbeddingKind kind = EmbeddingKind::question;
};

struct Projection2D {
  std::vector<ProjectedPoint> points;
  std::array<std::vector<double>, 2> components;
  std::array<double, 2> explained_variance{};
};

struct LabeledVectors {
  Matrix<double> vectors;
  std::vector<std::string> ids;
  std::vector<LanguageCode> languages;
  std::vector<EmbeddingKind> kinds;
};

/// Questions then candidates whose reporting language is in `languages`.
inline LabeledVectors collect_embeddings(const RetrievalTask& task, const EmbeddingSet& questions,
                                         const EmbeddingSet& candidates,
                                         const std::set<LanguageCode>& languages) {
  LabeledVectors out;
  std::vector<std::vector<double>> rows;
  auto take = [&](const std::string& id, const LanguageCode& lang, const EmbeddingSet& set,
                  EmbeddingKind kind) {
    if (!languages.count(lang)) return;
    auto v = set.at(id);
    rows.emplace_back(v.begin(), v.end());
    out.ids.push_back(id);
    out.languages.push_back(lang);
    out.kinds.push_back(kind);
  };
  for (const auto& q : task.questions) {
    take(q.question_id, task.reporting_language(q), questions, EmbeddingKind::question);
  }
  for (const auto& c : task.candidates) {
    take(c.candidate_id, task.reporting_language(c), candidates, EmbeddingKind::candidate);
  }
  out.vectors = Matrix<double>::from_rows(rows);
  return out;
}

inline Projection2D project(const LabeledVectors& data, const PowerIterationOptions& opt = {}) {
  const auto pca = pca_2d(data.vectors, opt);
  Projection2D p;
  p.components = pca.components;
  p.explained_variance = pca.explained_variance;
  for (std::size_t i = 0; i < data.ids.size(); ++i) {
    p.points.push_back({data.ids[i], pca.coords[i][0], pca.coords[i][1], data.languages[i], data.kinds[i]});
  }
  return p;
}

inline std::string projection_to_csv(const Projection2D& p) {
  std::ostringstream out;
  out << "id,x,y,language,kind\n";
  char buf[64];
  for (const auto& pt : p.points) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", pt.x, pt.y);
    out << pt.id << ',' << buf << ',' << pt.language.str() << ','
        << (pt.kind == EmbeddingKind::question ? "question" : "candidate") << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Language-ID probe

struct ProbeOptions {
  std::uint64_t seed = 0;
  std::size_t epochs = 500;
  double learning_rate = 1.0;
  double train_fraction = 2.0 / 3.0;
};

struct ProbeResult {
  double holdout_accuracy = 0.0;
  double train_fraction = 2.0 / 3.0;
  std::uint64_t seed = 0;
  std::array<LanguageCode, 2> languages;
  std::size_t num_train = 0;
  std::size_t num_holdout = 0;
};

/// Binary logistic-regression probe, trained by full-batch gradient descent
/// on a class-stratified split and scored on the held-out part.
inline ProbeResult language_id_probe(const Matrix<double>& vectors,
                                     const std::vector<LanguageCode>& labels,
                                     const ProbeOptions& opt = {}) {
  if (vectors.rows() != labels.size()) {
    throw ValidationError("probe: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(vectors.rows()) + " vectors");
  }
  const std::set<LanguageCode> classes(labels.begin(), labels.end());
  if (classes.size() != 2) {
    throw ValidationError("probe needs exactly two languages, got " + std::to_string(classes.size()));
  }
  if (!(opt.train_fraction > 0.0 && opt.train_fraction < 1.0)) {
    throw ValidationError("probe train_fraction must be in (0, 1)");
  }
  ProbeResult res;
  res.seed = opt.seed;
  res.train_fraction = opt.train_fraction;
  res.languages = {*classes.begin(), *classes.rbegin()};

  rng::Generator gen(opt.seed);
  std::vector<std::size_t> train, holdout;
  for (const auto& cls : res.languages) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) members.push_back(i);
    }
    rng::shuffle(std::span(members), gen);
    const auto n_train = static_cast<std::size_t>(
        std::floor(static_cast<double>(members.size()) * opt.train_fraction + 1e-9));
    if (n_train == 0 || n_train == members.size()) {
      throw ValidationError("probe split leaves class " + cls.str() +
                            " absent from the train or holdout part");
    }
    train.insert(train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    holdout.insert(holdout.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train), members.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(holdout.begin(), holdout.end());

  const std::size_t d = vectors.cols();
  std::vector<double> w(d, 0.0), grad(d);
  double bias = 0.0;
  auto logit = [&](std::size_t i) {
    double z = bias;
    for (std::size_t k = 0; k < d; ++k) z += w[k] * vectors(i, k);
    return z;
  };
  const double inv_n = 1.0 / static_cast<double>(train.size());
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_b = 0.0;
    for (std::size_t i : train) {
      const double p = 1.0 / (1.0 + std::exp(-logit(i)));
      const double err = p - (labels[i] == res.languages[1] ? 1.0 : 0.0);
      for (std::size_t k = 0; k < d; ++k) grad[k] += err * vectors(i, k);
      grad_b += err;
    }
    for (std::size_t k = 0; k < d; ++k) w[k] -= opt.learning_rate * grad[k] * inv_n;
    bias -= opt.learning_rate * grad_b * inv_n;
  }

  std::size_t correct = 0;
  for (std::size_t i : holdout) {
    const bool predicted_second = logit(i) >= 0.0;  // sigmoid >= 0.5
    correct += predicted_second == (labels[i] == res.languages[1]);
  }
  res.num_train = train.size();
  res.num_holdout = holdout.size();
  res.holdout_accuracy = static_cast<double>(correct) / static_cast<double>(holdout.size());
  return res;
}

inline nlohmann::json probe_to_json(const ProbeResult& r) {
  return {{"holdout_accuracy", std::round(r.holdout_accuracy * 1e6) / 1e6},
          {"train_fraction", r.train_fraction},
          {"seed", r.seed},
          {"languages", {r.languages[0].str(), r.languages[1].str()}},
          {"num_train", r.num_train},
          {"num_holdout", r.num_holdout}};
}

}  // namespace lareqa
