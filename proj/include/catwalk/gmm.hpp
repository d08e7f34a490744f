#pragma once

// Diagonal-covariance Gaussian mixture: the visual vocabulary behind Fisher
// Vector encoding. EM in log space, k-means++ seeding.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "catwalk/error.hpp"
#include "catwalk/features.hpp"
#include "catwalk/parallel.hpp"
#include "catwalk/text_io.hpp"

namespace catwalk {

inline constexpr double kVarianceFloor = 1e-6;

struct GmmModel {
  Eigen::VectorXd weights;  // K
  RowMatrix means;          // K x d
  RowMatrix variances;      // K x d, diagonal covariances
  std::vector<int> trained_on;  // years that contributed training data

  Eigen::Index components() const { return weights.size(); }
  Eigen::Index dim() const { return means.cols(); }

  void validate() const {
    const auto K = components();
    if (K < 1) throw InvalidInput("GMM has no components");
    if (means.rows() != K || variances.rows() != K || variances.cols() != means.cols())
      throw ShapeError("GMM parameter shapes disagree");
    if (std::abs(weights.sum() - 1.0) > 1e-9) throw InvalidInput("GMM weights do not sum to 1");
    if ((weights.array() <= 0.0).any() || !weights.allFinite()) throw InvalidInput("GMM weight not positive");
    if (!means.allFinite() || !variances.allFinite()) throw InvalidInput("GMM parameters not finite");
    if ((variances.array() < kVarianceFloor * (1 - 1e-12)).any()) throw InvalidInput("GMM variance below floor");
  }
};

// Per-component constants for fast log-density evaluation, flattened
// row-major (K x d) so each component's parameters are contiguous.
class GmmEvaluator {
 public:
  explicit GmmEvaluator(const GmmModel& m)
      : K_(m.components()), d_(m.dim()),
        means_(static_cast<std::size_t>(K_ * d_)),
        half_inv_var_(means_.size()),
        inv_sd_(means_.size()),
        log_norm_(static_cast<std::size_t>(K_)) {
    const double log2pi = std::log(2.0 * std::numbers::pi);
    for (Eigen::Index k = 0; k < K_; ++k) {
      double log_det = 0.0;
      for (Eigen::Index j = 0; j < d_; ++j) {
        const auto at = static_cast<std::size_t>(k * d_ + j);
        const double var = m.variances(k, j);
        means_[at] = m.means(k, j);
        half_inv_var_[at] = 0.5 / var;
        inv_sd_[at] = 1.0 / std::sqrt(var);
        log_det += std::log(var);
      }
      log_norm_[static_cast<std::size_t>(k)] =
          std::log(m.weights(k)) - 0.5 * (static_cast<double>(d_) * log2pi + log_det);
    }
  }

  Eigen::Index components() const { return K_; }
  Eigen::Index dim() const { return d_; }
  // Row-major K x d.
  const double* means() const { return means_.data(); }
  const double* inv_sd() const { return inv_sd_.data(); }

  // out[k] = log(w_k N(f | mu_k, sigma_k)).
  template <typename Row>
  void log_terms(const Row& f, double* out) const {
    double x[64];
    double* xs = x;
    std::vector<double> big;
    if (d_ > 64) { big.resize(static_cast<std::size_t>(d_)); xs = big.data(); }
    for (Eigen::Index j = 0; j < d_; ++j) xs[j] = f(j);
    const double* mu = means_.data();
    const double* h = half_inv_var_.data();
    for (Eigen::Index k = 0; k < K_; ++k, mu += d_, h += d_) {
      double q = 0.0;
      for (Eigen::Index j = 0; j < d_; ++j) {
        const double z = xs[j] - mu[j];
        q += z * z * h[j];
      }
      out[k] = log_norm_[static_cast<std::size_t>(k)] - q;
    }
  }

  template <typename Row>
  double log_joint(const Row& f, Eigen::Ref<Eigen::VectorXd> out) const {
    log_terms(f, out.data());
    const double mx = out.maxCoeff();
    double s = 0.0;
    for (Eigen::Index k = 0; k < K_; ++k) s += std::exp(out(k) - mx);
    return mx + std::log(s);
  }

  // Posterior into out; returns the log-likelihood of f.
  template <typename Row>
  double posterior(const Row& f, double* out) const {
    log_terms(f, out);
    double mx = out[0];
    for (Eigen::Index k = 1; k < K_; ++k) mx = std::max(mx, out[k]);
    double s = 0.0;
    for (Eigen::Index k = 0; k < K_; ++k) s += (out[k] = std::exp(out[k] - mx));
    const double inv = 1.0 / s;
    for (Eigen::Index k = 0; k < K_; ++k) out[k] *= inv;
    return mx + std::log(s);
  }

  template <typename Row>
  double posterior(const Row& f, Eigen::Ref<Eigen::VectorXd> out) const {
    return posterior(f, out.data());
  }

 private:
  Eigen::Index K_, d_;
  std::vector<double> means_, half_inv_var_, inv_sd_, log_norm_;
};

inline Eigen::VectorXd posterior(const GmmModel& gmm, const Eigen::Ref<const Eigen::VectorXd>& f) {
  if (f.size() != gmm.dim()) throw ShapeError("descriptor dimension does not match GMM");
  if (!f.allFinite()) throw InvalidInput("non-finite descriptor");
  Eigen::VectorXd out(gmm.components());
  GmmEvaluator(gmm).posterior(f, out);
  return out;
}

// Mean per-sample log-likelihood.
inline double log_likelihood(const GmmModel& gmm, const RowMatrix& data) {
  if (data.cols() != gmm.dim()) throw ShapeError("data dimension does not match GMM");
  const GmmEvaluator eval(gmm);
  const auto n = static_cast<std::size_t>(data.rows());
  std::vector<double> partial(chunk_count(n), 0.0);
  for_each_chunk(n, [&](std::size_t c, std::size_t b, std::size_t e) {
    Eigen::VectorXd buf(gmm.components());
    double s = 0.0;
    for (auto i = b; i < e; ++i) s += eval.log_joint(data.row(static_cast<Eigen::Index>(i)), buf);
    partial[c] = s;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return n ? total / static_cast<double>(n) : 0.0;
}

struct GmmFitConfig {
  int components = 256;
  int max_iterations = 100;
  double tolerance = 1e-5;  // relative change of the mean log-likelihood
  std::uint64_t seed = 0;
  std::size_t sample_cap = 500000;
};

struct GmmFit {
  GmmModel model;
  std::vector<double> log_likelihood;  // mean per sample, one entry per E-step
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline RowMatrix subsample_rows(const RowMatrix& data, std::size_t cap, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(data.rows());
  if (cap == 0 || n <= cap) return data;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < cap; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  RowMatrix out(static_cast<Eigen::Index>(cap), data.cols());
  for (std::size_t i = 0; i < cap; ++i) out.row(static_cast<Eigen::Index>(i)) = data.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

struct DistinctRows {
  std::vector<Eigen::Index> representative;  // first row index of each distinct point, lexicographic order
  std::vector<double> multiplicity;
};

inline DistinctRows distinct_rows(const RowMatrix& data) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(data.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  auto less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      if (data(a, j) < data(b, j)) return true;
      if (data(b, j) < data(a, j)) return false;
    }
    return false;
  };
  std::stable_sort(idx.begin(), idx.end(), less);
  DistinctRows out;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i == 0 || less(idx[i - 1], idx[i])) {
      out.representative.push_back(idx[i]);
      out.multiplicity.push_back(1.0);
    } else {
      out.multiplicity.back() += 1.0;
    }
  }
  return out;
}

// Draws an index with probability proportional to weights.
inline std::size_t draw_weighted(const std::vector<double>& weights, std::mt19937_64& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last_positive = i;
    acc += weights[i];
    if (u < acc) return i;
  }
  return last_positive;
}

// k-means++ over the distinct points weighted by multiplicity, so duplicating
// the whole data set leaves the chosen centres unchanged.
inline RowMatrix kmeans_pp(const RowMatrix& data, const DistinctRows& distinct, int K, std::mt19937_64& rng) {
  const auto m = distinct.representative.size();
  RowMatrix centres(K, data.cols());
  std::vector<double> d2(m, std::numeric_limits<double>::infinity());
  std::vector<double> w(m);
  auto chosen = draw_weighted(distinct.multiplicity, rng);
  for (int k = 0; k < K; ++k) {
    if (k > 0) {
      for (std::size_t i = 0; i < m; ++i) w[i] = d2[i] * distinct.multiplicity[i];
      chosen = draw_weighted(w, rng);
    }
    const auto c = data.row(distinct.representative[chosen]);
    centres.row(k) = c;
    for (std::size_t i = 0; i < m; ++i)
      d2[i] = std::min(d2[i], (data.row(distinct.representative[i]) - c).squaredNorm());
  }
  return centres;
}

}  // namespace detail

// EM for a diagonal GMM. Training data is capped at cfg.sample_cap rows by a
// seeded subsample; the log-likelihood trace is non-decreasing.
inline GmmFit fit_gmm(const RowMatrix& descriptors, const GmmFitConfig& cfg) {
  if (cfg.components < 1) throw InvalidArgument("GMM needs at least one component");
  if (!(cfg.tolerance > 0.0)) throw InvalidArgument("GMM tolerance must be positive");
  if (!descriptors.allFinite()) throw InvalidInput("GMM training data contains NaN or Inf");
  if (descriptors.cols() < 1) throw InvalidInput("GMM training data has zero dimensions");

  std::mt19937_64 rng(cfg.seed);
  const RowMatrix data = detail::subsample_rows(descriptors, cfg.sample_cap, rng);
  const auto distinct = detail::distinct_rows(data);
  const int K = cfg.components;
  if (distinct.representative.size() < static_cast<std::size_t>(K))
    throw FitError("GMM with " + std::to_string(K) + " components needs at least that many distinct points, got " +
                   std::to_string(distinct.representative.size()));

  const auto N = static_cast<std::size_t>(data.rows());
  const auto d = data.cols();
  const RowMatrix centres = detail::kmeans_pp(data, distinct, K, rng);

  GmmFit fit;
  GmmModel& model = fit.model;
  model.weights = Eigen::VectorXd::Zero(K);
  model.means = centres;
  model.variances = RowMatrix::Zero(K, d);

  // Hard-assignment M-step from the seeds. Accumulate around the centres for
  // numerical stability.
  {
    RowMatrix s1 = RowMatrix::Zero(K, d), s2 = RowMatrix::Zero(K, d);
    Eigen::VectorXd s0 = Eigen::VectorXd::Zero(K);
    for (std::size_t i = 0; i < N; ++i) {
      const auto f = data.row(static_cast<Eigen::Index>(i));
      Eigen::Index best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < K; ++k) {
        const double dist = (f - centres.row(k)).squaredNorm();
        if (dist < best_d) { best_d = dist; best = k; }
      }
      const auto diff = (f - centres.row(best)).eval();
      s0(best) += 1.0;
      s1.row(best) += diff;
      s2.row(best) += diff.cwiseProduct(diff);
    }
    for (Eigen::Index k = 0; k < K; ++k) {
      const auto shift = (s1.row(k) / s0(k)).eval();
      model.means.row(k) = centres.row(k) + shift;
      model.variances.row(k) = (s2.row(k) / s0(k) - shift.cwiseProduct(shift)).cwiseMax(kVarianceFloor);
      model.weights(k) = s0(k) / static_cast<double>(N);
    }
  }

  struct Accum {
    double loglik = 0.0;
    std::vector<double> s0, s1, s2;  // s1, s2 row-major K x d, around the old means
  };
  const auto Kd = static_cast<std::size_t>(K) * static_cast<std::size_t>(d);
  auto zero_accum = [&] {
    return Accum{0.0, std::vector<double>(static_cast<std::size_t>(K), 0.0), std::vector<double>(Kd, 0.0),
                 std::vector<double>(Kd, 0.0)};
  };

  double previous = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    const GmmEvaluator eval(model);
    std::vector<Accum> parts(chunk_count(N));
    for_each_chunk(N, [&](std::size_t c, std::size_t b, std::size_t e) {
      Accum a = zero_accum();
      std::vector<double> gamma(static_cast<std::size_t>(K));
      for (auto i = b; i < e; ++i) {
        const double* f = data.data() + i * static_cast<std::size_t>(d);
        a.loglik += eval.posterior(data.row(static_cast<Eigen::Index>(i)), gamma.data());
        const double* mu = eval.means();
        for (Eigen::Index k = 0; k < K; ++k, mu += d) {
          const double g = gamma[static_cast<std::size_t>(k)];
          if (g == 0.0) continue;
          a.s0[static_cast<std::size_t>(k)] += g;
          double* r1 = a.s1.data() + k * d;
          double* r2 = a.s2.data() + k * d;
          for (Eigen::Index j = 0; j < d; ++j) {
            const double z = f[j] - mu[j];
            r1[j] += g * z;
            r2[j] += g * z * z;
          }
        }
      }
      parts[c] = std::move(a);
    });
    Accum total = zero_accum();
    for (const auto& p : parts) {
      total.loglik += p.loglik;
      for (std::size_t k = 0; k < total.s0.size(); ++k) total.s0[k] += p.s0[k];
      for (std::size_t i = 0; i < Kd; ++i) {
        total.s1[i] += p.s1[i];
        total.s2[i] += p.s2[i];
      }
    }
    const double ll = total.loglik / static_cast<double>(N);
    fit.log_likelihood.push_back(ll);
    fit.iterations = iter + 1;

    // M-step. A component with no responsibility keeps its mean and variance
    // (they do not enter the objective) and gets a vanishing weight.
    for (Eigen::Index k = 0; k < K; ++k) {
      const double nk = total.s0[static_cast<std::size_t>(k)];
      model.weights(k) = std::max(nk / static_cast<double>(N), 1e-12);
      if (nk <= std::numeric_limits<double>::min()) continue;
      for (Eigen::Index j = 0; j < d; ++j) {
        const auto at = static_cast<std::size_t>(k * d + j);
        const double shift = total.s1[at] / nk;
        model.means(k, j) += shift;
        model.variances(k, j) = std::max(total.s2[at] / nk - shift * shift, kVarianceFloor);
      }
    }
    model.weights /= model.weights.sum();

    if (std::isfinite(previous) && std::abs(ll - previous) <= cfg.tolerance * std::abs(previous)) {
      fit.converged = true;
      break;
    }
    previous = ll;
  }
  model.validate();
  return fit;
}

// Model file: `GMM v1 K d`, then for each component a weight line, a line of
// d means and a line of d variances.
inline std::string serialize_gmm(const GmmModel& m) {
  std::ostringstream out;
  out << "GMM v1 " << m.components() << ' ' << m.dim() << '\n';
  auto row = [&](const auto& r) {
    for (Eigen::Index j = 0; j < r.size(); ++j) out << (j ? " " : "") << text::format_double(r(j));
    out << '\n';
  };
  for (Eigen::Index k = 0; k < m.components(); ++k) {
    out << text::format_double(m.weights(k)) << '\n';
    row(m.means.row(k));
    row(m.variances.row(k));
  }
  return out.str();
}

inline GmmModel parse_gmm(const std::string& content, const std::string& origin = "<memory>") {
  std::istringstream in(content);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);)
    if (!text::trim(l).empty()) lines.push_back(l);
  if (lines.empty()) throw ParseError(origin + ": empty GMM file");
  const auto head = text::split_ws(lines[0]);
  if (head.size() != 4 || head[0] != "GMM" || head[1] != "v1") throw ParseError(origin + ": bad GMM header");
  const auto K = text::parse_int<Eigen::Index>(head[2]);
  const auto d = text::parse_int<Eigen::Index>(head[3]);
  if (K < 1 || d < 1 || lines.size() != static_cast<std::size_t>(1 + 3 * K))
    throw ParseError(origin + ": GMM body does not match header");
  GmmModel m;
  m.weights.resize(K);
  m.means.resize(K, d);
  m.variances.resize(K, d);
  auto row = [&](const std::string& line, auto dst) {
    const auto cells = text::split_ws(line);
    if (static_cast<Eigen::Index>(cells.size()) != d) throw ParseError(origin + ": GMM row has wrong length");
    for (Eigen::Index j = 0; j < d; ++j) dst(j) = text::parse_double(cells[static_cast<std::size_t>(j)]);
  };
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto base = static_cast<std::size_t>(1 + 3 * k);
    m.weights(k) = text::parse_double(lines[base]);
    row(lines[base + 1], m.means.row(k));
    row(lines[base + 2], m.variances.row(k));
  }
  m.validate();
  return m;
}

inline void save_gmm(const std::filesystem::path& path, const GmmModel& m) { text::write_file(path, serialize_gmm(m)); }

inline GmmModel load_gmm(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingModel("missing model: " + path.string());
  return parse_gmm(text::read_file(path), path.string());
}

}  // namespace catwalk
