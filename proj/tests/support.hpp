#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "catwalk/features.hpp"
#include "catwalk/gmm.hpp"
#include "catwalk/image.hpp"

namespace testing_support {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("catwalk_" + tag + "_" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

inline catwalk::RowMatrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                                        double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  catwalk::RowMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

inline catwalk::GmmModel random_gmm(int K, int d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  catwalk::GmmModel m;
  m.weights.resize(K);
  m.means.resize(K, d);
  m.variances.resize(K, d);
  for (int k = 0; k < K; ++k) {
    m.weights(k) = u(rng);
    for (int j = 0; j < d; ++j) {
      m.means(k, j) = g(rng);
      m.variances(k, j) = u(rng) * 1.5;
    }
  }
  m.weights /= m.weights.sum();
  return m;
}

// Direct density evaluation, no log-space tricks beyond the final ratio.
inline std::vector<double> naive_posterior(const catwalk::GmmModel& m, const Eigen::VectorXd& f) {
  const auto K = m.weights.size();
  const auto d = m.means.cols();
  std::vector<double> p(static_cast<std::size_t>(K));
  double total = 0.0;
  for (Eigen::Index k = 0; k < K; ++k) {
    double dens = m.weights(k);
    for (Eigen::Index j = 0; j < d; ++j) {
      const double var = m.variances(k, j);
      dens *= std::exp(-0.5 * (f(j) - m.means(k, j)) * (f(j) - m.means(k, j)) / var) /
              std::sqrt(2.0 * 3.14159265358979323846 * var);
    }
    p[static_cast<std::size_t>(k)] = dens;
    total += dens;
  }
  for (auto& x : p) x /= total;
  return p;
}

// Fisher Vector by literal double loop over descriptors and components.
inline Eigen::VectorXd naive_fisher_vector(const catwalk::GmmModel& m, const catwalk::RowMatrix& f) {
  const auto K = m.weights.size();
  const auto d = m.means.cols();
  const auto N = f.rows();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(2 * K * d);
  for (Eigen::Index n = 0; n < N; ++n) {
    const auto gamma = naive_posterior(m, f.row(n).transpose());
    for (Eigen::Index k = 0; k < K; ++k) {
      for (Eigen::Index j = 0; j < d; ++j) {
        const double sd = std::sqrt(m.variances(k, j));
        const double z = (f(n, j) - m.means(k, j)) / sd;
        g(k * d + j) += gamma[static_cast<std::size_t>(k)] * z / (static_cast<double>(N) * std::sqrt(m.weights(k)));
        g((K + k) * d + j) += gamma[static_cast<std::size_t>(k)] * (z * z - 1.0) /
                              (static_cast<double>(N) * std::sqrt(2.0 * m.weights(k)));
      }
    }
  }
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = (g(i) > 0 ? 1.0 : (g(i) < 0 ? -1.0 : 0.0)) * std::sqrt(std::abs(g(i)));
  const double norm = g.norm();
  return norm > 0 ? Eigen::VectorXd(g / norm) : g;
}

// DCG by definition, for brute-force checks.
inline double naive_dcg(const std::vector<std::size_t>& order, const std::vector<int>& r) {
  double s = 0.0;
  for (std::size_t j = 1; j <= order.size(); ++j)
    s += (std::pow(2.0, r[order[j - 1]]) - 1.0) / std::log2(j < 2 ? 2.0 : static_cast<double>(j));
  return s;
}

// Best DCG over every permutation.
inline double brute_ideal_dcg(const std::vector<int>& r) {
  std::vector<std::size_t> p(r.size());
  std::iota(p.begin(), p.end(), 0);
  double best = -1.0;
  do best = std::max(best, naive_dcg(p, r));
  while (std::next_permutation(p.begin(), p.end()));
  return best;
}

// Counts discordant pairs: label(a, b) = +1 iff a > b, else -1.
inline std::size_t naive_discordant(const std::vector<double>& pred, const std::vector<double>& truth) {
  std::size_t d = 0;
  for (std::size_t l = 0; l < pred.size(); ++l)
    for (std::size_t k = l + 1; k < pred.size(); ++k) {
      const int a = pred[l] > pred[k] ? 1 : -1;
      const int b = truth[l] > truth[k] ? 1 : -1;
      if (a != b) ++d;
    }
  return d;
}

// Smooth random texture with strong gradients; values stay inside [0, 255].
inline catwalk::Grid textured_grid(std::size_t rows, std::size_t cols, double shift_x = 0.0) {
  catwalk::Grid g(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = static_cast<double>(c) - shift_x, y = static_cast<double>(r);
      g(r, c) = 128.0 + 50.0 * std::sin(0.45 * x + 0.2 * y) + 40.0 * std::cos(0.3 * y - 0.25 * x) +
                20.0 * std::sin(0.17 * x * 0.9 + 0.33 * y);
    }
  return g;
}

}  // namespace testing_support
