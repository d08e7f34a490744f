#pragma once

// Fisher Vector encoding of a descriptor set against a diagonal GMM: mean and
// variance deviations, power normalisation, then l2 normalisation. Weight
// deviations are not included.

#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "catwalk/error.hpp"
#include "catwalk/gmm.hpp"
#include "catwalk/parallel.hpp"
#include "catwalk/text_io.hpp"

namespace catwalk {

struct FisherVector {
  Eigen::VectorXd values;
  bool normalized = false;
  bool degenerate = false;  // encodes an empty set, or l2 saw a zero vector
};

struct FvConfig {
  double rho = 0.5;
};

inline Eigen::VectorXd power_normalize(const Eigen::Ref<const Eigen::VectorXd>& v, double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) throw InvalidArgument("power coefficient must lie in (0, 1]");
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double z = v(i);
    out(i) = rho == 1.0 ? z : std::copysign(std::pow(std::abs(z), rho), z);
    if (z == 0.0) out(i) = 0.0;
  }
  return out;
}

struct L2Result {
  Eigen::VectorXd values;
  bool degenerate = false;
};

// Zero vectors come back unchanged and flagged.
inline L2Result l2_normalize(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double norm = v.norm();
  if (norm == 0.0 || !std::isfinite(norm)) return {v, true};
  return {v / norm, false};
}

// Sufficient statistics of a descriptor set under a GMM, in whitened units:
//   s0(k)    = sum_n gamma_n(k)
//   s1(k, :) = sum_n gamma_n(k) (f_n - mu_k) / sigma_k
//   s2(k, :) = sum_n gamma_n(k) [(f_n - mu_k)^2 / sigma_k^2 - 1]
// Statistics of disjoint sets add, which is how windows are assembled.
struct FisherStats {
  std::size_t count = 0;
  Eigen::VectorXd s0;
  RowMatrix s1, s2;

  FisherStats() = default;
  FisherStats(Eigen::Index K, Eigen::Index d)
      : s0(Eigen::VectorXd::Zero(K)), s1(RowMatrix::Zero(K, d)), s2(RowMatrix::Zero(K, d)) {}

  FisherStats& operator+=(const FisherStats& o) {
    count += o.count;
    s0 += o.s0;
    s1 += o.s1;
    s2 += o.s2;
    return *this;
  }
};

template <typename Rows>
FisherStats accumulate_fisher(const GmmModel& gmm, const Rows& rows) {
  const auto K = gmm.components();
  const auto d = gmm.dim();
  if (rows.cols() != d) throw ShapeError("descriptor dimension " + std::to_string(rows.cols()) +
                                         " does not match GMM dimension " + std::to_string(d));
  const GmmEvaluator eval(gmm);
  const auto n = static_cast<std::size_t>(rows.rows());
  std::vector<FisherStats> parts(chunk_count(n));
  for_each_chunk(n, [&](std::size_t c, std::size_t b, std::size_t e) {
    FisherStats s(K, d);
    s.count = e - b;
    std::vector<double> gamma(static_cast<std::size_t>(K)), f(static_cast<std::size_t>(d));
    for (auto i = b; i < e; ++i) {
      const auto row = rows.row(static_cast<Eigen::Index>(i));
      for (Eigen::Index j = 0; j < d; ++j) f[static_cast<std::size_t>(j)] = row(j);
      eval.posterior(row, gamma.data());
      const double* mu = eval.means();
      const double* isd = eval.inv_sd();
      for (Eigen::Index k = 0; k < K; ++k, mu += d, isd += d) {
        const double g = gamma[static_cast<std::size_t>(k)];
        if (g == 0.0) continue;
        s.s0(k) += g;
        double* r1 = s.s1.data() + k * d;
        double* r2 = s.s2.data() + k * d;
        for (Eigen::Index j = 0; j < d; ++j) {
          const double z = (f[static_cast<std::size_t>(j)] - mu[j]) * isd[j];
          r1[j] += g * z;
          r2[j] += g * (z * z - 1.0);
        }
      }
    }
    parts[c] = std::move(s);
  });
  FisherStats total(K, d);
  for (const auto& p : parts) total += p;
  return total;
}

// Raw (unnormalised) gradient vector: all mean blocks for k = 0..K-1, then all
// variance blocks.
inline Eigen::VectorXd fisher_gradients(const GmmModel& gmm, const FisherStats& s) {
  const auto K = gmm.components();
  const auto d = gmm.dim();
  Eigen::VectorXd g(2 * K * d);
  const double n = static_cast<double>(s.count);
  for (Eigen::Index k = 0; k < K; ++k) {
    const double w = gmm.weights(k);
    g.segment(k * d, d) = s.s1.row(k).transpose() / (n * std::sqrt(w));
    g.segment((K + k) * d, d) = s.s2.row(k).transpose() / (n * std::sqrt(2.0 * w));
  }
  return g;
}

// Empty statistics give the flagged zero vector.
inline FisherVector finalize_fisher(const GmmModel& gmm, const FisherStats& s, const FvConfig& cfg = {}) {
  const auto len = 2 * gmm.components() * gmm.dim();
  if (s.count == 0) return {Eigen::VectorXd::Zero(len), true, true};
  auto normalized = l2_normalize(power_normalize(fisher_gradients(gmm, s), cfg.rho));
  return {std::move(normalized.values), true, normalized.degenerate};
}

template <typename Rows>
FisherVector encode_fv(const GmmModel& gmm, const Rows& descriptors, const FvConfig& cfg = {}) {
  if (descriptors.rows() == 0) throw EmptySetError("Fisher Vector of an empty descriptor set");
  return finalize_fisher(gmm, accumulate_fisher(gmm, descriptors), cfg);
}

// Pipeline variant: empty sets encode to the flagged zero vector.
template <typename Rows>
FisherVector encode_fv_or_zero(const GmmModel& gmm, const Rows& descriptors, const FvConfig& cfg = {}) {
  if (descriptors.cols() != gmm.dim()) throw ShapeError("descriptor dimension does not match GMM");
  if (descriptors.rows() == 0) return finalize_fisher(gmm, FisherStats(gmm.components(), gmm.dim()), cfg);
  return encode_fv(gmm, descriptors, cfg);
}

// Vector file: `FV v1 <len>`, then one value per line.
inline std::string serialize_fv(const FisherVector& fv) {
  std::ostringstream out;
  out << "FV v1 " << fv.values.size() << '\n';
  for (Eigen::Index i = 0; i < fv.values.size(); ++i) out << text::format_double(fv.values(i)) << '\n';
  return out.str();
}

inline FisherVector parse_fv(const std::string& content, const std::string& origin = "<memory>") {
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(origin + ": empty FV file");
  const auto head = text::split_ws(line);
  if (head.size() != 3 || head[0] != "FV" || head[1] != "v1") throw ParseError(origin + ": bad FV header");
  const auto len = text::parse_int<Eigen::Index>(head[2]);
  FisherVector fv;
  fv.values.resize(len);
  Eigen::Index i = 0;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    if (i >= len) throw ParseError(origin + ": FV longer than header");
    fv.values(i++) = text::parse_double(line);
  }
  if (i != len) throw ParseError(origin + ": FV shorter than header");
  fv.normalized = true;
  fv.degenerate = fv.values.isZero(0.0);
  return fv;
}

}  // namespace catwalk
