#pragma once

// Shared linear ranking model. A RankSVM trained on same-year difference
// vectors z = v_l - v_k gives one weight vector w that serves both the
// pairwise predictor sign(w'z) and the listwise scorer w'v (no bias).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "catwalk/error.hpp"
#include "catwalk/text_io.hpp"

namespace catwalk {

// Label of the ordered pair (l, k): +1 iff score_l > score_k, otherwise -1
// (ties included).
inline int pair_label(double score_l, double score_k) { return score_l > score_k ? 1 : -1; }

struct PairSample {
  Eigen::VectorXd z;  // v_l - v_k
  int label = -1;
  int year = 0;
  std::string l_id, k_id;
};

struct ScoredEncoding {
  std::string id;
  double score = 0.0;
  Eigen::VectorXd v;
};

struct EncodedYear {
  int year = 0;
  std::vector<ScoredEncoding> participants;
};

struct PairOptions {
  bool unordered = false;  // one pair per {l, k}, oriented by participant order
  bool drop_ties = false;  // skip pairs whose judge scores are equal
};

struct PairSet {
  std::vector<PairSample> pairs;
  std::vector<std::string> warnings;
};

inline PairSet build_pairs(const std::vector<EncodedYear>& years, const PairOptions& opt = {}) {
  PairSet out;
  for (const auto& y : years) {
    const auto n = y.participants.size();
    if (n < 2) {
      out.warnings.push_back("year " + std::to_string(y.year) + " has fewer than 2 participants; skipped");
      continue;
    }
    for (std::size_t l = 0; l < n; ++l) {
      for (std::size_t k = 0; k < n; ++k) {
        if (l == k || (opt.unordered && k < l)) continue;
        const auto& a = y.participants[l];
        const auto& b = y.participants[k];
        if (opt.drop_ties && a.score == b.score) continue;
        if (a.v.size() != b.v.size()) throw ShapeError("encodings of year " + std::to_string(y.year) + " differ in length");
        out.pairs.push_back({a.v - b.v, pair_label(a.score, b.score), y.year, a.id, b.id});
      }
    }
  }
  return out;
}

struct RankSvmConfig {
  double C = 1.0;
  double tolerance = 1e-4;  // relative duality gap
  int max_epochs = 1000;
  std::uint64_t seed = 0;
};

struct RankModel {
  Eigen::VectorXd w;
  double C = 1.0;
  std::uint64_t seed = 0;
  int epochs = 0;
  bool converged = false;
  // Dual objective 1/2|w|^2 - sum(alpha) after each epoch; non-increasing.
  std::vector<double> dual_objective;
  std::vector<double> primal_objective;
  std::vector<int> trained_on;
};

inline double hinge_objective(const Eigen::VectorXd& w, const std::vector<PairSample>& pairs, double C) {
  double loss = 0.0;
  for (const auto& p : pairs) loss += std::max(0.0, 1.0 - p.label * w.dot(p.z));
  return 0.5 * w.squaredNorm() + C * loss;
}

// Dual coordinate descent on
//   min_w 1/2 |w|^2 + C sum_i max(0, 1 - y_i w'z_i)
// with the pair visiting order fixed by one seeded shuffle.
inline RankModel train_ranksvm(const std::vector<PairSample>& pairs, const RankSvmConfig& cfg = {}) {
  if (pairs.empty()) throw InvalidArgument("RankSVM needs at least one pair");
  if (!(cfg.C > 0.0)) throw InvalidArgument("RankSVM C must be positive");
  const auto dim = pairs.front().z.size();
  for (const auto& p : pairs) {
    if (p.z.size() != dim) throw ShapeError("pair vectors differ in dimension");
    if (!p.z.allFinite()) throw InvalidInput("pair vector contains NaN or Inf");
    if (p.label != 1 && p.label != -1) throw InvalidInput("pair label must be +1 or -1");
  }

  const auto n = pairs.size();
  std::vector<double> qii(n), alpha(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) qii[i] = pairs[i].z.squaredNorm();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(order.begin(), order.end(), rng);

  RankModel m;
  m.C = cfg.C;
  m.seed = cfg.seed;
  m.w = Eigen::VectorXd::Zero(dim);
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (const auto i : order) {
      if (qii[i] == 0.0) continue;
      const auto& p = pairs[i];
      const double g = p.label * m.w.dot(p.z) - 1.0;
      double pg = g;
      if (alpha[i] == 0.0) pg = std::min(g, 0.0);
      else if (alpha[i] == cfg.C) pg = std::max(g, 0.0);
      if (pg == 0.0) continue;
      const double next = std::clamp(alpha[i] - g / qii[i], 0.0, cfg.C);
      m.w += (next - alpha[i]) * p.label * p.z;
      alpha[i] = next;
    }
    m.epochs = epoch + 1;
    const double half_sq = 0.5 * m.w.squaredNorm();
    const double sum_alpha = std::accumulate(alpha.begin(), alpha.end(), 0.0);
    const double primal = hinge_objective(m.w, pairs, cfg.C);
    m.dual_objective.push_back(half_sq - sum_alpha);
    m.primal_objective.push_back(primal);
    // Duality gap: primal minus dual value (sum_alpha - half_sq).
    if (primal - (sum_alpha - half_sq) <= cfg.tolerance * std::max(1.0, std::abs(primal))) {
      m.converged = true;
      break;
    }
  }
  return m;
}

inline double score(const RankModel& m, const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() != m.w.size()) throw ShapeError("encoding length " + std::to_string(v.size()) +
                                               " does not match model dimension " + std::to_string(m.w.size()));
  return m.w.dot(v);
}

// sign(w'(v_l - v_k)) with an exact zero mapped to -1.
inline int predict_pair(const RankModel& m, const Eigen::Ref<const Eigen::VectorXd>& v_l,
                        const Eigen::Ref<const Eigen::VectorXd>& v_k) {
  if (v_l.size() != m.w.size() || v_k.size() != m.w.size()) throw ShapeError("encoding length does not match model");
  return m.w.dot(v_l - v_k) > 0.0 ? 1 : -1;
}

// Model file: `RANK v1 <dim> <C>`, then one weight per line.
inline std::string serialize_rank(const RankModel& m) {
  std::ostringstream out;
  out << "RANK v1 " << m.w.size() << ' ' << text::format_double(m.C) << '\n';
  for (Eigen::Index i = 0; i < m.w.size(); ++i) out << text::format_double(m.w(i)) << '\n';
  return out.str();
}

inline RankModel parse_rank(const std::string& content, const std::string& origin = "<memory>") {
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(origin + ": empty rank model");
  const auto head = text::split_ws(line);
  if (head.size() != 4 || head[0] != "RANK" || head[1] != "v1") throw ParseError(origin + ": bad rank model header");
  RankModel m;
  const auto dim = text::parse_int<Eigen::Index>(head[2]);
  m.C = text::parse_double(head[3]);
  m.w.resize(dim);
  Eigen::Index i = 0;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    if (i >= dim) throw ParseError(origin + ": rank model longer than header");
    m.w(i++) = text::parse_double(line);
  }
  if (i != dim) throw ParseError(origin + ": rank model shorter than header");
  return m;
}

inline void save_rank(const std::filesystem::path& path, const RankModel& m) { text::write_file(path, serialize_rank(m)); }

inline RankModel load_rank(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingModel("missing model: " + path.string());
  return parse_rank(text::read_file(path), path.string());
}

}  // namespace catwalk
