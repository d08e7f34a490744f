#pragma once

// Ranking quality: NDCG over rank-derived ratings and the modified Kendall's
// tau built on the same pair labels the ranker is trained with.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "catwalk/error.hpp"
#include "catwalk/rank.hpp"

namespace catwalk {

struct Ratings {
  std::vector<int> values;  // per participant; the best score gets N
  bool ties = false;        // some true scores were equal; order fell back to ids
};

// rating = N - rank + 1, rank 1 for the highest score. Equal scores are
// ordered by id (or by index when no ids are given).
inline Ratings ratings_from_scores(const std::vector<double>& scores, const std::vector<std::string>& ids = {}) {
  const auto n = scores.size();
  if (n < 2) throw InvalidArgument("ratings need at least 2 participants");
  if (!ids.empty() && ids.size() != n) throw ShapeError("ids and scores differ in length");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids.empty() ? a < b : ids[a] < ids[b];
  });
  Ratings r;
  r.values.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    r.values[order[i]] = static_cast<int>(n - i);
    if (i > 0 && scores[order[i]] == scores[order[i - 1]]) r.ties = true;
  }
  return r;
}

// Indices by descending predicted score; equal scores keep index order.
inline std::vector<std::size_t> order_from_scores(const std::vector<double>& predicted) {
  std::vector<std::size_t> order(predicted.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return predicted[a] > predicted[b]; });
  return order;
}

// DCG@b = sum_{j=1..b} (2^r(j) - 1) / log2(max(2, j)).
inline double dcg(const std::vector<std::size_t>& order, const std::vector<int>& ratings, std::size_t b) {
  double s = 0.0;
  for (std::size_t j = 1; j <= b; ++j)
    s += (std::exp2(ratings[order[j - 1]]) - 1.0) / std::log2(std::max(2.0, static_cast<double>(j)));
  return s;
}

// NDCG@b of a predicted order (best first). b = 0 means b = N.
inline double ndcg(const std::vector<std::size_t>& predicted_order, const std::vector<int>& ratings, std::size_t b = 0) {
  const auto n = ratings.size();
  if (predicted_order.size() != n) throw ShapeError("order and ratings differ in length");
  std::vector<bool> seen(n, false);
  for (auto i : predicted_order) {
    if (i >= n || seen[i]) throw InvalidArgument("predicted order is not a permutation");
    seen[i] = true;
  }
  if (b == 0) b = n;
  if (b < 1 || b > n) throw InvalidArgument("NDCG cutoff must lie in [1, N]");
  std::vector<std::size_t> ideal(n);
  std::iota(ideal.begin(), ideal.end(), 0);
  std::stable_sort(ideal.begin(), ideal.end(), [&](std::size_t a, std::size_t c) { return ratings[a] > ratings[c]; });
  const double idcg = dcg(ideal, ratings, b);
  if (idcg == 0.0) return 1.0;
  return dcg(predicted_order, ratings, b) / idcg;
}

struct KendallResult {
  double tau = 0.0;
  std::size_t concordant = 0;
  std::size_t discordant = 0;
};

// Over every pair l < k, concordant iff pair_label agrees on predicted and
// true scores. tau = (C - D) / (C + D) = 1 - 2D / (N choose 2).
inline KendallResult kendall_tau(const std::vector<double>& predicted, const std::vector<double>& truth) {
  if (predicted.size() != truth.size()) throw ShapeError("kendall: score lists differ in length");
  const auto n = predicted.size();
  if (n < 2) throw InvalidArgument("kendall: need at least 2 items");
  KendallResult r;
  for (std::size_t l = 0; l < n; ++l)
    for (std::size_t k = l + 1; k < n; ++k)
      (pair_label(predicted[l], predicted[k]) == pair_label(truth[l], truth[k]) ? r.concordant : r.discordant)++;
  const double pairs = static_cast<double>(n * (n - 1) / 2);
  r.tau = 1.0 - 2.0 * static_cast<double>(r.discordant) / pairs;
  return r;
}

struct YearMetrics {
  int year = 0;
  double ndcg = 0.0;
  double kendall = 0.0;
  std::size_t concordant = 0;
  std::size_t discordant = 0;
  std::size_t winner_predicted_rank = 0;  // 1-based position of the true winner
  bool score_ties = false;
};

inline YearMetrics evaluate_year(int year, const std::vector<std::string>& ids, const std::vector<double>& truth,
                                 const std::vector<double>& predicted) {
  if (ids.size() != truth.size() || truth.size() != predicted.size())
    throw ShapeError("evaluate_year: inconsistent list lengths");
  const auto ratings = ratings_from_scores(truth, ids);
  const auto order = order_from_scores(predicted);
  const auto k = kendall_tau(predicted, truth);
  YearMetrics m;
  m.year = year;
  m.ndcg = ndcg(order, ratings.values);
  m.kendall = k.tau;
  m.concordant = k.concordant;
  m.discordant = k.discordant;
  m.score_ties = ratings.ties;
  const auto winner = static_cast<std::size_t>(
      std::max_element(ratings.values.begin(), ratings.values.end()) - ratings.values.begin());
  m.winner_predicted_rank = static_cast<std::size_t>(std::find(order.begin(), order.end(), winner) - order.begin()) + 1;
  return m;
}

}  // namespace catwalk
