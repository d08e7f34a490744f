#pragma once

// Leave-one-year-out evaluation. Every fitted component (layer-1 GMM, reducer,
// layer-2 GMM, ranker) is refit per fold on the training years only, and each
// carries the list of years it saw so leakage is checked, not assumed.

#include <algorithm>
#include <atomic>
#include <exception>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "catwalk/error.hpp"
#include "catwalk/features.hpp"
#include "catwalk/fisher.hpp"
#include "catwalk/gmm.hpp"
#include "catwalk/ingest.hpp"
#include "catwalk/metrics.hpp"
#include "catwalk/parallel.hpp"
#include "catwalk/rank.hpp"
#include "catwalk/reduce.hpp"
#include "catwalk/sfv.hpp"
#include "catwalk/text_io.hpp"

namespace catwalk {

struct PipelineConfig {
  Method method = Method::SfvPca;
  int k = 256;
  int k2 = 0;  // 0: same as k
  double beta = 40.0;
  std::size_t window = 5;
  std::size_t stride = 1;
  double C = 1.0;
  std::uint64_t seed = 0;
  int gmm_max_iterations = 100;
  double gmm_tolerance = 1e-5;
  std::size_t gmm_sample_cap = 500000;
  double pca_energy = 0.9;
  bool drop_ties = false;
  bool unordered_pairs = false;
  unsigned parallel_folds = 1;

  int layer2_k() const { return k2 > 0 ? k2 : k; }

  void validate() const {
    if (k < 1 || k2 < 0) throw InvalidArgument("K must be at least 1");
    if (beta < 0.0) throw InvalidArgument("beta must be non-negative");
    if (window < 1 || stride < 1) throw InvalidArgument("window and stride must be at least 1");
    if (!(C > 0.0)) throw InvalidArgument("C must be positive");
    if (!(pca_energy > 0.0 && pca_energy <= 1.0)) throw InvalidArgument("PCA energy must lie in (0, 1]");
    if (gmm_max_iterations < 1 || !(gmm_tolerance > 0.0)) throw InvalidArgument("invalid GMM iteration settings");
    if (parallel_folds < 1) throw InvalidArgument("parallel folds must be at least 1");
  }

  SfvConfig sfv() const { return {window, stride, {}}; }
};

struct VideoDescriptors {
  int year = 0;
  std::string id;
  double score = 0.0;
  DescriptorSet set;
};

// Loads and extracts every participant; frames are released per video. Errors
// are re-raised naming the year.
inline std::vector<VideoDescriptors> extract_dataset(const std::filesystem::path& root, const FeatureConfig& features) {
  const auto manifest = scan_dataset(root);
  std::vector<std::pair<const YearEntry*, const ParticipantEntry*>> jobs;
  for (const auto& y : manifest)
    for (const auto& p : y.participants) jobs.emplace_back(&y, &p);
  std::vector<VideoDescriptors> out(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    const auto& [y, p] = jobs[i];
    try {
      const auto video = load_participant(*y, *p);
      out[i] = {y->year, p->id, p->score, extract_descriptors(video, features)};
    } catch (const Error& e) {
      throw ManifestError("year " + std::to_string(y->year) + ": " + e.what());
    }
  });
  return out;
}

// Layer-1 dictionary plus, for stacked methods, the reducer and the layer-2
// dictionary.
struct Vocabulary {
  Method method = Method::Fv;
  SfvConfig sfv;
  GmmModel gmm1;
  std::optional<Reducer> reducer;
  std::optional<GmmModel> gmm2;

  std::vector<int> trained_on() const { return gmm1.trained_on; }

  void check_no_leak(int test_year) const {
    auto leaks = [&](const std::vector<int>& ys) { return std::find(ys.begin(), ys.end(), test_year) != ys.end(); };
    if (leaks(gmm1.trained_on)) throw LeakageError("layer-1 GMM saw test year " + std::to_string(test_year));
    if (reducer && leaks(catwalk::trained_on(*reducer)))
      throw LeakageError("reducer saw test year " + std::to_string(test_year));
    if (gmm2 && leaks(gmm2->trained_on)) throw LeakageError("layer-2 GMM saw test year " + std::to_string(test_year));
  }
};

inline std::vector<int> distinct_years(const std::vector<const VideoDescriptors*>& videos) {
  std::vector<int> ys;
  for (const auto* v : videos) ys.push_back(v->year);
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
  return ys;
}

inline RowMatrix stack_rows(const std::vector<const RowMatrix*>& parts, Eigen::Index cols) {
  Eigen::Index total = 0;
  for (const auto* p : parts) total += p->rows();
  RowMatrix out(total, cols);
  Eigen::Index at = 0;
  for (const auto* p : parts) {
    out.middleRows(at, p->rows()) = *p;
    at += p->rows();
  }
  return out;
}

inline Vocabulary train_vocabulary(const std::vector<const VideoDescriptors*>& training, const PipelineConfig& cfg) {
  cfg.validate();
  if (training.empty()) throw FitError("no training videos");
  const auto years = distinct_years(training);
  Vocabulary vocab;
  vocab.method = cfg.method;
  vocab.sfv = cfg.sfv();

  std::vector<const RowMatrix*> parts;
  for (const auto* v : training) parts.push_back(&v->set.descriptors);
  GmmFitConfig g1{cfg.k, cfg.gmm_max_iterations, cfg.gmm_tolerance, cfg.seed, cfg.gmm_sample_cap};
  vocab.gmm1 = fit_gmm(stack_rows(parts, static_cast<Eigen::Index>(kDescriptorDim)), g1).model;
  vocab.gmm1.trained_on = years;
  if (cfg.method == Method::Fv) return vocab;

  // Layer 1 for the training videos, then the reducer on non-degenerate FVs.
  std::vector<Layer1Result> layer1(training.size());
  parallel_for(training.size(), [&](std::size_t i) { layer1[i] = layer1_fvs(training[i]->set, vocab.gmm1, vocab.sfv); });
  const auto D = 2 * vocab.gmm1.components() * vocab.gmm1.dim();
  std::vector<Eigen::VectorXd> rows;
  for (const auto& l : layer1)
    for (const auto& fv : l.fvs)
      if (!fv.degenerate) rows.push_back(fv.values);
  if (rows.size() < 2) throw FitError("fewer than 2 non-degenerate layer-1 Fisher Vectors for the reducer");
  RowMatrix layer1_matrix(static_cast<Eigen::Index>(rows.size()), D);
  for (std::size_t i = 0; i < rows.size(); ++i) layer1_matrix.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  rows.clear();

  PcaModel pca = fit_pca(layer1_matrix, cfg.pca_energy);
  pca.trained_on = years;
  if (cfg.method == Method::SfvPca) {
    vocab.reducer = std::move(pca);
  } else {
    RpModel rp = make_random_projection(pca.output_dim(), D, cfg.seed + 0x5f);
    rp.trained_on = years;
    vocab.reducer = std::move(rp);
  }

  std::vector<RowMatrix> reduced(training.size());
  parallel_for(training.size(), [&](std::size_t i) { reduced[i] = layer2_inputs(layer1[i], *vocab.reducer).first; });
  std::vector<const RowMatrix*> rparts;
  for (const auto& r : reduced) rparts.push_back(&r);
  GmmFitConfig g2{cfg.layer2_k(), cfg.gmm_max_iterations, cfg.gmm_tolerance, cfg.seed + 1, cfg.gmm_sample_cap};
  vocab.gmm2 = fit_gmm(stack_rows(rparts, output_dim(*vocab.reducer)), g2).model;
  vocab.gmm2->trained_on = years;
  return vocab;
}

inline EncodedVideo encode_video(const VideoDescriptors& v, const Vocabulary& vocab) {
  EncodedVideo e = vocab.method == Method::Fv
                       ? encode_fv_baseline(v.set, vocab.gmm1, vocab.sfv.fv)
                       : encode_sfv(v.set, vocab.gmm1, *vocab.reducer, *vocab.gmm2, vocab.sfv);
  e.participant_id = v.id;
  e.year = v.year;
  return e;
}

// Groups encodings by year (ascending), participants in input order.
inline std::vector<EncodedYear> group_by_year(const std::vector<EncodedVideo>& encodings,
                                              const std::vector<double>& scores) {
  std::map<int, EncodedYear> by_year;
  for (std::size_t i = 0; i < encodings.size(); ++i) {
    auto& y = by_year[encodings[i].year];
    y.year = encodings[i].year;
    y.participants.push_back({encodings[i].participant_id, scores[i], encodings[i].vector});
  }
  std::vector<EncodedYear> out;
  for (auto& [_, y] : by_year) out.push_back(std::move(y));
  return out;
}

inline RankModel train_ranker(const std::vector<EncodedYear>& years, const PipelineConfig& cfg,
                              std::vector<std::string>* warnings = nullptr) {
  auto pairs = build_pairs(years, {cfg.unordered_pairs, cfg.drop_ties});
  if (warnings) warnings->insert(warnings->end(), pairs.warnings.begin(), pairs.warnings.end());
  RankSvmConfig rc;
  rc.C = cfg.C;
  rc.seed = cfg.seed;
  auto model = train_ranksvm(pairs.pairs, rc);
  for (const auto& y : years) model.trained_on.push_back(y.year);
  return model;
}

inline YearMetrics evaluate_encoded_year(const EncodedYear& year, const RankModel& model) {
  std::vector<std::string> ids;
  std::vector<double> truth, predicted;
  for (const auto& p : year.participants) {
    ids.push_back(p.id);
    truth.push_back(p.score);
    predicted.push_back(score(model, p.v));
  }
  return evaluate_year(year.year, ids, truth, predicted);
}

struct FoldResult {
  YearMetrics metrics;
  std::size_t encoding_length = 0;
  Eigen::Index reduced_dim = 0;  // 0 for the single-layer method
  std::vector<int> trained_on;
};

struct LoyoReport {
  std::vector<FoldResult> folds;
  double mean_ndcg = 0.0;
  double mean_kendall = 0.0;
  std::vector<std::string> warnings;
};

inline FoldResult run_fold(const std::vector<VideoDescriptors>& videos, int test_year, const PipelineConfig& cfg,
                           std::vector<std::string>& warnings) {
  std::vector<const VideoDescriptors*> training;
  for (const auto& v : videos)
    if (v.year != test_year) training.push_back(&v);
  const auto vocab = train_vocabulary(training, cfg);
  vocab.check_no_leak(test_year);

  std::vector<EncodedVideo> encoded(videos.size());
  parallel_for(videos.size(), [&](std::size_t i) { encoded[i] = encode_video(videos[i], vocab); });
  std::vector<double> scores;
  for (const auto& v : videos) scores.push_back(v.score);
  auto years = group_by_year(encoded, scores);

  std::vector<EncodedYear> train_years;
  const EncodedYear* test = nullptr;
  for (const auto& y : years) {
    if (y.year == test_year) test = &y;
    else train_years.push_back(y);
  }
  const auto ranker = train_ranker(train_years, cfg, &warnings);
  if (std::find(ranker.trained_on.begin(), ranker.trained_on.end(), test_year) != ranker.trained_on.end())
    throw LeakageError("ranker saw test year " + std::to_string(test_year));

  FoldResult r;
  r.metrics = evaluate_encoded_year(*test, ranker);
  r.encoding_length = static_cast<std::size_t>(encoded.front().vector.size());
  r.reduced_dim = vocab.reducer ? output_dim(*vocab.reducer) : 0;
  r.trained_on = vocab.trained_on();
  return r;
}

inline LoyoReport run_loyo(const std::vector<VideoDescriptors>& videos, const PipelineConfig& cfg) {
  cfg.validate();
  std::vector<int> years;
  for (const auto& v : videos) years.push_back(v.year);
  std::sort(years.begin(), years.end());
  years.erase(std::unique(years.begin(), years.end()), years.end());
  if (years.size() < 2) throw InvalidArgument("leave-one-year-out needs at least 2 years");

  LoyoReport report;
  report.folds.resize(years.size());
  std::vector<std::vector<std::string>> warnings(years.size());
  std::vector<std::exception_ptr> errors(years.size());
  auto run = [&](std::size_t f) {
    try {
      report.folds[f] = run_fold(videos, years[f], cfg, warnings[f]);
    } catch (...) {
      errors[f] = std::current_exception();
    }
  };
  if (cfg.parallel_folds <= 1) {
    for (std::size_t f = 0; f < years.size(); ++f) run(f);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < std::min<std::size_t>(cfg.parallel_folds, years.size()); ++w)
      pool.emplace_back([&] {
        for (std::size_t f; (f = next.fetch_add(1)) < years.size();) run(f);
      });
    for (auto& t : pool) t.join();
  }
  for (std::size_t f = 0; f < years.size(); ++f) {
    if (errors[f]) std::rethrow_exception(errors[f]);
    report.warnings.insert(report.warnings.end(), warnings[f].begin(), warnings[f].end());
    report.mean_ndcg += report.folds[f].metrics.ndcg;
    report.mean_kendall += report.folds[f].metrics.kendall;
  }
  report.mean_ndcg /= static_cast<double>(years.size());
  report.mean_kendall /= static_cast<double>(years.size());
  return report;
}

inline LoyoReport run_loyo(const PipelineConfig& cfg, const std::filesystem::path& root) {
  cfg.validate();
  return run_loyo(extract_dataset(root, {cfg.beta, {}}), cfg);
}

// Report CSV: one row per held-out year, then a `mean` row.
inline std::string format_report(const std::vector<YearMetrics>& rows) {
  std::string out = "year,ndcg,kendall,C,D,winner_predicted_rank\n";
  char buf[256];
  double n = 0, k = 0, c = 0, d = 0, w = 0;
  for (const auto& m : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%zu,%zu,%zu\n", m.year, m.ndcg, m.kendall, m.concordant,
                  m.discordant, m.winner_predicted_rank);
    out += buf;
    n += m.ndcg;
    k += m.kendall;
    c += static_cast<double>(m.concordant);
    d += static_cast<double>(m.discordant);
    w += static_cast<double>(m.winner_predicted_rank);
  }
  if (!rows.empty()) {
    const double cnt = static_cast<double>(rows.size());
    std::snprintf(buf, sizeof buf, "mean,%.6f,%.6f,%.2f,%.2f,%.2f\n", n / cnt, k / cnt, c / cnt, d / cnt, w / cnt);
    out += buf;
  }
  return out;
}

inline std::string format_report(const LoyoReport& report) {
  std::vector<YearMetrics> rows;
  for (const auto& f : report.folds) rows.push_back(f.metrics);
  return format_report(rows);
}

}  // namespace catwalk
