#pragma once

// Stacked Fisher Vectors: layer-1 FVs over sliding temporal windows, reduced,
// then encoded again by a layer-2 FV. Also the single-layer FV baseline.

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "catwalk/error.hpp"
#include "catwalk/features.hpp"
#include "catwalk/fisher.hpp"
#include "catwalk/gmm.hpp"
#include "catwalk/parallel.hpp"
#include "catwalk/reduce.hpp"
#include "catwalk/text_io.hpp"

namespace catwalk {

enum class Method { Fv, SfvPca, SfvRp };

inline std::string method_tag(Method m) {
  switch (m) {
    case Method::Fv: return "FV";
    case Method::SfvPca: return "SFV-PCA";
    case Method::SfvRp: return "SFV-RP";
  }
  return "?";
}

// Accepts the file tag or the lower-case CLI spelling.
inline Method parse_method(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  if (s == "FV") return Method::Fv;
  if (s == "SFV-PCA") return Method::SfvPca;
  if (s == "SFV-RP") return Method::SfvRp;
  throw InvalidArgument("unknown method '" + s + "' (expected fv, sfv-pca or sfv-rp)");
}

struct SfvConfig {
  std::size_t window = 5;
  std::size_t stride = 1;
  FvConfig fv;
};

struct EncodedVideo {
  std::string participant_id;
  int year = 0;
  Method method = Method::Fv;
  Eigen::VectorXd vector;
  bool degenerate = false;
};

struct WindowPlan {
  std::vector<std::pair<std::size_t, std::size_t>> windows;  // [begin, end) over usable frames
  bool fallback = false;  // fewer frames than one window: a single window covers all
};

inline WindowPlan plan_windows(std::size_t frames, std::size_t window, std::size_t stride) {
  if (window < 1 || stride < 1) throw InvalidArgument("window and stride must be at least 1");
  WindowPlan plan;
  if (frames < window) {
    plan.windows.emplace_back(0, frames);
    plan.fallback = true;
    return plan;
  }
  for (std::size_t t = 0; t + window <= frames; t += stride) plan.windows.emplace_back(t, t + window);
  return plan;
}

// Fisher statistics of each usable frame, computed once and shared by every
// window that contains the frame.
inline std::vector<FisherStats> frame_statistics(const DescriptorSet& set, const GmmModel& gmm) {
  if (set.size() > 0 && set.descriptors.cols() != gmm.dim())
    throw ShapeError("descriptor dimension does not match layer-1 GMM");
  std::vector<FisherStats> stats(set.frame_count());
  for (std::size_t t = 0; t < set.frame_count(); ++t) {
    stats[t] = set.frame_size(t) ? accumulate_fisher(gmm, set.frame_rows(t))
                                 : FisherStats(gmm.components(), gmm.dim());
  }
  return stats;
}

struct Layer1Result {
  std::vector<FisherVector> fvs;
  bool fallback = false;
};

inline Layer1Result layer1_fvs(const DescriptorSet& set, const GmmModel& gmm1, const SfvConfig& cfg = {}) {
  if (set.size() > 0 && set.descriptors.cols() != gmm1.dim())
    throw ShapeError("descriptor dimension does not match layer-1 GMM");
  const auto plan = plan_windows(set.frame_count(), cfg.window, cfg.stride);
  const auto stats = frame_statistics(set, gmm1);
  Layer1Result out;
  out.fallback = plan.fallback;
  out.fvs.resize(plan.windows.size());
  parallel_for(plan.windows.size(), [&](std::size_t w) {
    FisherStats acc(gmm1.components(), gmm1.dim());
    for (auto t = plan.windows[w].first; t < plan.windows[w].second; ++t) acc += stats[t];
    out.fvs[w] = finalize_fisher(gmm1, acc, cfg.fv);
  });
  return out;
}

// Reduced layer-1 FVs: the layer-2 input set. Degenerate windows are dropped
// unless every window is degenerate. Second member reports that case.
inline std::pair<RowMatrix, bool> layer2_inputs(const Layer1Result& layer1, const Reducer& reducer) {
  std::vector<const FisherVector*> keep;
  for (const auto& fv : layer1.fvs)
    if (!fv.degenerate) keep.push_back(&fv);
  const bool all_degenerate = keep.empty();
  if (all_degenerate)
    for (const auto& fv : layer1.fvs) keep.push_back(&fv);
  const auto D = input_dim(reducer);
  RowMatrix rows(static_cast<Eigen::Index>(keep.size()), D);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i]->values.size() != D) throw ShapeError("layer-1 FV length does not match reducer input");
    rows.row(static_cast<Eigen::Index>(i)) = keep[i]->values.transpose();
  }
  return {project_rows(reducer, rows), all_degenerate};
}

inline EncodedVideo encode_sfv(const DescriptorSet& set, const GmmModel& gmm1, const Reducer& reducer,
                               const GmmModel& gmm2, const SfvConfig& cfg = {}) {
  if (output_dim(reducer) != gmm2.dim()) throw ShapeError("layer-2 GMM dimension does not match reducer output");
  const auto layer1 = layer1_fvs(set, gmm1, cfg);
  const auto [inputs, all_degenerate] = layer2_inputs(layer1, reducer);
  auto fv = encode_fv_or_zero(gmm2, inputs, cfg.fv);
  EncodedVideo out;
  out.method = std::holds_alternative<PcaModel>(reducer) ? Method::SfvPca : Method::SfvRp;
  out.vector = std::move(fv.values);
  out.degenerate = all_degenerate || fv.degenerate;
  return out;
}

inline EncodedVideo encode_fv_baseline(const DescriptorSet& set, const GmmModel& gmm, const FvConfig& cfg = {}) {
  auto fv = encode_fv_or_zero(gmm, set.descriptors, cfg);
  EncodedVideo out;
  out.method = Method::Fv;
  out.vector = std::move(fv.values);
  out.degenerate = fv.degenerate;
  return out;
}

// Encoded-video file: `ENC v1 <method> <len>`, then one value per line.
inline std::string serialize_encoded(const EncodedVideo& e) {
  std::ostringstream out;
  out << "ENC v1 " << method_tag(e.method) << ' ' << e.vector.size() << '\n';
  for (Eigen::Index i = 0; i < e.vector.size(); ++i) out << text::format_double(e.vector(i)) << '\n';
  return out.str();
}

inline EncodedVideo parse_encoded(const std::string& content, const std::string& origin = "<memory>") {
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(origin + ": empty encoding file");
  const auto head = text::split_ws(line);
  if (head.size() != 4 || head[0] != "ENC" || head[1] != "v1") throw ParseError(origin + ": bad encoding header");
  EncodedVideo e;
  e.method = parse_method(head[2]);
  const auto len = text::parse_int<Eigen::Index>(head[3]);
  e.vector.resize(len);
  Eigen::Index i = 0;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    if (i >= len) throw ParseError(origin + ": encoding longer than header");
    e.vector(i++) = text::parse_double(line);
  }
  if (i != len) throw ParseError(origin + ": encoding shorter than header");
  e.degenerate = e.vector.isZero(0.0);
  return e;
}

}  // namespace catwalk
