#include <gtest/gtest.h>

#include "catwalk/features.hpp"
#include "catwalk/ingest.hpp"
#include "catwalk/synth.hpp"
#include "support.hpp"

using namespace catwalk;
using testing_support::TempDir;

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

double column_std(const RowMatrix& m, Eigen::Index col) {
  const double mean = m.col(col).mean();
  return std::sqrt((m.col(col).array() - mean).square().mean());
}

std::map<std::string, std::string> tree_bytes(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), root).string()] = text::read_file(e.path());
  return out;
}

}  // namespace

TEST(Synth, SameSeedSameTree) {
  TempDir a("synth_a"), b("synth_b"), c("synth_c");
  SynthConfig cfg;
  cfg.years = 2;
  cfg.participants = 3;
  cfg.frames = 6;
  cfg.seed = 7;
  generate(cfg, a.path());
  generate(cfg, b.path());
  cfg.seed = 8;
  generate(cfg, c.path());
  const auto ta = tree_bytes(a.path());
  EXPECT_EQ(ta.size(), 2u * (1 + 3 * 7));
  EXPECT_EQ(ta, tree_bytes(b.path()));
  EXPECT_NE(ta, tree_bytes(c.path()));
}

TEST(Synth, GeneratedTreeLoadsCleanly) {
  TempDir tmp("synth_load");
  SynthConfig cfg;
  cfg.years = 2;
  cfg.participants = 4;
  cfg.frames = 5;
  cfg.seed = 1;
  const auto summary = generate(cfg, tmp.path());
  const auto sets = load_dataset(tmp.path());
  ASSERT_EQ(sets.size(), 2u);
  for (std::size_t y = 0; y < 2; ++y) {
    ASSERT_EQ(sets[y].participants.size(), 4u);
    for (std::size_t p = 0; p < 4; ++p) {
      const auto& truth = summary.participants[y * 4 + p];
      EXPECT_EQ(sets[y].participants[p].score, std::stod(([&] {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", truth.score);
        return std::string(buf);
      })()));
      EXPECT_EQ(sets[y].participants[p].video.frames.size(), 5u);
      EXPECT_EQ(sets[y].participants[p].video.frames[0].rows(), 100u);
      EXPECT_EQ(sets[y].participants[p].video.frames[0].cols(), 50u);
    }
  }
}

TEST(Synth, PerfectQualityIsSmoothAndScoresTen) {
  SynthConfig cfg;
  cfg.frames = 30;
  cfg.noise = 0.0;
  cfg.fixed_quality = 1.0;
  cfg.seed = 3;
  const auto p = synth_participant(cfg, 2001, 0);
  EXPECT_EQ(p.score, 10.0);
  // Constant velocity: the horizontal intensity centroid advances at a steady rate.
  std::vector<double> cx;
  for (const auto& f : p.video.frames) {
    double m = 0.0, s = 0.0;
    for (std::size_t r = 0; r < f.rows(); ++r)
      for (std::size_t c = 0; c < f.cols(); ++c) {
        const double w = f(r, c) - detail::kBackground;
        m += w * static_cast<double>(c);
        s += w;
      }
    cx.push_back(m / s);
  }
  const double slope = (cx.back() - cx.front()) / static_cast<double>(cx.size() - 1);
  EXPECT_NEAR(slope, 0.3, 0.05);
  const auto a = synth_participant(cfg, 2001, 0), b = synth_participant(cfg, 2001, 0);
  EXPECT_EQ(a.video.frames, b.video.frames);
}

TEST(Synth, MotionStatisticsFallWithQuality) {
  SynthConfig cfg;
  cfg.frames = 30;
  cfg.seed = 21;
  std::vector<double> q, std_v, std_dudt;
  for (int i = 0; i < 20; ++i) {
    const auto p = synth_participant(cfg, 2001, i);
    const auto set = extract_descriptors(p.video);
    q.push_back(p.quality);
    std_v.push_back(column_std(set.descriptors, kFlowV));
    std_dudt.push_back(column_std(set.descriptors, kFlowDuDt));
  }
  EXPECT_LE(spearman(q, std_v), -0.8);
  EXPECT_LE(spearman(q, std_dudt), -0.8);
}

TEST(Synth, ScoreTracksQuality) {
  SynthConfig cfg;
  cfg.frames = 2;
  cfg.noise = 0.1;
  cfg.seed = 5;
  for (int i = 0; i < 50; ++i) {
    const auto p = synth_participant(cfg, 1999, i);
    EXPECT_GE(p.score, 0.0);
    EXPECT_LE(p.score, 10.0);
    EXPECT_NEAR(p.score, 10.0 * p.quality, 0.6);
  }
  SynthConfig bad;
  bad.frames = 1;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}
