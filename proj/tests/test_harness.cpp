#include <gtest/gtest.h>

#include <cstdio>
#include <sys/wait.h>

#include "catwalk/harness.hpp"
#include "catwalk/synth.hpp"
#include "support.hpp"

using namespace catwalk;
using testing_support::TempDir;

namespace {

std::vector<VideoDescriptors> synth_videos(int years, int participants, int frames, std::uint64_t seed,
                                           double noise = 0.1) {
  SynthConfig sc;
  sc.years = years;
  sc.participants = participants;
  sc.frames = frames;
  sc.noise = noise;
  sc.seed = seed;
  std::vector<VideoDescriptors> out;
  for (int y = 0; y < years; ++y)
    for (int i = 0; i < participants; ++i) {
      const auto p = synth_participant(sc, sc.first_year + y, i);
      out.push_back({p.year, p.id, std::round(p.score * 100) / 100, extract_descriptors(p.video)});
    }
  return out;
}

PipelineConfig small_config(Method m) {
  PipelineConfig cfg;
  cfg.method = m;
  cfg.k = 4;
  cfg.seed = 3;
  cfg.gmm_max_iterations = 30;
  return cfg;
}

struct Run {
  int code = 0;
  std::string output;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(CATWALK_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe)) r.output += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

}  // namespace

class LoyoTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { videos_ = new std::vector<VideoDescriptors>(synth_videos(3, 5, 14, 11)); }
  static void TearDownTestSuite() { delete videos_; }
  static std::vector<VideoDescriptors>* videos_;
};
std::vector<VideoDescriptors>* LoyoTest::videos_ = nullptr;

TEST_F(LoyoTest, OneFoldPerYearAndMeans) {
  for (auto m : {Method::Fv, Method::SfvPca, Method::SfvRp}) {
    const auto report = run_loyo(*videos_, small_config(m));
    ASSERT_EQ(report.folds.size(), 3u);
    double n = 0, k = 0;
    for (std::size_t f = 0; f < 3; ++f) {
      const auto& fold = report.folds[f];
      EXPECT_EQ(fold.metrics.year, 2001 + static_cast<int>(f));
      EXPECT_EQ(fold.metrics.concordant + fold.metrics.discordant, 10u);
      EXPECT_EQ(std::count(fold.trained_on.begin(), fold.trained_on.end(), fold.metrics.year), 0);
      EXPECT_EQ(fold.trained_on.size(), 2u);
      if (m == Method::Fv) EXPECT_EQ(fold.encoding_length, 2u * 4 * 14);
      else EXPECT_EQ(fold.encoding_length, static_cast<std::size_t>(2 * fold.reduced_dim * 4));
      n += fold.metrics.ndcg;
      k += fold.metrics.kendall;
    }
    EXPECT_NEAR(report.mean_ndcg, n / 3, 1e-12);
    EXPECT_NEAR(report.mean_kendall, k / 3, 1e-12);
  }
}

TEST_F(LoyoTest, DeterministicAcrossThreadsAndFoldWorkers) {
  auto cfg = small_config(Method::SfvPca);
  const auto a = format_report(run_loyo(*videos_, cfg));
  cfg.parallel_folds = 3;
  const unsigned saved = thread_count();
  set_thread_count(4);
  const auto b = format_report(run_loyo(*videos_, cfg));
  set_thread_count(saved);
  EXPECT_EQ(a, b);
}

TEST_F(LoyoTest, VocabularyRecordsTrainingYears) {
  std::vector<const VideoDescriptors*> training;
  for (const auto& v : *videos_)
    if (v.year != 2002) training.push_back(&v);
  const auto vocab = train_vocabulary(training, small_config(Method::SfvRp));
  EXPECT_EQ(vocab.gmm1.trained_on, (std::vector<int>{2001, 2003}));
  EXPECT_EQ(trained_on(*vocab.reducer), (std::vector<int>{2001, 2003}));
  EXPECT_EQ(vocab.gmm2->trained_on, (std::vector<int>{2001, 2003}));
  EXPECT_NO_THROW(vocab.check_no_leak(2002));
  EXPECT_THROW(vocab.check_no_leak(2001), LeakageError);
}

TEST(Loyo, TwoYearStrongSignal) {
  const auto videos = synth_videos(2, 8, 30, 5, 0.0);
  auto cfg = small_config(Method::SfvPca);
  cfg.k = 8;
  const auto report = run_loyo(videos, cfg);
  ASSERT_EQ(report.folds.size(), 2u);
  for (const auto& f : report.folds) EXPECT_GT(f.metrics.kendall, 0.0) << f.metrics.year;
}

TEST(Loyo, ConfigValidation) {
  auto cfg = small_config(Method::Fv);
  cfg.k = 0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = small_config(Method::Fv);
  cfg.C = 0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  const auto one_year = synth_videos(1, 3, 4, 1);
  EXPECT_THROW(run_loyo(one_year, small_config(Method::Fv)), InvalidArgument);
}

TEST(Report, Format) {
  YearMetrics a{2001, 0.5, 0.25, 3, 1, 2, false}, b{2002, 1.0, 1.0, 6, 0, 1, false};
  EXPECT_EQ(format_report(std::vector<YearMetrics>{a, b}),
            "year,ndcg,kendall,C,D,winner_predicted_rank\n"
            "2001,0.500000,0.250000,3,1,2\n"
            "2002,1.000000,1.000000,6,0,1\n"
            "mean,0.750000,0.625000,4.50,0.50,1.50\n");
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli("loyo --no-such-flag").code, 2);
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
  const auto r = cli("synth --bogus 1 --out /tmp/x");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("synth"), std::string::npos);
}

TEST(Cli, EncodeBeforeTrainingIsMissingModel) {
  TempDir tmp("cli_missing");
  const auto r = cli("encode --desc " + tmp.path().string() + " --models " + (tmp.path() / "models").string() +
                     " --out " + (tmp.path() / "enc").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("missing model"), std::string::npos);
}

TEST(Cli, PipelineErrorsExitOne) {
  TempDir tmp("cli_err");
  EXPECT_EQ(cli("loyo --data " + (tmp.path() / "absent").string() + " --out " + (tmp.path() / "r.csv").string()).code, 1);
}

TEST(Cli, StepwiseCommandsAndLoyo) {
  TempDir tmp("cli_steps");
  const auto root = tmp.path();
  const auto d = [&](const char* name) { return (root / name).string(); };
  ASSERT_EQ(cli("--seed 7 synth --years 3 --participants 4 --frames 10 --out " + d("data")).code, 0);
  ASSERT_EQ(cli("extract --data " + d("data") + " --out " + d("desc")).code, 0);
  EXPECT_TRUE(std::filesystem::exists(root / "desc" / "manifest.csv"));
  EXPECT_TRUE(std::filesystem::exists(root / "desc" / "2002" / "p03.desc"));

  text::write_file(root / "pipe.cfg", "# small vocabulary\nmethod = sfv-rp\nk=3\ngmm-iters=20\n");
  auto r = cli("--seed 7 --config " + d("pipe.cfg") + " train-gmm --desc " + d("desc") + " --out " + d("models") +
               " --exclude-year 2003");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto vocab = text::read_file(root / "models" / "vocab.txt");
  EXPECT_NE(vocab.find("method=SFV-RP"), std::string::npos) << vocab;
  EXPECT_NE(vocab.find("k=3"), std::string::npos) << vocab;
  EXPECT_NE(vocab.find("trained_on=2001 2002"), std::string::npos) << vocab;

  r = cli("encode --desc " + d("desc") + " --models " + d("models") + " --out " + d("enc"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto enc = parse_encoded(text::read_file(root / "enc" / "2003" / "p00.enc"));
  EXPECT_EQ(enc.method, Method::SfvRp);

  r = cli("--seed 7 train-rank --enc " + d("enc") + " --out " + d("rank.txt") + " --exclude-year 2003");
  ASSERT_EQ(r.code, 0) << r.output;
  r = cli("evaluate --enc " + d("enc") + " --model " + d("rank.txt") + " --years 2003 --out " + d("eval.csv"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto report = text::read_lines(root / "eval.csv");
  ASSERT_EQ(report.size(), 3u);
  EXPECT_EQ(report[0], "year,ndcg,kendall,C,D,winner_predicted_rank");
  EXPECT_EQ(report[1].substr(0, 5), "2003,");

  // An explicit flag beats the config file.
  r = cli("--seed 7 --deterministic --config " + d("pipe.cfg") + " loyo --data " + d("data") + " --k 2 --out " +
          d("loyo.csv"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(text::read_lines(root / "loyo.csv").size(), 5u);
}
