// catwalk: command-line driver for the catwalk ranking pipeline.
//
//   catwalk synth      generate a synthetic dataset
//   catwalk extract    per-pixel descriptors for every participant
//   catwalk train-gmm  fit the vocabulary (GMM, reducer, layer-2 GMM)
//   catwalk encode     encode every participant with a trained vocabulary
//   catwalk train-rank fit the ranking model on encoded training years
//   catwalk evaluate   score years with a ranking model and write a report
//   catwalk loyo       full leave-one-year-out evaluation
//
// Exit codes: 0 success, 1 pipeline error, 2 usage error.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "catwalk/features.hpp"
#include "catwalk/harness.hpp"
#include "catwalk/synth.hpp"

namespace fs = std::filesystem;
using namespace catwalk;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  bool deterministic = false;
  unsigned threads = 0;
  std::string config;
};

// Turns `key=value` lines (with `#` comments) into `--key=value` arguments.
std::vector<std::string> config_arguments(const fs::path& path) {
  std::vector<std::string> args;
  std::istringstream in(text::read_file(path));
  for (std::string line; std::getline(in, line);) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto trimmed = std::string(text::trim(line));
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) throw ParseError(path.string() + ": expected key=value, got '" + trimmed + "'");
    args.push_back("--" + std::string(text::trim(trimmed.substr(0, eq))) + "=" +
                   std::string(text::trim(trimmed.substr(eq + 1))));
  }
  return args;
}

// Config values go right after the subcommand name so explicit flags, which
// come later, take precedence.
std::vector<std::string> expand_config(std::vector<std::string> args, const std::set<std::string>& subcommands) {
  std::string config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config = args[i + 1];
      args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
      args.erase(args.begin() + static_cast<long>(i));
      break;
    }
  }
  if (config.empty()) return args;
  auto extra = config_arguments(config);
  auto at = std::find_if(args.begin(), args.end(), [&](const auto& a) { return subcommands.contains(a); });
  if (at != args.end()) ++at;
  args.insert(at, extra.begin(), extra.end());
  return args;
}

void add_pipeline_options(CLI::App* cmd, PipelineConfig& cfg, std::string& method) {
  cmd->add_option("--method", method, "fv | sfv-pca | sfv-rp")->capture_default_str();
  cmd->add_option("--k", cfg.k, "layer-1 GMM components")->capture_default_str();
  cmd->add_option("--k2", cfg.k2, "layer-2 GMM components (0: same as --k)")->capture_default_str();
  cmd->add_option("--window", cfg.window, "layer-1 window length in frames")->capture_default_str();
  cmd->add_option("--stride", cfg.stride, "layer-1 window step in frames")->capture_default_str();
  cmd->add_option("--gmm-iters", cfg.gmm_max_iterations, "maximum EM iterations")->capture_default_str();
  cmd->add_option("--gmm-tol", cfg.gmm_tolerance, "EM relative log-likelihood tolerance")->capture_default_str();
  cmd->add_option("--sample-cap", cfg.gmm_sample_cap, "maximum GMM training vectors")->capture_default_str();
  cmd->add_option("--energy", cfg.pca_energy, "PCA retained energy fraction")->capture_default_str();
}

void add_rank_options(CLI::App* cmd, PipelineConfig& cfg) {
  cmd->add_option("--C", cfg.C, "RankSVM trade-off")->capture_default_str();
  cmd->add_flag("--drop-ties", cfg.drop_ties, "skip pairs with equal judge scores");
  cmd->add_flag("--unordered", cfg.unordered_pairs, "one pair per unordered participant pair");
}

// Manifest written next to descriptor and encoding files.
struct ManifestRow {
  int year;
  std::string id;
  double score;
};

void write_manifest(const fs::path& dir, const std::vector<ManifestRow>& rows) {
  std::string csv = "year,participant,score\n";
  for (const auto& r : rows) csv += std::to_string(r.year) + "," + r.id + "," + text::format_double(r.score) + "\n";
  text::write_file(dir / "manifest.csv", csv);
}

std::vector<ManifestRow> read_manifest(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.csv")) throw ManifestError(dir.string() + ": no manifest.csv");
  std::vector<ManifestRow> rows;
  for (const auto& r : text::read_csv(dir / "manifest.csv", {"year", "participant", "score"}))
    rows.push_back({text::parse_int<int>(r[0]), r[1], text::parse_double(r[2])});
  return rows;
}

bool excluded(int year, const std::vector<int>& exclude) {
  return std::find(exclude.begin(), exclude.end(), year) != exclude.end();
}

std::string join_years(const std::vector<int>& ys) {
  std::string s;
  for (auto y : ys) s += (s.empty() ? "" : " ") + std::to_string(y);
  return s;
}

std::vector<int> parse_years(const std::string& s) {
  std::vector<int> ys;
  for (const auto& tok : text::split_ws(s)) ys.push_back(text::parse_int<int>(tok));
  return ys;
}

void save_vocabulary(const fs::path& dir, const Vocabulary& v, const PipelineConfig& cfg) {
  std::ostringstream meta;
  meta << "method=" << method_tag(v.method) << "\nk=" << cfg.k << "\nk2=" << cfg.layer2_k() << "\nwindow=" << v.sfv.window
       << "\nstride=" << v.sfv.stride << "\ntrained_on=" << join_years(v.trained_on()) << "\n";
  text::write_file(dir / "vocab.txt", meta.str());
  save_gmm(dir / "gmm1.gmm", v.gmm1);
  if (v.reducer) save_reducer(dir / "reducer.txt", *v.reducer);
  if (v.gmm2) save_gmm(dir / "gmm2.gmm", *v.gmm2);
}

Vocabulary load_vocabulary(const fs::path& dir) {
  if (!fs::exists(dir / "vocab.txt")) throw MissingModel("missing model: " + (dir / "vocab.txt").string() + " (run train-gmm first)");
  std::map<std::string, std::string> kv;
  for (const auto& line : text::read_lines(dir / "vocab.txt")) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError((dir / "vocab.txt").string() + ": malformed line");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  Vocabulary v;
  v.method = parse_method(kv.at("method"));
  v.sfv.window = text::parse_int<std::size_t>(kv.at("window"));
  v.sfv.stride = text::parse_int<std::size_t>(kv.at("stride"));
  v.gmm1 = load_gmm(dir / "gmm1.gmm");
  const auto years = parse_years(kv["trained_on"]);
  v.gmm1.trained_on = years;
  if (v.method != Method::Fv) {
    v.reducer = load_reducer(dir / "reducer.txt");
    std::visit([&](auto& m) { m.trained_on = years; }, *v.reducer);
    v.gmm2 = load_gmm(dir / "gmm2.gmm");
    v.gmm2->trained_on = years;
  }
  return v;
}

std::vector<VideoDescriptors> read_descriptor_dir(const fs::path& dir, const std::vector<int>& exclude) {
  std::vector<VideoDescriptors> out;
  for (const auto& r : read_manifest(dir)) {
    if (excluded(r.year, exclude)) continue;
    out.push_back({r.year, r.id, r.score, read_descriptors(dir / std::to_string(r.year) / (r.id + ".desc"))});
  }
  return out;
}

std::vector<EncodedYear> read_encoded_dir(const fs::path& dir, const std::vector<int>& exclude,
                                          const std::vector<int>& only = {}) {
  std::vector<EncodedVideo> enc;
  std::vector<double> scores;
  for (const auto& r : read_manifest(dir)) {
    if (excluded(r.year, exclude)) continue;
    if (!only.empty() && !excluded(r.year, only)) continue;
    auto e = parse_encoded(text::read_file(dir / std::to_string(r.year) / (r.id + ".enc")));
    e.participant_id = r.id;
    e.year = r.year;
    enc.push_back(std::move(e));
    scores.push_back(r.score);
  }
  return group_by_year(enc, scores);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Catwalk video ranking: descriptors, (stacked) Fisher Vectors, RankSVM, leave-one-year-out evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Globals g;
  app.add_option("--seed", g.seed, "random seed for every fitted component")->capture_default_str();
  app.add_flag("--deterministic", g.deterministic, "single-threaded, fixed-order execution");
  app.add_option("--threads", g.threads, "worker threads (0: hardware concurrency)");
  app.add_option("--config", g.config, "key=value file of option defaults");

  // synth
  SynthConfig synth;
  std::string synth_out;
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic dataset");
  c_synth->add_option("--years", synth.years)->capture_default_str();
  c_synth->add_option("--participants", synth.participants)->capture_default_str();
  c_synth->add_option("--frames", synth.frames)->capture_default_str();
  c_synth->add_option("--noise", synth.noise, "score noise standard deviation")->capture_default_str();
  c_synth->add_option("--jitter", synth.jitter, "scale of quality-dependent motion disturbance")->capture_default_str();
  c_synth->add_option("--first-year", synth.first_year)->capture_default_str();
  c_synth->add_option("--out", synth_out, "output dataset root")->required();

  // extract
  std::string data_root, desc_dir, models_dir, enc_dir, rank_path, out_path;
  double beta = 40.0;
  auto* c_extract = app.add_subcommand("extract", "extract per-pixel descriptors");
  c_extract->add_option("--data", data_root, "dataset root")->required();
  c_extract->add_option("--out", desc_dir, "descriptor output directory")->required();
  c_extract->add_option("--beta", beta, "gradient magnitude threshold")->capture_default_str();

  // train-gmm
  PipelineConfig cfg;
  std::string method = "sfv-pca";
  std::vector<int> exclude;
  auto* c_gmm = app.add_subcommand("train-gmm", "fit the vocabulary on extracted descriptors");
  c_gmm->add_option("--desc", desc_dir, "descriptor directory from extract")->required();
  c_gmm->add_option("--out", models_dir, "model output directory")->required();
  c_gmm->add_option("--exclude-year", exclude, "years withheld from fitting");
  add_pipeline_options(c_gmm, cfg, method);

  // encode
  auto* c_encode = app.add_subcommand("encode", "encode descriptors with a trained vocabulary");
  c_encode->add_option("--desc", desc_dir, "descriptor directory from extract")->required();
  c_encode->add_option("--models", models_dir, "model directory from train-gmm")->required();
  c_encode->add_option("--out", enc_dir, "encoding output directory")->required();

  // train-rank
  auto* c_rank = app.add_subcommand("train-rank", "fit the ranking model on encoded years");
  c_rank->add_option("--enc", enc_dir, "encoding directory")->required();
  c_rank->add_option("--out", rank_path, "rank model file")->required();
  c_rank->add_option("--exclude-year", exclude, "years withheld from training");
  add_rank_options(c_rank, cfg);

  // evaluate
  std::vector<int> eval_years;
  auto* c_eval = app.add_subcommand("evaluate", "score encoded years and write a report");
  c_eval->add_option("--enc", enc_dir, "encoding directory")->required();
  c_eval->add_option("--model", rank_path, "rank model file")->required();
  c_eval->add_option("--years", eval_years, "years to evaluate (default: all)");
  c_eval->add_option("--out", out_path, "report CSV")->required();

  // loyo
  auto* c_loyo = app.add_subcommand("loyo", "leave-one-year-out evaluation");
  c_loyo->add_option("--data", data_root, "dataset root")->required();
  c_loyo->add_option("--out", out_path, "report CSV")->required();
  c_loyo->add_option("--beta", beta, "gradient magnitude threshold")->capture_default_str();
  c_loyo->add_option("--parallel-folds", cfg.parallel_folds, "folds run concurrently")->capture_default_str();
  add_pipeline_options(c_loyo, cfg, method);
  add_rank_options(c_loyo, cfg);

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = expand_config(std::move(args), {"synth", "extract", "train-gmm", "encode", "train-rank", "evaluate", "loyo"});
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (g.deterministic) set_thread_count(1);
    else if (g.threads > 0) set_thread_count(g.threads);
    cfg.seed = g.seed;
    synth.seed = g.seed;

    if (*c_synth) {
      const auto summary = generate(synth, synth_out);
      std::cout << "wrote " << summary.participants.size() << " participants to " << synth_out << "\n";
    } else if (*c_extract) {
      const auto videos = extract_dataset(data_root, {beta, {}});
      std::vector<ManifestRow> rows;
      for (const auto& v : videos) {
        std::ostringstream s;
        write_descriptors(s, v.set);
        text::write_file(fs::path(desc_dir) / std::to_string(v.year) / (v.id + ".desc"), s.str());
        rows.push_back({v.year, v.id, v.score});
      }
      write_manifest(desc_dir, rows);
      std::cout << "extracted " << videos.size() << " videos\n";
    } else if (*c_gmm) {
      cfg.method = parse_method(method);
      const auto videos = read_descriptor_dir(desc_dir, exclude);
      std::vector<const VideoDescriptors*> ptrs;
      for (const auto& v : videos) ptrs.push_back(&v);
      const auto vocab = train_vocabulary(ptrs, cfg);
      save_vocabulary(models_dir, vocab, cfg);
      std::cout << "trained " << method_tag(vocab.method) << " vocabulary on years " << join_years(vocab.trained_on()) << "\n";
    } else if (*c_encode) {
      const auto vocab = load_vocabulary(models_dir);
      const auto videos = read_descriptor_dir(desc_dir, {});
      std::vector<ManifestRow> rows;
      for (const auto& v : videos) {
        const auto e = encode_video(v, vocab);
        text::write_file(fs::path(enc_dir) / std::to_string(v.year) / (v.id + ".enc"), serialize_encoded(e));
        rows.push_back({v.year, v.id, v.score});
      }
      write_manifest(enc_dir, rows);
      std::cout << "encoded " << videos.size() << " videos\n";
    } else if (*c_rank) {
      std::vector<std::string> warnings;
      const auto model = train_ranker(read_encoded_dir(enc_dir, exclude), cfg, &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
      save_rank(rank_path, model);
      std::cout << "trained rank model (" << model.epochs << " epochs" << (model.converged ? "" : ", not converged") << ")\n";
    } else if (*c_eval) {
      const auto model = load_rank(rank_path);
      std::vector<YearMetrics> rows;
      for (const auto& y : read_encoded_dir(enc_dir, {}, eval_years)) rows.push_back(evaluate_encoded_year(y, model));
      text::write_file(out_path, format_report(rows));
      std::cout << format_report(rows);
    } else if (*c_loyo) {
      cfg.method = parse_method(method);
      if (g.deterministic) cfg.parallel_folds = 1;
      const auto report = run_loyo(cfg, data_root);
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
      const auto csv = format_report(report);
      text::write_file(out_path, csv);
      std::cout << csv;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
