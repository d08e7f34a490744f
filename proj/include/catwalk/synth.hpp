#pragma once

// Deterministic synthetic catwalk data. Each participant is a bright walker
// (ellipse torso, head, swinging limb bars) crossing a dark 100x50 canvas. A
// hidden quality q in (0, 1) controls how erratic the walk is: vertical jitter
// and per-frame speed variance both scale with (1 - q). The judge score is
// 10 q plus Gaussian noise, rounded to two decimals and clipped to [0, 10].

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "catwalk/error.hpp"
#include "catwalk/image.hpp"
#include "catwalk/ingest.hpp"
#include "catwalk/parallel.hpp"
#include "catwalk/pgm.hpp"
#include "catwalk/text_io.hpp"

namespace catwalk {

struct SynthConfig {
  int years = 10;
  int participants = 10;
  int frames = 60;
  double noise = 0.2;   // std of the score noise
  double jitter = 1.0;  // scales every quality-dependent disturbance
  std::uint64_t seed = 0;
  int first_year = 2001;
  std::optional<double> fixed_quality;  // overrides the drawn quality (tests)

  void validate() const {
    if (years < 1 || participants < 1 || frames < 2) throw InvalidArgument("synth: years, participants must be >= 1 and frames >= 2");
    if (noise < 0.0 || jitter < 0.0) throw InvalidArgument("synth: noise and jitter must be non-negative");
  }
};

struct SynthParticipant {
  std::string id;
  int year = 0;
  double quality = 0.0;
  double score = 0.0;
  Video video;
};

namespace detail {

inline constexpr double kBackground = 20.0;
inline constexpr double kBody = 210.0;
inline constexpr double kLimb = 180.0;

struct Segment {
  double x0, y0, x1, y1, half_width;
};

inline double segment_distance_sq(double px, double py, const Segment& s) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = s.x0 + t * dx - px, ey = s.y0 + t * dy - py;
  return ex * ex + ey * ey;
}

struct Pose {
  double cx, cy;      // torso centre
  double swing;       // limb angle in radians
};

// Anti-aliased rendering by 4x4 supersampling.
inline Frame render_pose(const Pose& pose, std::size_t rows, std::size_t cols) {
  constexpr int kSub = 4;
  const double torso_ax = 6.0, torso_ay = 17.0, head_r = 4.5;
  const double hip_y = pose.cy + 14.0, shoulder_y = pose.cy - 13.0;
  const std::array<Segment, 4> limbs{{
      {pose.cx - 3.0, hip_y, pose.cx - 3.0 + 28.0 * std::sin(pose.swing), hip_y + 28.0 * std::cos(pose.swing), 2.2},
      {pose.cx + 3.0, hip_y, pose.cx + 3.0 - 28.0 * std::sin(pose.swing), hip_y + 28.0 * std::cos(pose.swing), 2.2},
      {pose.cx - 6.0, shoulder_y, pose.cx - 6.0 - 18.0 * std::sin(pose.swing), shoulder_y + 18.0 * std::cos(pose.swing), 1.6},
      {pose.cx + 6.0, shoulder_y, pose.cx + 6.0 + 18.0 * std::sin(pose.swing), shoulder_y + 18.0 * std::cos(pose.swing), 1.6},
  }};
  const double head_cy = pose.cy - torso_ay - head_r + 1.0;
  std::vector<double> px(rows * cols, kBackground);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int sy = 0; sy < kSub; ++sy) {
        for (int sx = 0; sx < kSub; ++sx) {
          const double x = static_cast<double>(c) + (sx + 0.5) / kSub;
          const double y = static_cast<double>(r) + (sy + 0.5) / kSub;
          const double ex = (x - pose.cx) / torso_ax, ey = (y - pose.cy) / torso_ay;
          const double hx = x - pose.cx, hy = y - head_cy;
          double v = kBackground;
          if (ex * ex + ey * ey <= 1.0 || hx * hx + hy * hy <= head_r * head_r) {
            v = kBody;
          } else {
            for (const auto& s : limbs) {
              if (segment_distance_sq(x, y, s) <= s.half_width * s.half_width) {
                v = kLimb;
                break;
              }
            }
          }
          acc += v;
        }
      }
      px[r * cols + c] = std::round(acc / (kSub * kSub));
    }
  }
  return Frame(rows, cols, std::move(px));
}

}  // namespace detail

inline std::string synth_participant_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "p%02d", index);
  return buf;
}

// Renders one participant. The random stream depends only on (seed, year,
// index), so participants can be generated in any order.
inline SynthParticipant synth_participant(const SynthConfig& cfg, int year, int index) {
  cfg.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(year), static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SynthParticipant p;
  p.id = synth_participant_id(index);
  p.year = year;
  const double drawn = unit(rng);
  p.quality = cfg.fixed_quality.value_or(drawn);
  const double noise = gauss(rng);
  p.score = std::clamp(std::round((10.0 * p.quality + cfg.noise * noise) * 100.0) / 100.0, 0.0, 10.0);

  const double roughness = (1.0 - p.quality) * cfg.jitter;
  const double phase = 2.0 * std::numbers::pi * unit(rng);
  const double start_x = 15.0 + 4.0 * unit(rng);
  const double base_speed = 0.3;
  const double gait_period = 14.0;
  double x = start_x;
  p.video.participant_id = p.id;
  p.video.year = year;
  p.video.frames.reserve(static_cast<std::size_t>(cfg.frames));
  for (int t = 0; t < cfg.frames; ++t) {
    // Draws happen every frame regardless of quality so streams stay aligned.
    const double speed_noise = gauss(rng);
    const double bob_noise = gauss(rng);
    const double swing_noise = gauss(rng);
    const double gait = 2.0 * std::numbers::pi * t / gait_period + phase;
    detail::Pose pose;
    pose.cx = x;
    pose.cy = 40.0 + 0.5 * std::sin(2.0 * gait) + 1.5 * roughness * bob_noise;
    pose.swing = 0.35 * std::sin(gait) + 0.15 * roughness * swing_noise;
    p.video.frames.push_back(detail::render_pose(pose, kCropRows, kCropCols));
    x += base_speed * (1.0 + 1.5 * roughness * speed_noise);
  }
  return p;
}

struct SynthSummary {
  std::vector<SynthParticipant> participants;  // frames dropped after writing
};

// Writes the dataset in the ingest layout. Bounding boxes cover whole frames.
inline SynthSummary generate(const SynthConfig& cfg, const std::filesystem::path& out_root) {
  cfg.validate();
  std::filesystem::create_directories(out_root);
  SynthSummary summary;
  const auto total = static_cast<std::size_t>(cfg.years) * static_cast<std::size_t>(cfg.participants);
  summary.participants.resize(total);
  parallel_for(total, [&](std::size_t i) {
    const int year = cfg.first_year + static_cast<int>(i) / cfg.participants;
    const int index = static_cast<int>(i) % cfg.participants;
    auto p = synth_participant(cfg, year, index);
    const auto dir = out_root / std::to_string(year) / p.id;
    std::string bbox = "frame,x,y,w,h\n";
    for (std::size_t t = 0; t < p.video.frames.size(); ++t) {
      char name[16];
      std::snprintf(name, sizeof name, "%04zu", t);
      write_pgm(dir / "frames" / (std::string(name) + ".pgm"), p.video.frames[t]);
      bbox += std::string(name) + ",0,0," + std::to_string(kCropCols) + "," + std::to_string(kCropRows) + "\n";
    }
    text::write_file(dir / "bbox.csv", bbox);
    p.video.frames.clear();
    summary.participants[i] = std::move(p);
  });
  for (int y = 0; y < cfg.years; ++y) {
    std::string csv = "participant,score\n";
    for (int i = 0; i < cfg.participants; ++i) {
      const auto& p = summary.participants[static_cast<std::size_t>(y * cfg.participants + i)];
      char score[32];
      std::snprintf(score, sizeof score, "%.2f", p.score);
      csv += p.id + "," + score + "\n";
    }
    text::write_file(out_root / std::to_string(cfg.first_year + y) / "scores.csv", csv);
  }
  return summary;
}

}  // namespace catwalk
