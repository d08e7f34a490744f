#pragma once

// Dataset loading. Layout on disk:
//
//   root/<year>/scores.csv                 participant,score
//   root/<year>/<pid>/bbox.csv             frame,x,y,w,h   (frame = file stem)
//   root/<year>/<pid>/frames/<name>.pgm    lexicographic order = temporal order

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "catwalk/error.hpp"
#include "catwalk/image.hpp"
#include "catwalk/pgm.hpp"
#include "catwalk/text_io.hpp"

namespace catwalk {

inline constexpr std::size_t kCropRows = 100;
inline constexpr std::size_t kCropCols = 50;

struct Video {
  std::string participant_id;
  int year = 0;
  std::vector<Frame> frames;

  std::size_t rows() const { return frames.empty() ? 0 : frames.front().rows(); }
  std::size_t cols() const { return frames.empty() ? 0 : frames.front().cols(); }

  // Throws when fewer than two frames or mixed dimensions.
  void validate() const {
    if (frames.size() < 2)
      throw InsufficientFrames(participant_id + ": " + std::to_string(frames.size()) + " frame(s), need at least 2");
    for (const auto& f : frames)
      if (f.rows() != rows() || f.cols() != cols())
        throw ShapeError(participant_id + ": frames have differing dimensions");
  }
};

// Per-frame boxes keyed by frame file stem.
using BoundingBoxTrack = std::map<std::string, BoundingBox>;

inline BoundingBoxTrack load_bbox_track(const std::filesystem::path& path) {
  BoundingBoxTrack track;
  for (const auto& row : text::read_csv(path, {"frame", "x", "y", "w", "h"})) {
    BoundingBox box;
    try {
      box = {text::parse_int<long>(row[1]), text::parse_int<long>(row[2]),
             text::parse_int<long>(row[3]), text::parse_int<long>(row[4])};
    } catch (const ParseError& e) {
      throw ManifestError(path.string() + ": " + e.what());
    }
    if (box.w <= 0 || box.h <= 0) throw ManifestError(path.string() + ": non-positive box for frame " + row[0]);
    if (!track.emplace(row[0], box).second) throw ManifestError(path.string() + ": duplicate frame " + row[0]);
  }
  return track;
}

inline std::vector<std::filesystem::path> list_frames(const std::filesystem::path& frames_dir) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(frames_dir)) return files;
  for (const auto& e : std::filesystem::directory_iterator(frames_dir))
    if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
  return files;
}

// Crops every frame to its box and resizes it to target rows x cols.
inline Video load_video(const std::filesystem::path& frames_dir, const BoundingBoxTrack& bbox,
                        std::size_t rows = kCropRows, std::size_t cols = kCropCols,
                        std::string participant_id = {}, int year = 0) {
  const auto files = list_frames(frames_dir);
  if (files.size() < 2)
    throw InsufficientFrames(frames_dir.string() + ": " + std::to_string(files.size()) + " frame(s), need at least 2");
  Video video{std::move(participant_id), year, {}};
  video.frames.reserve(files.size());
  for (const auto& file : files) {
    const auto stem = file.stem().string();
    const auto it = bbox.find(stem);
    if (it == bbox.end()) throw ManifestError(frames_dir.string() + ": no bounding box for frame " + stem);
    const Frame raw = load_pgm(file);
    if (!it->second.inside(raw.rows(), raw.cols()))
      throw ManifestError(frames_dir.string() + ": bounding box for frame " + stem + " exceeds frame bounds");
    Grid g = resize_bilinear(crop(raw.grid(), it->second), rows, cols);
    // Bilinear weights are convex, so values stay in range up to rounding.
    for (auto& v : g.data) v = std::clamp(v, 0.0, 255.0);
    video.frames.emplace_back(std::move(g));
  }
  video.validate();
  return video;
}

struct ParticipantEntry {
  std::string id;
  double score = 0.0;
  std::filesystem::path dir;
};

struct YearEntry {
  int year = 0;
  std::vector<ParticipantEntry> participants;  // sorted by id
};

// Reads and cross-checks the manifest (scores and directories) without
// decoding any frames.
inline std::vector<YearEntry> scan_dataset(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw ManifestError(root.string() + ": not a directory");
  std::vector<YearEntry> years;
  for (const auto& ye : std::filesystem::directory_iterator(root)) {
    if (!ye.is_directory()) continue;
    YearEntry entry;
    try {
      entry.year = text::parse_int<int>(ye.path().filename().string(), "year");
    } catch (const ParseError&) {
      throw ManifestError(ye.path().string() + ": year directory name is not an integer");
    }
    std::map<std::string, double> scores;
    for (const auto& row : text::read_csv(ye.path() / "scores.csv", {"participant", "score"})) {
      double s = 0.0;
      try {
        s = text::parse_double(row[1], "score");
      } catch (const ParseError& e) {
        throw ManifestError((ye.path() / "scores.csv").string() + ": " + e.what());
      }
      if (!std::isfinite(s) || s < 0.0 || s > 10.0)
        throw ManifestError((ye.path() / "scores.csv").string() + ": score for " + row[0] + " outside [0,10]");
      if (!scores.emplace(row[0], s).second)
        throw ManifestError((ye.path() / "scores.csv").string() + ": duplicate participant " + row[0]);
    }
    std::set<std::string> on_disk;
    for (const auto& pe : std::filesystem::directory_iterator(ye.path()))
      if (pe.is_directory()) on_disk.insert(pe.path().filename().string());
    for (const auto& id : on_disk)
      if (!scores.contains(id))
        throw ManifestError(ye.path().string() + ": participant " + id + " has no score in scores.csv");
    for (const auto& [id, s] : scores) {
      if (!on_disk.contains(id))
        throw ManifestError(ye.path().string() + ": scored participant " + id + " has no directory");
      entry.participants.push_back({id, s, ye.path() / id});
    }
    if (entry.participants.size() < 2)
      throw ManifestError(ye.path().string() + ": a year needs at least 2 participants");
    years.push_back(std::move(entry));
  }
  std::sort(years.begin(), years.end(), [](const auto& a, const auto& b) { return a.year < b.year; });
  return years;
}

inline Video load_participant(const YearEntry& year, const ParticipantEntry& p) {
  return load_video(p.dir / "frames", load_bbox_track(p.dir / "bbox.csv"), kCropRows, kCropCols, p.id,
                    year.year);
}

struct ScoredVideo {
  Video video;
  double score = 0.0;
};

struct YearSet {
  int year = 0;
  std::vector<ScoredVideo> participants;
};

inline std::vector<YearSet> load_dataset(const std::filesystem::path& root) {
  std::vector<YearSet> out;
  for (const auto& y : scan_dataset(root)) {
    YearSet set{y.year, {}};
    for (const auto& p : y.participants) set.participants.push_back({load_participant(y, p), p.score});
    out.push_back(std::move(set));
  }
  return out;
}

}  // namespace catwalk
