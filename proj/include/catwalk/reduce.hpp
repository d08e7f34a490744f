#pragma once

// Dimensionality reduction between the two Fisher layers: PCA keeping a
// fraction of the spectral energy, and a seeded Gaussian random projection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "catwalk/error.hpp"
#include "catwalk/features.hpp"
#include "catwalk/text_io.hpp"

namespace catwalk {

struct PcaModel {
  Eigen::VectorXd mean;          // D
  RowMatrix basis;               // p x D, orthonormal rows, descending eigenvalue
  Eigen::VectorXd eigenvalues;   // p, positive, descending
  double energy_fraction = 0.0;  // retained / total eigenvalue mass
  std::vector<int> trained_on;

  Eigen::Index input_dim() const { return mean.size(); }
  Eigen::Index output_dim() const { return basis.rows(); }
};

struct RpModel {
  RowMatrix matrix;  // p x D, entries ~ N(0, 1/p)
  std::uint64_t seed = 0;
  std::vector<int> trained_on;

  Eigen::Index input_dim() const { return matrix.cols(); }
  Eigen::Index output_dim() const { return matrix.rows(); }
};

using Reducer = std::variant<PcaModel, RpModel>;

// Full descending spectrum of the sample covariance (1/(n-1) normalisation).
// Eigenvectors are returned only for strictly positive eigenvalues, at most
// `max_vectors` of them.
struct Spectrum {
  Eigen::VectorXd eigenvalues;  // all, descending, clamped at 0
  RowMatrix vectors;            // leading eigenvectors as rows
};

namespace detail {

// When n - 1 < D the covariance has rank < n and its non-zero spectrum equals
// that of the n x n Gram matrix; eigenvectors map back through the data.
inline Spectrum covariance_spectrum(const RowMatrix& centred, Eigen::Index max_vectors) {
  const auto n = centred.rows();
  const auto D = centred.cols();
  const double scale = 1.0 / static_cast<double>(n - 1);
  Spectrum s;
  if (D <= n) {
    const Eigen::MatrixXd cov = (centred.transpose() * centred) * scale;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw FitError("PCA eigendecomposition failed");
    s.eigenvalues = eig.eigenvalues().reverse().cwiseMax(0.0);
    const auto m = std::min(max_vectors, D);
    s.vectors.resize(m, D);
    for (Eigen::Index i = 0; i < m; ++i) s.vectors.row(i) = eig.eigenvectors().col(D - 1 - i).transpose();
  } else {
    const Eigen::MatrixXd gram = (centred * centred.transpose()) * scale;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success) throw FitError("PCA eigendecomposition failed");
    s.eigenvalues = eig.eigenvalues().reverse().cwiseMax(0.0);
    const auto m = std::min(max_vectors, n);
    s.vectors.resize(m, D);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double lambda = s.eigenvalues(i);
      if (lambda <= 0.0) {
        s.vectors.conservativeResize(i, D);
        break;
      }
      const Eigen::VectorXd u = eig.eigenvectors().col(n - 1 - i);
      Eigen::VectorXd v = centred.transpose() * u;
      s.vectors.row(i) = (v / v.norm()).transpose();
    }
  }
  return s;
}

}  // namespace detail

inline PcaModel fit_pca(const RowMatrix& vectors, double energy = 0.9) {
  if (vectors.rows() < 2) throw FitError("PCA needs at least 2 vectors");
  if (!(energy > 0.0 && energy <= 1.0)) throw InvalidArgument("PCA energy must lie in (0, 1]");
  if (!vectors.allFinite()) throw InvalidInput("PCA input contains NaN or Inf");
  PcaModel m;
  m.mean = vectors.colwise().mean().transpose();
  const RowMatrix centred = vectors.rowwise() - m.mean.transpose();

  // A first pass only needs the spectrum; vectors are limited to what the
  // energy criterion keeps.
  auto s = detail::covariance_spectrum(centred, std::min(vectors.rows(), vectors.cols()));
  const double total = s.eigenvalues.sum();
  if (!(total > 0.0)) throw FitError("PCA input has zero variance");
  Eigen::Index p = 0;
  double cum = 0.0;
  while (p < s.eigenvalues.size()) {
    cum += s.eigenvalues(p);
    ++p;
    if (cum / total >= energy) break;
  }
  p = std::min(p, s.vectors.rows());
  m.eigenvalues = s.eigenvalues.head(p);
  m.basis = s.vectors.topRows(p);
  m.energy_fraction = m.eigenvalues.sum() / total;
  // Sign convention: the largest-magnitude entry of each basis row is positive.
  for (Eigen::Index i = 0; i < p; ++i) {
    Eigen::Index arg = 0;
    m.basis.row(i).cwiseAbs().maxCoeff(&arg);
    if (m.basis(i, arg) < 0.0) m.basis.row(i) *= -1.0;
  }
  return m;
}

inline RpModel make_random_projection(Eigen::Index output_dim, Eigen::Index input_dim, std::uint64_t seed) {
  if (output_dim < 1 || input_dim < 1) throw InvalidArgument("random projection needs positive dimensions");
  RpModel m;
  m.seed = seed;
  m.matrix.resize(output_dim, input_dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(output_dim)));
  for (Eigen::Index i = 0; i < output_dim; ++i)
    for (Eigen::Index j = 0; j < input_dim; ++j) m.matrix(i, j) = dist(rng);
  return m;
}

inline Eigen::Index output_dim(const Reducer& r) {
  return std::visit([](const auto& m) { return m.output_dim(); }, r);
}
inline Eigen::Index input_dim(const Reducer& r) {
  return std::visit([](const auto& m) { return m.input_dim(); }, r);
}
inline const std::vector<int>& trained_on(const Reducer& r) {
  return std::visit([](const auto& m) -> const std::vector<int>& { return m.trained_on; }, r);
}

inline Eigen::VectorXd project(const PcaModel& m, const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() != m.input_dim()) throw ShapeError("PCA input dimension mismatch");
  return m.basis * (v - m.mean);
}

inline Eigen::VectorXd project(const RpModel& m, const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() != m.input_dim()) throw ShapeError("random projection input dimension mismatch");
  return m.matrix * v;
}

inline Eigen::VectorXd project(const Reducer& r, const Eigen::Ref<const Eigen::VectorXd>& v) {
  return std::visit([&](const auto& m) { return project(m, v); }, r);
}

// Projects every row.
inline RowMatrix project_rows(const Reducer& r, const RowMatrix& rows) {
  if (rows.cols() != input_dim(r)) throw ShapeError("reducer input dimension mismatch");
  return std::visit([&](const auto& m) -> RowMatrix {
    if constexpr (std::is_same_v<std::decay_t<decltype(m)>, PcaModel>)
      return (rows.rowwise() - m.mean.transpose()) * m.basis.transpose();
    else
      return rows * m.matrix.transpose();
  }, r);
}

// PCA file: `PCA v1 p D`, then the mean row, the eigenvalue row, the retained
// energy fraction, and p basis rows.
// RP file: `RP v1 p D seed`, then p matrix rows.
inline std::string serialize_reducer(const Reducer& r) {
  std::ostringstream out;
  auto row = [&](const auto& v) {
    for (Eigen::Index j = 0; j < v.size(); ++j) out << (j ? " " : "") << text::format_double(v(j));
    out << '\n';
  };
  if (const auto* pca = std::get_if<PcaModel>(&r)) {
    out << "PCA v1 " << pca->output_dim() << ' ' << pca->input_dim() << '\n';
    row(pca->mean);
    row(pca->eigenvalues);
    out << text::format_double(pca->energy_fraction) << '\n';
    for (Eigen::Index i = 0; i < pca->basis.rows(); ++i) row(pca->basis.row(i));
  } else {
    const auto& rp = std::get<RpModel>(r);
    out << "RP v1 " << rp.output_dim() << ' ' << rp.input_dim() << ' ' << rp.seed << '\n';
    for (Eigen::Index i = 0; i < rp.matrix.rows(); ++i) row(rp.matrix.row(i));
  }
  return out.str();
}

inline Reducer parse_reducer(const std::string& content, const std::string& origin = "<memory>") {
  std::istringstream in(content);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);)
    if (!text::trim(l).empty()) lines.push_back(l);
  if (lines.empty()) throw ParseError(origin + ": empty reducer file");
  const auto head = text::split_ws(lines[0]);
  auto read_row = [&](const std::string& line, Eigen::Index n) {
    const auto cells = text::split_ws(line);
    if (static_cast<Eigen::Index>(cells.size()) != n) throw ParseError(origin + ": row has wrong length");
    Eigen::VectorXd v(n);
    for (Eigen::Index j = 0; j < n; ++j) v(j) = text::parse_double(cells[static_cast<std::size_t>(j)]);
    return v;
  };
  if (head.size() == 4 && head[0] == "PCA" && head[1] == "v1") {
    const auto p = text::parse_int<Eigen::Index>(head[2]);
    const auto D = text::parse_int<Eigen::Index>(head[3]);
    if (p < 1 || D < 1 || lines.size() != static_cast<std::size_t>(4 + p)) throw ParseError(origin + ": PCA body does not match header");
    PcaModel m;
    m.mean = read_row(lines[1], D);
    m.eigenvalues = read_row(lines[2], p);
    m.energy_fraction = text::parse_double(lines[3]);
    m.basis.resize(p, D);
    for (Eigen::Index i = 0; i < p; ++i) m.basis.row(i) = read_row(lines[static_cast<std::size_t>(4 + i)], D).transpose();
    return m;
  }
  if (head.size() == 5 && head[0] == "RP" && head[1] == "v1") {
    const auto p = text::parse_int<Eigen::Index>(head[2]);
    const auto D = text::parse_int<Eigen::Index>(head[3]);
    if (p < 1 || D < 1 || lines.size() != static_cast<std::size_t>(1 + p)) throw ParseError(origin + ": RP body does not match header");
    RpModel m;
    m.seed = text::parse_int<std::uint64_t>(head[4]);
    m.matrix.resize(p, D);
    for (Eigen::Index i = 0; i < p; ++i) m.matrix.row(i) = read_row(lines[static_cast<std::size_t>(1 + i)], D).transpose();
    return m;
  }
  throw ParseError(origin + ": unknown reducer header");
}

inline void save_reducer(const std::filesystem::path& path, const Reducer& r) { text::write_file(path, serialize_reducer(r)); }

inline Reducer load_reducer(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingModel("missing model: " + path.string());
  return parse_reducer(text::read_file(path), path.string());
}

}  // namespace catwalk
