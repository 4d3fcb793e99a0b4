#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sdna/errors.hpp"
#include "sdna/rng.hpp"
#include "sdna/sampling.hpp"
#include "sdna/types.hpp"

namespace sdna {

// Sparse column-major dataset: one sparse vector per example, since every
// solver touches the data example-wise (a_i'w, Gram blocks of columns).
// Indices are 0-based internally.
template <typename Scalar>
struct RawDataset {
  Index dim = 0;
  std::vector<std::vector<std::pair<Index, Scalar>>> columns;
  VectorX<Scalar> labels;

  Index num_examples() const { return static_cast<Index>(columns.size()); }

  MatrixX<Scalar> to_dense() const {
    MatrixX<Scalar> a = MatrixX<Scalar>::Zero(dim, num_examples());
    for (Index j = 0; j < num_examples(); ++j)
      for (const auto& [i, v] : columns[static_cast<std::size_t>(j)])
        a(i, j) = v;
    return a;
  }
};

// Parses the LIBSVM text format: "label idx:val idx:val ..." with 1-based,
// strictly increasing indices per line. Violations are rejected with the
// offending line number. Blank lines are skipped.
template <typename Scalar = double>
RawDataset<Scalar> load_libsvm(std::istream& in,
                               std::optional<Index> expect_dim = {}) {
  RawDataset<Scalar> data;
  std::vector<Scalar> labels;
  std::string line;
  long line_no = 0;
  Index max_index = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    const std::string where = "line " + std::to_string(line_no);
    Scalar label;
    if (!(ls >> label))
      throw ParseError(where + ": cannot parse label");
    std::vector<std::pair<Index, Scalar>> column;
    std::string token;
    Index previous = 0;
    while (ls >> token) {
      const auto colon = token.find(':');
      if (colon == std::string::npos)
        throw ParseError(where + ": feature token '" + token +
                         "' lacks an index:value colon");
      Index index;
      Scalar value;
      try {
        std::size_t used = 0;
        index = static_cast<Index>(std::stoll(token.substr(0, colon), &used));
        if (used != colon) throw std::invalid_argument(token);
        value = static_cast<Scalar>(std::stod(token.substr(colon + 1), &used));
        if (used != token.size() - colon - 1)
          throw std::invalid_argument(token);
      } catch (const std::exception&) {
        throw ParseError(where + ": malformed feature token '" + token + "'");
      }
      if (index <= 0)
        throw ParseError(where + ": index " + std::to_string(index) +
                         " must be >= 1");
      if (index <= previous)
        throw ParseError(where + ": indices must be strictly increasing (" +
                         std::to_string(index) + " after " +
                         std::to_string(previous) + ")");
      if (!std::isfinite(static_cast<double>(value)))
        throw ParseError(where + ": non-finite value");
      previous = index;
      max_index = std::max(max_index, index);
      column.emplace_back(index - 1, value);  // to 0-based
    }
    labels.push_back(label);
    data.columns.push_back(std::move(column));
  }
  if (data.columns.empty()) throw ParseError("no examples");
  if (expect_dim) {
    if (max_index > *expect_dim)
      throw ParseError("feature index " + std::to_string(max_index) +
                       " exceeds the expected dimension " +
                       std::to_string(*expect_dim));
    data.dim = *expect_dim;
  } else {
    data.dim = max_index;
  }
  data.labels = VectorX<Scalar>::Map(labels.data(),
                                     static_cast<Index>(labels.size()));
  return data;
}

template <typename Scalar = double>
RawDataset<Scalar> load_libsvm(const std::filesystem::path& path,
                               std::optional<Index> expect_dim = {}) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return load_libsvm<Scalar>(in, expect_dim);
}

template <typename Scalar>
void save_libsvm(const RawDataset<Scalar>& data, std::ostream& out) {
  char buf[32];
  const auto fmt = [&buf](double x) {
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
  };
  for (Index j = 0; j < data.num_examples(); ++j) {
    out << fmt(static_cast<double>(data.labels(j)));
    for (const auto& [i, v] : data.columns[static_cast<std::size_t>(j)])
      out << ' ' << (i + 1) << ':' << fmt(static_cast<double>(v));
    out << '\n';
  }
}

template <typename Scalar>
void save_libsvm(const RawDataset<Scalar>& data,
                 const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path.string() + " for writing");
  save_libsvm(data, out);
}

struct SyntheticConfig {
  Index d = 0;
  Index n = 0;
  std::uint64_t seed = 0;
  double density = 1.0;
  double label_noise = 0.0;

  nlohmann::json to_json() const {
    return {{"d", d}, {"n", n}, {"seed", seed}, {"density", density},
            {"label_noise", label_noise}};
  }

  static SyntheticConfig from_json(const nlohmann::json& j) {
    SyntheticConfig c;
    c.d = j.at("d").get<Index>();
    c.n = j.at("n").get<Index>();
    c.seed = j.value("seed", std::uint64_t{0});
    c.density = j.value("density", 1.0);
    c.label_noise = j.value("label_noise", 0.0);
    return c;
  }
};

// Synthetic dataset: round(density * d) standard-normal entries per column at
// uniformly random positions, unit-normalized; a pure function of its
// arguments. Classification labels are sign(a_i' wbar) flipped with
// probability `label_noise`; regression targets are a_i' wbar plus centered
// noise with standard deviation `label_noise`.
template <typename Scalar = double>
RawDataset<Scalar> generate_synthetic(const SyntheticConfig& config,
                                      bool regression_targets = false) {
  if (config.d < 1 || config.n < 1)
    throw std::invalid_argument("synthetic dataset needs d, n >= 1");
  if (!(config.density > 0) || config.density > 1)
    throw std::invalid_argument("density must lie in (0, 1]");
  const Index nnz = std::max<Index>(
      1, static_cast<Index>(std::llround(config.density *
                                         static_cast<double>(config.d))));

  RngStream root(config.seed);
  RngStream wbar_rng = root.split(0);
  VectorX<Scalar> wbar(config.d);
  for (Index i = 0; i < config.d; ++i)
    wbar(i) = static_cast<Scalar>(wbar_rng.next_normal());

  RawDataset<Scalar> data;
  data.dim = config.d;
  data.columns.resize(static_cast<std::size_t>(config.n));
  data.labels.resize(config.n);
  const SamplingSpec position_spec = SamplingSpec::tau_nice(config.d, nnz);
  RngStream noise_rng = root.split(1);
  for (Index j = 0; j < config.n; ++j) {
    RngStream col_rng = root.split(16 + static_cast<std::uint64_t>(j));
    const Subset positions = draw(position_spec, col_rng);
    auto& column = data.columns[static_cast<std::size_t>(j)];
    Scalar norm_sq = 0;
    for (Index i : positions) {
      const Scalar v = static_cast<Scalar>(col_rng.next_normal());
      column.emplace_back(i, v);
      norm_sq += v * v;
    }
    const Scalar norm = std::sqrt(norm_sq);
    for (auto& [i, v] : column) v /= norm;
    Scalar target = 0;
    for (const auto& [i, v] : column) target += v * wbar(i);
    if (regression_targets) {
      data.labels(j) = target + static_cast<Scalar>(config.label_noise *
                                                    noise_rng.next_normal());
    } else {
      Scalar label = target >= 0 ? Scalar(1) : Scalar(-1);
      if (noise_rng.next_unit() < config.label_noise) label = -label;
      data.labels(j) = label;
    }
  }
  return data;
}

// Scales every column to unit Euclidean norm; zero columns are rejected.
template <typename Scalar>
RawDataset<Scalar> normalize_columns(RawDataset<Scalar> data) {
  for (Index j = 0; j < data.num_examples(); ++j) {
    auto& column = data.columns[static_cast<std::size_t>(j)];
    Scalar norm_sq = 0;
    for (const auto& [i, v] : column) norm_sq += v * v;
    if (!(norm_sq > 0))
      throw std::invalid_argument("column " + std::to_string(j) +
                                  " has zero norm");
    const Scalar norm = std::sqrt(norm_sq);
    for (auto& [i, v] : column) v /= norm;
  }
  return data;
}

}  // namespace sdna
