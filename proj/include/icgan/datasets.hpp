#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "icgan/io.hpp"
#include "icgan/rng.hpp"
#include "icgan/tensor.hpp"

namespace icgan {

enum class DatasetKind { ring8, grid25, longtail_mixture, shifted_mixture };

inline const char* to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::ring8: return "ring8";
    case DatasetKind::grid25: return "grid25";
    case DatasetKind::longtail_mixture: return "longtail_mixture";
    case DatasetKind::shifted_mixture: return "shifted_mixture";
  }
  return "?";
}

inline DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "ring8") return DatasetKind::ring8;
  if (s == "grid25") return DatasetKind::grid25;
  if (s == "longtail_mixture") return DatasetKind::longtail_mixture;
  if (s == "shifted_mixture") return DatasetKind::shifted_mixture;
  throw std::invalid_argument("unknown dataset kind '" + s + "'");
}

struct DatasetSpec {
  DatasetKind kind = DatasetKind::ring8;
  std::size_t n_per_class = 100;
  double component_std = 0.05;
  double radius = 2.0;
  // longtail_mixture
  std::size_t n_classes = 8;
  double alpha = 1.5;
  std::size_t base_count = 1000;
  std::size_t min_count = 5;
  // shifted_mixture
  double shift_x = 3.0;
  double shift_y = 0.0;
  double rotation = 0.0;
  std::uint64_t seed = 0;
};

struct RawDataset {
  Tensor data;              // [M, 2]
  std::vector<int> labels;  // [M]
};

// Per-class sizes for the long-tailed mixture: floor(base * c^-alpha) for
// class index c starting at 1, clamped from below.
inline std::vector<std::size_t> longtail_sizes(std::size_t n_classes, double alpha,
                                               std::size_t base_count,
                                               std::size_t min_count) {
  if (n_classes == 0)
    throw std::invalid_argument("longtail_sizes: need at least one class");
  std::vector<std::size_t> sizes;
  for (std::size_t c = 1; c <= n_classes; ++c) {
    double raw = static_cast<double>(base_count) *
                 std::pow(static_cast<double>(c), -alpha);
    sizes.push_back(std::max(min_count, static_cast<std::size_t>(std::floor(raw))));
  }
  return sizes;
}

inline RawDataset make_dataset(const DatasetSpec& spec) {
  if (!(spec.component_std >= 0.0))
    throw std::invalid_argument("make_dataset: component_std must be non-negative");
  std::mt19937_64 rng = make_rng(spec.seed);

  std::vector<std::pair<double, double>> means;
  std::vector<std::size_t> sizes;
  switch (spec.kind) {
    case DatasetKind::ring8:
    case DatasetKind::shifted_mixture: {
      if (spec.n_per_class == 0)
        throw std::invalid_argument("make_dataset: n_per_class must be positive");
      for (std::size_t c = 0; c < 8; ++c) {
        double a = 2.0 * 3.14159265358979323846 * static_cast<double>(c) / 8.0 +
                   spec.rotation;
        double mx = spec.radius * std::cos(a);
        double my = spec.radius * std::sin(a);
        if (spec.kind == DatasetKind::shifted_mixture) {
          mx += spec.shift_x;
          my += spec.shift_y;
        }
        means.emplace_back(mx, my);
        sizes.push_back(spec.n_per_class);
      }
      break;
    }
    case DatasetKind::grid25: {
      if (spec.n_per_class == 0)
        throw std::invalid_argument("make_dataset: n_per_class must be positive");
      for (int gy = -2; gy <= 2; ++gy)
        for (int gx = -2; gx <= 2; ++gx) {
          means.emplace_back(2.0 * gx, 2.0 * gy);
          sizes.push_back(spec.n_per_class);
        }
      break;
    }
    case DatasetKind::longtail_mixture: {
      sizes = longtail_sizes(spec.n_classes, spec.alpha, spec.base_count,
                             spec.min_count);
      for (std::size_t c = 0; c < spec.n_classes; ++c) {
        double a = 2.0 * 3.14159265358979323846 * static_cast<double>(c) /
                   static_cast<double>(spec.n_classes);
        means.emplace_back(spec.radius * std::cos(a), spec.radius * std::sin(a));
      }
      break;
    }
  }

  std::size_t total = 0;
  for (std::size_t s : sizes) total += s;
  RawDataset ds;
  ds.data = Tensor::zeros({total, 2});
  ds.labels.reserve(total);
  std::size_t at = 0;
  for (std::size_t c = 0; c < means.size(); ++c) {
    for (std::size_t i = 0; i < sizes[c]; ++i, ++at) {
      ds.data.at(at, 0) = means[c].first + spec.component_std * normal(rng);
      ds.data.at(at, 1) = means[c].second + spec.component_std * normal(rng);
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

// --- on-disk formats ---
// Text: one header line, then one row per line with decimal floats (and the
// label last when labeled). Written with to_chars, so parsing does not depend
// on the process locale. The binary variant carries the same content behind
// a magic tag.

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& tok, std::size_t line_no) {
  double v = 0.0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
    throw std::runtime_error("dataset parse: bad number '" + tok + "' on line " +
                             std::to_string(line_no));
  return v;
}

}  // namespace detail

inline void save_dataset_text(const RawDataset& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  bool labeled = !ds.labels.empty();
  f << "icgan-dataset v1 rows=" << ds.data.rows() << " cols=" << ds.data.cols()
    << " labeled=" << (labeled ? 1 : 0) << "\n";
  for (std::size_t i = 0; i < ds.data.rows(); ++i) {
    for (std::size_t j = 0; j < ds.data.cols(); ++j) {
      if (j) f << ' ';
      f << detail::fmt_double(ds.data.at(i, j));
    }
    if (labeled) f << ' ' << ds.labels[i];
    f << "\n";
  }
  if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

inline void save_dataset_binary(const RawDataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f.write("ICDS", 4);
  io::write_u32(f, 1);
  io::write_u64(f, ds.data.rows());
  io::write_u64(f, ds.data.cols());
  bool labeled = !ds.labels.empty();
  io::write_u32(f, labeled ? 1 : 0);
  for (double v : ds.data.data) io::write_f64(f, v);
  if (labeled)
    for (int l : ds.labels) io::write_i32(f, l);
  if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

inline RawDataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  char magic[4] = {0, 0, 0, 0};
  f.read(magic, 4);
  if (f.gcount() == 4 && std::string(magic, 4) == "ICDS") {
    std::uint32_t version = io::read_u32(f, "dataset version");
    if (version != 1)
      throw std::runtime_error("unsupported dataset version " +
                               std::to_string(version) + " (supported: 1)");
    std::size_t rows = io::read_u64(f, "row count");
    std::size_t cols = io::read_u64(f, "col count");
    bool labeled = io::read_u32(f, "label flag") != 0;
    RawDataset ds;
    ds.data = Tensor::zeros({rows, cols});
    for (double& v : ds.data.data) v = io::read_f64(f, "dataset payload");
    if (labeled) {
      ds.labels.resize(rows);
      for (int& l : ds.labels) l = io::read_i32(f, "dataset labels");
    }
    return ds;
  }

  f.clear();
  f.seekg(0);
  std::string header;
  if (!std::getline(f, header))
    throw std::runtime_error("dataset '" + path + "' is empty");
  std::istringstream hs(header);
  std::string tag, ver;
  hs >> tag >> ver;
  if (tag != "icgan-dataset" || ver != "v1")
    throw std::runtime_error("dataset '" + path + "' has unrecognized header '" +
                             header + "'");
  std::size_t rows = 0, cols = 0;
  int labeled = -1;
  std::string kv;
  while (hs >> kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) continue;
    std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
    if (key == "rows") rows = std::stoull(val);
    else if (key == "cols") cols = std::stoull(val);
    else if (key == "labeled") labeled = std::stoi(val);
  }
  if (rows == 0 || cols == 0 || labeled < 0)
    throw std::runtime_error("dataset '" + path + "' header is missing fields");
  RawDataset ds;
  ds.data = Tensor::zeros({rows, cols});
  if (labeled) ds.labels.resize(rows);
  std::string line;
  for (std::size_t i = 0; i < rows; ++i) {
    if (!std::getline(f, line))
      throw std::runtime_error("dataset '" + path + "' ends early at row " +
                               std::to_string(i));
    std::istringstream ls(line);
    std::string tok;
    for (std::size_t j = 0; j < cols; ++j) {
      if (!(ls >> tok))
        throw std::runtime_error("dataset '" + path + "' row " + std::to_string(i) +
                                 " has too few columns");
      ds.data.at(i, j) = detail::parse_double(tok, i + 2);
    }
    if (labeled) {
      if (!(ls >> tok))
        throw std::runtime_error("dataset '" + path + "' row " + std::to_string(i) +
                                 " is missing its label");
      ds.labels[i] = std::stoi(tok);
    }
  }
  return ds;
}

// Per-class sample counts indexed by label, for stratified reporting.
inline std::vector<std::size_t> class_counts(const std::vector<int>& labels) {
  std::vector<std::size_t> counts;
  for (int l : labels) {
    if (l < 0) throw std::invalid_argument("class_counts: negative label");
    if (static_cast<std::size_t>(l) >= counts.size())
      counts.resize(static_cast<std::size_t>(l) + 1, 0);
    counts[static_cast<std::size_t>(l)] += 1;
  }
  return counts;
}

}  // namespace icgan
