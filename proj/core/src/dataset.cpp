#include "rml/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "rml/rng.hpp"

namespace rml {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& message) { throw std::runtime_error(message); }

}  // namespace

std::vector<std::size_t> MultiViewDataset::view_dims() const {
  std::vector<std::size_t> dims;
  dims.reserve(views.size());
  for (const Tensor& v : views) dims.push_back(v.cols());
  return dims;
}

void MultiViewDataset::validate() const {
  if (views.empty()) throw std::invalid_argument("dataset: no views");
  for (std::size_t m = 0; m < views.size(); ++m) {
    if (views[m].rank() != 2) {
      throw std::invalid_argument("dataset: view " + std::to_string(m) +
                                  " has shape " + shape_str(views[m].shape()));
    }
    if (views[m].dim(0) != views[0].dim(0)) {
      throw std::invalid_argument("dataset: view " + std::to_string(m) + " has " +
                                  std::to_string(views[m].dim(0)) +
                                  " rows, view 0 has " + std::to_string(views[0].dim(0)));
    }
  }
  if (!labels.empty()) {
    if (labels.size() != sample_count()) {
      throw std::invalid_argument("dataset: " + std::to_string(labels.size()) +
                                  " labels for " + std::to_string(sample_count()) +
                                  " samples");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 ||
          (classes > 0 && static_cast<std::size_t>(labels[i]) >= classes)) {
        throw std::invalid_argument("dataset: label " + std::to_string(labels[i]) +
                                    " at row " + std::to_string(i) + " outside [0, " +
                                    std::to_string(classes) + ")");
      }
    }
  }
}

std::string encoding_name(ViewEncoding encoding) {
  return encoding == ViewEncoding::csv ? "csv" : "f32le-rowmajor";
}

ViewEncoding parse_encoding(const std::string& name) {
  if (name == "csv") return ViewEncoding::csv;
  if (name == "f32le-rowmajor") return ViewEncoding::f32;
  throw std::invalid_argument("unknown view encoding '" + name +
                              "' (expected csv or f32le-rowmajor)");
}

void SynthSpec::validate() const {
  if (preset != "blobs") {
    throw std::invalid_argument("SynthSpec: unknown preset '" + preset + "'");
  }
  if (view_count == 0) throw std::invalid_argument("SynthSpec: need >= 1 view");
  if (view_dims.size() != view_count) {
    throw std::invalid_argument("SynthSpec: " + std::to_string(view_dims.size()) +
                                " dims for " + std::to_string(view_count) + " views");
  }
  for (std::size_t d : view_dims) {
    if (d == 0) throw std::invalid_argument("SynthSpec: view dims must be >= 1");
  }
  if (cluster_count == 0) throw std::invalid_argument("SynthSpec: need >= 1 cluster");
  if (sample_count < cluster_count) {
    throw std::invalid_argument("SynthSpec: sample_count " +
                                std::to_string(sample_count) + " < cluster_count " +
                                std::to_string(cluster_count));
  }
  if (spread.size() != 1 && spread.size() != view_count) {
    throw std::invalid_argument("SynthSpec: spread needs 1 or " +
                                std::to_string(view_count) + " entries");
  }
  for (double s : spread) {
    if (!(s > 0.0)) throw std::invalid_argument("SynthSpec: spread must be > 0");
  }
  if (separation < 0.0) throw std::invalid_argument("SynthSpec: separation must be >= 0");
}

double SynthSpec::spread_for(std::size_t view) const {
  return spread.size() == 1 ? spread[0] : spread[view];
}

std::string SynthSpec::canonical() const {
  std::ostringstream out;
  out << preset << ",v=" << view_count << ",n=" << sample_count << ",k=" << cluster_count
      << ",dims=";
  for (std::size_t i = 0; i < view_dims.size(); ++i) {
    if (i) out << ':';
    out << view_dims[i];
  }
  char buf[32];
  out << ",spread=";
  for (std::size_t i = 0; i < spread.size(); ++i) {
    if (i) out << ':';
    std::snprintf(buf, sizeof buf, "%.17g", spread[i]);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "%.17g", separation);
  out << ",sep=" << buf << ",seed=" << seed;
  return out.str();
}

SynthSpec parse_synth_spec(const std::string& text) {
  SynthSpec spec;
  spec.view_dims.clear();
  spec.spread.clear();
  bool dims_set = false;

  std::vector<std::string> parts;
  std::string token;
  std::istringstream stream(text);
  while (std::getline(stream, token, ',')) parts.push_back(token);
  if (parts.empty()) throw std::invalid_argument("synth spec: empty string");

  std::size_t first = 0;
  if (parts[0].find('=') == std::string::npos) {
    spec.preset = parts[0];
    first = 1;
  }
  auto parse_size_list = [](const std::string& value) {
    std::vector<std::size_t> out;
    std::istringstream s(value);
    std::string item;
    while (std::getline(s, item, ':')) out.push_back(std::stoull(item));
    return out;
  };
  auto parse_double_list = [](const std::string& value) {
    std::vector<double> out;
    std::istringstream s(value);
    std::string item;
    while (std::getline(s, item, ':')) out.push_back(std::stod(item));
    return out;
  };
  for (std::size_t i = first; i < parts.size(); ++i) {
    const std::string& part = parts[i];
    const std::size_t eq = part.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("synth spec: expected key=value, got '" + part + "'");
    }
    const std::string key = part.substr(0, eq);
    const std::string value = part.substr(eq + 1);
    try {
      if (key == "v") {
        spec.view_count = std::stoull(value);
      } else if (key == "n") {
        spec.sample_count = std::stoull(value);
      } else if (key == "k") {
        spec.cluster_count = std::stoull(value);
      } else if (key == "dims") {
        spec.view_dims = parse_size_list(value);
        dims_set = true;
      } else if (key == "spread") {
        spec.spread = parse_double_list(value);
      } else if (key == "sep") {
        spec.separation = std::stod(value);
      } else if (key == "seed") {
        spec.seed = std::stoull(value);
      } else {
        throw std::invalid_argument("synth spec: unknown key '" + key +
                                    "' (valid: v, n, k, dims, spread, sep, seed)");
      }
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception&) {
      throw std::invalid_argument("synth spec: bad value '" + value + "' for key '" +
                                  key + "'");
    }
  }
  if (!dims_set) spec.view_dims.assign(spec.view_count, 10);
  if (spec.spread.empty()) spec.spread = {1.0};
  spec.validate();
  return spec;
}

namespace {

// Candidate centers are isotropic Gaussians scaled so typical pairwise
// distances land moderately above the separation floor; rejection then
// enforces the floor exactly.
std::vector<double> draw_centers(std::size_t k, std::size_t dim, double separation,
                                 RngStream& rng) {
  const double sigma =
      1.25 * separation / std::sqrt(2.0 * static_cast<double>(dim));
  std::vector<double> centers(k * dim);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    for (double& c : centers) c = rng.normal(0.0, sigma > 0.0 ? sigma : 1.0);
    bool ok = true;
    for (std::size_t a = 0; a < k && ok; ++a) {
      for (std::size_t b = a + 1; b < k; ++b) {
        double sq = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
          const double diff = centers[a * dim + j] - centers[b * dim + j];
          sq += diff * diff;
        }
        if (sq < separation * separation) {
          ok = false;
          break;
        }
      }
    }
    if (ok) return centers;
  }
  fail("make_blobs: could not place " + std::to_string(k) +
       " centers at separation " + std::to_string(separation) + " in " +
       std::to_string(dim) + " dimensions after 1000 attempts");
}

}  // namespace

MultiViewDataset make_blobs(const SynthSpec& spec) {
  spec.validate();
  RngStream master(spec.seed);
  RngStream center_rng = master.derive("centers");
  RngStream sample_rng = master.derive("samples");

  const std::size_t n = spec.sample_count, k = spec.cluster_count, v = spec.view_count;
  std::vector<std::vector<double>> centers(v);
  for (std::size_t m = 0; m < v; ++m) {
    centers[m] = draw_centers(k, spec.view_dims[m], spec.separation, center_rng);
  }

  MultiViewDataset dataset;
  dataset.name = spec.canonical();
  dataset.classes = k;
  dataset.labels.resize(n);
  for (std::size_t m = 0; m < v; ++m) {
    dataset.views.push_back(Tensor::zeros({n, spec.view_dims[m]}));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % k;
    dataset.labels[i] = static_cast<int>(label);
    for (std::size_t m = 0; m < v; ++m) {
      const std::size_t dim = spec.view_dims[m];
      const double spread = spec.spread_for(m);
      double* row = dataset.views[m].values().data() + i * dim;
      const double* center = centers[m].data() + label * dim;
      for (std::size_t j = 0; j < dim; ++j) {
        row[j] = center[j] + spread * sample_rng.normal();
      }
    }
  }
  return dataset;
}

NormalizeMode parse_normalize_mode(const std::string& name) {
  if (name == "none") return NormalizeMode::none;
  if (name == "zscore") return NormalizeMode::zscore;
  if (name == "minmax") return NormalizeMode::minmax;
  throw std::invalid_argument("unknown normalize mode '" + name +
                              "' (expected none, zscore or minmax)");
}

std::string normalize_mode_name(NormalizeMode mode) {
  switch (mode) {
    case NormalizeMode::none: return "none";
    case NormalizeMode::zscore: return "zscore";
    case NormalizeMode::minmax: return "minmax";
  }
  return "none";
}

MultiViewDataset normalize(const MultiViewDataset& dataset, NormalizeMode mode) {
  dataset.validate();
  MultiViewDataset out;
  out.name = dataset.name;
  out.labels = dataset.labels;
  out.classes = dataset.classes;
  for (const Tensor& view : dataset.views) {
    Tensor scaled = view.clone();
    if (mode != NormalizeMode::none) {
      const std::size_t n = view.dim(0), d = view.cols();
      auto values = scaled.values();
      for (std::size_t j = 0; j < d; ++j) {
        if (mode == NormalizeMode::zscore) {
          double mean = 0.0;
          for (std::size_t i = 0; i < n; ++i) mean += values[i * d + j];
          mean /= static_cast<double>(n);
          double var = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            const double diff = values[i * d + j] - mean;
            var += diff * diff;
          }
          var /= static_cast<double>(n);
          const double std_dev = std::sqrt(var);
          for (std::size_t i = 0; i < n; ++i) {
            values[i * d + j] =
                std_dev > 0.0 ? (values[i * d + j] - mean) / std_dev : 0.0;
          }
        } else {
          double lo = values[j], hi = values[j];
          for (std::size_t i = 1; i < n; ++i) {
            lo = std::min(lo, values[i * d + j]);
            hi = std::max(hi, values[i * d + j]);
          }
          const double range = hi - lo;
          for (std::size_t i = 0; i < n; ++i) {
            values[i * d + j] = range > 0.0 ? (values[i * d + j] - lo) / range : 0.0;
          }
        }
      }
    }
    out.views.push_back(std::move(scaled));
  }
  return out;
}

namespace {

Tensor load_csv_view(const std::filesystem::path& path, std::size_t rows,
                     std::size_t cols, std::size_t view_index) {
  std::ifstream in(path);
  if (!in) fail("dataset: cannot open " + path.string());
  Tensor view = Tensor::zeros({rows, cols});
  auto values = view.values();
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    if (row >= rows) {
      fail("dataset: view " + std::to_string(view_index) + " file " + path.string() +
           " has more than the declared " + std::to_string(rows) + " rows");
    }
    std::size_t col = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string field = line.substr(
          start, comma == std::string::npos ? std::string::npos : comma - start);
      if (col >= cols) {
        fail("dataset: view " + std::to_string(view_index) + " row " +
             std::to_string(row) + " has more than " + std::to_string(cols) +
             " columns");
      }
      char* end = nullptr;
      const double value = std::strtod(field.c_str(), &end);
      if (end == field.c_str() || *end != '\0') {
        fail("dataset: view " + std::to_string(view_index) + " row " +
             std::to_string(row) + " col " + std::to_string(col) +
             ": unparseable value '" + field + "'");
      }
      if (!std::isfinite(value)) {
        fail("dataset: view " + std::to_string(view_index) + " row " +
             std::to_string(row) + " col " + std::to_string(col) +
             ": non-finite value");
      }
      values[row * cols + col] = value;
      ++col;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (col != cols) {
      fail("dataset: view " + std::to_string(view_index) + " row " +
           std::to_string(row) + " has " + std::to_string(col) + " columns, declared " +
           std::to_string(cols));
    }
    ++row;
  }
  if (row != rows) {
    fail("dataset: view " + std::to_string(view_index) + " file " + path.string() +
         " has " + std::to_string(row) + " rows, declared " + std::to_string(rows));
  }
  return view;
}

Tensor load_f32_view(const std::filesystem::path& path, std::size_t rows,
                     std::size_t cols, std::size_t view_index) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("dataset: cannot open " + path.string());
  const std::uintmax_t expected = static_cast<std::uintmax_t>(rows) * cols * 4;
  const std::uintmax_t actual = std::filesystem::file_size(path);
  if (actual != expected) {
    fail("dataset: view " + std::to_string(view_index) + " file " + path.string() +
         " is " + std::to_string(actual) + " bytes, declared shape needs " +
         std::to_string(expected));
  }
  Tensor view = Tensor::zeros({rows, cols});
  auto values = view.values();
  std::vector<unsigned char> buf(rows * cols * 4);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!in) fail("dataset: short read from " + path.string());
  for (std::size_t i = 0; i < rows * cols; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(buf[i * 4 + b]) << (8 * b);
    }
    const float value = std::bit_cast<float>(bits);
    if (!std::isfinite(value)) {
      fail("dataset: view " + std::to_string(view_index) + " row " +
           std::to_string(i / cols) + " col " + std::to_string(i % cols) +
           ": non-finite value");
    }
    values[i] = static_cast<double>(value);
  }
  return view;
}

}  // namespace

MultiViewDataset load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) fail("dataset: cannot open manifest " + manifest_path.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    fail("dataset: bad manifest " + manifest_path.string() + ": " + e.what());
  }
  const std::filesystem::path base = manifest_path.parent_path();

  MultiViewDataset dataset;
  dataset.name = manifest.value("name", manifest_path.stem().string());
  if (!manifest.contains("views") || !manifest["views"].is_array() ||
      manifest["views"].empty()) {
    fail("dataset: manifest " + manifest_path.string() + " declares no views");
  }
  std::size_t index = 0;
  for (const json& entry : manifest["views"]) {
    const auto file = entry.at("file").get<std::string>();
    const auto rows = entry.at("rows").get<std::size_t>();
    const auto cols = entry.at("cols").get<std::size_t>();
    const ViewEncoding encoding = parse_encoding(entry.at("encoding").get<std::string>());
    const std::filesystem::path path = base / file;
    dataset.views.push_back(encoding == ViewEncoding::csv
                                ? load_csv_view(path, rows, cols, index)
                                : load_f32_view(path, rows, cols, index));
    ++index;
  }
  for (std::size_t m = 1; m < dataset.views.size(); ++m) {
    if (dataset.views[m].dim(0) != dataset.views[0].dim(0)) {
      fail("dataset: view " + std::to_string(m) + " has " +
           std::to_string(dataset.views[m].dim(0)) + " rows, view 0 has " +
           std::to_string(dataset.views[0].dim(0)));
    }
  }
  if (manifest.contains("classes")) {
    dataset.classes = manifest["classes"].get<std::size_t>();
  }
  if (manifest.contains("labels")) {
    const std::filesystem::path path = base / manifest["labels"].get<std::string>();
    std::ifstream labels_in(path);
    if (!labels_in) fail("dataset: cannot open labels file " + path.string());
    std::string line;
    while (std::getline(labels_in, line)) {
      if (line.empty()) continue;
      char* end = nullptr;
      const long value = std::strtol(line.c_str(), &end, 10);
      if (end == line.c_str() || *end != '\0') {
        fail("dataset: labels file " + path.string() + ": unparseable line '" + line + "'");
      }
      dataset.labels.push_back(static_cast<int>(value));
    }
    if (dataset.labels.size() != dataset.sample_count()) {
      fail("dataset: labels file " + path.string() + " has " +
           std::to_string(dataset.labels.size()) + " entries for " +
           std::to_string(dataset.sample_count()) + " samples");
    }
    if (dataset.classes == 0) {
      int max_label = -1;
      for (int y : dataset.labels) max_label = std::max(max_label, y);
      dataset.classes = static_cast<std::size_t>(max_label + 1);
    }
  }
  dataset.validate();
  return dataset;
}

std::filesystem::path save_dataset(const MultiViewDataset& dataset,
                                   const std::filesystem::path& dir,
                                   ViewEncoding encoding) {
  dataset.validate();
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["name"] = dataset.name;
  json views = json::array();
  for (std::size_t m = 0; m < dataset.views.size(); ++m) {
    const Tensor& view = dataset.views[m];
    const std::string file =
        "view" + std::to_string(m) + (encoding == ViewEncoding::csv ? ".csv" : ".f32");
    const std::filesystem::path path = dir / file;
    if (encoding == ViewEncoding::csv) {
      std::ofstream out(path);
      if (!out) fail("dataset: cannot open " + path.string() + " for writing");
      auto values = view.values();
      const std::size_t cols = view.cols();
      char buf[40];
      for (std::size_t i = 0; i < view.dim(0); ++i) {
        std::string line;
        for (std::size_t j = 0; j < cols; ++j) {
          std::snprintf(buf, sizeof buf, "%.17g", values[i * cols + j]);
          if (j) line += ',';
          line += buf;
        }
        line += '\n';
        out << line;
      }
      if (!out) fail("dataset: write to " + path.string() + " failed");
    } else {
      std::ofstream out(path, std::ios::binary);
      if (!out) fail("dataset: cannot open " + path.string() + " for writing");
      for (double v : view.values()) {
        const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        unsigned char bytes[4];
        for (int b = 0; b < 4; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
        out.write(reinterpret_cast<const char*>(bytes), 4);
      }
      if (!out) fail("dataset: write to " + path.string() + " failed");
    }
    views.push_back(json{{"file", file},
                         {"rows", view.dim(0)},
                         {"cols", view.cols()},
                         {"encoding", encoding_name(encoding)}});
  }
  manifest["views"] = views;
  if (dataset.has_labels()) {
    const std::filesystem::path labels_path = dir / "labels.txt";
    std::ofstream out(labels_path);
    if (!out) fail("dataset: cannot open " + labels_path.string() + " for writing");
    for (int y : dataset.labels) out << y << '\n';
    if (!out) fail("dataset: write to " + labels_path.string() + " failed");
    manifest["labels"] = "labels.txt";
    manifest["classes"] = dataset.classes;
  }
  const std::filesystem::path manifest_path = dir / "manifest.json";
  std::ofstream out(manifest_path);
  if (!out) fail("dataset: cannot open " + manifest_path.string() + " for writing");
  out << manifest.dump(2) << '\n';
  if (!out) fail("dataset: write to " + manifest_path.string() + " failed");
  return manifest_path;
}

}  // namespace rml
