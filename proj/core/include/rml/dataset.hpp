#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rml/tensor.hpp"

namespace rml {

struct MultiViewDataset {
  std::string name;
  std::vector<Tensor> views;  // each [N, D_m]
  std::vector<int> labels;    // empty when unlabeled
  std::size_t classes = 0;    // 0 when unknown

  std::size_t sample_count() const { return views.empty() ? 0 : views[0].dim(0); }
  std::size_t view_count() const { return views.size(); }
  std::vector<std::size_t> view_dims() const;
  bool has_labels() const { return !labels.empty(); }
  void validate() const;
};

enum class ViewEncoding { csv, f32 };

std::string encoding_name(ViewEncoding encoding);      // "csv" / "f32le-rowmajor"
ViewEncoding parse_encoding(const std::string& name);

// Synthetic multi-view Gaussian blobs: every view draws its own k cluster
// centers (isotropic Gaussian candidates, rejected until all pairwise
// distances reach `separation`), then each sample scatters around its
// class's center with per-view `spread`. Labels cycle 0..k-1.
struct SynthSpec {
  std::string preset = "blobs";
  std::size_t view_count = 3;
  std::size_t sample_count = 500;
  std::size_t cluster_count = 5;
  std::vector<std::size_t> view_dims = {20, 50, 10};
  std::vector<double> spread = {1.0};  // one entry broadcasts to all views
  double separation = 6.0;
  std::uint64_t seed = 0;

  void validate() const;
  double spread_for(std::size_t view) const;
  std::string canonical() const;
};

// Compact spec string: "blobs,v=3,n=500,k=5,dims=20:50:10,spread=2,sep=6,seed=1".
SynthSpec parse_synth_spec(const std::string& text);

MultiViewDataset make_blobs(const SynthSpec& spec);

enum class NormalizeMode { none, zscore, minmax };

NormalizeMode parse_normalize_mode(const std::string& name);
std::string normalize_mode_name(NormalizeMode mode);

// Per-feature, per-view rescaling; zero-variance (or constant) features map
// to 0. Returns a new dataset, inputs are untouched.
MultiViewDataset normalize(const MultiViewDataset& dataset, NormalizeMode mode);

// Dataset manifest: a JSON file naming the per-view payload files (csv or
// little-endian float32 row-major), their declared shapes, and optionally a
// labels file and class count. Payload paths are resolved relative to the
// manifest. Loading validates shapes against file contents and rejects
// non-finite values with their coordinates.
MultiViewDataset load_dataset(const std::filesystem::path& manifest_path);

// Writes view files, labels and the manifest into `dir`; returns the
// manifest path.
std::filesystem::path save_dataset(const MultiViewDataset& dataset,
                                   const std::filesystem::path& dir,
                                   ViewEncoding encoding);

}  // namespace rml
