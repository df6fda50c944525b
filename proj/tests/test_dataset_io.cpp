#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "rml/dataset.hpp"
#include "rml/rng.hpp"

using namespace rml;
namespace fs = std::filesystem;

namespace {

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.values()[i] != b.values()[i]) return false;
  }
  return true;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

double sq_dist(const Tensor& t, std::size_t r1, std::size_t r2) {
  const std::size_t d = t.cols();
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = t.values()[r1 * d + j] - t.values()[r2 * d + j];
    s += diff * diff;
  }
  return s;
}

}  // namespace

TEST_CASE("spec strings parse into full configurations") {
  SynthSpec spec = parse_synth_spec("blobs,v=3,n=500,k=5,dims=20:50:10,spread=2,sep=6,seed=1");
  CHECK(spec.preset == "blobs");
  CHECK(spec.view_count == 3);
  CHECK(spec.sample_count == 500);
  CHECK(spec.cluster_count == 5);
  CHECK(spec.view_dims == std::vector<std::size_t>{20, 50, 10});
  CHECK(spec.spread == std::vector<double>{2.0});
  CHECK(spec.separation == 6.0);
  CHECK(spec.seed == 1);

  // defaults: 10-wide views, unit spread
  SynthSpec tiny = parse_synth_spec("blobs,v=2,n=40,k=3");
  CHECK(tiny.view_dims == std::vector<std::size_t>{10, 10});
  CHECK(tiny.spread_for(0) == 1.0);
  CHECK(tiny.spread_for(1) == 1.0);

  // per-view spreads broadcast or match the view count
  SynthSpec multi = parse_synth_spec("blobs,v=2,n=40,k=3,spread=0.5:2");
  CHECK(multi.spread_for(0) == 0.5);
  CHECK(multi.spread_for(1) == 2.0);

  CHECK_THROWS_AS(parse_synth_spec("blobs,vv=3"), std::invalid_argument);
  CHECK_THROWS_AS(parse_synth_spec("rings,v=3,n=10,k=2"), std::invalid_argument);
  CHECK_THROWS_AS(parse_synth_spec("blobs,v=2,n=40,k=3,spread=1:2:3"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_synth_spec("blobs,v=0,n=40,k=3"), std::invalid_argument);

  // unknown keys name the valid ones
  try {
    parse_synth_spec("blobs,bogus=1");
    FAIL("expected an error");
  } catch (const std::invalid_argument& err) {
    CHECK(std::string(err.what()).find("bogus") != std::string::npos);
  }

  CHECK(spec.canonical() == parse_synth_spec(spec.canonical()).canonical());
}

TEST_CASE("blob generation: shapes, labels, determinism") {
  SynthSpec spec = parse_synth_spec("blobs,v=3,n=50,k=5,dims=8:12:6,spread=1,sep=7,seed=3");
  MultiViewDataset data = make_blobs(spec);
  CHECK(data.view_count() == 3);
  CHECK(data.sample_count() == 50);
  CHECK(data.view_dims() == std::vector<std::size_t>{8, 12, 6});
  CHECK(data.classes == 5);
  REQUIRE(data.labels.size() == 50);
  for (std::size_t i = 0; i < 50; ++i) CHECK(data.labels[i] == int(i % 5));
  CHECK_NOTHROW(data.validate());

  MultiViewDataset again = make_blobs(spec);
  for (std::size_t m = 0; m < 3; ++m) CHECK(bitwise_equal(data.views[m], again.views[m]));

  SynthSpec other = spec;
  other.seed = 4;
  MultiViewDataset different = make_blobs(other);
  CHECK_FALSE(bitwise_equal(data.views[0], different.views[0]));

  // n == k: one sample per cluster
  SynthSpec exact = parse_synth_spec("blobs,v=1,n=4,k=4,dims=5,sep=5,seed=9");
  MultiViewDataset one_each = make_blobs(exact);
  CHECK(one_each.sample_count() == 4);
  CHECK(one_each.labels == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("blob generation: same-class points huddle, separation is honored") {
  SynthSpec spec = parse_synth_spec("blobs,v=2,n=40,k=4,dims=6:9,spread=0.01,sep=8,seed=11");
  MultiViewDataset data = make_blobs(spec);

  for (std::size_t m = 0; m < 2; ++m) {
    const Tensor& v = data.views[m];
    for (std::size_t i = 0; i < 40; ++i) {
      for (std::size_t j = i + 1; j < 40; ++j) {
        const double d2 = sq_dist(v, i, j);
        if (data.labels[i] == data.labels[j]) {
          CHECK(d2 < 1.0);  // tight around a shared center
        } else {
          // centers at least `sep` apart dwarf the 0.01 spread
          CHECK(d2 > 0.9 * 8.0 * 8.0);
        }
      }
    }
  }
}

TEST_CASE("blob generation: an unreachable separation fails loudly") {
  SynthSpec spec = parse_synth_spec("blobs,v=1,n=20,k=10,dims=2,sep=1000,seed=1");
  CHECK_THROWS_AS(make_blobs(spec), std::runtime_error);
}

TEST_CASE("z-score normalization: zero mean, unit variance, constants to zero") {
  SynthSpec spec = parse_synth_spec("blobs,v=2,n=30,k=3,dims=4:3,spread=2,sep=6,seed=13");
  MultiViewDataset data = make_blobs(spec);
  // plant a constant feature
  for (std::size_t i = 0; i < 30; ++i) data.views[0].values()[i * 4 + 2] = 7.5;

  MultiViewDataset normed = normalize(data, NormalizeMode::zscore);
  // source untouched
  CHECK(data.views[0].values()[2] == 7.5);

  for (std::size_t m = 0; m < 2; ++m) {
    const std::size_t d = normed.views[m].cols();
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0.0, var = 0.0;
      for (std::size_t i = 0; i < 30; ++i) mean += normed.views[m].values()[i * d + j];
      mean /= 30.0;
      for (std::size_t i = 0; i < 30; ++i) {
        const double c = normed.views[m].values()[i * d + j] - mean;
        var += c * c;
      }
      var /= 30.0;
      if (m == 0 && j == 2) {
        CHECK(std::abs(mean) < 1e-12);  // constant feature collapses to zero
        CHECK(var == 0.0);
      } else {
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
      }
    }
  }

  MultiViewDataset untouched = normalize(data, NormalizeMode::none);
  for (std::size_t m = 0; m < 2; ++m) CHECK(bitwise_equal(untouched.views[m], data.views[m]));
}

TEST_CASE("min-max normalization lands every feature in [0, 1]") {
  SynthSpec spec = parse_synth_spec("blobs,v=1,n=25,k=3,dims=5,spread=3,sep=6,seed=17");
  MultiViewDataset data = make_blobs(spec);
  for (std::size_t i = 0; i < 25; ++i) data.views[0].values()[i * 5 + 4] = -2.25;

  MultiViewDataset normed = normalize(data, NormalizeMode::minmax);
  const std::size_t d = 5;
  for (std::size_t j = 0; j < d; ++j) {
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < 25; ++i) {
      const double v = normed.views[0].values()[i * d + j];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (j == 4) {
      CHECK(lo == 0.0);  // constant features map to zero
      CHECK(hi == 0.0);
    } else {
      CHECK(lo == 0.0);
      CHECK(hi == 1.0);
    }
  }

  CHECK(parse_normalize_mode("zscore") == NormalizeMode::zscore);
  CHECK(parse_normalize_mode("minmax") == NormalizeMode::minmax);
  CHECK(parse_normalize_mode("none") == NormalizeMode::none);
  CHECK_THROWS_AS(parse_normalize_mode("standard"), std::invalid_argument);
  CHECK(normalize_mode_name(NormalizeMode::zscore) == "zscore");
}

TEST_CASE("csv round trip preserves doubles bit for bit") {
  SynthSpec spec = parse_synth_spec("blobs,v=2,n=12,k=3,dims=4:3,spread=1.7,sep=6,seed=19");
  MultiViewDataset data = make_blobs(spec);
  data.name = "roundtrip-csv";

  const fs::path dir = fresh_dir("rml_test_csv");
  const fs::path manifest = save_dataset(data, dir, ViewEncoding::csv);
  MultiViewDataset loaded = load_dataset(manifest);

  CHECK(loaded.name == data.name);
  CHECK(loaded.classes == data.classes);
  CHECK(loaded.labels == data.labels);
  REQUIRE(loaded.view_count() == data.view_count());
  for (std::size_t m = 0; m < data.view_count(); ++m) {
    CHECK(bitwise_equal(loaded.views[m], data.views[m]));
  }
  fs::remove_all(dir);
}

TEST_CASE("f32 round trip is exact for float-representable payloads") {
  MultiViewDataset data;
  data.name = "roundtrip-f32";
  RngStream rng(23);
  Tensor v = Tensor::zeros({9, 4});
  for (double& x : v.values()) x = double(float(rng.normal()));  // pre-quantized
  data.views.push_back(v);
  data.labels = {0, 1, 2, 0, 1, 2, 0, 1, 2};
  data.classes = 3;

  const fs::path dir = fresh_dir("rml_test_f32");
  const fs::path manifest = save_dataset(data, dir, ViewEncoding::f32);
  MultiViewDataset loaded = load_dataset(manifest);
  CHECK(bitwise_equal(loaded.views[0], data.views[0]));
  fs::remove_all(dir);
}

TEST_CASE("hand-written manifest with mixed encodings loads") {
  const fs::path dir = fresh_dir("rml_test_mixed");
  {
    std::ofstream csv(dir / "a.csv");
    csv << "1.5,2,3\n-4,5.25,6\n7,8,9\n0,0,1\n";
    std::ofstream bin(dir / "b.f32", std::ios::binary);
    const float vals[8] = {1, 2, 3, 4, 5, 6, 7, 8};
    bin.write(reinterpret_cast<const char*>(vals), sizeof vals);
    std::ofstream labels(dir / "labels.txt");
    labels << "0\n1\n1\n0\n";
    nlohmann::json manifest = {
        {"name", "mixed"},
        {"views",
         {{{"file", "a.csv"}, {"rows", 4}, {"cols", 3}, {"encoding", "csv"}},
          {{"file", "b.f32"}, {"rows", 4}, {"cols", 2}, {"encoding", "f32le-rowmajor"}}}},
        {"labels", "labels.txt"},
        {"classes", 2}};
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2);
  }
  MultiViewDataset data = load_dataset(dir / "manifest.json");
  CHECK(data.name == "mixed");
  CHECK(data.sample_count() == 4);
  CHECK(data.view_dims() == std::vector<std::size_t>{3, 2});
  CHECK(data.views[0].values()[4] == 5.25);
  CHECK(data.views[1].values()[7] == 8.0);
  CHECK(data.labels == std::vector<int>{0, 1, 1, 0});
  CHECK(data.classes == 2);
  fs::remove_all(dir);
}

TEST_CASE("loader rejects malformed inputs with precise errors") {
  const fs::path dir = fresh_dir("rml_test_bad");
  auto write_manifest = [&](const nlohmann::json& views, const nlohmann::json& extra = {}) {
    nlohmann::json manifest = {{"name", "bad"}, {"views", views}};
    for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2);
  };

  SUBCASE("missing view file") {
    write_manifest({{{"file", "nope.csv"}, {"rows", 2}, {"cols", 2}, {"encoding", "csv"}}});
    CHECK_THROWS_AS(load_dataset(dir / "manifest.json"), std::runtime_error);
  }

  SUBCASE("csv token that is not a number") {
    std::ofstream csv(dir / "a.csv");
    csv << "1,2\n3,oops\n";
    csv.close();
    write_manifest({{{"file", "a.csv"}, {"rows", 2}, {"cols", 2}, {"encoding", "csv"}}});
    try {
      load_dataset(dir / "manifest.json");
      FAIL("expected a parse error");
    } catch (const std::runtime_error& err) {
      const std::string what = err.what();
      CHECK(what.find("oops") != std::string::npos);
      CHECK(what.find("row 1") != std::string::npos);
    }
  }

  SUBCASE("csv with a short row") {
    std::ofstream csv(dir / "a.csv");
    csv << "1,2\n3\n";
    csv.close();
    write_manifest({{{"file", "a.csv"}, {"rows", 2}, {"cols", 2}, {"encoding", "csv"}}});
    CHECK_THROWS_AS(load_dataset(dir / "manifest.json"), std::runtime_error);
  }

  SUBCASE("csv with non-finite values") {
    std::ofstream csv(dir / "a.csv");
    csv << "1,2\nnan,4\n";
    csv.close();
    write_manifest({{{"file", "a.csv"}, {"rows", 2}, {"cols", 2}, {"encoding", "csv"}}});
    CHECK_THROWS_AS(load_dataset(dir / "manifest.json"), std::runtime_error);
  }

  SUBCASE("f32 payload with the wrong byte count") {
    std::ofstream bin(dir / "b.f32", std::ios::binary);
    const float vals[3] = {1, 2, 3};
    bin.write(reinterpret_cast<const char*>(vals), sizeof vals);
    bin.close();
    write_manifest(
        {{{"file", "b.f32"}, {"rows", 2}, {"cols", 2}, {"encoding", "f32le-rowmajor"}}});
    CHECK_THROWS_AS(load_dataset(dir / "manifest.json"), std::runtime_error);
  }

  SUBCASE("views with mismatched row counts") {
    std::ofstream a(dir / "a.csv");
    a << "1,2\n3,4\n";
    a.close();
    std::ofstream b(dir / "b.csv");
    b << "1\n2\n3\n";
    b.close();
    write_manifest({{{"file", "a.csv"}, {"rows", 2}, {"cols", 2}, {"encoding", "csv"}},
                    {{"file", "b.csv"}, {"rows", 3}, {"cols", 1}, {"encoding", "csv"}}});
    CHECK_THROWS_AS(load_dataset(dir / "manifest.json"), std::runtime_error);
  }

  SUBCASE("label count disagrees with the rows") {
    std::ofstream a(dir / "a.csv");
    a << "1,2\n3,4\n";
    a.close();
    std::ofstream labels(dir / "labels.txt");
    labels << "0\n1\n0\n";
    labels.close();
    write_manifest({{{"file", "a.csv"}, {"rows", 2}, {"cols", 2}, {"encoding", "csv"}}},
                   {{"labels", "labels.txt"}});
    CHECK_THROWS_AS(load_dataset(dir / "manifest.json"), std::runtime_error);
  }

  SUBCASE("label outside the declared class range") {
    std::ofstream a(dir / "a.csv");
    a << "1,2\n3,4\n";
    a.close();
    std::ofstream labels(dir / "labels.txt");
    labels << "0\n5\n";
    labels.close();
    write_manifest({{{"file", "a.csv"}, {"rows", 2}, {"cols", 2}, {"encoding", "csv"}}},
                   {{"labels", "labels.txt"}, {"classes", 2}});
    CHECK_THROWS_AS(load_dataset(dir / "manifest.json"), std::invalid_argument);
  }

  SUBCASE("unknown encoding name") {
    std::ofstream a(dir / "a.csv");
    a << "1,2\n3,4\n";
    a.close();
    write_manifest({{{"file", "a.csv"}, {"rows", 2}, {"cols", 2}, {"encoding", "utf8"}}});
    CHECK_THROWS_AS(load_dataset(dir / "manifest.json"), std::invalid_argument);
  }

  SUBCASE("manifest that is not json at all") {
    std::ofstream out(dir / "manifest.json");
    out << "definitely not json{";
    out.close();
    CHECK_THROWS_AS(load_dataset(dir / "manifest.json"), std::runtime_error);
  }

  fs::remove_all(dir);
}

TEST_CASE("labels are inferred as max+1 classes when the manifest omits them") {
  const fs::path dir = fresh_dir("rml_test_infer");
  {
    std::ofstream a(dir / "a.csv");
    a << "1,2\n3,4\n5,6\n";
    std::ofstream labels(dir / "labels.txt");
    labels << "0\n2\n1\n";
    nlohmann::json manifest = {
        {"name", "infer"},
        {"views", {{{"file", "a.csv"}, {"rows", 3}, {"cols", 2}, {"encoding", "csv"}}}},
        {"labels", "labels.txt"}};
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2);
  }
  MultiViewDataset data = load_dataset(dir / "manifest.json");
  CHECK(data.classes == 3);
  CHECK(data.has_labels());
  fs::remove_all(dir);
}

TEST_CASE("dataset validation catches inconsistent shapes") {
  MultiViewDataset data;
  data.views.push_back(Tensor::zeros({4, 3}));
  data.views.push_back(Tensor::zeros({5, 2}));  // row mismatch
  CHECK_THROWS_AS(data.validate(), std::invalid_argument);

  data.views[1] = Tensor::zeros({4, 2});
  CHECK_NOTHROW(data.validate());

  data.labels = {0, 1};  // wrong length
  CHECK_THROWS_AS(data.validate(), std::invalid_argument);
  data.labels = {0, 1, 0, 1};
  data.classes = 2;
  CHECK_NOTHROW(data.validate());
  data.labels = {0, 3, 0, 1};  // outside classes
  CHECK_THROWS_AS(data.validate(), std::invalid_argument);
}

TEST_CASE("encoding names round trip") {
  CHECK(encoding_name(ViewEncoding::csv) == "csv");
  CHECK(encoding_name(ViewEncoding::f32) == "f32le-rowmajor");
  CHECK(parse_encoding("csv") == ViewEncoding::csv);
  CHECK(parse_encoding("f32le-rowmajor") == ViewEncoding::f32);
  CHECK_THROWS_AS(parse_encoding("parquet"), std::invalid_argument);
}
