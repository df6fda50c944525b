// Command-line interface: synthetic data generation, self-supervised
// training, clustering and classification evaluation, and a gradient
// self-check, all on multi-view datasets.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rml/checkpoint.hpp"
#include "rml/classification.hpp"
#include "rml/clustering.hpp"
#include "rml/dataset.hpp"
#include "rml/gradient_suite.hpp"
#include "rml/metrics.hpp"
#include "rml/trainer.hpp"

namespace {

struct DataOpts {
  std::string manifest;
  std::string synth;
  std::string normalize = "zscore";

  void attach(CLI::App* cmd) {
    auto* data = cmd->add_option("--data", manifest, "dataset manifest (json)")
                     ->check(CLI::ExistingFile);
    auto* synth_opt = cmd->add_option(
        "--synth", synth,
        "synthetic spec, e.g. blobs,v=3,n=500,k=5,dims=20:50:10,spread=2,sep=6,seed=1");
    data->excludes(synth_opt);
    synth_opt->excludes(data);
    cmd->add_option("--normalize", normalize, "feature scaling: none, zscore or minmax")
        ->check(CLI::IsMember({"none", "zscore", "minmax"}));
  }

  rml::MultiViewDataset load() const {
    if (manifest.empty() && synth.empty()) {
      throw std::invalid_argument("supply --data or --synth");
    }
    rml::MultiViewDataset data = manifest.empty()
                                     ? rml::make_blobs(rml::parse_synth_spec(synth))
                                     : rml::load_dataset(manifest);
    return rml::normalize(data, rml::parse_normalize_mode(normalize));
  }
};

struct ModelOpts {
  std::size_t embed_dim = 256;
  std::size_t fused_dim = 256;
  std::size_t ffn_hidden = 0;
  double dropout = 0.2;

  void attach(CLI::App* cmd) {
    cmd->add_option("--embed-dim", embed_dim, "per-view token width")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--fused-dim", fused_dim, "fused representation width")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--ffn-hidden", ffn_hidden,
                    "feed-forward hidden width (0 = token width)");
    cmd->add_option("--dropout", dropout, "dropout rate in [0, 1)");
  }

  rml::FusionConfig fusion() const {
    rml::FusionConfig fc;
    fc.token_dim = embed_dim;
    fc.fused_dim = fused_dim;
    fc.ffn_hidden = ffn_hidden;
    fc.dropout_rate = dropout;
    return fc;
  }
};

struct TrainOpts {
  double p = 0.25;
  double sigma = 0.4;
  double r = 0.25;
  double tau = 0.5;
  double lr = 3e-4;
  std::size_t epochs = 200;
  std::size_t batch = 0;
  std::uint64_t seed = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--p", p, "per-cell noise probability");
    cmd->add_option("--sigma", sigma, "noise standard deviation");
    cmd->add_option("--r", r, "fraction of samples with zeroed views");
    cmd->add_option("--tau", tau, "alignment softmax temperature");
    cmd->add_option("--lr", lr, "Adam learning rate");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--batch", batch, "batch size (0 = min(256, N))");
    cmd->add_option("--seed", seed, "master seed");
  }

  rml::PerturbationConfig perturbation() const {
    rml::PerturbationConfig pc{p, sigma, r};
    pc.validate();
    return pc;
  }

  rml::TrainConfig training(double lambda) const {
    rml::TrainConfig tc;
    tc.learning_rate = lr;
    tc.batch_size = batch;
    tc.epochs = epochs;
    tc.tau = tau;
    tc.lambda = lambda;
    tc.seed = seed;
    tc.validate();
    return tc;
  }
};

rml::AblationFlags parse_ablations(const std::vector<std::string>& names) {
  rml::AblationFlags flags;
  for (const std::string& name : names) {
    if (name == "atten") {
      flags.no_attention = true;
    } else if (name == "np") {
      flags.no_noise_branch = true;
    } else if (name == "mp") {
      flags.no_unusable_branch = true;
    } else {
      throw std::invalid_argument("unknown ablation '" + name +
                                  "' (expected atten, np or mp)");
    }
  }
  return flags;
}

void print_metrics(const std::vector<std::pair<std::string, double>>& metrics) {
  std::fputs(rml::format_metrics_block(metrics).c_str(), stdout);
}

int run_train(const DataOpts& data_opts, const ModelOpts& model_opts,
              const TrainOpts& train_opts, const std::vector<std::string>& ablations,
              const std::string& out, const std::string& trace_path) {
  rml::MultiViewDataset data = data_opts.load();
  data.validate();
  rml::TrainResult result =
      rml::train_self_supervised(data.views, model_opts.fusion(),
                                 train_opts.perturbation(), train_opts.training(1.0),
                                 parse_ablations(ablations));
  rml::save_checkpoint(result.model, out);
  if (!trace_path.empty()) rml::write_loss_trace(trace_path, result.trace);
  print_metrics({{"steps", double(result.trace.values.size())},
                 {"final_loss", result.trace.values.back()}});
  std::printf("model=%s\n", out.c_str());
  return 0;
}

int run_cluster(const DataOpts& data_opts, const std::string& model_path, std::size_t k,
                std::size_t restarts, std::uint64_t seed, const std::string& record) {
  rml::MultiViewDataset data = data_opts.load();
  data.validate();
  rml::FusionModel model = rml::load_checkpoint(model_path);
  rml::Tensor z = rml::infer_representations(model, data.views);

  if (k == 0) {
    if (data.classes == 0) {
      throw std::invalid_argument("supply --k: the dataset declares no classes");
    }
    k = data.classes;
  }
  rml::KMeansConfig cfg;
  cfg.k = k;
  cfg.restarts = restarts;
  rml::RngStream rng(seed);
  rml::ClusteringResult clusters = rml::kmeans(z, cfg, rng);

  std::vector<std::pair<std::string, double>> metrics = {
      {"inertia", clusters.inertia},
      {"winning_restart", double(clusters.winning_restart)}};
  if (data.has_labels()) {
    metrics.emplace_back("acc", rml::clustering_acc(clusters.assignments, data.labels));
    metrics.emplace_back("nmi", rml::nmi(clusters.assignments, data.labels));
  }
  print_metrics(metrics);
  if (!record.empty()) {
    const std::string canonical = "cluster,model=" + model_path +
                                  ",k=" + std::to_string(k) +
                                  ",seed=" + std::to_string(seed);
    rml::write_metrics_record(record, metrics, seed, rml::config_hash_hex(canonical));
  }
  return 0;
}

int run_classify(const DataOpts& data_opts, const ModelOpts& model_opts,
                 const TrainOpts& train_opts, const std::string& loss_name,
                 double lambda, double noise_rate, double split,
                 const std::string& out, const std::string& record) {
  rml::MultiViewDataset data = data_opts.load();
  data.validate();
  if (!data.has_labels()) {
    throw std::invalid_argument("classification needs a labeled dataset");
  }
  const rml::LossKind kind = loss_name == "mce"
                                 ? rml::LossKind::multi_branch_cross_entropy
                                 : rml::LossKind::cross_entropy;
  rml::ClassifierTrainResult result = rml::train_classifier(
      data.views, data.labels, data.classes, model_opts.fusion(),
      train_opts.perturbation(), train_opts.training(lambda), kind, noise_rate, split);

  const std::vector<std::pair<std::string, double>> metrics = {
      {"accuracy", result.report.accuracy},
      {"macro_precision", result.report.macro_precision},
      {"macro_f1", result.report.macro_f1},
      {"train_size", double(result.train_indices.size())},
      {"test_size", double(result.test_indices.size())}};
  print_metrics(metrics);
  if (!out.empty()) rml::save_checkpoint(result.model, out);
  if (!record.empty()) {
    const std::string canonical = "classify,loss=" + loss_name +
                                  ",lambda=" + std::to_string(lambda) +
                                  ",noise=" + std::to_string(noise_rate) +
                                  ",seed=" + std::to_string(train_opts.seed);
    rml::write_metrics_record(record, metrics, train_opts.seed,
                              rml::config_hash_hex(canonical));
  }
  return 0;
}

int run_synth(const std::string& spec_text, const std::string& out,
              const std::string& encoding) {
  rml::SynthSpec spec = rml::parse_synth_spec(spec_text);
  rml::MultiViewDataset data = rml::make_blobs(spec);
  data.name = "synth-" + rml::config_hash_hex(spec.canonical());
  const auto manifest = rml::save_dataset(data, out, rml::parse_encoding(encoding));
  std::printf("manifest=%s\n", manifest.string().c_str());
  return 0;
}

int run_gradcheck(double step, double tolerance) {
  const auto entries = rml::run_model_gradient_suite(step, tolerance);
  for (const auto& e : entries) {
    std::printf("%s: max_rel_err=%.3e coords=%zu worst=%s %s\n", e.name.c_str(),
                e.report.max_rel_err, e.report.coords_checked,
                e.report.worst_coord.c_str(), e.report.pass ? "ok" : "FAIL");
  }
  return rml::all_passed(entries) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-view representation learning toolkit"};
  app.require_subcommand(1);

  // train
  auto* train_cmd =
      app.add_subcommand("train", "self-supervised training of the fusion network");
  DataOpts train_data;
  ModelOpts train_model;
  TrainOpts train_train;
  std::vector<std::string> ablations;
  std::string train_out, trace_path;
  train_data.attach(train_cmd);
  train_model.attach(train_cmd);
  train_train.attach(train_cmd);
  train_cmd->add_option("--ablate", ablations,
                        "disable a component: atten, np or mp (repeatable)");
  train_cmd->add_option("--out", train_out, "checkpoint output path")->required();
  train_cmd->add_option("--loss-trace", trace_path, "write per-step losses here");

  // cluster
  auto* cluster_cmd =
      app.add_subcommand("cluster", "k-means on inferred representations");
  DataOpts cluster_data;
  std::string cluster_model, cluster_record;
  std::size_t cluster_k = 0, cluster_restarts = 10;
  std::uint64_t cluster_seed = 0;
  cluster_data.attach(cluster_cmd);
  cluster_cmd->add_option("--model", cluster_model, "trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  cluster_cmd->add_option("--k", cluster_k, "cluster count (0 = dataset classes)");
  cluster_cmd->add_option("--restarts", cluster_restarts, "k-means restarts");
  cluster_cmd->add_option("--seed", cluster_seed, "clustering seed");
  cluster_cmd->add_option("--record", cluster_record, "write a json metrics record");

  // classify
  auto* classify_cmd = app.add_subcommand(
      "classify", "train the fusion network plus a linear head on labels");
  DataOpts classify_data;
  ModelOpts classify_model;
  TrainOpts classify_train;
  std::string classify_loss = "mce", classify_out, classify_record;
  double classify_lambda = 1.0, classify_noise = 0.0, classify_split = 0.7;
  classify_data.attach(classify_cmd);
  classify_model.attach(classify_cmd);
  classify_train.attach(classify_cmd);
  classify_cmd->add_option("--loss", classify_loss, "objective: ce or mce")
      ->check(CLI::IsMember({"ce", "mce"}));
  classify_cmd->add_option("--lambda", classify_lambda, "alignment term weight");
  classify_cmd->add_option("--noise-rate", classify_noise,
                           "symmetric label noise on the training split");
  classify_cmd->add_option("--split", classify_split, "training fraction");
  classify_cmd->add_option("--out", classify_out, "save the trained fusion network");
  classify_cmd->add_option("--record", classify_record, "write a json metrics record");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_spec = "blobs", synth_out, synth_encoding = "csv";
  synth_cmd->add_option("--spec", synth_spec, "spec string (see --synth on train)");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--encoding", synth_encoding, "csv or f32le-rowmajor")
      ->check(CLI::IsMember({"csv", "f32le-rowmajor"}));

  // gradcheck
  auto* grad_cmd = app.add_subcommand(
      "gradcheck", "verify analytic gradients against central differences");
  double grad_step = 1e-5, grad_tol = 1e-3;
  grad_cmd->add_option("--step", grad_step, "finite-difference step");
  grad_cmd->add_option("--tolerance", grad_tol, "max relative error allowed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (train_cmd->parsed()) {
      return run_train(train_data, train_model, train_train, ablations, train_out,
                       trace_path);
    }
    if (cluster_cmd->parsed()) {
      return run_cluster(cluster_data, cluster_model, cluster_k, cluster_restarts,
                         cluster_seed, cluster_record);
    }
    if (classify_cmd->parsed()) {
      return run_classify(classify_data, classify_model, classify_train, classify_loss,
                          classify_lambda, classify_noise, classify_split, classify_out,
                          classify_record);
    }
    if (synth_cmd->parsed()) {
      return run_synth(synth_spec, synth_out, synth_encoding);
    }
    if (grad_cmd->parsed()) {
      return run_gradcheck(grad_step, grad_tol);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
