// Command line front end: train-sae, embed, compare, bench-scaling, synth, tsne.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include "tsembed/harness.hpp"
#include "tsembed/parallel.hpp"
#include "tsembed/tsne.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

using namespace tsembed;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string join(const std::string &dir, const std::string &name) {
  return (fs::path(dir) / name).string();
}

void require_file(const std::string &path, const std::string &what) {
  if (!fs::exists(path))
    throw UsageError(what + " not found: " + path);
}

std::vector<std::string> split_list(const std::string &s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');)
    if (!item.empty())
      out.push_back(item);
  return out;
}

// train-sae

struct TrainArgs {
  std::string manifest, val_manifest, out = "runs/train-sae";
  std::size_t layers = 3, units = 60, batch = 32, max_iters = 1000, eval_every = 50;
  double lr = 0.006, dropout = 0.4, clip = 10.0;
  std::uint64_t seed = 1;
  bool bias = false;
};

int run_train(const TrainArgs &a) {
  require_file(a.manifest, "manifest");
  if (!a.val_manifest.empty())
    require_file(a.val_manifest, "validation manifest");
  TrainConfig cfg;
  cfg.learning_rate = a.lr;
  cfg.batch_size = a.batch;
  cfg.dropout_rate = a.dropout;
  cfg.max_iterations = a.max_iters;
  cfg.eval_every = a.eval_every;
  cfg.clip_norm = a.clip;
  cfg.seed = a.seed;
  const auto arch = uniform_architecture(a.layers, a.units, a.bias);
  std::cout << "train-sae: lr=" << cfg.learning_rate << " batch=" << cfg.batch_size
            << " dropout=" << cfg.dropout_rate << " layers=" << a.layers << " units=" << a.units
            << " max_iters=" << cfg.max_iterations << " seed=" << cfg.seed << std::endl;

  auto manifest = load_manifest(a.manifest);
  Corpus val = manifest.validation;
  if (!a.val_manifest.empty())
    val = load_manifest(a.val_manifest).validation;
  const json config{{"command", "train-sae"},     {"manifest", a.manifest},
                    {"val_manifest", a.val_manifest}, {"layers", a.layers},
                    {"units", a.units},           {"bias", a.bias},
                    {"lr", a.lr},                 {"batch", a.batch},
                    {"dropout", a.dropout},       {"max_iters", a.max_iters},
                    {"eval_every", a.eval_every}, {"clip", a.clip},
                    {"seed", a.seed}};
  const auto digest = write_run_metadata(a.out, config);
  auto result = train(manifest.train, val, arch, cfg);
  const auto path = join(a.out, "checkpoint.bin");
  save_checkpoint(result.model, path);
  write_file(join(a.out, "history.csv"), history_csv(result.history));
  std::cout << "best iteration " << result.best_iteration << ", validation loss per point "
            << result.best_val_loss << "\n"
            << "checkpoint " << path << " digest "
            << hex_digest(fnv1a(serialize_checkpoint(result.model))) << "\n"
            << "config digest " << digest << "\n";
  return 0;
}

// embed

struct EmbedArgs {
  std::string checkpoint, dataset, layer = "all", output, out = "runs/embed";
};

int run_embed(const EmbedArgs &a) {
  require_file(a.checkpoint, "checkpoint");
  require_file(a.dataset, "dataset");
  LayerSelector sel;
  try {
    sel = LayerSelector::parse(a.layer);
  } catch (const std::exception &e) {
    throw UsageError(e.what());
  }
  const auto model = load_checkpoint(a.checkpoint);
  if (sel.layer && (*sel.layer < 1 || *sel.layer > model.arch.num_layers()))
    throw UsageError("layer " + a.layer + " out of range 1.." +
                     std::to_string(model.arch.num_layers()));
  const auto ds = load_ucr_dataset(a.dataset);
  const json config{{"command", "embed"}, {"checkpoint", a.checkpoint},
                    {"dataset", a.dataset}, {"layer", sel.to_string()}};
  write_run_metadata(a.out, config);
  const auto train = embed_split(model, znormalize_all(ds.train), sel);
  const auto test = embed_split(model, znormalize_all(ds.test), sel);
  const auto path = a.output.empty() ? join(a.out, "embeddings.csv") : a.output;
  write_file(path, embedding_csv(train, test));
  std::cout << "wrote " << train.x.size() + test.x.size() << " rows x "
            << (train.x.empty() ? 0 : train.x[0].size()) << " features to " << path << "\n";
  return 0;
}

// compare

struct CompareArgs {
  std::string dataset, checkpoint, methods = "DTW-C,SAE-C", out = "runs/compare";
  std::uint64_t cv_seed = 1, sae_seed = 1;
  int folds = 5;
  bool standardize = false;
  int dtw_window = -1;
  std::size_t sae_layers = 2, sae_units = 32, sae_iters = 1000;
};

int run_compare_cmd(const CompareArgs &a) {
  require_file(a.dataset, "dataset");
  CompareOptions o;
  o.methods.clear();
  for (auto &m : split_list(a.methods))
    o.methods.insert(m);
  if (o.methods.empty())
    throw UsageError("no methods requested");
  o.cv_seed = a.cv_seed;
  o.folds = a.folds;
  o.standardize = a.standardize;
  if (a.dtw_window >= 0)
    o.dtw.window = static_cast<std::size_t>(a.dtw_window);
  o.sae_arch = uniform_architecture(a.sae_layers, a.sae_units);
  o.sae_train.max_iterations = a.sae_iters;
  o.sae_train.seed = a.sae_seed;

  std::optional<SaeModel> timenet;
  if (!a.checkpoint.empty()) {
    require_file(a.checkpoint, "checkpoint");
    timenet = load_checkpoint(a.checkpoint);
  }
  const auto ds = load_ucr_dataset(a.dataset);
  const json config{{"command", "compare"},  {"dataset", a.dataset},
                    {"checkpoint", a.checkpoint}, {"methods", a.methods},
                    {"cv_seed", a.cv_seed},  {"folds", a.folds},
                    {"standardize", a.standardize}, {"dtw_window", a.dtw_window},
                    {"sae_layers", a.sae_layers}, {"sae_units", a.sae_units},
                    {"sae_iters", a.sae_iters}, {"sae_seed", a.sae_seed}};
  write_run_metadata(a.out, config);
  ExperimentReport report;
  try {
    report = run_compare(ds, timenet ? &*timenet : nullptr, o);
  } catch (const std::invalid_argument &e) {
    throw UsageError(e.what());
  }
  const auto table = report_table(report);
  write_file(join(a.out, "report.json"), to_json(report).dump(2) + "\n");
  write_file(join(a.out, "report.txt"), table);
  std::cout << table;
  return 0;
}

// bench-scaling

struct BenchArgs {
  std::string checkpoint, lengths = "64,128,256,512", out = "runs/bench-scaling";
  std::size_t layers = 3, units = 60, repeats = 5, count = 16;
  std::uint64_t seed = 1;
};

int run_bench(const BenchArgs &a) {
  std::vector<std::size_t> lengths;
  try {
    for (auto &s : split_list(a.lengths))
      lengths.push_back(std::stoul(s));
  } catch (const std::exception &) {
    throw UsageError("bad --lengths list: " + a.lengths);
  }
  if (lengths.size() < 3)
    throw UsageError("need at least 3 lengths");
  SaeModel model;
  if (!a.checkpoint.empty()) {
    require_file(a.checkpoint, "checkpoint");
    model = load_checkpoint(a.checkpoint);
  } else {
    model = make_sae(uniform_architecture(a.layers, a.units), a.seed);
  }
  const json config{{"command", "bench-scaling"}, {"checkpoint", a.checkpoint},
                    {"layers", model.arch.num_layers()}, {"units", model.arch.units},
                    {"lengths", lengths}, {"repeats", a.repeats},
                    {"count", a.count}, {"seed", a.seed}};
  write_run_metadata(a.out, config);
  const auto r = bench_scaling(model, lengths, a.repeats, a.count, a.seed);
  for (auto &w : r.warnings)
    std::cerr << "warning: " << w << "\n";
  std::ostringstream table;
  table << "length,seconds\n";
  for (auto &row : r.rows)
    table << row.length << "," << row.seconds << "\n";
  write_file(join(a.out, "scaling.csv"), table.str());
  std::cout << table.str() << "slope " << r.fit.slope << " s/step, intercept " << r.fit.intercept
            << " s, R2 " << r.fit.r2 << "\n";
  return 0;
}

// synth

struct SynthArgs {
  int classes = 3, per_class = 100, length = 60;
  double noise = 0.1;
  std::uint64_t seed = 1;
  std::string name = "Synthetic", out = "runs/synth";
};

int run_synth(const SynthArgs &a) {
  const json config{{"command", "synth"},      {"classes", a.classes},
                    {"per_class", a.per_class}, {"length", a.length},
                    {"noise", a.noise},        {"seed", a.seed},
                    {"name", a.name}};
  Dataset ds;
  try {
    ds = make_synthetic(a.classes, a.per_class, a.length, a.noise, a.seed);
  } catch (const std::invalid_argument &e) {
    throw UsageError(e.what());
  }
  ds.name = a.name;
  write_run_metadata(a.out, config);
  const auto dir = join(a.out, a.name);
  save_ucr_dataset(ds, dir);
  std::cout << "wrote " << ds.train.size() << " train and " << ds.test.size()
            << " test series to " << dir << "\n";
  return 0;
}

// tsne

struct TsneArgs {
  std::string embeddings, split = "all", out = "runs/tsne";
  double perplexity = 30.0, lr = 200.0;
  std::size_t iters = 1000;
  std::uint64_t seed = 1;
};

int run_tsne(const TsneArgs &a) {
  require_file(a.embeddings, "embedding CSV");
  if (a.split != "all" && a.split != "train" && a.split != "test")
    throw UsageError("--split must be all, train or test");
  const auto table = parse_embedding_csv(read_file(a.embeddings));
  FeatureRows x;
  std::vector<std::string> labels;
  auto take = [&](const EmbeddedSplit &s) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x.push_back(s.x[i]);
      labels.push_back(std::to_string(s.y[i]));
    }
  };
  if (a.split != "test")
    take(table.train);
  if (a.split != "train")
    take(table.test);
  TsneConfig cfg;
  cfg.perplexity = a.perplexity;
  cfg.learning_rate = a.lr;
  cfg.iterations = a.iters;
  cfg.seed = a.seed;
  const json config{{"command", "tsne"}, {"embeddings", a.embeddings}, {"split", a.split},
                    {"perplexity", a.perplexity}, {"lr", a.lr}, {"iters", a.iters},
                    {"seed", a.seed}};
  write_run_metadata(a.out, config);
  const auto r = tsne_embed(x, cfg);
  emit_scatter(r.coords, labels, join(a.out, "tsne"));
  std::ostringstream kl;
  kl << "iteration,kl\n";
  for (std::size_t i = 0; i < r.kl.size(); ++i)
    kl << i << "," << r.kl[i] << "\n";
  write_file(join(a.out, "kl.csv"), kl.str());
  std::cout << "embedded " << x.size() << " points, final KL " << r.kl.back() << ", wrote "
            << join(a.out, "tsne.csv") << "\n";
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Time series embeddings from sequence autoencoders"};
  app.require_subcommand(1);
  std::function<int()> action;

  TrainArgs ta;
  auto *t = app.add_subcommand("train-sae", "train a sequence autoencoder on a corpus manifest");
  t->add_option("manifest", ta.manifest, "corpus manifest")->required();
  t->add_option("--val-manifest", ta.val_manifest, "validation corpus manifest");
  t->add_option("--layers", ta.layers, "GRU layers")->capture_default_str();
  t->add_option("--units", ta.units, "units per layer")->capture_default_str();
  t->add_option("--lr", ta.lr, "Adam learning rate")->capture_default_str();
  t->add_option("--batch", ta.batch, "batch size")->capture_default_str();
  t->add_option("--dropout", ta.dropout, "input dropout rate")->capture_default_str();
  t->add_option("--max-iters", ta.max_iters, "training iterations")->capture_default_str();
  t->add_option("--eval-every", ta.eval_every, "validation interval")->capture_default_str();
  t->add_option("--clip", ta.clip, "global gradient norm cap, 0 disables")->capture_default_str();
  t->add_option("--seed", ta.seed, "random seed")->capture_default_str();
  t->add_flag("--bias", ta.bias, "add GRU gate biases");
  t->add_option("--out", ta.out, "run directory")->capture_default_str();
  t->callback([&] { action = [&] { return run_train(ta); }; });

  EmbedArgs ea;
  auto *e = app.add_subcommand("embed", "write embeddings of a dataset's train and test splits");
  e->add_option("checkpoint", ea.checkpoint, "model checkpoint")->required();
  e->add_option("dataset", ea.dataset, "UCR dataset directory")->required();
  e->add_option("output", ea.output, "output CSV (default <out>/embeddings.csv)");
  e->add_option("--layer", ea.layer, "all or a 1-based layer index")->capture_default_str();
  e->add_option("--out", ea.out, "run directory")->capture_default_str();
  e->callback([&] { action = [&] { return run_embed(ea); }; });

  CompareArgs ca;
  auto *c = app.add_subcommand("compare", "classification error of TN-C, SAE-C and DTW-C rows");
  c->add_option("dataset", ca.dataset, "UCR dataset directory")->required();
  c->add_option("--checkpoint", ca.checkpoint, "pre-trained encoder for TN-C rows");
  c->add_option("--methods", ca.methods, "comma list of TN-C,SAE-C,DTW-C,TN-C_2/3,TN-C_Li")
      ->capture_default_str();
  c->add_option("--cv-seed", ca.cv_seed, "fold assignment seed")->capture_default_str();
  c->add_option("--folds", ca.folds, "cross-validation folds")->capture_default_str();
  c->add_flag("--standardize", ca.standardize, "standardize features before the SVM");
  c->add_option("--dtw-window", ca.dtw_window, "Sakoe-Chiba radius, negative for none")
      ->capture_default_str();
  c->add_option("--sae-layers", ca.sae_layers, "SAE-C layers")->capture_default_str();
  c->add_option("--sae-units", ca.sae_units, "SAE-C units per layer")->capture_default_str();
  c->add_option("--sae-iters", ca.sae_iters, "SAE-C training iterations")->capture_default_str();
  c->add_option("--sae-seed", ca.sae_seed, "SAE-C training seed")->capture_default_str();
  c->add_option("--out", ca.out, "run directory")->capture_default_str();
  c->callback([&] { action = [&] { return run_compare_cmd(ca); }; });

  BenchArgs ba;
  auto *b = app.add_subcommand("bench-scaling", "embedding wall time against series length");
  b->add_option("--checkpoint", ba.checkpoint, "model checkpoint (default: random weights)");
  b->add_option("--layers", ba.layers, "layers of the random model")->capture_default_str();
  b->add_option("--units", ba.units, "units of the random model")->capture_default_str();
  b->add_option("--lengths", ba.lengths, "comma list of lengths")->capture_default_str();
  b->add_option("--repeats", ba.repeats, "timing repeats")->capture_default_str();
  b->add_option("--count", ba.count, "series per length")->capture_default_str();
  b->add_option("--seed", ba.seed, "random seed")->capture_default_str();
  b->add_option("--out", ba.out, "run directory")->capture_default_str();
  b->callback([&] { action = [&] { return run_bench(ba); }; });

  SynthArgs sa;
  auto *s = app.add_subcommand("synth", "write a labeled synthetic dataset");
  s->add_option("--classes", sa.classes, "number of classes")->capture_default_str();
  s->add_option("--per-class", sa.per_class, "series per class")->capture_default_str();
  s->add_option("--length", sa.length, "series length")->capture_default_str();
  s->add_option("--noise", sa.noise, "noise standard deviation")->capture_default_str();
  s->add_option("--seed", sa.seed, "random seed")->capture_default_str();
  s->add_option("--name", sa.name, "dataset name")->capture_default_str();
  s->add_option("--out", sa.out, "run directory")->capture_default_str();
  s->callback([&] { action = [&] { return run_synth(sa); }; });

  TsneArgs na;
  auto *n = app.add_subcommand("tsne", "2-D t-SNE map of an embedding CSV");
  n->add_option("embeddings", na.embeddings, "embedding CSV")->required();
  n->add_option("--split", na.split, "all, train or test")->capture_default_str();
  n->add_option("--perplexity", na.perplexity, "perplexity")->capture_default_str();
  n->add_option("--lr", na.lr, "learning rate")->capture_default_str();
  n->add_option("--iters", na.iters, "iterations")->capture_default_str();
  n->add_option("--seed", na.seed, "random seed")->capture_default_str();
  n->add_option("--out", na.out, "run directory")->capture_default_str();
  n->callback([&] { action = [&] { return run_tsne(na); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp &err) {
    return app.exit(err);
  } catch (const CLI::ParseError &err) {
    app.exit(err);
    return 2;
  }

  apply_thread_env();
  try {
    return action();
  } catch (const UsageError &err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception &err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
}
