#include "tsembed/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

namespace fs = std::filesystem;

namespace tsembed {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<int> labels_of(const std::vector<TimeSeries> &s) {
  std::vector<int> y;
  y.reserve(s.size());
  for (auto &t : s) {
    if (!t.label)
      throw std::invalid_argument("series without a class label");
    y.push_back(*t.label);
  }
  return y;
}

nlohmann::json arch_json(const Architecture &a) {
  return {{"units", a.units}, {"use_bias", a.use_bias}};
}

nlohmann::json train_json(const TrainConfig &c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
          {"dropout_rate", c.dropout_rate},   {"max_iterations", c.max_iterations},
          {"eval_every", c.eval_every},       {"seed", c.seed},
          {"clip_norm", c.clip_norm},         {"adam", {c.adam.beta1, c.adam.beta2, c.adam.epsilon}}};
}

} // namespace

const MethodRow *ExperimentReport::find(const std::string &method) const {
  for (auto &r : rows)
    if (r.method == method)
      return &r;
  return nullptr;
}

nlohmann::json to_json(const ExperimentReport &r) {
  nlohmann::json j;
  j["dataset"] = r.dataset;
  j["rows"] = nlohmann::json::array();
  for (auto &m : r.rows)
    j["rows"].push_back({{"method", m.method},
                         {"error_rate", m.error_rate},
                         {"config_digest", m.config_digest},
                         {"seeds", m.seeds},
                         {"seed_errors", m.seed_errors},
                         {"wall_seconds", m.wall_seconds},
                         {"best_C", m.best_C},
                         {"best_gamma", m.best_gamma}});
  return j;
}

ExperimentReport report_from_json(const nlohmann::json &j) {
  ExperimentReport r;
  r.dataset = j.at("dataset").get<std::string>();
  for (auto &e : j.at("rows")) {
    MethodRow m;
    m.method = e.at("method").get<std::string>();
    m.error_rate = e.at("error_rate").get<double>();
    m.config_digest = e.at("config_digest").get<std::string>();
    m.seeds = e.at("seeds").get<std::vector<std::uint64_t>>();
    m.seed_errors = e.at("seed_errors").get<std::vector<double>>();
    m.wall_seconds = e.at("wall_seconds").get<double>();
    m.best_C = e.at("best_C").get<double>();
    m.best_gamma = e.at("best_gamma").get<double>();
    if (m.error_rate < 0.0 || m.error_rate > 1.0)
      throw ParseError("report error_rate outside [0, 1]");
    r.rows.push_back(std::move(m));
  }
  return r;
}

std::string report_table(const ExperimentReport &r) {
  std::string out = "dataset: " + r.dataset + "\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-10s %10s %10s %10s %10s  %s\n", "method", "error", "C", "gamma",
                "seconds", "seeds");
  out += buf;
  for (auto &m : r.rows) {
    std::string seeds;
    for (std::size_t i = 0; i < m.seeds.size(); ++i)
      seeds += (i ? "," : "") + std::to_string(m.seeds[i]);
    std::snprintf(buf, sizeof buf, "%-10s %10.4f %10.3g %10.3g %10.2f  %s\n", m.method.c_str(),
                  m.error_rate, m.best_C, m.best_gamma, m.wall_seconds, seeds.c_str());
    out += buf;
  }
  return out;
}

EmbeddedSplit embed_split(const SaeModel &model, const std::vector<TimeSeries> &normalized,
                          LayerSelector selector) {
  EmbeddedSplit s;
  for (auto &e : embed_all(model, normalized, selector))
    s.x.push_back(std::move(e.values));
  s.y = labels_of(normalized);
  return s;
}

SvmRun svm_pipeline(const EmbeddedSplit &train, const EmbeddedSplit &test, std::uint64_t cv_seed,
                    int folds, bool standardize) {
  FeatureRows xtr = train.x, xte = test.x;
  if (standardize) {
    auto st = Standardizer::fit(xtr);
    xtr = st.apply(xtr);
    xte = st.apply(xte);
  }
  SvmRun run;
  run.search = grid_search_cv(xtr, train.y, folds, cv_seed);
  run.model = ovo_train(xtr, train.y, run.search.best_C, run.search.best_gamma);
  run.predictions = ovo_predict_all(run.model, xte);
  run.error_rate = error_rate(run.predictions, test.y);
  return run;
}

ExperimentReport run_compare(const Dataset &dataset, const SaeModel *timenet,
                             const CompareOptions &opts) {
  for (auto &m : opts.methods)
    if (m != "TN-C" && m != "SAE-C" && m != "DTW-C" && m != "TN-C_2/3" && m != "TN-C_Li")
      throw std::invalid_argument("unknown method " + m);
  const bool needs_timenet = opts.methods.count("TN-C") || opts.methods.count("TN-C_2/3") ||
                             opts.methods.count("TN-C_Li");
  if (needs_timenet && timenet == nullptr)
    throw std::invalid_argument("TN-C rows need a pre-trained checkpoint");

  const auto train = znormalize_all(dataset.train);
  const auto test = znormalize_all(dataset.test);
  ExperimentReport report;
  report.dataset = dataset.name;

  nlohmann::json svm_cfg = {{"folds", opts.folds}, {"cv_seed", opts.cv_seed},
                            {"grid", decade_grid()}, {"standardize", opts.standardize}};
  std::string timenet_digest =
      timenet ? hex_digest(fnv1a(serialize_checkpoint(*timenet))) : std::string();

  auto svm_row = [&](const std::string &name, const SaeModel &model, LayerSelector sel,
                     const std::vector<TimeSeries> &tr, const nlohmann::json &extra) {
    const auto t0 = Clock::now();
    auto run = svm_pipeline(embed_split(model, tr, sel), embed_split(model, test, sel),
                            opts.cv_seed, opts.folds, opts.standardize);
    MethodRow row;
    row.method = name;
    row.error_rate = run.error_rate;
    row.seeds = {opts.cv_seed};
    row.best_C = run.search.best_C;
    row.best_gamma = run.search.best_gamma;
    row.config_digest =
        config_digest({{"svm", svm_cfg}, {"layer", sel.to_string()}, {"extra", extra}});
    row.wall_seconds = seconds_since(t0);
    return row;
  };

  if (opts.methods.count("TN-C"))
    report.rows.push_back(
        svm_row("TN-C", *timenet, LayerSelector::all(), train, {{"checkpoint", timenet_digest}}));

  if (opts.methods.count("SAE-C")) {
    const auto t0 = Clock::now();
    std::vector<TimeSeries> unlabeled = train;
    for (auto &s : unlabeled)
      s.label.reset();
    auto trained = tsembed::train(unlabeled, {}, opts.sae_arch, opts.sae_train);
    auto row = svm_row("SAE-C", trained.model, LayerSelector::all(), train,
                       {{"arch", arch_json(opts.sae_arch)}, {"train", train_json(opts.sae_train)}});
    row.seeds = {opts.sae_train.seed, opts.cv_seed};
    row.wall_seconds = seconds_since(t0);
    report.rows.push_back(std::move(row));
  }

  if (opts.methods.count("DTW-C")) {
    const auto t0 = Clock::now();
    auto nn = dtw_1nn_classify(train, test, opts.dtw);
    MethodRow row;
    row.method = "DTW-C";
    row.error_rate = nn.error_rate;
    row.config_digest = config_digest(
        {{"dtw_window", opts.dtw.window ? nlohmann::json(*opts.dtw.window) : nlohmann::json()},
         {"cost", "squared"}});
    row.wall_seconds = seconds_since(t0);
    report.rows.push_back(std::move(row));
  }

  if (opts.methods.count("TN-C_2/3")) {
    const auto t0 = Clock::now();
    MethodRow row;
    row.method = "TN-C_2/3";
    const auto test_split = embed_split(*timenet, test);
    double sum = 0.0;
    for (auto seed : opts.reduced_seeds) {
      auto sub = stratified_subsample(train, 2.0 / 3.0, seed);
      auto run = svm_pipeline(embed_split(*timenet, sub), test_split, opts.cv_seed, opts.folds,
                              opts.standardize);
      row.seeds.push_back(seed);
      row.seed_errors.push_back(run.error_rate);
      sum += run.error_rate;
    }
    row.error_rate = sum / static_cast<double>(opts.reduced_seeds.size());
    row.config_digest = config_digest(
        {{"svm", svm_cfg}, {"fraction", "2/3"}, {"checkpoint", timenet_digest}});
    row.wall_seconds = seconds_since(t0);
    report.rows.push_back(std::move(row));
  }

  if (opts.methods.count("TN-C_Li"))
    for (std::size_t l = 1; l <= timenet->encoder.size(); ++l)
      report.rows.push_back(svm_row("TN-C_L" + std::to_string(l), *timenet, LayerSelector::only(l),
                                    train, {{"checkpoint", timenet_digest}}));

  return report;
}

LinearFit fit_line(const std::vector<double> &x, const std::vector<double> &y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("fit_line: need at least two paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  double ss_res = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += e * e;
  }
  f.r2 = syy > 0 ? 1.0 - ss_res / syy : 1.0;
  return f;
}

namespace {

std::vector<TimeSeries> random_series(std::size_t length, std::size_t count, std::uint64_t seed) {
  auto rng = derive_rng(seed, {length});
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<TimeSeries> series(count);
  for (auto &s : series) {
    s.values.resize(length);
    for (auto &v : s.values)
      v = g(rng);
  }
  return series;
}

double time_once(const SaeModel &model, const std::vector<TimeSeries> &series) {
  const auto t0 = Clock::now();
  double sink = 0.0;
  for (auto &e : embed_all_reference(model, series))
    sink += e.values.front();
  const double s = seconds_since(t0);
  if (std::isnan(sink))
    std::fprintf(stderr, "warning: non-finite embedding during timing\n");
  return s;
}

} // namespace

double time_embedding(const SaeModel &model, std::size_t length, std::size_t repeats,
                      std::size_t count, std::uint64_t seed) {
  const auto series = random_series(length, count, seed);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r)
    best = std::min(best, time_once(model, series));
  return best;
}

ScalingReport bench_scaling(const SaeModel &model, const std::vector<std::size_t> &lengths,
                            std::size_t repeats, std::size_t series_per_length, std::uint64_t seed) {
  if (lengths.size() < 3)
    throw std::invalid_argument("bench-scaling needs at least 3 lengths");
  ScalingReport rep;
  if (repeats <= 1)
    rep.warnings.push_back("single repeat: timings are subject to run-to-run variance");
  std::vector<std::vector<TimeSeries>> inputs;
  for (auto T : lengths)
    inputs.push_back(random_series(T, series_per_length, seed));
  // warm-up, then repeats interleaved across lengths so drift in machine
  // load affects every length alike
  time_once(model, inputs.front());
  std::vector<double> best(lengths.size(), std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r)
    for (std::size_t k = 0; k < lengths.size(); ++k)
      best[k] = std::min(best[k], time_once(model, inputs[k]));
  std::vector<double> xs;
  for (std::size_t k = 0; k < lengths.size(); ++k) {
    rep.rows.push_back({lengths[k], best[k]});
    xs.push_back(static_cast<double>(lengths[k]));
  }
  rep.fit = fit_line(xs, best);
  return rep;
}

std::string embedding_csv(const EmbeddedSplit &train, const EmbeddedSplit &test) {
  const std::size_t dim = !train.x.empty() ? train.x.front().size()
                          : !test.x.empty() ? test.x.front().size()
                                            : 0;
  std::string out = "label,split";
  for (std::size_t k = 1; k <= dim; ++k)
    out += ",e" + std::to_string(k);
  out += '\n';
  char buf[32];
  auto rows = [&](const EmbeddedSplit &s, const char *tag) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      out += std::to_string(s.y[i]);
      out += ',';
      out += tag;
      for (double v : s.x[i]) {
        auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
        out += ',';
        out.append(buf, p);
      }
      out += '\n';
    }
  };
  rows(train, "train");
  rows(test, "test");
  return out;
}

EmbeddingTable parse_embedding_csv(std::string_view text) {
  EmbeddingTable t;
  std::size_t pos = 0, line_no = 0;
  std::size_t dim = 0;
  bool header = true;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos)
      end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.remove_suffix(1);
    if (line.empty())
      continue;
    if (header) {
      header = false;
      if (line.substr(0, 5) == "label")
        continue;
    }
    std::vector<std::string_view> fields;
    std::size_t i = 0;
    while (true) {
      auto j = line.find(',', i);
      fields.push_back(line.substr(i, j == std::string_view::npos ? std::string_view::npos : j - i));
      if (j == std::string_view::npos)
        break;
      i = j + 1;
    }
    if (fields.size() < 3)
      throw ParseError("embedding row needs label, split and at least one value", line_no);
    int label = 0;
    auto [lp, lec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), label);
    if (lec != std::errc() || lp != fields[0].data() + fields[0].size())
      throw ParseError("bad label", line_no);
    std::vector<double> v;
    for (std::size_t k = 2; k < fields.size(); ++k) {
      double x = 0;
      auto [p, ec] = std::from_chars(fields[k].data(), fields[k].data() + fields[k].size(), x);
      if (ec != std::errc() || p != fields[k].data() + fields[k].size())
        throw ParseError("bad embedding value", line_no);
      v.push_back(x);
    }
    if (dim == 0)
      dim = v.size();
    else if (v.size() != dim)
      throw ParseError("inconsistent embedding dimension", line_no);
    EmbeddedSplit *dst = nullptr;
    if (fields[1] == "train")
      dst = &t.train;
    else if (fields[1] == "test")
      dst = &t.test;
    else
      throw ParseError("split must be train or test", line_no);
    dst->x.push_back(std::move(v));
    dst->y.push_back(label);
  }
  if (t.train.x.empty() && t.test.x.empty())
    throw ParseError("no embedding rows");
  return t;
}

std::string config_digest(const nlohmann::json &config) { return hex_digest(fnv1a(config.dump())); }

std::string write_run_metadata(const std::string &dir, const nlohmann::json &config) {
  fs::create_directories(dir);
  const auto digest = config_digest(config);
  write_file((fs::path(dir) / "config.json").string(), config.dump(2) + "\n");
  write_file((fs::path(dir) / "config_digest.txt").string(), digest + "\n");
  std::string versions = std::string("tsembed ") + kVersion + "\n";
  versions += std::string("compiler ") + __VERSION__ + "\n";
  versions += "cxx_standard " + std::to_string(__cplusplus) + "\n";
#ifdef _OPENMP
  versions += "openmp " + std::to_string(_OPENMP) + "\n";
#endif
  versions += "json " + std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
              std::to_string(NLOHMANN_JSON_VERSION_PATCH) + "\n";
  write_file((fs::path(dir) / "versions.txt").string(), versions);
  return digest;
}

} // namespace tsembed
