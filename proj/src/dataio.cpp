#include "tsembed/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <sstream>

namespace fs = std::filesystem;

namespace tsembed {

namespace {

struct RawRecord {
  double label;
  std::vector<double> values;
  std::size_t line;
};

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::vector<std::string_view> split_fields(std::string_view line, bool comma) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  auto is_sep = [&](char c) {
    return comma ? c == ',' : (c == ' ' || c == '\t' || c == '\r');
  };
  if (comma) {
    while (true) {
      auto j = line.find(',', i);
      auto field = line.substr(i, j == std::string_view::npos ? std::string_view::npos : j - i);
      while (!field.empty() && std::isspace(static_cast<unsigned char>(field.front())))
        field.remove_prefix(1);
      while (!field.empty() && std::isspace(static_cast<unsigned char>(field.back())))
        field.remove_suffix(1);
      out.push_back(field);
      if (j == std::string_view::npos)
        break;
      i = j + 1;
    }
    return out;
  }
  while (i < line.size()) {
    while (i < line.size() && is_sep(line[i]))
      ++i;
    if (i >= line.size())
      break;
    auto j = i;
    while (j < line.size() && !is_sep(line[j]))
      ++j;
    out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_number(std::string_view field, std::size_t line) {
  if (!field.empty() && field.front() == '+')
    field.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw ParseError("non-numeric field '" + std::string(field) + "'", line);
  if (!std::isfinite(v))
    throw ParseError("non-finite value", line);
  return v;
}

std::vector<RawRecord> parse_records(std::string_view text) {
  std::vector<RawRecord> records;
  std::optional<bool> comma;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos)
      end = text.size();
    auto line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (is_blank(line)) {
      if (end == text.size())
        break;
      continue;
    }
    if (!comma)
      comma = line.find(',') != std::string_view::npos;
    auto fields = split_fields(line, *comma);
    if (fields.size() < 2)
      throw ParseError("record needs a label and at least one value", line_no);
    RawRecord rec{parse_number(fields[0], line_no), {}, line_no};
    rec.values.reserve(fields.size() - 1);
    for (std::size_t f = 1; f < fields.size(); ++f)
      rec.values.push_back(parse_number(fields[f], line_no));
    if (!records.empty() && rec.values.size() != records.front().values.size())
      throw ParseError("inconsistent series length " + std::to_string(rec.values.size()) +
                           ", expected " + std::to_string(records.front().values.size()),
                       line_no);
    records.push_back(std::move(rec));
    if (end == text.size())
      break;
  }
  if (records.empty())
    throw ParseError("no records");
  return records;
}

std::map<double, int> label_map(std::initializer_list<const std::vector<RawRecord> *> groups) {
  std::map<double, int> ids;
  for (auto *g : groups)
    for (auto &r : *g)
      ids.emplace(r.label, 0);
  int next = 0;
  for (auto &[raw, id] : ids)
    id = next++;
  return ids;
}

std::vector<TimeSeries> to_series(std::vector<RawRecord> &records,
                                  const std::map<double, int> &ids) {
  std::vector<TimeSeries> out;
  out.reserve(records.size());
  for (auto &r : records)
    out.push_back({std::move(r.values), ids.at(r.label)});
  return out;
}

fs::path find_split(const fs::path &dir, const std::string &tag) {
  std::vector<fs::path> hits;
  for (auto &entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file())
      continue;
    auto stem = entry.path().stem().string();
    if (stem.size() >= tag.size() && stem.compare(stem.size() - tag.size(), tag.size(), tag) == 0)
      hits.push_back(entry.path());
  }
  if (hits.empty())
    throw ParseError("no *" + tag + " file in " + dir.string());
  std::sort(hits.begin(), hits.end());
  return hits.front();
}

} // namespace

std::vector<TimeSeries> Corpus::all_series() const {
  std::vector<TimeSeries> out;
  for (auto &ds : datasets) {
    out.insert(out.end(), ds.train.begin(), ds.train.end());
    out.insert(out.end(), ds.test.begin(), ds.test.end());
  }
  return out;
}

bool Corpus::empty() const {
  return std::all_of(datasets.begin(), datasets.end(),
                     [](const Dataset &d) { return d.train.empty() && d.test.empty(); });
}

std::vector<TimeSeries> parse_ucr_text(std::string_view text) {
  auto records = parse_records(text);
  return to_series(records, label_map({&records}));
}

std::vector<TimeSeries> parse_ucr(const std::string &path) {
  return parse_ucr_text(read_file(path));
}

std::string to_ucr_text(const std::vector<TimeSeries> &series) {
  std::string out;
  char buf[64];
  for (auto &s : series) {
    out += std::to_string(s.label.value_or(0));
    for (double v : s.values) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out += '\t';
      out.append(buf, ptr);
    }
    out += '\n';
  }
  return out;
}

void write_ucr(const std::vector<TimeSeries> &series, const std::string &path) {
  write_file(path, to_ucr_text(series));
}

Dataset load_ucr_dataset(const std::string &dir, std::size_t length_cap) {
  fs::path root(dir);
  if (!fs::is_directory(root))
    throw ParseError("dataset directory not found: " + dir);
  auto train_path = find_split(root, "_TRAIN");
  auto test_path = find_split(root, "_TEST");

  std::vector<RawRecord> train_rec, test_rec;
  try {
    train_rec = parse_records(read_file(train_path.string()));
  } catch (const ParseError &e) {
    throw ParseError(train_path.string() + ": " + e.what());
  }
  try {
    test_rec = parse_records(read_file(test_path.string()));
  } catch (const ParseError &e) {
    throw ParseError(test_path.string() + ": " + e.what());
  }
  if (train_rec.front().values.size() != test_rec.front().values.size())
    throw ParseError("train and test lengths differ in " + dir);

  auto ids = label_map({&train_rec, &test_rec});
  Dataset ds;
  ds.name = root.filename().string();
  if (ds.name.empty())
    ds.name = root.parent_path().filename().string();
  ds.series_length = train_rec.front().values.size();
  if (ds.series_length > length_cap)
    throw ParseError(ds.name + ": series length " + std::to_string(ds.series_length) +
                     " exceeds cap " + std::to_string(length_cap));
  ds.num_classes = static_cast<int>(ids.size());
  ds.train = to_series(train_rec, ids);
  ds.test = to_series(test_rec, ids);
  return ds;
}

void save_ucr_dataset(const Dataset &ds, const std::string &dir) {
  fs::create_directories(dir);
  write_ucr(ds.train, (fs::path(dir) / (ds.name + "_TRAIN.tsv")).string());
  write_ucr(ds.test, (fs::path(dir) / (ds.name + "_TEST.tsv")).string());
}

Manifest load_manifest(const std::string &path, std::size_t length_cap) {
  auto text = read_file(path);
  fs::path base = fs::path(path).parent_path();
  Manifest m;
  m.train.role = CorpusRole::train;
  m.validation.role = CorpusRole::validation;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    if (is_blank(line))
      continue;
    auto colon = line.find(':');
    if (colon == std::string::npos)
      throw ParseError("manifest entry needs a train: or val: prefix", line_no);
    auto tag = line.substr(0, colon);
    auto rest = line.substr(colon + 1);
    tag.erase(std::remove_if(tag.begin(), tag.end(), ::isspace), tag.end());
    auto first = rest.find_first_not_of(" \t");
    auto last = rest.find_last_not_of(" \t\r");
    if (first == std::string::npos)
      throw ParseError("manifest entry has no path", line_no);
    fs::path p = rest.substr(first, last - first + 1);
    if (p.is_relative())
      p = base / p;
    Corpus *target = nullptr;
    if (tag == "train")
      target = &m.train;
    else if (tag == "val")
      target = &m.validation;
    else
      throw ParseError("unknown manifest role '" + tag + "'", line_no);
    target->datasets.push_back(load_ucr_dataset(p.string(), length_cap));
  }
  return m;
}

TimeSeries znormalize(const TimeSeries &series) {
  const auto n = static_cast<double>(series.values.size());
  double mean = 0.0;
  for (double v : series.values)
    mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : series.values)
    var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);

  TimeSeries out{std::vector<double>(series.values.size(), 0.0), series.label};
  if (sd < 1e-12)
    return out;
  for (std::size_t i = 0; i < series.values.size(); ++i)
    out.values[i] = (series.values[i] - mean) / sd;
  return out;
}

std::vector<TimeSeries> znormalize_all(const std::vector<TimeSeries> &series) {
  std::vector<TimeSeries> out;
  out.reserve(series.size());
  for (auto &s : series)
    out.push_back(znormalize(s));
  return out;
}

namespace {

std::vector<double> waveform(int family, int length, Rng &rng) {
  using std::numbers::pi;
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * pi);
  std::uniform_real_distribution<double> amp_dist(0.8, 1.2);
  const double phase = phase_dist(rng);
  const double amp = amp_dist(rng);
  const double T = static_cast<double>(length);
  std::vector<double> v(static_cast<std::size_t>(length));

  auto sine = [&](double cycles) {
    for (int t = 0; t < length; ++t)
      v[t] = amp * std::sin(2.0 * pi * cycles * t / T + phase);
  };
  switch (family) {
  case 0:
    sine(2.0);
    break;
  case 1:
    for (int t = 0; t < length; ++t)
      v[t] = amp * (std::sin(2.0 * pi * 2.0 * t / T + phase) >= 0.0 ? 1.0 : -1.0);
    break;
  case 2:
    for (int t = 0; t < length; ++t) {
      double x = 2.0 * t / T + phase / (2.0 * pi);
      v[t] = amp * (2.0 * (x - std::floor(x)) - 1.0);
    }
    break;
  case 3: {
    std::normal_distribution<double> innov(0.0, 0.5);
    double x = 0.0;
    for (int t = 0; t < length; ++t) {
      x = 0.8 * x + innov(rng);
      v[t] = x;
    }
    break;
  }
  case 4:
  case 5: {
    const double sign = family == 4 ? 1.0 : -1.0;
    const double offset = 0.2 * (phase / pi - 1.0);
    for (int t = 0; t < length; ++t)
      v[t] = sign * amp * (2.0 * t / std::max(1.0, T - 1.0) - 1.0) + offset;
    break;
  }
  case 6:
    sine(4.0);
    break;
  default:
    sine(6.0);
    break;
  }
  return v;
}

} // namespace

Dataset make_synthetic(int num_classes, int per_class, int length, double noise,
                       std::uint64_t seed) {
  if (num_classes < 2 || num_classes > 8)
    throw std::invalid_argument("make_synthetic: num_classes must be in [2, 8]");
  if (per_class < 2)
    throw std::invalid_argument("make_synthetic: per_class must be >= 2 to split");
  if (length < 1)
    throw std::invalid_argument("make_synthetic: length must be >= 1");
  if (noise < 0.0)
    throw std::invalid_argument("make_synthetic: noise must be >= 0");

  Dataset ds;
  ds.name = "Synthetic" + std::to_string(num_classes) + "C";
  ds.num_classes = num_classes;
  ds.series_length = static_cast<std::size_t>(length);
  const int n_train = per_class / 2;
  for (int k = 0; k < num_classes; ++k) {
    for (int i = 0; i < per_class; ++i) {
      auto rng = derive_rng(seed, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i)});
      auto values = waveform(k, length, rng);
      std::normal_distribution<double> gauss(0.0, 1.0);
      if (noise > 0.0)
        for (auto &x : values)
          x += noise * gauss(rng);
      TimeSeries s{std::move(values), k};
      (i < n_train ? ds.train : ds.test).push_back(std::move(s));
    }
  }
  return ds;
}

std::vector<TimeSeries> stratified_subsample(const std::vector<TimeSeries> &train,
                                             double fraction, std::uint64_t seed) {
  if (train.empty())
    throw std::invalid_argument("stratified_subsample: empty input");
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("stratified_subsample: fraction must be in (0, 1]");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < train.size(); ++i)
    by_class[train[i].label.value_or(0)].push_back(i);

  Rng rng(seed);
  std::vector<std::size_t> keep;
  for (auto &[label, idx] : by_class) {
    auto n = idx.size();
    // 1e-9 guards against products like 2/3 * 30 landing just above an integer
    auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
    k = std::clamp<std::size_t>(k, 1, n);
    std::shuffle(idx.begin(), idx.end(), rng);
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  }
  std::sort(keep.begin(), keep.end());
  std::vector<TimeSeries> out;
  out.reserve(keep.size());
  for (auto i : keep)
    out.push_back(train[i]);
  return out;
}

} // namespace tsembed
