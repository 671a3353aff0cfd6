#include <doctest.h>

#include "tsembed/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

using namespace tsembed;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string &name) {
  auto p = fs::temp_directory_path() / ("tsembed_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::map<int, std::size_t> class_counts(const std::vector<TimeSeries> &s) {
  std::map<int, std::size_t> m;
  for (auto &t : s)
    ++m[*t.label];
  return m;
}

} // namespace

TEST_CASE("parse_ucr maps fields and remaps labels in sorted order") {
  auto s = parse_ucr_text("1,0.5,0.6,0.7\n3,1,2,3\n-1,4,5,6\n");
  REQUIRE(s.size() == 3);
  CHECK(s[0].values == std::vector<double>{0.5, 0.6, 0.7});
  CHECK(*s[0].label == 1);
  CHECK(*s[1].label == 2);
  CHECK(*s[2].label == 0);

  auto single = parse_ucr_text("1,0.5,0.6,0.7");
  CHECK(*single[0].label == 0);
}

TEST_CASE("parse_ucr detects whitespace delimiters and scientific notation") {
  auto s = parse_ucr_text("  1.0000000e+00   2.5e-01  -3.0\n\t2\t1\t2\n");
  REQUIRE(s.size() == 2);
  CHECK(s[0].values == std::vector<double>{0.25, -3.0});
  CHECK(*s[1].label == 1);
}

TEST_CASE("parse_ucr errors") {
  CHECK_THROWS_AS(parse_ucr_text(""), ParseError);
  CHECK_THROWS_AS(parse_ucr_text("\n\n"), ParseError);
  try {
    parse_ucr_text("1,1,2,3\n2,1,2,3,4\n");
    FAIL("expected a parse error");
  } catch (const ParseError &e) {
    CHECK(e.line() == 2);
  }
  try {
    parse_ucr_text("1,1,2\n1,1,abc\n");
    FAIL("expected a parse error");
  } catch (const ParseError &e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_ucr_text("1,nan,2\n"), ParseError);
}

TEST_CASE("UCR text round-trips values") {
  Rng rng(5);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<TimeSeries> s(4);
    for (int i = 0; i < 4; ++i) {
      s[i].label = i % 2;
      s[i].values.resize(7);
      for (auto &v : s[i].values)
        v = g(rng);
    }
    auto back = parse_ucr_text(to_ucr_text(s));
    CHECK(back == s); // shortest round-trip formatting is exact
  }
}

TEST_CASE("znormalize") {
  auto z = znormalize(TimeSeries{{1, 2, 3}, {}});
  CHECK(z.values[0] == doctest::Approx(-1.224745).epsilon(1e-6));
  CHECK(z.values[1] == doctest::Approx(0.0));
  CHECK(z.values[2] == doctest::Approx(1.224745).epsilon(1e-6));
  CHECK(znormalize(TimeSeries{{5, 5, 5}, {}}).values == std::vector<double>{0, 0, 0});
  CHECK(znormalize(TimeSeries{{7.0}, 1}).values == std::vector<double>{0.0});

  Rng rng(11);
  std::uniform_real_distribution<double> u(-50, 50);
  std::uniform_int_distribution<int> len(2, 300);
  for (int trial = 0; trial < 200; ++trial) {
    TimeSeries s;
    s.values.resize(len(rng));
    const double offset = u(rng);
    for (auto &v : s.values)
      v = offset + u(rng);
    auto x = znormalize(s);
    double m = 0, var = 0;
    for (double v : x.values)
      m += v;
    m /= x.values.size();
    for (double v : x.values)
      var += (v - m) * (v - m);
    CHECK(std::abs(m) < 1e-9);
    CHECK(std::abs(std::sqrt(var / x.values.size()) - 1.0) < 1e-9);
    auto again = znormalize(x);
    for (std::size_t i = 0; i < x.values.size(); ++i)
      CHECK(std::abs(again.values[i] - x.values[i]) < 1e-9);
  }
}

TEST_CASE("make_synthetic counts, balance and determinism") {
  auto ds = make_synthetic(3, 100, 60, 0.1, 7);
  CHECK(ds.train.size() == 150);
  CHECK(ds.test.size() == 150);
  CHECK(ds.num_classes == 3);
  CHECK(ds.series_length == 60);
  for (auto &s : ds.train)
    CHECK(s.values.size() == 60);
  CHECK(class_counts(ds.train) == std::map<int, std::size_t>{{0, 50}, {1, 50}, {2, 50}});
  CHECK(class_counts(ds.test) == std::map<int, std::size_t>{{0, 50}, {1, 50}, {2, 50}});

  auto a = make_synthetic(8, 4, 30, 0.0, 3);
  auto b = make_synthetic(8, 4, 30, 0.0, 3);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);

  auto c = make_synthetic(3, 100, 60, 0.1, 8);
  CHECK(c.train.size() == ds.train.size());
  CHECK(c.train.front().values.size() == ds.train.front().values.size());
  CHECK(class_counts(c.train) == class_counts(ds.train));
  CHECK(c.train.front().values != ds.train.front().values);

  CHECK_THROWS(make_synthetic(3, 1, 60, 0.1, 1));
  CHECK_THROWS(make_synthetic(9, 10, 60, 0.1, 1));
}

TEST_CASE("stratified_subsample") {
  std::vector<TimeSeries> train;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 20; ++i)
      train.push_back({{static_cast<double>(c * 100 + i)}, c});

  auto sub = stratified_subsample(train, 2.0 / 3.0, 1);
  CHECK(sub.size() == 42);
  CHECK(class_counts(sub) == std::map<int, std::size_t>{{0, 14}, {1, 14}, {2, 14}});

  CHECK(stratified_subsample(train, 1.0, 9) == train);

  // sub-multiset of the input, order preserved
  std::vector<double> keys;
  for (auto &s : sub)
    keys.push_back(s.values[0]);
  CHECK(std::is_sorted(keys.begin(), keys.end()));
  for (auto &s : sub)
    CHECK(std::find(train.begin(), train.end(), s) != train.end());

  auto s1 = stratified_subsample(train, 2.0 / 3.0, 1);
  auto s2 = stratified_subsample(train, 2.0 / 3.0, 2);
  auto s3 = stratified_subsample(train, 2.0 / 3.0, 3);
  CHECK(s1 != s2);
  CHECK(s2 != s3);
  CHECK(s1 != s3);
  CHECK(class_counts(s1) == class_counts(s2));
  CHECK(class_counts(s2) == class_counts(s3));
  CHECK(stratified_subsample(train, 2.0 / 3.0, 1) == s1);

  // at least one per class
  auto tiny = stratified_subsample(train, 0.01, 4);
  CHECK(class_counts(tiny) == std::map<int, std::size_t>{{0, 1}, {1, 1}, {2, 1}});

  CHECK_THROWS(stratified_subsample({}, 0.5, 1));
  CHECK_THROWS(stratified_subsample(train, 0.0, 1));
  CHECK_THROWS(stratified_subsample(train, 1.5, 1));
}

TEST_CASE("dataset directory and manifest loading") {
  auto dir = temp_dir("dataio");
  auto ds = make_synthetic(2, 6, 12, 0.1, 3);
  ds.name = "Toy";
  save_ucr_dataset(ds, (dir / "Toy").string());
  auto back = load_ucr_dataset((dir / "Toy").string());
  CHECK(back.name == "Toy");
  CHECK(back.train == ds.train);
  CHECK(back.test == ds.test);
  CHECK(back.num_classes == 2);

  CHECK_THROWS_AS(load_ucr_dataset((dir / "Toy").string(), 10), ParseError);

  write_file((dir / "m.txt").string(), "# corpus\ntrain: Toy\nval:Toy\n\n");
  auto m = load_manifest((dir / "m.txt").string());
  CHECK(m.train.datasets.size() == 1);
  CHECK(m.validation.datasets.size() == 1);
  CHECK(m.train.all_series().size() == 12);

  write_file((dir / "bad.txt").string(), "test: Toy\n");
  CHECK_THROWS_AS(load_manifest((dir / "bad.txt").string()), ParseError);
}

TEST_CASE("joint label remapping keeps train and test ids aligned") {
  auto dir = temp_dir("remap");
  write_file((dir / "X_TRAIN.tsv").string(), "5\t1\t2\n7\t3\t4\n");
  write_file((dir / "X_TEST.tsv").string(), "7\t1\t1\n");
  auto ds = load_ucr_dataset(dir.string());
  CHECK(*ds.train[1].label == 1);
  CHECK(*ds.test[0].label == 1);
}
