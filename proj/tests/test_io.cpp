#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "helix/errors.hpp"
#include "helix/io.hpp"
#include "test_util.hpp"

using namespace helix;
using namespace helix::testing;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("helix_test_io_" + name);
}

template <typename E>
std::string error_of(const std::string& text) {
  try {
    parse_dataset(text, "f.csv");
  } catch (const E& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("one empty cell gives exactly one missing entry") {
  const Series s = parse_dataset("time,a,b\n0,1,2\n1,,4\n2,5,6\n");
  CHECK(s.values.shape() == Shape{3, 2});
  double zeros = 0;
  for (double m : s.mask.data()) zeros += m == 0.0;
  CHECK(zeros == 1);
  CHECK(s.mask.at({1, 0}) == 0.0);
  CHECK(s.values.at({1, 0}) == 0.0);
  CHECK(s.names == std::vector<std::string>{"a", "b"});
}

TEST_CASE("NaN literal and empty cell are the same") {
  const Series a = parse_dataset("time,a\n0,\n1,3\n");
  const Series b = parse_dataset("time,a\n0,NaN\n1,3\n");
  CHECK(bitwise_equal(a.values, b.values));
  CHECK(bitwise_equal(a.mask, b.mask));
}

TEST_CASE("write then read reproduces values bit for bit") {
  Tensor values = random_tensor({30, 4}, 1, -1e3, 1e3);
  values[0] = 1e-300;
  values[1] = -0.1;
  values[2] = 123456789.123456789;
  values[3] = 5e-324;
  Tensor mask(values.shape(), 1.0);
  mask[5] = 0.0;
  values[5] = 0.0;
  const Series s = make_series(values, mask);
  const auto path = temp_file("roundtrip.csv");
  write_dataset(path, s);
  const Series back = load_dataset(path);
  CHECK(bitwise_equal(back.values, values));
  CHECK(bitwise_equal(back.mask, mask));
  CHECK(back.time == s.time);
  CHECK(back.names == s.names);
  std::filesystem::remove(path);
}

TEST_CASE("parse errors carry a location") {
  CHECK(error_of<ParseError>("time,a,b\n0,1,2\n1,2\n").find("row 3") != std::string::npos);
  CHECK(error_of<ParseError>("time,a\n0,1\n0,2\n").find("not increasing") != std::string::npos);
  const std::string bad = error_of<ParseError>("time,a,b\n0,1,2\n1,2,abc\n");
  CHECK(bad.find("row 3") != std::string::npos);
  CHECK(bad.find("column 3") != std::string::npos);
  CHECK(!error_of<ParseError>("time,a\n1.5,2\n").empty());
  CHECK(!error_of<ParseError>("x,a\n0,1\n").empty());
  CHECK(!error_of<ParseError>("").empty());
}

TEST_CASE("coordinates round trip") {
  const std::vector<Coord> coords{{0.1, 0.2}, {0.75, 1.0 / 3.0}};
  const auto path = temp_file("coords.csv");
  write_coords(path, coords);
  const auto back = load_coords(path);
  REQUIRE(back.size() == 2);
  CHECK(back[1].y == coords[1].y);
  CHECK(distance(back[0], back[1]) == doctest::Approx(std::hypot(0.65, 0.2 - 1.0 / 3.0)));
  std::filesystem::remove(path);
}

TEST_CASE("normalization") {
  SUBCASE("constant feature is floored to zero") {
    const Tensor values(Shape{5, 1}, 3.0);
    const Tensor mask(values.shape(), 1.0);
    const NormStats s = normalize_fit(values, mask, 0, 5);
    CHECK(s.std[0] == kStdFloor);
    const Tensor z = normalize_apply(values, mask, s);
    for (double v : z.data()) CHECK(v == 0.0);
  }
  SUBCASE("inverse round trip") {
    const Tensor values = random_tensor({40, 3}, 2, -5, 20);
    const Tensor mask(values.shape(), 1.0);
    const NormStats s = normalize_fit(values, mask, 0, 28);
    CHECK(max_abs_diff(normalize_inverse(normalize_apply(values, mask, s), s), values) < 1e-12);
  }
  SUBCASE("training rows have zero observed mean") {
    const Tensor values = random_tensor({50, 3}, 3, 10, 30);
    Tensor mask = random_tensor({50, 3}, 4, 0, 1);
    for (auto& m : mask.data()) m = m < 0.6 ? 1.0 : 0.0;
    const NormStats s = normalize_fit(values, mask, 0, 35);
    const Tensor z = normalize_apply(values, mask, s);
    for (std::size_t f = 0; f < 3; ++f) {
      double sum = 0, n = 0, sq = 0;
      for (std::size_t r = 0; r < 35; ++r)
        if (mask[r * 3 + f] != 0.0) {
          sum += z[r * 3 + f];
          sq += z[r * 3 + f] * z[r * 3 + f];
          ++n;
        }
      CHECK(std::abs(sum / n) < 1e-10);
      CHECK(sq / n == doctest::Approx(1.0).epsilon(1e-10));
    }
    for (std::size_t i = 0; i < z.numel(); ++i)
      if (mask[i] == 0.0) CHECK(z[i] == 0.0);
  }
  SUBCASE("too few observations") {
    Tensor mask(Shape{4, 2}, 1.0);
    mask.at({0, 1}) = mask.at({1, 1}) = mask.at({2, 1}) = 0.0;
    CHECK_THROWS_AS(normalize_fit(Tensor(Shape{4, 2}), mask, 0, 4), DataError);
  }
}

TEST_CASE("windowing") {
  const Tensor values = random_tensor({96, 2}, 6);
  const Tensor mask(values.shape(), 1.0);
  CHECK(make_windows(values, mask, 48).count() == 2);
  CHECK_THROWS_AS(make_windows(values, mask, 97), DataError);

  const Split s = chronological_split(400);
  CHECK(s.train == 280);
  CHECK(s.val == 40);
  CHECK(s.test == 80);

  SUBCASE("windows reassemble the covered prefix") {
    const Tensor v = random_tensor({103, 3}, 7);
    const Windows w = make_windows(v, Tensor(v.shape(), 1.0), 10);
    CHECK(w.count() == 10);
    Tensor back(v.shape(), 0.0);
    scatter_windows(w.values, w.starts, back);
    for (std::size_t i = 0; i < 100 * 3; ++i) CHECK(back[i] == v[i]);
    for (std::size_t i = 100 * 3; i < back.numel(); ++i) CHECK(back[i] == 0.0);
  }
  SUBCASE("splits are whole windows in time order") {
    const Windows w = make_windows(values, mask, 4);
    CHECK(w.split.train + w.split.val + w.split.test == w.count());
    CHECK(w.row_end(w.split.train) == w.starts[w.split.val_begin()]);
    CHECK(w.row_end(w.split.test_begin()) == w.starts[w.split.test_begin()]);
    for (std::size_t i = 1; i < w.count(); ++i) CHECK(w.starts[i] > w.starts[i - 1]);
  }
  SUBCASE("overlapping stride") {
    const Windows w = make_windows(values, mask, 48, 24);
    CHECK(w.count() == 3);
    CHECK(w.values.at({1, 0, 1}) == values.at({24, 1}));
  }
  SUBCASE("slices") {
    const Windows w = make_windows(values, mask, 8);
    const Tensor part = slice_windows(w.values, 2, 5);
    CHECK(part.shape() == Shape{3, 8, 2});
    CHECK(part.at({0, 0, 0}) == values.at({16, 0}));
    CHECK_THROWS_AS(slice_windows(w.values, 5, 5), RangeError);
  }
}
