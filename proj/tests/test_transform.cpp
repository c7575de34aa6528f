#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <vector>

#include "demosim/rng.hpp"
#include "demosim/transform.hpp"
#include "demosim/vec.hpp"

using namespace demosim;

namespace {

std::vector<double> random_vector(uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

// Textbook orthonormal DCT-II evaluated directly from the defining sum, kept
// deliberately independent of the plan's precomputed basis.
std::vector<double> naive_dct2(const std::vector<double>& x) {
  const std::size_t s = x.size();
  std::vector<double> out(s, 0.0);
  for (std::size_t j = 0; j < s; ++j) {
    const double scale = j == 0 ? std::sqrt(1.0 / static_cast<double>(s))
                                : std::sqrt(2.0 / static_cast<double>(s));
    double acc = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
      acc += x[i] * std::cos(std::numbers::pi * (2.0 * static_cast<double>(i) + 1.0) *
                             static_cast<double>(j) / (2.0 * static_cast<double>(s)));
    }
    out[j] = scale * acc;
  }
  return out;
}

}  // namespace

TEST_CASE("chunk layout arithmetic") {
  SUBCASE("exact multiple") {
    const ChunkLayout l = chunk_layout(64, 32);
    CHECK(l.num_chunks == 2);
    CHECK(l.pad == 0);
  }
  SUBCASE("one element of spill") {
    const ChunkLayout l = chunk_layout(65, 32);
    CHECK(l.num_chunks == 3);
    CHECK(l.pad == 31);
  }
  SUBCASE("length below one chunk") {
    const ChunkLayout l = chunk_layout(1, 32);
    CHECK(l.num_chunks == 1);
    CHECK(l.pad == 31);
  }
  SUBCASE("zero chunk size throws, zero length degenerates to no chunks") {
    CHECK_THROWS_AS(chunk_layout(10, 0), ConfigError);
    const ChunkLayout l = chunk_layout(0, 32);
    CHECK(l.num_chunks == 0);
    CHECK(l.pad == 0);
  }
}

TEST_CASE("chunk and unchunk round trip exactly with a zero pad") {
  for (std::size_t len : {1u, 2u, 31u, 32u, 33u, 64u, 65u, 70u}) {
    for (std::size_t s : {1u, 2u, 16u, 32u}) {
      const std::vector<double> v = random_vector(mix_seed(len, s), len);
      const ChunkLayout layout = chunk_layout(len, s);
      const std::vector<double> rows = chunk(v, layout);
      CHECK(rows.size() == layout.num_chunks * s);
      for (std::size_t i = len; i < rows.size(); ++i) CHECK(rows[i] == 0.0);
      CHECK(unchunk(rows, layout) == v);
    }
  }
}

TEST_CASE("dct basis rows are orthonormal") {
  for (std::size_t s : {1u, 2u, 7u, 32u}) {
    const DctPlan& plan = dct_plan(s);
    // Probe B * B^T through forward/inverse on unit vectors instead of peeking
    // at the private basis: inverse(forward(e_i)) must be e_i and the image of
    // an orthonormal set must stay orthonormal.
    std::vector<std::vector<double>> images(s);
    for (std::size_t i = 0; i < s; ++i) {
      std::vector<double> e(s, 0.0);
      e[i] = 1.0;
      images[i].resize(s);
      plan.forward(e, images[i]);
    }
    for (std::size_t a = 0; a < s; ++a) {
      for (std::size_t b = 0; b < s; ++b) {
        const double expect = a == b ? 1.0 : 0.0;
        CHECK(std::fabs(dot(images[a], images[b]) - expect) < 1e-12);
      }
    }
  }
}

TEST_CASE("forward transform matches the defining cosine sum") {
  for (std::size_t s : {1u, 2u, 4u, 16u, 32u}) {
    const std::vector<double> x = random_vector(mix_seed(900, s), s);
    std::vector<double> got(s);
    dct_plan(s).forward(x, got);
    const std::vector<double> want = naive_dct2(x);
    CHECK(max_abs_diff(got, want) < 1e-11);
  }
}

TEST_CASE("constant signal concentrates in the zero frequency") {
  const std::vector<double> x(4, 1.0);
  const std::vector<double> c = dct2(x);
  CHECK(c[0] == doctest::Approx(2.0).epsilon(1e-14));
  for (std::size_t j = 1; j < 4; ++j) CHECK(std::fabs(c[j]) < 1e-15);
}

TEST_CASE("round trip and energy conservation") {
  for (std::size_t s : {1u, 2u, 16u, 32u, 64u}) {
    for (int rep = 0; rep < 20; ++rep) {
      const std::vector<double> x = random_vector(mix_seed(7000 + rep, s), s);
      const std::vector<double> c = dct2(x);
      const std::vector<double> back = idct3(c);
      CHECK(max_abs_diff(back, x) < 1e-9);
      const double ex = squared_norm(x);
      CHECK(std::fabs(squared_norm(c) - ex) < 1e-9 * std::max(1.0, ex));
    }
  }
}

TEST_CASE("keeping every frequency reproduces the input bitwise") {
  const std::vector<double> v = random_vector(401, 70);
  const Extraction ex = extract_fast_components(v, 32, 32);
  CHECK(ex.fast == v);
  for (double r : ex.residual) CHECK(r == 0.0);
  CHECK(ex.selection.indices.size() == ex.selection.layout.num_chunks * 32);
}

TEST_CASE("selection keeps the largest magnitudes with ties toward low indices") {
  SUBCASE("all-zero input ties everywhere") {
    const std::vector<double> v(8, 0.0);
    const Extraction ex = extract_fast_components(v, 8, 3);
    REQUIRE(ex.selection.indices.size() == 3);
    CHECK(ex.selection.indices[0] == 0);
    CHECK(ex.selection.indices[1] == 1);
    CHECK(ex.selection.indices[2] == 2);
  }

  SUBCASE("kept set equals the brute force top set") {
    for (int rep = 0; rep < 25; ++rep) {
      const std::size_t s = 16;
      const std::size_t k = 5;
      const std::vector<double> v = random_vector(mix_seed(3100, rep), s);
      const std::vector<double> c = dct2(v);

      std::vector<std::size_t> order(s);
      for (std::size_t i = 0; i < s; ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double ma = std::fabs(c[a]), mb = std::fabs(c[b]);
        return ma != mb ? ma > mb : a < b;
      });
      std::set<uint32_t> want(order.begin(), order.begin() + k);

      const Extraction ex = extract_fast_components(v, s, k);
      std::set<uint32_t> got(ex.selection.indices.begin(), ex.selection.indices.end());
      CHECK(got == want);
      CHECK(std::is_sorted(ex.selection.indices.begin(), ex.selection.indices.end()));

      // Selected coefficients travel with their indices.
      for (std::size_t j = 0; j < k; ++j) {
        CHECK(ex.selection.coeffs[j] == c[ex.selection.indices[j]]);
      }
    }
  }
}

TEST_CASE("fast plus residual reconstructs the input and splits its energy") {
  for (int rep = 0; rep < 10; ++rep) {
    const std::vector<double> v = random_vector(mix_seed(52, rep), 96);
    const Extraction ex = extract_fast_components(v, 32, 6);
    REQUIRE(ex.fast.size() == v.size());
    REQUIRE(ex.residual.size() == v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      CHECK(ex.residual[i] == v[i] - ex.fast[i]);  // defined exactly this way
    }
    // The two parts live in orthogonal frequency subspaces, so their energies
    // add up to the input energy.
    const double total = squared_norm(v);
    const double split = squared_norm(ex.fast) + squared_norm(ex.residual);
    CHECK(std::fabs(split - total) < 1e-9 * std::max(1.0, total));
  }
}

TEST_CASE("padding never leaks into the reconstruction") {
  std::vector<double> v = random_vector(77, 65);
  const Extraction short_run = extract_fast_components(v, 32, 4);

  // The same signal zero-extended to a whole number of chunks must produce the
  // same leading reconstruction, because pad positions hold exact zeros.
  std::vector<double> extended = v;
  extended.resize(96, 0.0);
  const Extraction long_run = extract_fast_components(extended, 32, 4);
  for (std::size_t i = 0; i < 65; ++i) {
    CHECK(short_run.fast[i] == long_run.fast[i]);
  }

  CHECK_THROWS_AS(extract_fast_components(v, 32, 0), ConfigError);
  CHECK_THROWS_AS(extract_fast_components(v, 32, 33), ConfigError);
}

TEST_CASE("sign transform maps values onto the three-point alphabet") {
  std::vector<double> v = {3.5, -0.25, 0.0, -0.0, 1e-300, -1e-300,
                           std::numeric_limits<double>::infinity(),
                           -std::numeric_limits<double>::infinity(),
                           std::numeric_limits<double>::quiet_NaN()};
  sign_transform(v);
  const std::vector<double> want = {1.0, -1.0, 0.0, 0.0, 1.0, -1.0, 1.0, -1.0, 0.0};
  CHECK(v == want);
  CHECK(!std::signbit(v[3]));  // negative zero normalizes to plain zero
}
