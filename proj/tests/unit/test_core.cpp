#include <doctest.h>

#include <random>

#include "overlap/core.hpp"
#include "support/oracles.hpp"

using namespace overlap;

TEST_SUITE("core") {
  TEST_CASE("iou examples") {
    const Box b(3, 4, 10, 7);
    CHECK(iou(b, b) == doctest::Approx(1.0));
    CHECK(iou(Box(0, 0, 10, 10), Box(20, 20, 5, 5)) == 0.0);
    CHECK(iou(Box(0, 0, 10, 10), Box(0, 0, 5, 10)) == doctest::Approx(0.5));
  }

  TEST_CASE("iou is symmetric and bounded") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 2000; ++i) {
      const Box a = oracle::random_box(rng, 50, 40);
      const Box b = oracle::random_box(rng, 50, 40);
      const double v = iou(a, b);
      CHECK(v == iou(b, a));
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  TEST_CASE("box rejects non-positive sizes") {
    CHECK_THROWS_AS(Box(0, 0, 0, 4), std::invalid_argument);
    CHECK_THROWS_AS(Box(0, 0, 4, -1), std::invalid_argument);
  }

  TEST_CASE("quad round trip") {
    const Box b(5, 6, 11, 8);
    CHECK(from_quad(to_quad(b)) == b);
  }

  TEST_CASE("clamp_to_frame") {
    bool clamped = false;
    CHECK(clamp_to_frame(Box(2, 2, 5, 5), 20, 20, &clamped) == Box(2, 2, 5, 5));
    CHECK_FALSE(clamped);
    CHECK(clamp_to_frame(Box(-3, 15, 10, 10), 20, 20, &clamped) == Box(0, 15, 7, 5));
    CHECK(clamped);
    const Box far = clamp_to_frame(Box(40, 40, 3, 3), 20, 20);
    CHECK(within_frame(far, 20, 20));
  }

  TEST_CASE("integral image examples") {
    const IntegralImage zero = integral_image(Field2D(5, 4));
    CHECK(box_sum(zero, Box(0, 0, 5, 4)) == 0.0);
    const IntegralImage ones = integral_image(Field2D(2, 2, 1.0f));
    CHECK(box_sum(ones, Box(0, 0, 2, 2)) == 4.0);
    Field2D f(6, 6);
    f(3, 2) = 2.5f;
    const IntegralImage ii = integral_image(f);
    CHECK(box_sum(ii, Box(3, 2, 1, 1)) == doctest::Approx(2.5));
    CHECK_THROWS_AS(integral_image(Field2D()), std::invalid_argument);
    CHECK_THROWS_AS(box_sum(ii, Box(4, 4, 3, 1)), std::out_of_range);
  }

  TEST_CASE("box_sum matches brute force on random fields") {
    std::mt19937_64 rng(11);
    for (int m = 0; m < 20; ++m) {
      const Field2D f = oracle::random_field(rng, 64, 64);
      const IntegralImage ii = integral_image(f);
      CHECK(box_sum(ii, Box(0, 0, 64, 64)) == doctest::Approx(f.sum()).epsilon(1e-9));
      for (int i = 0; i < 200; ++i) {
        const Box b = oracle::random_box(rng, 64, 64);
        const double want = oracle::box_sum(f, b);
        CHECK(box_sum(ii, b) == doctest::Approx(want).epsilon(1e-9));
      }
    }
  }

  TEST_CASE("box_sum is monotone under nesting for non-negative fields") {
    std::mt19937_64 rng(12);
    const Field2D f = oracle::random_field(rng, 40, 30, 0.5);
    const IntegralImage ii = integral_image(f);
    for (int i = 0; i < 500; ++i) {
      const Box outer = oracle::random_box(rng, 40, 30);
      const Box inner = oracle::random_box(rng, outer.w, outer.h);
      const Box shifted(outer.x + inner.x, outer.y + inner.y, inner.w, inner.h);
      CHECK(box_sum(ii, outer) >= box_sum(ii, shifted));
    }
  }

  TEST_CASE("integral image is linear") {
    std::mt19937_64 rng(13);
    const Field2D f = oracle::random_field(rng, 32, 24);
    const Field2D g = oracle::random_field(rng, 32, 24);
    const double alpha = 0.75, beta = -1.5;
    Field2D h(32, 24);
    for (std::size_t i = 0; i < h.size(); ++i) {
      h.data()[i] = static_cast<float>(alpha * f.data()[i] + beta * g.data()[i]);
    }
    const IntegralImage fi = integral_image(f), gi = integral_image(g), hi = integral_image(h);
    for (int i = 0; i < 200; ++i) {
      const Box b = oracle::random_box(rng, 32, 24);
      CHECK(box_sum(hi, b) == doctest::Approx(alpha * box_sum(fi, b) + beta * box_sum(gi, b)).epsilon(1e-5));
    }
  }

  TEST_CASE("field shape checks") {
    CHECK_THROWS(Field2D(3, 3, std::vector<float>(8)));
    Field2D f(4, 3, 0.5f);
    CHECK(f.size() == 12);
    CHECK(f.max_value() == 0.5f);
    CHECK(f.clamped(-5, 10) == 0.5f);
  }
}
