#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "overlap/motion.hpp"
#include "support/oracles.hpp"

using namespace overlap;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "overlap_motion_tests";
  fs::create_directories(dir);
  return dir / name;
}

Field2D textured(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Field2D f(w, h);
  for (float& v : f.data()) v = u(rng);
  return f;
}

Field2D shifted(const Field2D& f, int dx, int dy) {
  Field2D g(f.width(), f.height());
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) g(x, y) = f.clamped(x - dx, y - dy);
  }
  return g;
}

}  // namespace

TEST_SUITE("motion") {
  TEST_CASE("flow file round trip and zero field") {
    FlowField zero(7, 5);
    save_flow(temp_path("zero.flo"), zero);
    const FlowField z = load_flow(temp_path("zero.flo"));
    CHECK(z == zero);

    FlowField f(9, 4);
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 9; ++x) f.set(x, y, 0.25f * x - 1.0f, -0.5f * y);
    }
    save_flow(temp_path("ramp.flo"), f);
    CHECK(load_flow(temp_path("ramp.flo")) == f);
    CHECK_THROWS_AS(load_flow(temp_path("ramp.flo"), 10, 4), IoError);
  }

  TEST_CASE("flow file written independently") {
    // Bytes assembled by hand: magic, width, height, interleaved (u, v).
    const fs::path p = temp_path("hand.flo");
    {
      std::ofstream out(p, std::ios::binary);
      const float magic = 202021.25f;
      const std::int32_t w = 6, h = 4;
      out.write(reinterpret_cast<const char*>(&magic), 4);
      out.write(reinterpret_cast<const char*>(&w), 4);
      out.write(reinterpret_cast<const char*>(&h), 4);
      for (int i = 0; i < w * h; ++i) {
        const float uv[2] = {2.0f, 0.0f};
        out.write(reinterpret_cast<const char*>(uv), 8);
      }
    }
    const FlowField f = load_flow(p);
    double mean_u = 0.0, mean_v = 0.0;
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 6; ++x) {
        mean_u += f.u(x, y);
        mean_v += f.v(x, y);
      }
    }
    CHECK(mean_u / 24 == doctest::Approx(2.0).epsilon(0.25));
    CHECK(std::abs(mean_v / 24) < 0.5);
  }

  TEST_CASE("malformed flow files") {
    const fs::path bad = temp_path("bad.flo");
    {
      std::ofstream out(bad, std::ios::binary);
      const float magic = 1.0f;
      out.write(reinterpret_cast<const char*>(&magic), 4);
    }
    CHECK_THROWS_AS(load_flow(bad), IoError);
    const fs::path trunc = temp_path("trunc.flo");
    {
      std::ofstream out(trunc, std::ios::binary);
      const float magic = kFloMagic;
      const std::int32_t w = 4, h = 4;
      out.write(reinterpret_cast<const char*>(&magic), 4);
      out.write(reinterpret_cast<const char*>(&w), 4);
      out.write(reinterpret_cast<const char*>(&h), 4);
    }
    CHECK_THROWS_AS(load_flow(trunc), IoError);
    CHECK_THROWS_AS(load_flow(temp_path("missing.flo")), IoError);
  }

  TEST_CASE("block matching") {
    const Field2D f = textured(48, 40, 3);
    const FlowField same = block_matching_flow(f, f, 4, 7);
    for (int y = 0; y < 40; ++y) {
      for (int x = 0; x < 48; ++x) {
        CHECK(same.u(x, y) == 0.0f);
        CHECK(same.v(x, y) == 0.0f);
      }
    }

    const FlowField moved = block_matching_flow(f, shifted(f, 3, 0), 5, 7);
    int hits = 0, total = 0;
    for (int y = 8; y < 32; ++y) {
      for (int x = 8; x < 40; ++x) {
        ++total;
        hits += moved.u(x, y) == 3.0f && moved.v(x, y) == 0.0f;
      }
    }
    CHECK(hits >= 0.9 * total);

    const Field2D flat(20, 20, 0.5f);
    const FlowField tie = block_matching_flow(flat, flat, 3, 5);
    CHECK(tie.u(10, 10) == 0.0f);
    CHECK(tie.v(10, 10) == 0.0f);
    CHECK_THROWS_AS(block_matching_flow(f, Field2D(10, 10), 3, 5), std::invalid_argument);
  }

  TEST_CASE("motion boundary") {
    FlowField constant(20, 20);
    for (int y = 0; y < 20; ++y) {
      for (int x = 0; x < 20; ++x) constant.set(x, y, 1.5f, -0.5f);
    }
    CHECK(motion_boundary(constant).max_value() == 0.0f);
    CHECK(motion_boundary(FlowField(20, 20)).max_value() == 0.0f);

    FlowField step(30, 20);
    for (int y = 0; y < 20; ++y) {
      for (int x = 0; x < 15; ++x) step.set(x, y, 2.0f, 0.0f);
    }
    const Field2D b = motion_boundary(step);
    double near = 0.0, total = 0.0;
    for (int y = 0; y < 20; ++y) {
      for (int x = 0; x < 30; ++x) {
        total += b(x, y);
        if (x >= 13 && x <= 16) near += b(x, y);
        CHECK(b(x, y) >= 0.0f);
        CHECK(b(x, y) <= 1.0f);
      }
    }
    CHECK(total > 0.0);
    CHECK(near == doctest::Approx(total));
  }

  TEST_CASE("inside-outside map") {
    const oracle::Contour sq = oracle::square_contour(64, 16, 16, 32);
    const Field2D in = inside_outside_map(sq.boundary, 0.5);
    int hit = 0, interior = 0, false_mark = 0, exterior = 0;
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        if (sq.interior(x, y) > 0) {
          ++interior;
          hit += in(x, y) > 0;
        } else if (sq.boundary(x, y) == 0) {
          ++exterior;
          false_mark += in(x, y) > 0;
        }
      }
    }
    CHECK(hit == interior);
    CHECK(false_mark == 0);
    CHECK(inside_outside_map(Field2D(16, 16), 0.5).max_value() == 0.0f);
    CHECK(inside_outside_map(Field2D(16, 16, 1.0f), 0.5).max_value() == 0.0f);
  }

  TEST_CASE("inside-outside agrees with a per-pixel parity oracle") {
    const oracle::Contour el = oracle::ellipse_contour(80, 40.3, 38.7, 25.0, 17.0);
    const Field2D in = inside_outside_map(el.boundary, 0.5);
    const int dirs[8][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {-1, -1}, {1, -1}, {-1, 1}};
    int agree = 0, total = 0;
    for (int y = 0; y < 80; ++y) {
      for (int x = 0; x < 80; ++x) {
        if (el.boundary(x, y) > 0) continue;
        int odd = 0;
        for (const auto& d : dirs) odd += oracle::ray_crossings(el.boundary, 0.5, x, y, d[0], d[1]) % 2;
        ++total;
        agree += (odd >= 5) == (in(x, y) > 0);
      }
    }
    CHECK(agree >= 0.99 * total);
  }

  TEST_CASE("accumulate prior") {
    Field2D a(4, 4), b(4, 4), c(4, 4), d(4, 4);
    a(1, 1) = 1.0f;
    c(1, 1) = 1.0f;
    const std::vector<Field2D> masks = {a, b, c, d};
    CHECK(accumulate_prior(masks).values(1, 1) == doctest::Approx(0.5));
    const std::vector<Field2D> same = {a, a, a};
    CHECK(accumulate_prior(same).values.data()[5] == 1.0f);
    const std::vector<Field2D> permuted = {d, c, a, b};
    const LocationPrior p1 = accumulate_prior(masks), p2 = accumulate_prior(permuted);
    for (std::size_t i = 0; i < 16; ++i) CHECK(p1.values.data()[i] == p2.values.data()[i]);
    const std::vector<Field2D> mismatch = {a, Field2D(3, 4)};
    CHECK_THROWS_AS(accumulate_prior(mismatch), std::invalid_argument);
    CHECK_THROWS_AS(accumulate_prior(std::vector<Field2D>{}), std::invalid_argument);
  }

  TEST_CASE("translating square prior covers the union with graded values") {
    std::vector<Field2D> masks;
    for (int t = 0; t < 3; ++t) {
      Field2D m(30, 20);
      for (int y = 5; y < 15; ++y) {
        for (int x = 5 + 2 * t; x < 15 + 2 * t; ++x) m(x, y) = 1.0f;
      }
      masks.push_back(m);
    }
    const LocationPrior p = accumulate_prior(masks);
    for (int y = 0; y < 20; ++y) {
      for (int x = 0; x < 30; ++x) {
        double mean = 0.0;
        for (const auto& m : masks) mean += m(x, y);
        CHECK(p.values(x, y) == doctest::Approx(mean / 3.0));
      }
    }
    CHECK(p.values(6, 10) == doctest::Approx(1.0 / 3.0));
    CHECK(p.values(10, 10) == doctest::Approx(1.0));
  }

  TEST_CASE("temporal edge") {
    LocationPrior constant{Field2D(10, 10, 0.4f), 0, 1};
    CHECK(temporal_edge(constant).max_value() == 0.0f);
    LocationPrior zero{Field2D(10, 10), 0, 1};
    CHECK(temporal_edge(zero).max_value() == 0.0f);

    Field2D sq(20, 20);
    for (int y = 6; y < 14; ++y) {
      for (int x = 6; x < 14; ++x) sq(x, y) = 1.0f;
    }
    const Field2D e = temporal_edge(LocationPrior{sq, 0, 1});
    double on = 0.0, total = 0.0;
    for (int y = 0; y < 20; ++y) {
      for (int x = 0; x < 20; ++x) {
        CHECK(e(x, y) >= 0.0f);
        total += e(x, y);
        const bool perimeter = x >= 5 && x <= 14 && y >= 5 && y <= 14 && !(x >= 7 && x <= 12 && y >= 7 && y <= 12);
        if (perimeter) on += e(x, y);
        if (x >= 8 && x <= 11 && y >= 8 && y <= 11) CHECK(e(x, y) == 0.0f);
      }
    }
    CHECK(e.max_value() == doctest::Approx(1.0f));
    CHECK(on == doctest::Approx(total));
  }
}
