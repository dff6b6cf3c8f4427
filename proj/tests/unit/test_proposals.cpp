#include <doctest.h>

#include <numbers>
#include <random>

#include "overlap/edges.hpp"
#include "overlap/metrics.hpp"
#include "overlap/pipeline.hpp"
#include "overlap/proposals.hpp"
#include "overlap/synth.hpp"
#include "support/oracles.hpp"
#include "support/scenarios.hpp"

using namespace overlap;

namespace {

struct Scored {
  Field2D edges;
  std::vector<EdgeGroup> groups;
};

Scored square_scene(int size, const Box& sq) {
  Scored s{Field2D(size, size), {}};
  Field2D ori(size, size);
  for (int x = sq.x; x < sq.right(); ++x) {
    s.edges(x, sq.y) = s.edges(x, sq.bottom() - 1) = 1.0f;
    ori(x, sq.y) = ori(x, sq.bottom() - 1) = static_cast<float>(std::numbers::pi / 2);
  }
  for (int y = sq.y + 1; y < sq.bottom() - 1; ++y) s.edges(sq.x, y) = s.edges(sq.right() - 1, y) = 1.0f;
  s.groups = edge_groups(s.edges, ori, 0.1);
  return s;
}

ProposalParams small_params() {
  ProposalParams p;
  p.min_box_area = 100;
  return p;
}

}  // namespace

TEST_SUITE("proposals") {
  TEST_CASE("empty map scores zero") {
    const BoxScorer scorer(Field2D(32, 32), {}, small_params());
    CHECK(scorer.score(Box(2, 3, 20, 10)) == 0.0);
    CHECK_THROWS_AS(scorer.score(Box(20, 20, 20, 20)), std::out_of_range);
  }

  TEST_CASE("tight box beats a straddling box") {
    const Box sq(10, 10, 20, 20);
    const Scored s = square_scene(48, sq);
    const BoxScorer scorer(s.edges, s.groups, small_params());
    const double tight = scorer.score(Box(9, 9, 22, 22));
    const double straddle = scorer.score(Box(20, 9, 22, 22));
    CHECK(tight > straddle);
    CHECK(tight > 0.0);
  }

  TEST_CASE("score is linear in edge magnitudes before normalization") {
    std::mt19937_64 rng(31);
    const Field2D e = oracle::random_field(rng, 40, 40, 0.7);
    Field2D doubled = e;
    for (float& v : doubled.data()) v *= 2.0f;
    Field2D ori(40, 40, 0.3f);
    ProposalParams p = small_params();
    p.edge_threshold = 0.0;
    const auto g1 = edge_groups(e, ori, 0.0);
    const auto g2 = edge_groups(doubled, ori, 0.0);
    const BoxScorer s1(e, g1, p), s2(doubled, g2, p);
    for (int i = 0; i < 50; ++i) {
      const Box b = oracle::random_box(rng, 40, 40);
      CHECK(s2.score(b) == doctest::Approx(2.0 * s1.score(b)).epsilon(1e-5));
    }
  }

  TEST_CASE("score matches the brute-force scan") {
    std::mt19937_64 rng(32);
    std::uniform_real_distribution<float> theta(0.0f, static_cast<float>(std::numbers::pi));
    const ProposalParams params = small_params();
    for (int m = 0; m < 10; ++m) {
      const Field2D e = oracle::random_field(rng, 64, 64, 0.85);
      Field2D ori(64, 64);
      for (float& v : ori.data()) v = theta(rng);
      const BoxScorer scorer(e, edge_groups(e, ori, params.edge_threshold), params);
      for (int i = 0; i < 200; ++i) {
        const Box b = oracle::random_box(rng, 64, 64);
        const double want = oracle::box_score(e, scorer.groups(), scorer.graph(), params, b);
        CHECK(scorer.score(b) == doctest::Approx(want).epsilon(1e-6));
        CHECK(scorer.upper_bound(b) >= scorer.score(b));
      }
    }
  }

  TEST_CASE("nms examples and post-condition") {
    const std::vector<Proposal> one = {{Box(0, 0, 5, 5), 0.3, 0}};
    CHECK(nms(one, 0.5) == one);
    const std::vector<Proposal> dup = {{Box(1, 1, 8, 8), 0.8, 0}, {Box(1, 1, 8, 8), 0.9, 0}};
    const auto kept = nms(dup, 0.5);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].score == 0.9);

    std::mt19937_64 rng(33);
    std::uniform_real_distribution<double> s(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Proposal> ps;
      for (int i = 0; i < 60; ++i) ps.push_back({oracle::random_box(rng, 50, 50), s(rng), 0});
      const auto out = nms(ps, 0.4);
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (i > 0) CHECK(out[i - 1].score >= out[i].score);
        for (std::size_t j = i + 1; j < out.size(); ++j) CHECK(iou(out[i].box, out[j].box) <= 0.4);
      }
    }
  }

  TEST_CASE("sliding windows respect area and aspect limits") {
    ProposalParams p;
    p.min_box_area = 200;
    const auto boxes = sliding_windows(80, 60, p);
    CHECK_FALSE(boxes.empty());
    for (const Box& b : boxes) {
      CHECK(within_frame(b, 80, 60));
      CHECK(b.area() >= 150);
    }
  }

  TEST_CASE("single high-contrast square gives a tight top proposal") {
    const Box sq(24, 18, 30, 30);
    Image img(96, 80);
    for (int y = 0; y < 80; ++y) {
      for (int x = 0; x < 96; ++x) {
        const bool in = x >= sq.x && x < sq.right() && y >= sq.y && y < sq.bottom();
        const std::uint8_t v = in ? 230 : 20;
        img.set(x, y, v, v, v);
      }
    }
    ProposalParams p = small_params();
    p.max_proposals = 20;
    const EdgeResponse e = thin_edges(spatial_edge(img));
    const auto groups = edge_groups(e.magnitude, e.orientation, p.edge_threshold);
    const auto props = generate_proposals(e.magnitude, groups, p, 0);
    REQUIRE_FALSE(props.empty());
    CHECK(props.size() <= 20);
    CHECK(iou(props[0].box, sq) >= 0.7);
    for (std::size_t i = 1; i < props.size(); ++i) CHECK(props[i - 1].score >= props[i].score);
    CHECK(generate_proposals(e.magnitude, groups, p, 0) == props);
  }

  TEST_CASE("blank map yields a bounded list") {
    ProposalParams p = small_params();
    p.max_proposals = 5;
    const auto props = generate_proposals(Field2D(40, 40), {}, p, 3);
    CHECK(props.size() <= 5);
    for (const auto& q : props) CHECK(q.score == 0.0);
  }

  TEST_CASE("high lambda favours the mover over static clutter") {
    SyntheticSpec spec;
    spec.frames = 5;
    spec.seed = 9;
    spec.objects.push_back(scenario::object("red", "rect", 30, 28, 20, 40, 2, 0));
    spec.objects.push_back(scenario::object("blue", "rect", 30, 28, 100, 60, 0, 0));
    const SyntheticVideo sv = render_synthetic(spec);
    const PipelineConfig cfg = scenario::config();
    const auto props = video_proposals(make_video(sv.frames, sv.flows, cfg), cfg);
    std::vector<Proposal> all;
    for (const auto& f : props) all.insert(all.end(), f.begin(), f.end());

    auto only = [&](int id) {
      GroundTruth gt = sv.truth;
      for (auto& frame : gt.frames) {
        std::erase_if(frame, [&](const GtObject& o) { return o.id != id; });
      }
      return gt;
    };
    const double mover = recall_at(all, only(0), 50);
    const double still = recall_at(all, only(1), 50);
    CHECK(mover == 1.0);
    CHECK(mover > still);
    CHECK(recall_at(all, sv.truth, 10) <= recall_at(all, sv.truth, 50));
  }
}
