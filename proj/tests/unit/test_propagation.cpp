#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "overlap/propagation.hpp"
#include "support/scenarios.hpp"

using namespace overlap;

namespace {

// Scores every box with the color rule while logging calls.
class LoggingClassifier : public Classifier {
 public:
  int class_count() const override { return inner_.class_count(); }
  std::vector<std::vector<double>> classify(const ClassifyRequest& r) override {
    frames.push_back(r.frame);
    windows += static_cast<int>(r.boxes.size());
    return inner_.classify(r);
  }
  std::vector<int> frames;
  int windows = 0;

 private:
  ColorRuleClassifier inner_;
};

ClusterDescriptor any_descriptor() {
  FeatureVector f;
  f.color_hist[0] = f.color_hist[kHistBins] = f.color_hist[2 * kHistBins] = 1.0;
  f.location = {0.5, 0.5, 0.2, 0.2};
  return cluster_descriptor({f, f});
}

std::filesystem::path script(const std::string& name, const std::string& body) {
  const auto dir = std::filesystem::temp_directory_path() / "overlap_classifier_tests";
  std::filesystem::create_directories(dir);
  const auto p = dir / name;
  std::ofstream(p) << "#!/bin/sh\n" << body;
  std::filesystem::permissions(p, std::filesystem::perms::owner_all);
  return p;
}

}  // namespace

TEST_SUITE("propagation") {
  TEST_CASE("location gaussian") {
    const LocationModel same = fit_location_gaussian(std::vector<Box>(4, Box(10, 20, 8, 6)));
    CHECK(same.mean[0] == doctest::Approx(14.0));
    CHECK(same.mean[1] == doctest::Approx(23.0));
    CHECK(same.mean[2] == doctest::Approx(6.0));
    CHECK(same.mean[3] == doctest::Approx(8.0));
    CHECK(same.covariance.isApprox(Eigen::Matrix4d::Identity()));

    std::mt19937_64 rng(71);
    std::uniform_int_distribution<int> j(-5, 5);
    std::vector<Box> jit, moved;
    for (int i = 0; i < 400; ++i) {
      jit.emplace_back(40 + j(rng), 30 + j(rng), 20, 16);
      moved.emplace_back(jit.back().x + 7, jit.back().y - 3, 20, 16);
    }
    const LocationModel m = fit_location_gaussian(jit);
    CHECK(std::abs(m.mean[0] - 50.0) < 1.0);
    CHECK(std::abs(m.mean[1] - 38.0) < 1.0);
    const LocationModel t = fit_location_gaussian(moved);
    CHECK(t.mean[0] - m.mean[0] == doctest::Approx(7.0));
    CHECK(t.mean[1] - m.mean[1] == doctest::Approx(-3.0));
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(m.covariance);
    CHECK(eig.eigenvalues().minCoeff() > 0.0);
    CHECK_THROWS_AS(fit_location_gaussian({}), std::invalid_argument);
  }

  TEST_CASE("offsets and localization") {
    ClusterRegistry reg;
    const int id = reg.create(any_descriptor(), 0);
    const std::vector<Box> members = {Box(10, 10, 20, 20), Box(12, 10, 20, 20), Box(14, 10, 20, 20)};
    const LocationModel m = fit_location_gaussian(members);
    const Box at_mean = from_quad({m.mean[0], m.mean[1], m.mean[2], m.mean[3]});
    const Offset zero = record_offset(reg, id, at_mean, m);
    for (const double v : zero) CHECK(v == doctest::Approx(0.0));

    const Box shifted(at_mean.x + 3, at_mean.y, at_mean.w, at_mean.h);
    const Offset d = record_offset(reg, id, shifted, m);
    CHECK(d[0] == doctest::Approx(3.0));
    CHECK(d[1] == doctest::Approx(0.0));
    CHECK(reg.at(id).offset.has_value());
    CHECK(propagate_localization(m, d, 200, 200) == shifted);
    CHECK(propagate_localization(m, Offset{}, 200, 200) == at_mean);

    std::vector<Box> next;
    for (const Box& b : members) next.emplace_back(b.x + 5, b.y, b.w, b.h);
    const Box moved = propagate_localization(fit_location_gaussian(next), d, 200, 200);
    CHECK(moved == Box(shifted.x + 5, shifted.y, shifted.w, shifted.h));

    bool clamped = false;
    const Box out = propagate_localization(m, Offset{500.0, 0.0, 0.0, 0.0}, 200, 200, &clamped);
    CHECK(clamped);
    CHECK(within_frame(out, 200, 200));
    CHECK_THROWS_AS(record_offset(reg, 99, shifted, m), std::out_of_range);
  }

  TEST_CASE("classification fraction") {
    CHECK(classification_fraction({100, 100, 3}) == 1.0);
    CHECK(classification_fraction({400, 100, 3}) == doctest::Approx(0.25));
    CHECK_THROWS_AS(classification_fraction({0, 0, 0}), std::invalid_argument);
  }

  TEST_CASE("color rule classifier") {
    const SyntheticVideo sv = render_synthetic(scenario::movers()[1].spec);
    ColorRuleClassifier clf;
    ClassifyRequest r;
    r.image = &sv.frames[0];
    for (const auto& o : sv.truth.frames[0]) r.boxes.push_back(o.box);
    r.boxes.push_back(Box(0, 0, 10, 10));
    const auto scores = clf.classify(r);
    REQUIRE(scores.size() == 3);
    for (std::size_t k = 0; k < 2; ++k) {
      const auto& s = scores[k];
      const auto best = std::max_element(s.begin() + 1, s.end()) - s.begin();
      CHECK(palette()[best - 1].name == sv.truth.frames[0][k].class_name);
      CHECK(s.size() == palette().size() + 1);
    }
    CHECK(scores[2][0] == doctest::Approx(1.0));
  }

  TEST_CASE("static object is classified once") {
    const auto suite = scenario::economy_suite();
    const SyntheticSpec spec = suite.back().spec;
    const PipelineConfig cfg = scenario::config();
    const SyntheticVideo sv = render_synthetic(spec);
    const Video v = make_video(sv.frames, sv.flows, cfg);
    LoggingClassifier clf;
    const DetectResult r = detect_stream(v, video_proposals(v, cfg), cfg, clf);
    for (const auto& call : r.calls) CHECK(call.subsequence == 0);
    CHECK(classification_fraction(r.stats) <= 0.25 + 1e-12);
    CHECK(r.stats.classified_windows == clf.windows);
  }

  TEST_CASE("entering object triggers one burst") {
    const auto suite = scenario::economy_suite();
    const SyntheticSpec spec = suite[3].spec;
    REQUIRE(suite[3].entering);
    const PipelineConfig cfg = scenario::config();
    const scenario::Run run = scenario::run(spec, cfg);
    const auto ranges = make_subsequences(spec.frames, cfg.subseq_len);
    int entry_sub = -1;
    for (std::size_t s = 0; s < ranges.size(); ++s) {
      if (ranges[s].begin < 6 && 6 < ranges[s].end) entry_sub = static_cast<int>(s);
    }
    REQUIRE(entry_sub >= 0);
    // The entering object's cyan id is classified in the sub-sequence containing frame 6.
    bool cyan_classified = false;
    for (const auto& frame : run.result.per_frame) {
      for (const auto& d : frame) {
        if (d.class_name == "cyan" && d.provenance == Provenance::Classified && d.frame >= 6 &&
            d.frame < ranges[entry_sub].end) {
          cyan_classified = true;
        }
      }
    }
    CHECK(cyan_classified);
  }

  TEST_CASE("call log and provenance invariants") {
    for (const auto& named : scenario::economy_suite()) {
      const scenario::Run run = scenario::run(named.spec, scenario::config());
      const auto& subs = run.result.subsequences;
      for (const auto& call : run.result.calls) {
        const auto& sc = subs[call.subsequence];
        const auto it = std::find(sc.global_ids.begin(), sc.global_ids.end(), call.global_id);
        REQUIRE(it != sc.global_ids.end());
        CHECK(sc.is_new[it - sc.global_ids.begin()]);
      }
      for (const auto& frame : run.result.per_frame) {
        for (const auto& d : frame) {
          const auto& sc = *std::find_if(subs.begin(), subs.end(), [&](const SubsequenceClusters& s) {
            return d.frame >= s.first_output_frame() && d.frame < s.range.end;
          });
          const auto it = std::find(sc.global_ids.begin(), sc.global_ids.end(), d.global_id);
          REQUIRE(it != sc.global_ids.end());
          CHECK((d.provenance == Provenance::Classified) == sc.is_new[it - sc.global_ids.begin()]);
        }
      }
    }
  }

  TEST_CASE("classify-all mode classifies every window") {
    const scenario::Run run = scenario::run(scenario::movers()[0].spec, scenario::config(), true);
    CHECK(classification_fraction(run.result.stats) == 1.0);
  }

  TEST_CASE("command classifier protocol") {
    const auto ok = script("ok.sh",
                           "while read line; do\n"
                           "  n=$(echo \"$line\" | grep -o '\\[[0-9]*,[0-9]*,[0-9]*,[0-9]*\\]' | wc -l)\n"
                           "  out=''; i=0\n"
                           "  while [ $i -lt $n ]; do [ -n \"$out\" ] && out=\"$out,\"; out=\"$out[0.1,0.9,0,0,0,0,0]\"; "
                           "i=$((i+1)); done\n"
                           "  echo \"{\\\"scores\\\":[$out]}\"\n"
                           "done\n");
    CommandClassifier clf(ok.string(), 6);
    ClassifyRequest r;
    r.frame = 2;
    r.original_boxes = {Box(1, 2, 3, 4), Box(5, 6, 7, 8)};
    r.boxes = r.original_boxes;
    const auto s = clf.classify(r);
    REQUIRE(s.size() == 2);
    CHECK(s[1][1] == doctest::Approx(0.9));

    const auto garbage = script("garbage.sh", "while read line; do echo nonsense; done\n");
    CommandClassifier bad(garbage.string(), 6);
    CHECK_THROWS_AS(bad.classify(r), ProtocolError);

    const auto short_vec = script("short.sh", "while read line; do echo '{\"scores\":[[1,0]]}'; done\n");
    CommandClassifier wrong(short_vec.string(), 6);
    CHECK_THROWS_AS(wrong.classify(r), ProtocolError);

    CommandClassifier dead("exit 0", 6);
    CHECK_THROWS_AS(dead.classify(r), ProtocolError);
  }

  TEST_CASE("classifier failure aborts after flushing finished sub-sequences") {
    const auto dies = script("dies.sh", "read line; echo '{\"scores\":[]}'; exit 0\n");
    PipelineConfig cfg = scenario::config();
    cfg.classifier = "cmd:" + dies.string();
    const SyntheticVideo sv = render_synthetic(scenario::movers()[0].spec);
    const Video v = make_video(sv.frames, sv.flows, cfg);
    auto clf = make_classifier(cfg);
    int flushed = 0;
    DetectOptions opt;
    opt.sink = [&](const std::vector<Detection>& ds) { flushed += static_cast<int>(ds.size()); };
    CHECK_THROWS_AS(detect_stream(v, cfg, *clf, opt), ProtocolError);
    CHECK(flushed >= 0);
  }
}
