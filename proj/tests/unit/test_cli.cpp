#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "overlap/cli.hpp"
#include "overlap/config.hpp"
#include "overlap/io.hpp"
#include "overlap/metrics.hpp"
#include "overlap/motion.hpp"
#include "overlap/synth.hpp"
#include "support/scenarios.hpp"

using namespace overlap;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "overlap");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "overlap_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_text(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
  return path;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

GroundTruth two_object_truth() {
  GroundTruth gt;
  gt.width = 100;
  gt.height = 80;
  gt.frames = {{{0, "red", Box(10, 10, 20, 20)}, {1, "blue", Box(60, 40, 20, 20)}},
               {{0, "red", Box(12, 10, 20, 20)}, {1, "blue", Box(60, 42, 20, 20)}}};
  return gt;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("config json") {
    const PipelineConfig c = config_from_json(json::parse(R"({"lambda": 0.6, "k": "auto", "resize": "none"})"));
    CHECK(c.lambda == 0.6);
    CHECK(c.self_tune);
    CHECK(c.resize_width == 0);
    CHECK(config_from_json(config_to_json(c)).lambda == 0.6);
    CHECK(config_to_json(config_from_json(config_to_json(c))) == config_to_json(c));
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"lamda": 0.6})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"k": "many"})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"lambda": "high"})")), ConfigError);

    PipelineConfig bad;
    bad.lambda = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = PipelineConfig{};
    bad.subseq_len = 2;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = PipelineConfig{};
    bad.classifier = "magic";
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_NOTHROW(PipelineConfig{}.validate());
  }

  TEST_CASE("synthetic spec validation") {
    SyntheticSpec s = scenario::movers()[0].spec;
    CHECK_NOTHROW(s.validate());
    CHECK(synth_spec_to_json(synth_spec_from_json(synth_spec_to_json(s))) == synth_spec_to_json(s));
    s.objects[0].color = "mauve";
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = scenario::movers()[0].spec;
    s.objects[0].enter = 20;
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }

  TEST_CASE("synthetic ground truth follows the trajectories") {
    SyntheticSpec s = scenario::base(5, 3, 20);
    s.objects.push_back(scenario::object("red", "rect", 20, 20, 30, 30, 0, 0));
    s.objects.push_back(scenario::object("blue", "rect", 20, 20, 80, 60, 2, 0));
    const SyntheticVideo v = render_synthetic(s);
    REQUIRE(v.truth.frames.size() == 5);
    for (int t = 0; t < 5; ++t) {
      CHECK(v.truth.frames[t][0].box == Box(30, 30, 20, 20));
      CHECK(v.truth.frames[t][1].box == Box(80 + 2 * t, 60, 20, 20));
    }
    REQUIRE(v.flows.size() == 4);
    CHECK(v.flows[0].u(90, 70) == 2.0f);
    CHECK(v.flows[0].v(90, 70) == 0.0f);
    CHECK(v.flows[0].u(40, 40) == 0.0f);
    CHECK(v.flows[0].u(5, 5) == 0.0f);
    CHECK(render_synthetic(s).frames == v.frames);
  }

  TEST_CASE("recall, purity and detection metrics") {
    const GroundTruth gt = two_object_truth();
    std::vector<Proposal> perfect;
    std::vector<Detection> dets;
    std::vector<ClusterRecord> recs;
    for (int t = 0; t < 2; ++t) {
      for (const auto& o : gt.frames[t]) {
        perfect.push_back({o.box, 1.0, t});
        dets.push_back({t, o.box, -1, o.class_name, 0.9, Provenance::Classified, o.id});
        recs.push_back({t, o.box, o.id, o.id});
      }
    }
    CHECK(recall_at(perfect, gt, 50) == 1.0);
    CHECK(recall_at({}, gt, 50) == 0.0);
    CHECK(recall_at(perfect, gt, 1) == 0.5);
    const DetectionMetrics m = detection_metrics(dets, gt);
    CHECK(m.overall.precision() == 1.0);
    CHECK(m.overall.recall() == 1.0);
    CHECK(m.label_accuracy == 1.0);
    CHECK(detection_metrics({}, gt).overall.recall() == 0.0);
    CHECK(cluster_purity(recs, gt) == 1.0);
    const ConsistencyResult c = temporal_consistency(recs, gt);
    CHECK(c.min == 1.0);
    CHECK(c.per_object.size() == 2);

    std::vector<int> pred(10, 0), truth(10, 0);
    truth[9] = 1;
    CHECK(purity(pred, truth) == doctest::Approx(0.9));
    CHECK(purity({0, 1}, {5, 5}) == 1.0);
  }

  TEST_CASE("json records round trip") {
    const Proposal p{Box(1, 2, 3, 4), 0.25, 7};
    CHECK(proposal_from_json(to_json(p)) == p);
    const ClusterRecord r{3, Box(5, 6, 7, 8), 2, 11};
    const ClusterRecord back = cluster_record_from_json(to_json(r));
    CHECK(back.box == r.box);
    CHECK(back.global_id == 11);
    CHECK(back.local_cluster == 2);
    const Detection d{4, Box(9, 9, 10, 10), 2, "blue", 0.75, Provenance::Propagated, 5};
    const Detection dd = detection_from_json(to_json(d));
    CHECK(dd.box == d.box);
    CHECK(dd.class_name == "blue");
    CHECK(dd.provenance == Provenance::Propagated);
    CHECK(dd.class_index == -1);
    CHECK(ground_truth_to_json(ground_truth_from_json(ground_truth_to_json(two_object_truth()))) ==
          ground_truth_to_json(two_object_truth()));

    const fs::path dir = fresh_dir("jsonl");
    write_text(dir / "bad.jsonl", "{\"a\": 1}\nnot json\n");
    CHECK_THROWS_AS(read_jsonl(dir / "bad.jsonl"), IoError);
    CHECK_THROWS_AS(read_jsonl(dir / "missing.jsonl"), IoError);
  }

  TEST_CASE("command line end to end") {
    const fs::path dir = fresh_dir("e2e");
    write_text(dir / "spec.json", synth_spec_to_json(scenario::movers()[1].spec).dump());
    write_text(dir / "config.json", config_to_json(scenario::config()).dump());
    REQUIRE(cli({"synth", "--spec", (dir / "spec.json").string(), "--out", (dir / "video").string()}) == 0);
    CHECK(fs::exists(dir / "video" / "gt.json"));
    CHECK(list_files(dir / "video" / "frames", ".ppm").size() == 12);
    CHECK(list_files(dir / "video" / "flow", ".flo").size() == 11);

    const std::vector<std::string> video = {"--frames", (dir / "video" / "frames").string(), "--flow",
                                            (dir / "video" / "flow").string(), "--config",
                                            (dir / "config.json").string()};
    auto with = [&](std::vector<std::string> head, const std::string& out) {
      head.insert(head.end(), video.begin(), video.end());
      head.push_back("--out");
      head.push_back((dir / out).string());
      return head;
    };
    REQUIRE(cli(with({"propose"}, "p")) == 0);
    REQUIRE(cli(with({"detect"}, "d")) == 0);
    REQUIRE(cli(with({"cluster"}, "c")) == 0);
    REQUIRE(cli(with({"segment-prior"}, "s")) == 0);
    CHECK_FALSE(read_jsonl(dir / "p" / "proposals.jsonl").empty());
    CHECK(fs::exists(dir / "d" / "stats.json"));
    CHECK_FALSE(read_jsonl(dir / "s" / "priors.jsonl").empty());

    const std::string gt = (dir / "video" / "gt.json").string();
    REQUIRE(cli({"eval", "--pred", (dir / "p" / "proposals.jsonl").string(), "--gt", gt, "--mode", "recall",
                 "--out", (dir / "m1").string()}) == 0);
    CHECK(json::parse(slurp(dir / "m1" / "metrics.json"))["recall"].get<double>() == 1.0);
    REQUIRE(cli({"eval", "--pred", (dir / "d" / "detections.jsonl").string(), "--gt", gt, "--mode", "detection",
                 "--out", (dir / "m2").string()}) == 0);
    CHECK(json::parse(slurp(dir / "m2" / "metrics.json"))["label_accuracy"].get<double>() >= 0.9);
    REQUIRE(cli({"eval", "--pred", (dir / "c" / "clusters.jsonl").string(), "--gt", gt, "--mode",
                 "consistency"}) == 0);

    REQUIRE(cli(with({"detect"}, "d2")) == 0);
    CHECK(slurp(dir / "d" / "detections.jsonl") == slurp(dir / "d2" / "detections.jsonl"));
  }

  TEST_CASE("exit codes") {
    const fs::path dir = fresh_dir("codes");
    CHECK(cli({}) == 2);
    CHECK(cli({"detect"}) == 2);
    CHECK(cli({"detect", "--frames", (dir / "nowhere").string(), "--lambda", "2"}) == 2);
    CHECK(cli({"detect", "--frames", (dir / "nowhere").string(), "--k", "lots"}) == 2);
    CHECK(cli({"detect", "--frames", (dir / "nowhere").string()}) == 3);
    write_text(dir / "bad.json", "{\"frames\": 0}");
    CHECK(cli({"synth", "--spec", (dir / "bad.json").string(), "--out", (dir / "v").string()}) == 2);
    CHECK(cli({"synth", "--spec", (dir / "absent.json").string(), "--out", (dir / "v").string()}) == 3);

    SyntheticSpec s = scenario::movers()[0].spec;
    s.frames = 4;
    write_text(dir / "spec.json", synth_spec_to_json(s).dump());
    REQUIRE(cli({"synth", "--spec", (dir / "spec.json").string(), "--out", (dir / "v").string()}) == 0);
    CHECK(cli({"detect", "--frames", (dir / "v" / "frames").string(), "--resize", "none", "--classifier",
               "cmd:/bin/false", "--out", (dir / "d").string()}) == 4);
    CHECK(cli({"eval", "--pred", (dir / "absent.jsonl").string(), "--gt", (dir / "v" / "gt.json").string()}) == 3);
    CHECK(cli({"eval", "--pred", (dir / "spec.json").string(), "--gt", (dir / "v" / "gt.json").string(), "--mode",
               "vibes"}) == 2);
  }
}
