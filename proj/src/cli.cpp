#include "overlap/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "overlap/config.hpp"
#include "overlap/io.hpp"
#include "overlap/metrics.hpp"
#include "overlap/pipeline.hpp"
#include "overlap/propagation.hpp"
#include "overlap/segmentation.hpp"
#include "overlap/synth.hpp"

namespace overlap {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Overrides {
  std::string config_path;
  std::optional<double> lambda;
  std::optional<int> subseq_len;
  std::optional<std::string> k;
  std::optional<double> rho;
  std::optional<double> tau_kl;
  std::optional<int> max_proposals;
  std::optional<std::string> classifier;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> resize;
  std::optional<int> workers;
};

struct VideoInputs {
  std::string frames;
  std::string flow;
  std::string edges;
};

void add_config_flags(CLI::App& app, Overrides& o) {
  app.add_option("--config", o.config_path, "JSON configuration file; flags override it");
  app.add_option("--lambda", o.lambda, "Temporal edge weight in [0, 1]");
  app.add_option("--subseq-len", o.subseq_len, "Sub-sequence length, 3 to 5");
  app.add_option("--k", o.k, "Cluster count or \"auto\" for self-tuning");
  app.add_option("--rho", o.rho, "PMI exponent");
  app.add_option("--tau-kl", o.tau_kl, "Association threshold on the KL cost");
  app.add_option("--max-proposals", o.max_proposals, "Proposals kept per frame");
  app.add_option("--classifier", o.classifier, "oracle, always or cmd:PATH");
  app.add_option("--seed", o.seed, "Random seed");
  app.add_option("--resize", o.resize, "Processing size WxH or \"none\"");
  app.add_option("--workers", o.workers, "Preprocessing threads, 0 for automatic");
}

void add_video_flags(CLI::App& app, VideoInputs& in) {
  app.add_option("--frames", in.frames, "Directory of numbered PPM frames")->required();
  app.add_option("--flow", in.flow, "Directory of .flo files; block matching when absent");
  app.add_option("--edges", in.edges, "Directory of PGM spatial edge maps replacing the detector");
}

PipelineConfig resolve_config(const Overrides& o) {
  PipelineConfig c = o.config_path.empty() ? PipelineConfig{} : load_config(o.config_path);
  json j = json::object();
  if (o.lambda) j["lambda"] = *o.lambda;
  if (o.subseq_len) j["subseq_len"] = *o.subseq_len;
  if (o.k) {
    if (*o.k == "auto") {
      j["k"] = "auto";
    } else {
      try {
        std::size_t used = 0;
        const int k = std::stoi(*o.k, &used);
        if (used != o.k->size()) throw std::invalid_argument(*o.k);
        j["k"] = k;
      } catch (const std::logic_error&) {
        throw ConfigError("k: expected an integer or \"auto\", got \"" + *o.k + "\"");
      }
    }
  }
  if (o.rho) j["rho"] = *o.rho;
  if (o.tau_kl) j["tau_kl"] = *o.tau_kl;
  if (o.max_proposals) j["max_proposals"] = *o.max_proposals;
  if (o.classifier) j["classifier"] = *o.classifier;
  if (o.seed) j["seed"] = *o.seed;
  if (o.workers) j["workers"] = *o.workers;
  if (o.resize) {
    if (*o.resize == "none") {
      j["resize"] = "none";
    } else {
      int w = 0;
      int h = 0;
      char x = 0;
      char extra = 0;
      if (std::sscanf(o.resize->c_str(), "%d%c%d%c", &w, &x, &h, &extra) != 3 || (x != 'x' && x != 'X')) {
        throw ConfigError("resize: expected WxH or \"none\", got \"" + *o.resize + "\"");
      }
      j["resize"] = {w, h};
    }
  }
  c = config_from_json(j, c);
  c.validate();
  return c;
}

Video open_video(const VideoInputs& in, const PipelineConfig& config) {
  std::optional<fs::path> flow;
  if (!in.flow.empty()) flow = in.flow;
  Video v = load_video(in.frames, flow, config);
  if (!in.edges.empty()) attach_edge_maps(v, in.edges);
  return v;
}

fs::path output_dir(const std::string& out) {
  const fs::path dir = out.empty() ? fs::path(".") : fs::path(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
  return dir;
}

class JsonLinesWriter {
 public:
  explicit JsonLinesWriter(const fs::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  }
  void write(const json& record) {
    out_ << record.dump() << '\n';
    if (!out_) throw IoError("write failed: " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

void write_json(const fs::path& path, const json& value) {
  std::ofstream out(path, std::ios::binary);
  out << value.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + path.string());
}

std::vector<std::vector<Proposal>> original_proposals(const Video& video,
                                                      std::vector<std::vector<Proposal>> proposals) {
  for (auto& frame : proposals) {
    for (auto& p : frame) p.box = to_original(video, p.box);
  }
  return proposals;
}

int cmd_propose(const Overrides& o, const VideoInputs& in, const std::string& out) {
  const PipelineConfig config = resolve_config(o);
  const Video video = open_video(in, config);
  const auto proposals = original_proposals(video, video_proposals(video, config));
  JsonLinesWriter w(output_dir(out) / "proposals.jsonl");
  for (const auto& frame : proposals) {
    for (const auto& p : frame) w.write(to_json(p));
  }
  return 0;
}

int cmd_detect(const Overrides& o, const VideoInputs& in, const std::string& out, bool classify_all) {
  const PipelineConfig config = resolve_config(o);
  const fs::path dir = output_dir(out);
  const Video video = open_video(in, config);
  auto classifier = make_classifier(config);
  JsonLinesWriter w(dir / "detections.jsonl");
  DetectOptions options;
  options.classify_all = classify_all;
  options.sink = [&](const std::vector<Detection>& ds) {
    for (const auto& d : ds) w.write(to_json(d));
  };
  const DetectResult r = detect_stream(video, config, *classifier, options);
  write_json(dir / "stats.json", to_json(r.stats));
  std::cout << to_json(r.stats).dump() << '\n';
  return 0;
}

int cmd_cluster(const Overrides& o, const VideoInputs& in, const std::string& out) {
  const PipelineConfig config = resolve_config(o);
  const Video video = open_video(in, config);
  const auto proposals = video_proposals(video, config);
  StreamingClusterer clusterer(config);
  JsonLinesWriter w(output_dir(out) / "clusters.jsonl");
  const auto ranges = make_subsequences(video.size(), config.subseq_len);
  for (std::size_t s = 0; s < ranges.size(); ++s) {
    const SubsequenceClusters sc = clusterer.process(static_cast<int>(s), ranges[s], proposals, video);
    for (std::size_t i = 0; i < sc.proposals.size(); ++i) {
      const Proposal& p = sc.proposals[i];
      if (p.frame < sc.first_output_frame()) continue;
      const int local = sc.labels[i];
      w.write(to_json(ClusterRecord{p.frame, to_original(video, p.box), local, sc.global_ids[local]}));
    }
  }
  return 0;
}

int cmd_segment_prior(const Overrides& o, const VideoInputs& in, const std::string& out) {
  const PipelineConfig config = resolve_config(o);
  const Video video = open_video(in, config);
  const auto proposals = video_proposals(video, config);
  StreamingClusterer clusterer(config);
  const fs::path dir = output_dir(out);
  const fs::path mask_dir = dir / "masks";
  fs::create_directories(mask_dir);
  JsonLinesWriter w(dir / "priors.jsonl");
  const int width = video.original_width;
  const int height = video.original_height;
  const auto ranges = make_subsequences(video.size(), config.subseq_len);
  for (std::size_t s = 0; s < ranges.size(); ++s) {
    const SubsequenceClusters sc = clusterer.process(static_cast<int>(s), ranges[s], proposals, video);
    for (int t = sc.first_output_frame(); t < sc.range.end; ++t) {
      for (int c = 0; c < sc.cluster_count; ++c) {
        const auto ids = sc.members(c, t);
        if (ids.empty()) continue;
        std::vector<Box> boxes;
        for (const int i : ids) boxes.push_back(to_original(video, sc.proposals[i].box));
        const Field2D mask = prior_mask(foreground_prior(boxes, width, height), config.mask_threshold);
        char name[64];
        std::snprintf(name, sizeof name, "prior_%04d_%d.pgm", t, sc.global_ids[c]);
        write_pgm(mask_dir / name, mask);
        w.write({{"frame", t},
                 {"global_id", sc.global_ids[c]},
                 {"boxes", static_cast<int>(boxes.size())},
                 {"area", static_cast<long long>(mask.sum())},
                 {"mask", (fs::path("masks") / name).generic_string()}});
      }
    }
  }
  return 0;
}

int cmd_synth(const std::string& spec_path, const std::string& out) {
  std::ifstream f(spec_path);
  if (!f) throw IoError("cannot open " + spec_path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("synthetic spec " + spec_path + ": " + e.what());
  }
  const SyntheticSpec spec = synth_spec_from_json(j);
  write_synthetic(render_synthetic(spec), output_dir(out));
  return 0;
}

template <class T, class F>
std::vector<T> read_records(const std::string& path, F parse) {
  std::vector<T> out;
  for (const auto& j : read_jsonl(path)) out.push_back(parse(j));
  return out;
}

void check_frames(int frame, const GroundTruth& gt) {
  if (frame < 0 || frame >= static_cast<int>(gt.frames.size())) {
    throw ConfigError("prediction frame " + std::to_string(frame) + " is outside the ground truth (" +
                      std::to_string(gt.frames.size()) + " frames)");
  }
}

int cmd_eval(const std::string& pred, const std::string& gt_path, const std::string& mode, int n,
             const std::string& out) {
  const GroundTruth gt = load_ground_truth(gt_path);
  json result;
  if (mode == "recall") {
    const auto ps = read_records<Proposal>(pred, proposal_from_json);
    for (const auto& p : ps) check_frames(p.frame, gt);
    result = {{"mode", mode}, {"n", n}, {"recall", recall_at(ps, gt, n)}};
  } else if (mode == "purity" || mode == "consistency") {
    const auto rs = read_records<ClusterRecord>(pred, cluster_record_from_json);
    for (const auto& r : rs) check_frames(r.frame, gt);
    if (mode == "purity") {
      result = {{"mode", mode}, {"purity", cluster_purity(rs, gt)}};
    } else {
      result = to_json(temporal_consistency(rs, gt));
      result["mode"] = mode;
    }
  } else if (mode == "detection") {
    const auto ds = read_records<Detection>(pred, detection_from_json);
    for (const auto& d : ds) check_frames(d.frame, gt);
    result = to_json(detection_metrics(ds, gt));
    result["mode"] = mode;
  } else {
    throw ConfigError("mode: expected recall, purity, consistency or detection, got \"" + mode + "\"");
  }
  if (!out.empty()) write_json(output_dir(out) / "metrics.json", result);
  std::cout << result.dump() << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Streaming video object detection with proposal clustering and label propagation", "overlap"};
  app.require_subcommand(1);

  Overrides o;
  VideoInputs in;
  std::string out;
  bool classify_all = false;
  std::string spec_path;
  std::string pred;
  std::string gt;
  std::string mode = "recall";
  int n = 50;

  auto* propose = app.add_subcommand("propose", "Rank video object proposals per frame");
  auto* detect = app.add_subcommand("detect", "Detect objects, classifying only new clusters");
  auto* cluster = app.add_subcommand("cluster", "Cluster proposals with streaming identity association");
  auto* segment = app.add_subcommand("segment-prior", "Foreground prior masks per cluster and frame");
  for (auto* sub : {propose, detect, cluster, segment}) {
    add_config_flags(*sub, o);
    add_video_flags(*sub, in);
    sub->add_option("--out", out, "Output directory");
  }
  detect->add_flag("--classify-all", classify_all, "Classify every cluster of every sub-sequence");

  auto* synth = app.add_subcommand("synth", "Render a synthetic video with ground truth and exact flow");
  synth->add_option("--spec", spec_path, "Synthetic spec JSON")->required();
  synth->add_option("--out", out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "Score predictions against ground truth");
  eval->add_option("--pred", pred, "Predictions JSON-lines")->required();
  eval->add_option("--gt", gt, "Ground-truth JSON")->required();
  eval->add_option("--mode", mode, "recall, purity, consistency or detection");
  eval->add_option("--n", n, "Proposals per frame counted by recall")->check(CLI::PositiveNumber);
  eval->add_option("--out", out, "Directory for metrics.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*propose) return cmd_propose(o, in, out);
    if (*detect) return cmd_detect(o, in, out, classify_all);
    if (*cluster) return cmd_cluster(o, in, out);
    if (*segment) return cmd_segment_prior(o, in, out);
    if (*synth) return cmd_synth(spec_path, out);
    if (*eval) return cmd_eval(pred, gt, mode, n, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 3;
  } catch (const ProtocolError& e) {
    std::cerr << "classifier protocol error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace overlap
