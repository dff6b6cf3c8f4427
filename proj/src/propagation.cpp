#include "overlap/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <map>

#include <json.hpp>
#include <sys/wait.h>
#include <unistd.h>

namespace overlap {

const std::vector<PaletteColor>& palette() {
  static const std::vector<PaletteColor> colors = {
      {"red", {220, 40, 40}},     {"green", {40, 190, 60}},    {"blue", {40, 70, 220}},
      {"yellow", {230, 210, 40}}, {"magenta", {210, 50, 200}}, {"cyan", {40, 200, 210}},
  };
  return colors;
}

namespace {

int palette_index(const Image& img, int x, int y, int tolerance) {
  const auto& colors = palette();
  for (std::size_t c = 0; c < colors.size(); ++c) {
    bool match = true;
    for (int ch = 0; ch < 3 && match; ++ch) {
      match = std::abs(static_cast<int>(img.at(x, y, ch)) - colors[c].rgb[ch]) <= tolerance;
    }
    if (match) return static_cast<int>(c);
  }
  return -1;
}

}  // namespace

ColorRuleClassifier::ColorRuleClassifier(int tolerance) : tolerance_(tolerance) {}

std::vector<std::vector<double>> ColorRuleClassifier::classify(const ClassifyRequest& request) {
  if (!request.image) throw std::invalid_argument("color-rule classifier needs the frame image");
  const Image& img = *request.image;
  const int classes = class_count();
  // Per-pixel palette index and integral counts per color.
  std::vector<Field2D> masks(classes, Field2D(img.width(), img.height()));
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const int c = palette_index(img, x, y, tolerance_);
      if (c >= 0) masks[c](x, y) = 1.0f;
    }
  }
  std::vector<IntegralImage> counts;
  std::vector<double> totals;
  for (const auto& m : masks) {
    counts.emplace_back(m);
    totals.push_back(m.sum());
  }
  std::vector<std::vector<double>> out;
  out.reserve(request.boxes.size());
  for (const Box& b : request.boxes) {
    const Box clipped = clamp_to_frame(b, img.width(), img.height());
    std::vector<double> s(classes + 1, 0.0);
    double best = 0.0;
    for (int c = 0; c < classes; ++c) {
      if (totals[c] <= 0.0) continue;
      const double n = box_sum(counts[c], clipped);
      s[c + 1] = (n / static_cast<double>(clipped.area())) * (n / totals[c]);
      best = std::max(best, s[c + 1]);
    }
    s[0] = 1.0 - best;
    out.push_back(std::move(s));
  }
  return out;
}

CommandClassifier::CommandClassifier(const std::string& command, int class_count) : class_count_(class_count) {
  if (class_count < 1) throw std::invalid_argument("class count must be positive");
  std::signal(SIGPIPE, SIG_IGN);
  int in_pipe[2];
  int out_pipe[2];
  if (pipe(in_pipe) != 0) throw ProtocolError("cannot create classifier pipe");
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw ProtocolError("cannot create classifier pipe");
  }
  const pid_t pid = fork();
  if (pid < 0) throw ProtocolError("cannot spawn classifier: " + command);
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = fdopen(out_pipe[0], "r");
  if (!from_child_) {
    shutdown();
    throw ProtocolError("cannot read from classifier");
  }
}

CommandClassifier::~CommandClassifier() { shutdown(); }

void CommandClassifier::shutdown() {
  if (to_child_ >= 0) {
    close(to_child_);
    to_child_ = -1;
  }
  if (from_child_) {
    std::fclose(from_child_);
    from_child_ = nullptr;
  }
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

std::vector<std::vector<double>> CommandClassifier::classify(const ClassifyRequest& request) {
  if (to_child_ < 0 || !from_child_) throw ProtocolError("classifier is not running");
  nlohmann::json req;
  req["frame"] = request.frame;
  req["frame_path"] = request.frame_path.string();
  req["boxes"] = nlohmann::json::array();
  for (const Box& b : request.original_boxes) req["boxes"].push_back({b.x, b.y, b.w, b.h});
  const std::string line = req.dump() + "\n";
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = write(to_child_, line.data() + written, line.size() - written);
    if (n <= 0) throw ProtocolError("classifier closed its input");
    written += static_cast<std::size_t>(n);
  }

  std::string response;
  int c = 0;
  while ((c = std::fgetc(from_child_)) != EOF && c != '\n') response.push_back(static_cast<char>(c));
  if (response.empty() && c == EOF) throw ProtocolError("classifier exited without a response");

  std::vector<std::vector<double>> scores;
  try {
    const auto j = nlohmann::json::parse(response);
    scores = j.at("scores").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed classifier response: ") + e.what());
  }
  if (scores.size() != request.original_boxes.size()) {
    throw ProtocolError("classifier returned " + std::to_string(scores.size()) + " score vectors for " +
                        std::to_string(request.original_boxes.size()) + " boxes");
  }
  for (const auto& s : scores) {
    if (static_cast<int>(s.size()) != class_count_ + 1) {
      throw ProtocolError("score vector length must be " + std::to_string(class_count_ + 1));
    }
    for (const double v : s) {
      if (!std::isfinite(v)) throw ProtocolError("classifier returned a non-finite score");
    }
  }
  return scores;
}

std::unique_ptr<Classifier> make_classifier(const PipelineConfig& config) {
  if (config.classifier == "oracle" || config.classifier == "always") {
    return std::make_unique<ColorRuleClassifier>();
  }
  if (config.classifier.rfind("cmd:", 0) == 0) {
    return std::make_unique<CommandClassifier>(config.classifier.substr(4),
                                               static_cast<int>(config.classes.size()));
  }
  throw ConfigError("unknown classifier: " + config.classifier);
}

LocationModel fit_location_gaussian(const std::vector<Box>& boxes, double sigma) {
  if (boxes.empty()) throw std::invalid_argument("location model needs at least one box");
  std::vector<Eigen::Vector4d> q;
  q.reserve(boxes.size());
  for (const Box& b : boxes) {
    const BoxQuad v = to_quad(b);
    q.emplace_back(v.cx, v.cy, v.h, v.w);
  }
  LocationModel m;
  m.mean.setZero();
  for (const auto& v : q) m.mean += v;
  m.mean /= static_cast<double>(q.size());
  m.covariance.setZero();
  for (const auto& v : q) m.covariance += (v - m.mean) * (v - m.mean).transpose();
  m.covariance /= static_cast<double>(q.size());
  m.covariance += sigma * sigma * Eigen::Matrix4d::Identity();
  return m;
}

Offset record_offset(ClusterRegistry& registry, int global_id, const Box& detected, const LocationModel& model) {
  RegistryEntry& e = registry.at(global_id);
  const BoxQuad q = to_quad(detected);
  const Offset d = {q.cx - model.mean[0], q.cy - model.mean[1], q.h - model.mean[2], q.w - model.mean[3]};
  e.offset = d;
  return d;
}

Box propagate_localization(const LocationModel& model, const Offset& d, int width, int height, bool* clamped) {
  const BoxQuad q{model.mean[0] + d[0], model.mean[1] + d[1], model.mean[2] + d[2], model.mean[3] + d[3]};
  return clamp_to_frame(from_quad(q), width, height, clamped);
}

const char* to_string(Provenance p) { return p == Provenance::Classified ? "classified" : "propagated"; }

double classification_fraction(const DetectStats& stats) {
  if (stats.total_windows <= 0) throw std::invalid_argument("no proposals were generated");
  return static_cast<double>(stats.classified_windows) / static_cast<double>(stats.total_windows);
}

namespace {

std::string class_name(const PipelineConfig& config, int index) {
  if (index == 0) return "background";
  if (index - 1 < static_cast<int>(config.classes.size())) return config.classes[index - 1];
  return "class" + std::to_string(index);
}

std::vector<Box> boxes_of(const SubsequenceClusters& sc, const std::vector<int>& ids) {
  std::vector<Box> out;
  out.reserve(ids.size());
  for (const int i : ids) out.push_back(sc.proposals[i].box);
  return out;
}

// Class-aware suppression: keeps the most confident detection among those
// of one class overlapping by more than beta.
std::vector<Detection> suppress(std::vector<Detection> dets, double beta) {
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    return std::tie(b.confidence, a.global_id) < std::tie(a.confidence, b.global_id);
  });
  std::vector<Detection> kept;
  for (const auto& d : dets) {
    const bool dup = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.class_index == d.class_index && iou(k.box, d.box) > beta;
    });
    if (!dup) kept.push_back(d);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const Detection& a, const Detection& b) { return a.global_id < b.global_id; });
  return kept;
}

}  // namespace

DetectResult detect_stream(const Video& video, const std::vector<std::vector<Proposal>>& proposals,
                           const PipelineConfig& config, Classifier& classifier, const DetectOptions& options) {
  config.validate();
  if (static_cast<int>(proposals.size()) != video.size()) {
    throw std::invalid_argument("one proposal list per frame is required");
  }
  DetectResult result;
  result.per_frame.resize(video.frames.size());
  StreamingClusterer clusterer(config);
  const auto ranges = make_subsequences(video.size(), config.subseq_len);

  for (int s = 0; s < static_cast<int>(ranges.size()); ++s) {
    SubsequenceClusters sc = clusterer.process(s, ranges[s], proposals, video);
    result.stats.total_windows += static_cast<long long>(sc.proposals.size());
    ClusterRegistry& registry = clusterer.registry();
    std::map<int, std::vector<Detection>> frame_dets;

    for (int c = 0; c < sc.cluster_count; ++c) {
      const int gid = sc.global_ids[c];
      RegistryEntry& entry = registry.at(gid);
      if (sc.is_new[c]) ++result.stats.clusters_created;
      const bool classify = sc.is_new[c] || options.classify_all || config.classifier == "always" || !entry.label;

      if (classify) {
        // Score every member, one request per frame.
        std::vector<std::vector<double>> scores(sc.proposals.size());
        std::vector<double> pooled(classifier.class_count() + 1, 0.0);
        for (int t = sc.range.begin; t < sc.range.end; ++t) {
          const auto ids = sc.members(c, t);
          if (ids.empty()) continue;
          ClassifyRequest req;
          req.frame = t;
          req.image = &video.frames[t];
          if (t < static_cast<int>(video.frame_paths.size())) req.frame_path = video.frame_paths[t];
          req.boxes = boxes_of(sc, ids);
          for (const Box& b : req.boxes) req.original_boxes.push_back(to_original(video, b));
          auto out = classifier.classify(req);
          if (out.size() != ids.size()) throw ProtocolError("classifier returned the wrong number of results");
          result.calls.push_back({s, t, gid, static_cast<int>(ids.size())});
          result.stats.classified_windows += static_cast<long long>(ids.size());
          for (std::size_t k = 0; k < ids.size(); ++k) {
            if (static_cast<int>(out[k].size()) != classifier.class_count() + 1) {
              throw ProtocolError("classifier returned the wrong number of scores");
            }
            for (std::size_t j = 0; j < pooled.size(); ++j) pooled[j] = std::max(pooled[j], out[k][j]);
            scores[ids[k]] = std::move(out[k]);
          }
        }
        int label = 0;
        double confidence = 0.0;
        for (int j = 1; j < static_cast<int>(pooled.size()); ++j) {
          if (pooled[j] > confidence) {
            confidence = pooled[j];
            label = j;
          }
        }
        if (confidence < config.confidence_threshold) label = 0;
        entry.label = label;
        entry.confidence = confidence;

        for (int t = sc.range.begin; t < sc.range.end; ++t) {
          const auto ids = sc.members(c, t);
          if (ids.empty()) continue;
          // Best member for the cluster's class; objectness breaks ties.
          int best = ids.front();
          for (const int i : ids) {
            const double si = scores[i][label];
            const double sb = scores[best][label];
            if (si > sb || (si == sb && sc.proposals[i].score > sc.proposals[best].score)) best = i;
          }
          const LocationModel model = fit_location_gaussian(boxes_of(sc, ids));
          record_offset(registry, gid, sc.proposals[best].box, model);
          if (label == 0 || t < sc.first_output_frame()) continue;
          frame_dets[t].push_back({t, to_original(video, sc.proposals[best].box), label, class_name(config, label),
                                   scores[best][label], Provenance::Classified, gid});
        }
      } else {
        const int label = *entry.label;
        if (label == 0 || !entry.offset) continue;
        for (int t = sc.first_output_frame(); t < sc.range.end; ++t) {
          const auto ids = sc.members(c, t);
          if (ids.empty()) continue;
          const LocationModel model = fit_location_gaussian(boxes_of(sc, ids));
          const Box box = propagate_localization(model, *entry.offset, video.width(), video.height());
          frame_dets[t].push_back({t, to_original(video, box), label, class_name(config, label), entry.confidence,
                                   Provenance::Propagated, gid});
        }
      }
    }

    std::vector<Detection> emitted;
    for (auto& [t, dets] : frame_dets) {
      result.per_frame[t] = suppress(std::move(dets), config.detection_nms);
      emitted.insert(emitted.end(), result.per_frame[t].begin(), result.per_frame[t].end());
    }
    if (options.sink) options.sink(emitted);
    result.subsequences.push_back(std::move(sc));
  }
  return result;
}

DetectResult detect_stream(const Video& video, const PipelineConfig& config, Classifier& classifier,
                           const DetectOptions& options) {
  return detect_stream(video, video_proposals(video, config), config, classifier, options);
}

}  // namespace overlap
