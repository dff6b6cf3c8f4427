#include "overlap/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace overlap {

namespace {

Box box_from(const nlohmann::json& j) {
  return Box(j.at("x").get<int>(), j.at("y").get<int>(), j.at("w").get<int>(), j.at("h").get<int>());
}

template <typename F>
auto parse_record(const char* what, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed ") + what + " record: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("malformed ") + what + " record: " + e.what());
  }
}

const std::vector<GtObject>& objects_at(const GroundTruth& gt, int frame) {
  static const std::vector<GtObject> none;
  if (frame < 0 || frame >= static_cast<int>(gt.frames.size())) return none;
  return gt.frames[frame];
}

}  // namespace

nlohmann::json to_json(const Proposal& p) {
  return {{"frame", p.frame}, {"x", p.box.x}, {"y", p.box.y}, {"w", p.box.w}, {"h", p.box.h}, {"score", p.score}};
}

nlohmann::json to_json(const ClusterRecord& r) {
  return {{"frame", r.frame}, {"x", r.box.x},   {"y", r.box.y},   {"w", r.box.w},
          {"h", r.box.h},     {"local_cluster", r.local_cluster}, {"global_id", r.global_id}};
}

nlohmann::json to_json(const Detection& d) {
  return {{"frame", d.frame},      {"x", d.box.x}, {"y", d.box.y},
          {"w", d.box.w},          {"h", d.box.h}, {"class", d.class_name},
          {"confidence", d.confidence}, {"provenance", to_string(d.provenance)}};
}

nlohmann::json to_json(const DetectStats& s) {
  return {{"total_windows", s.total_windows},
          {"classified_windows", s.classified_windows},
          {"fraction", s.total_windows > 0 ? classification_fraction(s) : 0.0},
          {"clusters_created", s.clusters_created}};
}

Proposal proposal_from_json(const nlohmann::json& j) {
  return parse_record("proposal", [&] {
    return Proposal{box_from(j), j.at("score").get<double>(), j.at("frame").get<int>()};
  });
}

ClusterRecord cluster_record_from_json(const nlohmann::json& j) {
  return parse_record("cluster", [&] {
    return ClusterRecord{j.at("frame").get<int>(), box_from(j), j.at("local_cluster").get<int>(),
                         j.at("global_id").get<int>()};
  });
}

Detection detection_from_json(const nlohmann::json& j) {
  return parse_record("detection", [&] {
    Detection d;
    d.frame = j.at("frame").get<int>();
    d.box = box_from(j);
    d.class_index = -1;
    d.class_name = j.at("class").get<std::string>();
    d.confidence = j.at("confidence").get<double>();
    const auto prov = j.at("provenance").get<std::string>();
    if (prov != "classified" && prov != "propagated") throw std::invalid_argument("unknown provenance " + prov);
    d.provenance = prov == "classified" ? Provenance::Classified : Provenance::Propagated;
    return d;
  });
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error&) {
      throw IoError(path.string() + ":" + std::to_string(number) + ": malformed JSON line");
    }
  }
  return out;
}

int match_object(const Box& b, const std::vector<GtObject>& objects, double threshold) {
  int best = -1;
  double best_iou = 0.0;
  for (const auto& o : objects) {
    const double v = iou(b, o.box);
    if (v < threshold) continue;
    if (best < 0 || v > best_iou || (v == best_iou && o.id < best)) {
      best_iou = v;
      best = o.id;
    }
  }
  return best;
}

double recall_at(const std::vector<Proposal>& proposals, const GroundTruth& gt, int n) {
  std::map<int, std::vector<Box>> per_frame;
  for (const auto& p : proposals) {
    auto& v = per_frame[p.frame];
    if (static_cast<int>(v.size()) < n) v.push_back(p.box);
  }
  int total = 0, hit = 0;
  for (int t = 0; t < static_cast<int>(gt.frames.size()); ++t) {
    for (const auto& o : gt.frames[t]) {
      ++total;
      const auto& boxes = per_frame[t];
      if (std::any_of(boxes.begin(), boxes.end(), [&](const Box& b) { return iou(b, o.box) >= kMatchIou; })) ++hit;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / total;
}

double purity(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("label lists differ in length");
  if (predicted.empty()) return 0.0;
  std::map<int, std::map<int, int>> counts;
  for (std::size_t i = 0; i < predicted.size(); ++i) ++counts[predicted[i]][truth[i]];
  long long majority = 0;
  for (const auto& [cluster, hist] : counts) {
    int best = 0;
    for (const auto& [label, c] : hist) best = std::max(best, c);
    majority += best;
  }
  return static_cast<double>(majority) / static_cast<double>(predicted.size());
}

double cluster_purity(const std::vector<ClusterRecord>& records, const GroundTruth& gt) {
  std::vector<int> predicted, truth;
  for (const auto& r : records) {
    predicted.push_back(r.global_id);
    truth.push_back(match_object(r.box, objects_at(gt, r.frame)));
  }
  return purity(predicted, truth);
}

ConsistencyResult temporal_consistency(const std::vector<ClusterRecord>& records, const GroundTruth& gt) {
  // votes[object][frame][global id]
  std::map<int, std::map<int, std::map<int, int>>> votes;
  for (const auto& r : records) {
    const int obj = match_object(r.box, objects_at(gt, r.frame));
    if (obj >= 0) ++votes[obj][r.frame][r.global_id];
  }
  std::map<int, std::vector<int>> visible;
  for (int t = 0; t < static_cast<int>(gt.frames.size()); ++t) {
    for (const auto& o : gt.frames[t]) visible[o.id].push_back(t);
  }

  ConsistencyResult result;
  for (const auto& [obj, frames] : visible) {
    std::map<int, int> majority_by_frame;
    std::map<int, int> modal_count;
    for (const int t : frames) {
      const auto it = votes[obj].find(t);
      if (it == votes[obj].end()) continue;
      int best_id = -1, best = 0;
      for (const auto& [id, c] : it->second) {
        if (c > best) {
          best = c;
          best_id = id;
        }
      }
      majority_by_frame[t] = best_id;
      ++modal_count[best_id];
    }
    int modal = -1, modal_n = 0;
    for (const auto& [id, c] : modal_count) {
      if (c > modal_n) {
        modal_n = c;
        modal = id;
      }
    }
    int stable = 0;
    for (const auto& [t, id] : majority_by_frame) stable += id == modal;
    result.per_object[obj] = static_cast<double>(stable) / static_cast<double>(frames.size());
  }
  if (!result.per_object.empty()) {
    result.min = 1.0;
    double sum = 0.0;
    for (const auto& [obj, v] : result.per_object) {
      result.min = std::min(result.min, v);
      sum += v;
    }
    result.mean = sum / static_cast<double>(result.per_object.size());
  }
  return result;
}

DetectionMetrics detection_metrics(const std::vector<Detection>& detections, const GroundTruth& gt) {
  DetectionMetrics m;
  std::map<int, std::vector<const Detection*>> per_frame;
  for (const auto& d : detections) per_frame[d.frame].push_back(&d);

  const int frames = static_cast<int>(gt.frames.size());
  int label_hits = 0;
  for (int t = 0; t < frames; ++t) {
    auto dets = per_frame[t];
    std::stable_sort(dets.begin(), dets.end(),
                     [](const Detection* a, const Detection* b) { return a->confidence > b->confidence; });
    std::vector<bool> used(gt.frames[t].size(), false);
    std::set<std::string> predicted_classes, true_classes;
    for (const auto& o : gt.frames[t]) true_classes.insert(o.class_name);
    for (const Detection* d : dets) {
      predicted_classes.insert(d->class_name);
      int best = -1;
      double best_iou = kMatchIou;
      for (std::size_t k = 0; k < gt.frames[t].size(); ++k) {
        const auto& o = gt.frames[t][k];
        if (used[k] || o.class_name != d->class_name) continue;
        const double v = iou(d->box, o.box);
        if (v >= best_iou) {
          best_iou = v;
          best = static_cast<int>(k);
        }
      }
      if (best >= 0) {
        used[best] = true;
        ++m.per_class[d->class_name].tp;
      } else {
        ++m.per_class[d->class_name].fp;
      }
    }
    for (std::size_t k = 0; k < used.size(); ++k) {
      if (!used[k]) ++m.per_class[gt.frames[t][k].class_name].fn;
    }
    label_hits += predicted_classes == true_classes;
  }
  for (const auto& [name, c] : m.per_class) {
    m.overall.tp += c.tp;
    m.overall.fp += c.fp;
    m.overall.fn += c.fn;
  }
  m.label_accuracy = frames == 0 ? 0.0 : static_cast<double>(label_hits) / frames;
  return m;
}

nlohmann::json to_json(const ConsistencyResult& r) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [obj, v] : r.per_object) per[std::to_string(obj)] = v;
  return {{"per_object", per}, {"min", r.min}, {"mean", r.mean}};
}

nlohmann::json to_json(const DetectionMetrics& m) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [name, c] : m.per_class) {
    per[name] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"precision", c.precision()}, {"recall", c.recall()}};
  }
  return {{"per_class", per},
          {"precision", m.overall.precision()},
          {"recall", m.overall.recall()},
          {"label_accuracy", m.label_accuracy}};
}

}  // namespace overlap
