#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "overlap/propagation.hpp"
#include "overlap/proposals.hpp"
#include "overlap/synth.hpp"

namespace overlap {

// JSON-lines records.

struct ClusterRecord {
  int frame = 0;
  Box box;
  int local_cluster = 0;
  int global_id = 0;
};

nlohmann::json to_json(const Proposal& p);
nlohmann::json to_json(const ClusterRecord& r);
nlohmann::json to_json(const Detection& d);
nlohmann::json to_json(const DetectStats& s);

Proposal proposal_from_json(const nlohmann::json& j);
ClusterRecord cluster_record_from_json(const nlohmann::json& j);
/// class_index is not part of the record and comes back as -1.
Detection detection_from_json(const nlohmann::json& j);

/// One JSON value per non-empty line. Throws IoError on malformed lines.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

// Evaluation.

inline constexpr double kMatchIou = 0.5;

/// Ground-truth object with the highest IoU >= threshold, or -1.
int match_object(const Box& b, const std::vector<GtObject>& objects, double threshold = kMatchIou);

/// Fraction of ground-truth (frame, object) instances hit with IoU >= 0.5 by
/// one of the first n proposals listed for that frame.
double recall_at(const std::vector<Proposal>& proposals, const GroundTruth& gt, int n);

/// Majority-label fraction: sum over predicted clusters of the largest truth
/// count, over all items. Truth -1 ("none") is its own label.
double purity(const std::vector<int>& predicted, const std::vector<int>& truth);
/// Purity of global ids against matched ground-truth objects.
double cluster_purity(const std::vector<ClusterRecord>& records, const GroundTruth& gt);

struct ConsistencyResult {
  /// Per ground-truth object id: frames whose majority id equals the object's
  /// modal id, over the frames where the object is visible.
  std::map<int, double> per_object;
  double min = 0.0;
  double mean = 0.0;
};

ConsistencyResult temporal_consistency(const std::vector<ClusterRecord>& records, const GroundTruth& gt);

struct ClassCounts {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  double precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn); }
};

struct DetectionMetrics {
  std::map<std::string, ClassCounts> per_class;
  ClassCounts overall;
  /// Frames whose set of detected classes equals the set of visible classes.
  double label_accuracy = 0.0;
};

/// Greedy matching per frame and class in descending confidence at IoU >= 0.5.
DetectionMetrics detection_metrics(const std::vector<Detection>& detections, const GroundTruth& gt);

nlohmann::json to_json(const ConsistencyResult& r);
nlohmann::json to_json(const DetectionMetrics& m);

}  // namespace overlap
