#include "overlap/config.hpp"

#include <fstream>
#include <functional>
#include <map>

namespace overlap {

namespace {

void require(bool ok, const std::string& field, const std::string& range) {
  if (!ok) throw ConfigError(field + " must be " + range);
}

template <typename T>
std::function<void(PipelineConfig&, const nlohmann::json&)> field(T PipelineConfig::*member) {
  return [member](PipelineConfig& c, const nlohmann::json& v) { c.*member = v.get<T>(); };
}

template <typename T>
std::function<void(PipelineConfig&, const nlohmann::json&)> motion_field(T MotionParams::*member) {
  return [member](PipelineConfig& c, const nlohmann::json& v) { c.motion.*member = v.get<T>(); };
}

using Setter = std::function<void(PipelineConfig&, const nlohmann::json&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"lambda", field(&PipelineConfig::lambda)},
      {"subseq_len", field(&PipelineConfig::subseq_len)},
      {"k",
       [](PipelineConfig& c, const nlohmann::json& v) {
         if (v.is_string()) {
           if (v.get<std::string>() != "auto") throw ConfigError("k must be an integer or \"auto\"");
           c.self_tune = true;
         } else {
           c.k = v.get<int>();
           c.self_tune = false;
         }
       }},
      {"rho", field(&PipelineConfig::rho)},
      {"tau_kl", field(&PipelineConfig::tau_kl)},
      {"max_proposals", field(&PipelineConfig::max_proposals)},
      {"nms_beta", field(&PipelineConfig::nms_beta)},
      {"classifier", field(&PipelineConfig::classifier)},
      {"seed", field(&PipelineConfig::seed)},
      {"resize",
       [](PipelineConfig& c, const nlohmann::json& v) {
         if (v.is_null() || (v.is_string() && v.get<std::string>() == "none")) {
           c.resize_width = 0;
           c.resize_height = 0;
           return;
         }
         if (!v.is_array() || v.size() != 2) throw ConfigError("resize must be [width, height] or \"none\"");
         c.resize_width = v[0].get<int>();
         c.resize_height = v[1].get<int>();
       }},
      {"workers", field(&PipelineConfig::workers)},
      {"edge_sigma", field(&PipelineConfig::edge_sigma)},
      {"edge_threshold", field(&PipelineConfig::edge_threshold)},
      {"kappa", field(&PipelineConfig::kappa)},
      {"min_box_area", field(&PipelineConfig::min_box_area)},
      {"max_aspect_ratio", field(&PipelineConfig::max_aspect_ratio)},
      {"step_iou", field(&PipelineConfig::step_iou)},
      {"alpha_magnitude", motion_field(&MotionParams::alpha_magnitude)},
      {"alpha_direction", motion_field(&MotionParams::alpha_direction)},
      {"boundary_threshold", motion_field(&MotionParams::boundary_threshold)},
      {"prior_frames", field(&PipelineConfig::prior_frames)},
      {"flow_search_radius", field(&PipelineConfig::flow_search_radius)},
      {"flow_block", field(&PipelineConfig::flow_block)},
      {"color_dims", field(&PipelineConfig::color_dims)},
      {"overlap_bins", field(&PipelineConfig::overlap_bins)},
      {"max_density_samples", field(&PipelineConfig::max_density_samples)},
      {"selftune_neighbor", field(&PipelineConfig::selftune_neighbor)},
      {"max_clusters", field(&PipelineConfig::max_clusters)},
      {"confidence_threshold", field(&PipelineConfig::confidence_threshold)},
      {"detection_nms", field(&PipelineConfig::detection_nms)},
      {"classes", field(&PipelineConfig::classes)},
      {"mask_threshold", field(&PipelineConfig::mask_threshold)},
  };
  return table;
}

}  // namespace

void PipelineConfig::validate() const {
  require(lambda >= 0.0 && lambda <= 1.0, "lambda", "in [0, 1]");
  require(subseq_len >= 3 && subseq_len <= 5, "subseq_len", "in [3, 5]");
  require(k >= 1 && k <= 50, "k", "in [1, 50] or \"auto\"");
  require(rho > 0.0 && rho <= 10.0, "rho", "in (0, 10]");
  require(tau_kl > 0.0, "tau_kl", "positive");
  require(max_proposals >= 1 && max_proposals <= 10000, "max_proposals", "in [1, 10000]");
  require(nms_beta > 0.0 && nms_beta < 1.0, "nms_beta", "in (0, 1)");
  require(classifier == "oracle" || classifier == "always" ||
              (classifier.rfind("cmd:", 0) == 0 && classifier.size() > 4),
          "classifier", "oracle, always or cmd:PATH");
  require((resize_width == 0 && resize_height == 0) || (resize_width >= 16 && resize_height >= 16 &&
                                                        resize_width <= 4096 && resize_height <= 4096),
          "resize", "none or between 16 and 4096 pixels per side");
  require(edge_sigma >= 0.0, "edge_sigma", "non-negative");
  require(edge_threshold >= 0.0 && edge_threshold < 1.0, "edge_threshold", "in [0, 1)");
  require(kappa > 0.0, "kappa", "positive");
  require(min_box_area >= 4.0, "min_box_area", "at least 4");
  require(max_aspect_ratio >= 1.0, "max_aspect_ratio", "at least 1");
  require(step_iou > 0.0 && step_iou < 1.0, "step_iou", "in (0, 1)");
  require(motion.alpha_magnitude >= 0.0, "alpha_magnitude", "non-negative");
  require(motion.alpha_direction >= 0.0, "alpha_direction", "non-negative");
  require(motion.boundary_threshold > 0.0 && motion.boundary_threshold < 1.0, "boundary_threshold", "in (0, 1)");
  require(prior_frames >= 1 && prior_frames <= 5, "prior_frames", "in [1, 5]");
  require(flow_search_radius >= 1 && flow_search_radius <= 32, "flow_search_radius", "in [1, 32]");
  require(flow_block >= 1 && flow_block % 2 == 1, "flow_block", "a positive odd number");
  require(workers >= 0 && workers <= 64, "workers", "in [0, 64]");
  require(color_dims >= 0 && color_dims <= 8, "color_dims", "in [0, 8]");
  require(overlap_bins >= 1 && overlap_bins <= 100, "overlap_bins", "in [1, 100]");
  require(max_density_samples >= 0, "max_density_samples", "non-negative");
  require(selftune_neighbor >= 1, "selftune_neighbor", "positive");
  require(max_clusters >= 1 && max_clusters <= 20, "max_clusters", "in [1, 20]");
  require(confidence_threshold >= 0.0 && confidence_threshold <= 1.0, "confidence_threshold", "in [0, 1]");
  require(detection_nms > 0.0 && detection_nms <= 1.0, "detection_nms", "in (0, 1]");
  require(!classes.empty(), "classes", "non-empty");
  require(mask_threshold > 0.0 && mask_threshold < 1.0, "mask_threshold", "in (0, 1)");
}

ProposalParams PipelineConfig::proposal_params() const {
  ProposalParams p;
  p.max_proposals = max_proposals;
  p.step_iou = step_iou;
  p.nms_beta = nms_beta;
  p.kappa = kappa;
  p.min_box_area = min_box_area;
  p.max_aspect_ratio = max_aspect_ratio;
  p.edge_threshold = edge_threshold;
  return p;
}

PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key: " + key);
    try {
      it->second(base, value);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key " + key + " has the wrong type");
    }
  }
  base.validate();
  return base;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

nlohmann::json config_to_json(const PipelineConfig& c) {
  nlohmann::json j;
  j["lambda"] = c.lambda;
  j["subseq_len"] = c.subseq_len;
  if (c.self_tune) {
    j["k"] = "auto";
  } else {
    j["k"] = c.k;
  }
  j["rho"] = c.rho;
  j["tau_kl"] = c.tau_kl;
  j["max_proposals"] = c.max_proposals;
  j["nms_beta"] = c.nms_beta;
  j["classifier"] = c.classifier;
  j["seed"] = c.seed;
  if (c.resize_width == 0) {
    j["resize"] = "none";
  } else {
    j["resize"] = {c.resize_width, c.resize_height};
  }
  j["workers"] = c.workers;
  j["edge_sigma"] = c.edge_sigma;
  j["edge_threshold"] = c.edge_threshold;
  j["kappa"] = c.kappa;
  j["min_box_area"] = c.min_box_area;
  j["max_aspect_ratio"] = c.max_aspect_ratio;
  j["step_iou"] = c.step_iou;
  j["alpha_magnitude"] = c.motion.alpha_magnitude;
  j["alpha_direction"] = c.motion.alpha_direction;
  j["boundary_threshold"] = c.motion.boundary_threshold;
  j["prior_frames"] = c.prior_frames;
  j["flow_search_radius"] = c.flow_search_radius;
  j["flow_block"] = c.flow_block;
  j["color_dims"] = c.color_dims;
  j["overlap_bins"] = c.overlap_bins;
  j["max_density_samples"] = c.max_density_samples;
  j["selftune_neighbor"] = c.selftune_neighbor;
  j["max_clusters"] = c.max_clusters;
  j["confidence_threshold"] = c.confidence_threshold;
  j["detection_nms"] = c.detection_nms;
  j["classes"] = c.classes;
  j["mask_threshold"] = c.mask_threshold;
  return j;
}

}  // namespace overlap
