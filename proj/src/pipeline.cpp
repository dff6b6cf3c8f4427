#include "overlap/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "overlap/io.hpp"

namespace overlap {

namespace {

// Runs fn(0..n-1) on a bounded pool; results must be written by index.
template <class Fn>
void parallel_for(int n, int workers, Fn&& fn) {
  if (workers <= 0) workers = static_cast<int>(std::min(8u, std::max(1u, std::thread::hardware_concurrency())));
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        const std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

Video make_video(std::vector<Image> frames, std::vector<FlowField> flows, const PipelineConfig& config) {
  if (frames.empty()) throw IoError("video has no frames");
  Video video;
  video.original_width = frames.front().width();
  video.original_height = frames.front().height();
  for (const auto& f : frames) {
    if (f.width() != video.original_width || f.height() != video.original_height) {
      throw IoError("frames differ in size");
    }
  }
  if (!flows.empty() && flows.size() + 1 < frames.size()) {
    throw IoError("expected " + std::to_string(frames.size() - 1) + " flow fields, got " +
                  std::to_string(flows.size()));
  }
  flows.resize(std::min(flows.size(), frames.size() - 1));
  for (const auto& fl : flows) {
    if (fl.width() != video.original_width || fl.height() != video.original_height) {
      throw IoError("flow and frame dimensions differ");
    }
  }

  const bool resize = config.resize_width > 0 &&
                      (config.resize_width != video.original_width || config.resize_height != video.original_height);
  for (auto& f : frames) {
    if (resize) f = resize_nearest(f, config.resize_width, config.resize_height);
  }
  for (auto& fl : flows) {
    if (resize) fl = resize_flow(fl, config.resize_width, config.resize_height);
  }
  if (flows.empty()) {
    flows.resize(frames.size() - 1);
    parallel_for(static_cast<int>(flows.size()), config.workers, [&](int t) {
      flows[t] = block_matching_flow(frames[t].gray(), frames[t + 1].gray(), config.flow_search_radius,
                                     config.flow_block);
    });
  }
  video.frames = std::move(frames);
  video.flows = std::move(flows);
  return video;
}

Video load_video(const std::filesystem::path& frames_dir, const std::optional<std::filesystem::path>& flow_dir,
                 const PipelineConfig& config) {
  const auto paths = list_files(frames_dir, ".ppm");
  if (paths.empty()) throw IoError("no .ppm frames in " + frames_dir.string());
  std::vector<Image> frames;
  for (const auto& p : paths) frames.push_back(read_ppm(p));
  std::vector<FlowField> flows;
  if (flow_dir) {
    const auto flow_paths = list_files(*flow_dir, ".flo");
    if (flow_paths.size() + 1 < paths.size()) {
      throw IoError("flow directory " + flow_dir->string() + " has " + std::to_string(flow_paths.size()) +
                    " files for " + std::to_string(paths.size()) + " frames");
    }
    for (std::size_t t = 0; t + 1 < paths.size(); ++t) {
      flows.push_back(load_flow(flow_paths[t], frames.front().width(), frames.front().height()));
    }
  }
  Video video = make_video(std::move(frames), std::move(flows), config);
  video.frame_paths = paths;
  return video;
}

void attach_edge_maps(Video& video, const std::filesystem::path& edges_dir) {
  const auto paths = list_files(edges_dir, ".pgm");
  if (static_cast<int>(paths.size()) < video.size()) {
    throw IoError("edge directory " + edges_dir.string() + " has fewer maps than frames");
  }
  video.external_edges.clear();
  for (int t = 0; t < video.size(); ++t) {
    Field2D m = read_pgm(paths[t]);
    if (m.width() != video.original_width || m.height() != video.original_height) {
      throw IoError("edge map " + paths[t].string() + " does not match the frame size");
    }
    if (m.width() != video.width() || m.height() != video.height()) {
      Field2D r(video.width(), video.height());
      for (int y = 0; y < r.height(); ++y) {
        for (int x = 0; x < r.width(); ++x) {
          r(x, y) = m(std::min(m.width() - 1, static_cast<int>((x + 0.5) * m.width() / r.width())),
                      std::min(m.height() - 1, static_cast<int>((y + 0.5) * m.height() / r.height())));
        }
      }
      m = std::move(r);
    }
    Field2D orientation = gradient_orientation(m);
    video.external_edges.push_back({std::move(m), std::move(orientation)});
  }
}

Box to_original(const Video& video, const Box& b) {
  if (video.width() == video.original_width && video.height() == video.original_height) return b;
  const double sx = static_cast<double>(video.original_width) / video.width();
  const double sy = static_cast<double>(video.original_height) / video.height();
  const int x0 = static_cast<int>(std::lround(b.x * sx));
  const int y0 = static_cast<int>(std::lround(b.y * sy));
  const int x1 = static_cast<int>(std::lround(b.right() * sx));
  const int y1 = static_cast<int>(std::lround(b.bottom() * sy));
  return clamp_to_frame(Box(x0, y0, std::max(1, x1 - x0), std::max(1, y1 - y0)), video.original_width,
                        video.original_height);
}

std::vector<Field2D> inside_outside_maps(const Video& video, const PipelineConfig& config) {
  std::vector<Field2D> maps(video.frames.size(), Field2D(video.width(), video.height()));
  if (video.flows.empty()) return maps;
  parallel_for(video.size(), config.workers, [&](int t) {
    // The last frame has no forward flow and reuses the previous field.
    const FlowField& flow = video.flows[std::min<std::size_t>(t, video.flows.size() - 1)];
    maps[t] = inside_outside_map(motion_boundary(flow, config.motion), config.motion.boundary_threshold);
  });
  return maps;
}

FrameEdges frame_edges(const Video& video, const std::vector<Field2D>& inside, int t,
                       const PipelineConfig& config) {
  const int n = video.size();
  const int before = (config.prior_frames - 1) / 2;
  const int lo = std::max(0, t - before);
  const int hi = std::min(n, lo + config.prior_frames);
  const std::span<const Field2D> window(inside.data() + lo, static_cast<std::size_t>(hi - lo));
  const LocationPrior prior = accumulate_prior(window, t);

  FrameEdges e;
  e.spatial = video.external_edges.empty() ? spatial_edge(video.frames[t], config.edge_sigma)
                                           : video.external_edges[t];
  e.temporal = {temporal_edge(prior), gradient_orientation(prior.values)};
  e.combined = combine_edge_responses(e.spatial, e.temporal, config.lambda);
  e.inside = inside[t];
  return e;
}

std::vector<std::vector<Proposal>> video_proposals(const Video& video, const PipelineConfig& config) {
  const auto inside = inside_outside_maps(video, config);
  const ProposalParams params = config.proposal_params();
  std::vector<std::vector<Proposal>> out(video.frames.size());
  parallel_for(video.size(), config.workers, [&](int t) {
    const FrameEdges e = frame_edges(video, inside, t, config);
    const EdgeResponse thin = thin_edges(e.combined);
    auto groups = edge_groups(thin.magnitude, thin.orientation, config.edge_threshold);
    const BoxScorer scorer(thin.magnitude, std::move(groups), params);
    out[t] = generate_proposals(scorer, params, t);
  });
  return out;
}

std::vector<int> SubsequenceClusters::members(int cluster) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == cluster) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> SubsequenceClusters::members(int cluster, int frame) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == cluster && proposals[i].frame == frame) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> cluster_affinity(const Eigen::MatrixXd& w, const PipelineConfig& config) {
  KMeansParams km;
  km.seed = config.seed;
  if (config.self_tune) {
    SelfTuneParams st;
    st.neighbor = config.selftune_neighbor;
    st.max_clusters = config.max_clusters;
    st.kmeans = km;
    return spectral_cluster_selftune(w, st);
  }
  return spectral_cluster_fixed(w, config.k, km);
}

StreamingClusterer::StreamingClusterer(PipelineConfig config) : config_(std::move(config)) {
  config_.validate();
}

SubsequenceClusters StreamingClusterer::process(int index, FrameRange range,
                                                const std::vector<std::vector<Proposal>>& proposals,
                                                const Video& video) {
  if (range.begin < 0 || range.end > static_cast<int>(proposals.size()) || range.size() < 1) {
    throw std::out_of_range("sub-sequence range outside the video");
  }
  SubsequenceClusters sc;
  sc.index = index;
  sc.range = range;
  for (int t = range.begin; t < range.end; ++t) {
    for (const auto& p : proposals[t]) {
      sc.proposals.push_back(p);
      sc.features.push_back(extract_features(video.frames[t], p.box));
    }
  }
  std::vector<Box> boxes;
  boxes.reserve(sc.proposals.size());
  for (const auto& p : sc.proposals) boxes.push_back(p.box);

  if (boxes.empty()) return sc;

  const auto pairs = collect_pairs(boxes, config_.overlap_bins);
  if (pairs.size() < 2) {
    sc.affinity = uniform_affinity(boxes);
    sc.uniform_affinity = true;
  } else {
    DensityParams dp;
    dp.max_samples_per_bin = config_.max_density_samples;
    dp.seed = config_.seed;
    const DensityModel model = fit_density(pairs, sc.features, config_.color_dims, dp);
    sc.affinity = affinity_matrix(sc.features, boxes, model, config_.rho);
  }
  sc.labels = cluster_affinity(sc.affinity, config_);
  sc.cluster_count = sc.labels.empty() ? 0 : *std::max_element(sc.labels.begin(), sc.labels.end()) + 1;

  std::vector<ClusterDescriptor> descriptors;
  for (int c = 0; c < sc.cluster_count; ++c) {
    const auto ids = sc.members(c);
    std::vector<FeatureVector> feats;
    feats.reserve(ids.size());
    for (const int i : ids) feats.push_back(sc.features[i]);
    descriptors.push_back(cluster_descriptor(feats, ids));
  }
  const Association a = associate_clusters(std::move(descriptors), registry_, config_.tau_kl, index);
  sc.global_ids = a.global_ids;
  sc.is_new = a.is_new;
  sc.kl = a.kl;
  return sc;
}

}  // namespace overlap
