#include "overlap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "overlap/io.hpp"
#include "overlap/propagation.hpp"

namespace overlap {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const PaletteColor* find_color(const std::string& name) {
  for (const auto& c : palette()) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

int exit_frame(const SynthObject& o, int frames) { return o.exit < 0 ? frames : std::min(o.exit, frames); }

// Integer top-left corner of an object at frame t.
std::pair<int, int> position(const SynthObject& o, int t) {
  const double dt = t - o.enter;
  return {static_cast<int>(std::lround(o.x + o.vx * dt)), static_cast<int>(std::lround(o.y + o.vy * dt))};
}

bool covers(const SynthObject& o, int lx, int ly) {
  if (lx < 0 || ly < 0 || lx >= o.width || ly >= o.height) return false;
  if (o.shape == "rect") return true;
  const double rx = o.width / 2.0, ry = o.height / 2.0;
  const double dx = (lx + 0.5 - rx) / rx, dy = (ly + 0.5 - ry) / ry;
  return dx * dx + dy * dy <= 1.0;
}

std::vector<float> background_texture(const SyntheticSpec& spec) {
  constexpr int kCell = 8;
  const int gw = spec.width / kCell + 2;
  const int gh = spec.height / kCell + 2;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> grid(static_cast<std::size_t>(gw) * gh);
  for (double& g : grid) g = u(rng);
  std::vector<float> out(static_cast<std::size_t>(spec.width) * spec.height);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const double fx = static_cast<double>(x) / kCell, fy = static_cast<double>(y) / kCell;
      const int ix = static_cast<int>(fx), iy = static_cast<int>(fy);
      const double ax = fx - ix, ay = fy - iy;
      const auto g = [&](int gx, int gy) { return grid[static_cast<std::size_t>(gy) * gw + gx]; };
      const double v = (1 - ax) * (1 - ay) * g(ix, iy) + ax * (1 - ay) * g(ix + 1, iy) +
                       (1 - ax) * ay * g(ix, iy + 1) + ax * ay * g(ix + 1, iy + 1);
      out[static_cast<std::size_t>(y) * spec.width + x] = static_cast<float>(v);
    }
  }
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (frames < 1 || frames > 1000) throw ConfigError("frames must lie in [1, 1000]");
  if (width < 16 || height < 16 || width > 4096 || height > 4096) {
    throw ConfigError("frame size must lie in [16, 4096]");
  }
  if (texture < 0 || texture > 100) throw ConfigError("texture must lie in [0, 100]");
  if (objects.size() > 5) throw ConfigError("at most 5 objects are supported");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    const std::string at = "object " + std::to_string(i) + ": ";
    if (!find_color(o.color)) throw ConfigError(at + "unknown color " + o.color);
    if (o.shape != "rect" && o.shape != "ellipse") throw ConfigError(at + "shape must be rect or ellipse");
    if (o.width < 2 || o.height < 2) throw ConfigError(at + "size must be at least 2 pixels");
    if (o.enter < 0 || o.enter >= frames) throw ConfigError(at + "enter frame outside the video");
    if (o.exit >= 0 && o.exit <= o.enter) throw ConfigError(at + "exit must come after enter");
    for (int t = o.enter; t < exit_frame(o, frames); ++t) {
      const auto [x, y] = position(o, t);
      if (intersection_area(Box(x, y, o.width, o.height), Box(0, 0, width, height)) <= 0) {
        throw ConfigError(at + "leaves the frame completely at frame " + std::to_string(t));
      }
    }
  }
}

SyntheticSpec synth_spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  try {
    s.frames = j.value("frames", s.frames);
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.seed = j.value("seed", s.seed);
    s.texture = j.value("texture", s.texture);
    for (const auto& o : j.value("objects", nlohmann::json::array())) {
      SynthObject obj;
      obj.color = o.value("color", obj.color);
      obj.shape = o.value("shape", obj.shape);
      obj.width = o.value("width", obj.width);
      obj.height = o.value("height", obj.height);
      obj.x = o.value("x", obj.x);
      obj.y = o.value("y", obj.y);
      obj.vx = o.value("vx", obj.vx);
      obj.vy = o.value("vy", obj.vy);
      obj.enter = o.value("enter", obj.enter);
      obj.exit = o.value("exit", obj.exit);
      s.objects.push_back(obj);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json synth_spec_to_json(const SyntheticSpec& spec) {
  nlohmann::json j{{"frames", spec.frames}, {"width", spec.width},     {"height", spec.height},
                   {"seed", spec.seed},     {"texture", spec.texture}, {"objects", nlohmann::json::array()}};
  for (const auto& o : spec.objects) {
    j["objects"].push_back({{"color", o.color}, {"shape", o.shape}, {"width", o.width}, {"height", o.height},
                            {"x", o.x}, {"y", o.y}, {"vx", o.vx}, {"vy", o.vy}, {"enter", o.enter},
                            {"exit", o.exit}});
  }
  return j;
}

nlohmann::json ground_truth_to_json(const GroundTruth& gt) {
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t t = 0; t < gt.frames.size(); ++t) {
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& o : gt.frames[t]) {
      objs.push_back({{"id", o.id}, {"class", o.class_name}, {"x", o.box.x}, {"y", o.box.y}, {"w", o.box.w},
                      {"h", o.box.h}});
    }
    frames.push_back({{"frame", t}, {"objects", objs}});
  }
  return {{"width", gt.width}, {"height", gt.height}, {"frames", frames}};
}

GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  GroundTruth gt;
  try {
    gt.width = j.at("width").get<int>();
    gt.height = j.at("height").get<int>();
    for (const auto& f : j.at("frames")) {
      const int t = f.at("frame").get<int>();
      if (t < 0) throw IoError("negative frame index in ground truth");
      if (t >= static_cast<int>(gt.frames.size())) gt.frames.resize(t + 1);
      for (const auto& o : f.at("objects")) {
        gt.frames[t].push_back({o.at("id").get<int>(), o.at("class").get<std::string>(),
                                Box(o.at("x").get<int>(), o.at("y").get<int>(), o.at("w").get<int>(),
                                    o.at("h").get<int>())});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed ground truth: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("malformed ground truth: ") + e.what());
  }
  return gt;
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return ground_truth_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("malformed ground truth " + path.string() + ": " + e.what());
  }
}

SyntheticVideo render_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const int w = spec.width, h = spec.height;
  const auto texture = background_texture(spec);
  SyntheticVideo video;
  video.truth.width = w;
  video.truth.height = h;

  // owner[t][p]: index of the topmost object at pixel p, or -1.
  std::vector<std::vector<int>> owner(spec.frames, std::vector<int>(static_cast<std::size_t>(w) * h, -1));
  for (int t = 0; t < spec.frames; ++t) {
    Image img(w, h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const float v = texture[static_cast<std::size_t>(y) * w + x];
        const auto base = static_cast<int>(std::lround(118.0 + spec.texture * v));
        img.set(x, y, static_cast<std::uint8_t>(std::clamp(base + 4, 0, 255)),
                static_cast<std::uint8_t>(std::clamp(base, 0, 255)),
                static_cast<std::uint8_t>(std::clamp(base - 4, 0, 255)));
      }
    }
    std::vector<GtObject> visible;
    for (std::size_t k = 0; k < spec.objects.size(); ++k) {
      const auto& o = spec.objects[k];
      if (t < o.enter || t >= exit_frame(o, spec.frames)) continue;
      const auto [ox, oy] = position(o, t);
      const Box full(ox, oy, o.width, o.height);
      if (intersection_area(full, Box(0, 0, w, h)) <= 0) continue;
      const auto& rgb = find_color(o.color)->rgb;
      for (int ly = 0; ly < o.height; ++ly) {
        for (int lx = 0; lx < o.width; ++lx) {
          const int x = ox + lx, y = oy + ly;
          if (x < 0 || y < 0 || x >= w || y >= h || !covers(o, lx, ly)) continue;
          // Texture fixed to the object so it moves with it.
          const std::uint64_t hsh = splitmix(spec.seed * 1315423911ULL + k * 2654435761ULL +
                                             static_cast<std::uint64_t>(ly) * 65537ULL + lx);
          const int jitter = static_cast<int>(hsh % 25) - 12;
          img.set(x, y, static_cast<std::uint8_t>(std::clamp(rgb[0] + jitter, 0, 255)),
                  static_cast<std::uint8_t>(std::clamp(rgb[1] + jitter, 0, 255)),
                  static_cast<std::uint8_t>(std::clamp(rgb[2] + jitter, 0, 255)));
          owner[t][static_cast<std::size_t>(y) * w + x] = static_cast<int>(k);
        }
      }
      visible.push_back({static_cast<int>(k), o.color, clamp_to_frame(full, w, h)});
    }
    video.frames.push_back(std::move(img));
    video.truth.frames.push_back(std::move(visible));
  }

  for (int t = 0; t < spec.frames; ++t) {
    std::vector<Field2D> masks;
    for (const auto& g : video.truth.frames[t]) {
      Field2D m(w, h);
      for (std::size_t p = 0; p < owner[t].size(); ++p) {
        if (owner[t][p] == g.id) m.data()[p] = 1.0f;
      }
      masks.push_back(std::move(m));
    }
    video.masks.push_back(std::move(masks));
  }

  for (int t = 0; t + 1 < spec.frames; ++t) {
    FlowField flow(w, h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int k = owner[t][static_cast<std::size_t>(y) * w + x];
        if (k < 0) continue;
        const auto [x0, y0] = position(spec.objects[k], t);
        const auto [x1, y1] = position(spec.objects[k], t + 1);
        flow.set(x, y, static_cast<float>(x1 - x0), static_cast<float>(y1 - y0));
      }
    }
    video.flows.push_back(std::move(flow));
  }
  return video;
}

void write_synthetic(const SyntheticVideo& video, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"frames", "flow", "masks"}) {
    fs::create_directories(dir / sub, ec);
    if (ec) throw IoError("cannot create " + (dir / sub).string());
  }
  char name[64];
  for (std::size_t t = 0; t < video.frames.size(); ++t) {
    std::snprintf(name, sizeof name, "frame_%04zu.ppm", t);
    write_ppm(dir / "frames" / name, video.frames[t]);
    for (std::size_t k = 0; k < video.masks[t].size(); ++k) {
      std::snprintf(name, sizeof name, "mask_%04zu_%d.pgm", t, video.truth.frames[t][k].id);
      write_pgm(dir / "masks" / name, video.masks[t][k]);
    }
  }
  for (std::size_t t = 0; t < video.flows.size(); ++t) {
    std::snprintf(name, sizeof name, "flow_%04zu.flo", t);
    save_flow(dir / "flow" / name, video.flows[t]);
  }
  std::ofstream out(dir / "gt.json");
  if (!out) throw IoError("cannot write " + (dir / "gt.json").string());
  out << ground_truth_to_json(video.truth).dump(2) << '\n';
}

}  // namespace overlap
