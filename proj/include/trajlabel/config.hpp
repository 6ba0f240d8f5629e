#pragma once

#include "trajlabel/camera_label.hpp"
#include "trajlabel/fusion_crf.hpp"
#include "trajlabel/lidar_label.hpp"
#include "trajlabel/trajectory_fit.hpp"

#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace trajlabel {

// Which label cues take part in a run; mirrors the ablation rows.
struct Components {
  bool camera = true;
  bool height = true;
  bool gradient = true;
  bool gradient_threshold = true;
  bool crf = true;

  bool any_lidar() const { return height || gradient; }

  // "C", "H", "G", "G-nothr", "H+G", "C+H+G+CRF", ...
  static Components parse(const std::string& tag) {
    Components c{false, false, false, true, false};
    std::stringstream ss(tag);
    std::string part;
    bool any = false;
    while (std::getline(ss, part, '+')) {
      any = true;
      if (part == "C") c.camera = true;
      else if (part == "H") c.height = true;
      else if (part == "G") c.gradient = true;
      else if (part == "G-nothr") { c.gradient = true; c.gradient_threshold = false; }
      else if (part == "CRF") c.crf = true;
      else throw std::invalid_argument("unknown component '" + part + "' in '" + tag + "'");
    }
    if (!any || !(c.camera || c.any_lidar())) throw std::invalid_argument("component set '" + tag + "' has no label cue");
    return c;
  }

  std::string tag() const {
    std::string out;
    const auto add = [&](const char* s) { out += out.empty() ? s : std::string("+") + s; };
    if (camera) add("C");
    if (height) add("H");
    if (gradient) add(gradient_threshold ? "G" : "G-nothr");
    if (crf) add("CRF");
    return out;
  }
};

struct IngestParams {
  double sample_spacing_m = 5.0;
  double sync_tolerance_s = 0.05;
  double future_travel_m = 60.0;
  std::vector<std::string> excluded_frames;
};

struct PipelineConfig {
  IngestParams ingest;
  TrajectoryParams trajectory;
  LidarParams lidar;
  CameraParams camera;
  CrfParams crf;
  Components components;
  double binarize_threshold = 0.5;

  void validate() const {
    const auto pos = [](double v, const char* name) {
      if (!(v > 0.0)) throw std::invalid_argument(std::string("config: ") + name + " must be positive");
    };
    pos(ingest.sample_spacing_m, "ingest.sample_spacing_m");
    pos(ingest.sync_tolerance_s, "ingest.sync_tolerance_s");
    pos(lidar.sigma_h, "labels.sigma_h");
    pos(lidar.sigma_g, "labels.sigma_g");
    pos(camera.sigma_c, "labels.sigma_c");
    pos(camera.patch_size, "camera.patch_size");
    if (!(trajectory.fov_deg > 0.0 && trajectory.fov_deg <= 360.0)) throw std::invalid_argument("config: trajectory.fov_deg must be in (0, 360]");
    if (!(crf.unary_clip > 0.0 && crf.unary_clip < 0.5)) throw std::invalid_argument("config: crf.unary_clip must be in (0, 0.5)");
    if (crf.iterations < 0) throw std::invalid_argument("config: crf.iterations must be >= 0");
    if (!(binarize_threshold > 0.0 && binarize_threshold < 1.0)) throw std::invalid_argument("config: binarize_threshold must be in (0, 1)");
  }
};

namespace config_detail {

struct Binding {
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: '" + key + "' expects a boolean, got '" + v + "'");
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::map<std::string, Binding> bindings(PipelineConfig& c) {
  std::map<std::string, Binding> b;
  const auto num = [&](const std::string& key, double& ref) {
    b[key] = {[&ref, key](const std::string& v) { ref = parse_double(key, v); }, [&ref] { return fmt(ref); }};
  };
  const auto integer = [&](const std::string& key, int& ref) {
    b[key] = {[&ref, key](const std::string& v) {
                const double d = parse_double(key, v);
                if (d != static_cast<int>(d)) throw std::invalid_argument("config: '" + key + "' expects an integer");
                ref = static_cast<int>(d);
              },
              [&ref] { return std::to_string(ref); }};
  };
  const auto flag = [&](const std::string& key, bool& ref) {
    b[key] = {[&ref, key](const std::string& v) { ref = parse_bool(key, v); },
              [&ref] { return std::string(ref ? "true" : "false"); }};
  };
  num("ingest.sample_spacing_m", c.ingest.sample_spacing_m);
  num("ingest.sync_tolerance_s", c.ingest.sync_tolerance_s);
  num("ingest.future_travel_m", c.ingest.future_travel_m);
  b["ingest.excluded_frames"] = {
      [&c](const std::string& v) {
        c.ingest.excluded_frames.clear();
        std::stringstream ss(v);
        std::string id;
        while (std::getline(ss, id, ',')) {
          if (!id.empty()) c.ingest.excluded_frames.push_back(id);
        }
      },
      [&c] {
        std::string out;
        for (const auto& id : c.ingest.excluded_frames) out += (out.empty() ? "" : ",") + id;
        return out;
      }};
  num("labels.sigma_c", c.camera.sigma_c);
  num("labels.sigma_h", c.lidar.sigma_h);
  num("labels.sigma_g", c.lidar.sigma_g);
  num("trajectory.fov_deg", c.trajectory.fov_deg);
  num("trajectory.max_pose_distance", c.trajectory.max_pose_distance);
  flag("trajectory.pose_distance_horizontal", c.trajectory.pose_distance_horizontal);
  num("trajectory.min_center_spacing", c.trajectory.min_center_spacing);
  num("trajectory.max_center_elevation_step", c.trajectory.max_center_elevation_step);
  num("trajectory.max_wheel_distance", c.trajectory.max_wheel_distance);
  num("trajectory.occlusion_du_px", c.trajectory.occlusion_du_px);
  num("lidar.radial_reject_m", c.lidar.radial_reject_m);
  flag("lidar.radial_3d", c.lidar.radial_3d);
  flag("lidar.strict_single_cue", c.lidar.strict_single_cue);
  flag("lidar.gradient_strict", c.lidar.gradient_strict);
  num("lidar.max_triangle_edge_px", c.lidar.max_triangle_edge_px);
  integer("camera.patch_size", c.camera.patch_size);
  num("camera.membership_fraction", c.camera.membership_fraction);
  integer("camera.min_prototype_patches", c.camera.min_prototype_patches);
  integer("camera.analysis_width", c.camera.analysis_width);
  integer("camera.analysis_height", c.camera.analysis_height);
  integer("crf.iterations", c.crf.iterations);
  num("crf.spatial_sigma", c.crf.spatial_sigma);
  num("crf.spatial_weight", c.crf.spatial_weight);
  num("crf.bilateral_sigma_xy", c.crf.bilateral_sigma_xy);
  num("crf.bilateral_sigma_rgb", c.crf.bilateral_sigma_rgb);
  num("crf.bilateral_weight", c.crf.bilateral_weight);
  num("crf.unary_clip", c.crf.unary_clip);
  b["components"] = {[&c](const std::string& v) { c.components = Components::parse(v); },
                     [&c] { return c.components.tag(); }};
  num("binarize_threshold", c.binarize_threshold);
  return b;
}

inline void flatten(const YAML::Node& node, const std::string& prefix, std::map<std::string, std::string>& out) {
  if (node.IsMap()) {
    for (const auto& kv : node) {
      const std::string key = kv.first.as<std::string>();
      flatten(kv.second, prefix.empty() ? key : prefix + "." + key, out);
    }
  } else if (node.IsSequence()) {
    std::string joined;
    for (const auto& item : node) joined += (joined.empty() ? "" : ",") + item.as<std::string>();
    out[prefix] = joined;
  } else if (node.IsScalar()) {
    out[prefix] = node.as<std::string>();
  }
}

}  // namespace config_detail

// Sets one dotted key ("crf.iterations", "labels.sigma_h", ...).
inline void set_config_value(PipelineConfig& c, const std::string& key, const std::string& value) {
  auto b = config_detail::bindings(c);
  const auto it = b.find(key);
  if (it == b.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
  it->second.set(value);
}

// "key=value"
inline void apply_override(PipelineConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("override must be key=value: '" + assignment + "'");
  set_config_value(c, assignment.substr(0, eq), assignment.substr(eq + 1));
}

// All keys with their current values, sorted by key.
inline std::map<std::string, std::string> config_values(const PipelineConfig& c) {
  PipelineConfig copy = c;
  std::map<std::string, std::string> out;
  for (const auto& [k, b] : config_detail::bindings(copy)) out[k] = b.get();
  return out;
}

inline PipelineConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
  PipelineConfig c;
  if (!path.empty()) {
    YAML::Node root;
    try {
      root = YAML::LoadFile(path.string());
    } catch (const YAML::Exception& e) {
      throw std::runtime_error("cannot parse config " + path.string() + ": " + e.what());
    }
    std::map<std::string, std::string> flat;
    config_detail::flatten(root, "", flat);
    for (const auto& [k, v] : flat) {
      try {
        set_config_value(c, k, v);
      } catch (const std::invalid_argument& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
      }
    }
  }
  for (const auto& o : overrides) apply_override(c, o);
  c.validate();
  return c;
}

inline std::string config_to_yaml(const PipelineConfig& c) {
  std::ostringstream os;
  for (const auto& [k, v] : config_values(c)) os << k << ": \"" << v << "\"\n";
  return os.str();
}

// FNV-1a over the canonical key=value listing.
inline std::string config_hash(const PipelineConfig& c) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& [k, v] : config_values(c)) {
    for (char ch : k + "=" + v + "\n") {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ull;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace trajlabel
