#pragma once

// View directory -> observation record, and the scene description consumed by
// the synthetic renderer.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oms/geometry.hpp"
#include "oms/memory.hpp"
#include "oms/random.hpp"
#include "oms/view_io.hpp"

namespace oms {

struct IngestOptions {
  /// Pixels below this fraction of their view's maximum relevancy are dropped.
  double relevancy_floor_fraction = kDefaultRelevancyFloorFraction;
  double top_quantile = kDefaultTopQuantile;
};

/// Turns every view of one observation into a single location estimate:
/// paired views are subtracted, all views are unprojected and merged, and the
/// merged cloud is localized. Only views whose label matches are used.
inline ObservationRecord ingest_observation(const fs::path& dir, const std::string& label,
                                            const IngestOptions& options = {}) {
  if (!(options.relevancy_floor_fraction >= 0)) throw InputError("relevancy floor must be >= 0");
  std::map<std::string, ViewFile> views;
  for (const auto& path : list_view_files(dir)) {
    auto vf = read_view(path);
    if (vf.view.label == label) views.emplace(vf.view.view_id, std::move(vf));
  }
  if (views.empty()) throw InputError(dir.string() + ": no views labeled '" + label + "'");

  std::set<std::string> consumed;
  for (const auto& [id, vf] : views)
    if (vf.paired_view) consumed.insert(*vf.paired_view);

  std::vector<RelevancyPointCloud> clouds;
  double timestamp = -INFINITY;
  for (const auto& [id, vf] : views) {
    if (consumed.contains(id) && !vf.paired_view) continue;
    CameraView view = vf.view;
    if (vf.paired_view) {
      const auto other = views.find(*vf.paired_view);
      if (other == views.end())
        throw InputError(dir.string() + ": view '" + id + "' is paired with missing view '" + *vf.paired_view + "'");
      view = subtract_relevancy(vf.view, other->second.view);
    }
    timestamp = std::max(timestamp, view.timestamp);
    clouds.push_back(unproject(view, options.relevancy_floor_fraction * view.max_relevancy()));
  }

  const auto merged = merge_clouds(clouds);
  if (merged.empty()) throw InputError(dir.string() + ": no pixels survived the relevancy floor");
  ObservationRecord record;
  record.label = label;
  record.location = localize(merged, options.top_quantile);
  record.timestamp = timestamp;
  record.source_view_ids = merged.source_view_ids;
  return record;
}

/// Observation directories under `root`: `root` itself when it holds view files,
/// otherwise each immediate subdirectory that does, sorted by name.
inline std::vector<fs::path> find_observation_dirs(const fs::path& root) {
  if (!list_view_files(root).empty()) return {root};
  std::vector<fs::path> out;
  if (!fs::is_directory(root)) return out;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && !list_view_files(entry.path()).empty()) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

/// Scene file for `oms render-synthetic`:
///   {"spheres": [{"label": "apple", "center": [x, y, z], "radius": r}, ...],
///    "ground_plane_z": 0, "query_label": "apple",
///    "intrinsics": {fx, fy, cx, cy, width, height},
///    "views": [{"id": "0", "eye": [x, y, z], "target": [x, y, z], "timestamp": t}
///              or {"id": "1", "pose": [16 numbers], "timestamp": t}],
///    "noise_level": 0.05, "seed": 42}
struct SceneViewSpec {
  std::string id;
  CameraPose pose;
  double timestamp = 0;
};

struct SceneFile {
  SyntheticScene scene;
  std::string query_label;
  CameraIntrinsics intrinsics;
  std::vector<SceneViewSpec> views;
  double noise_level = 0;
  std::uint64_t seed = 42;
};

inline SceneFile parse_scene_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open scene file " + path.string());
  SceneFile sf;
  try {
    const auto j = nlohmann::json::parse(in);
    const auto vec3 = [](const nlohmann::json& a) {
      if (!a.is_array() || a.size() != 3) throw InputError("expected a 3-vector");
      return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
    };
    for (const auto& s : j.at("spheres"))
      sf.scene.spheres.push_back({s.at("label").get<std::string>(), vec3(s.at("center")), s.at("radius").get<double>()});
    sf.scene.ground_plane_z = j.value("ground_plane_z", 0.0);
    sf.query_label = j.at("query_label").get<std::string>();
    const auto& k = j.at("intrinsics");
    sf.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                     k.at("cy").get<double>(), k.at("width").get<int>(),  k.at("height").get<int>()};
    for (const auto& v : j.at("views")) {
      SceneViewSpec spec;
      spec.id = v.at("id").get<std::string>();
      spec.timestamp = v.value("timestamp", 0.0);
      if (v.contains("pose")) {
        const auto& p = v.at("pose");
        if (p.size() != 16) throw InputError("pose must hold 16 numbers");
        Mat4 m;
        for (int i = 0; i < 16; ++i) m(i / 4, i % 4) = p.at(std::size_t(i)).get<double>();
        spec.pose = CameraPose(m);
      } else {
        spec.pose = CameraPose::look_at(vec3(v.at("eye")), vec3(v.at("target")));
      }
      sf.views.push_back(std::move(spec));
    }
    sf.noise_level = j.value("noise_level", 0.0);
    sf.seed = j.value("seed", std::uint64_t{42});
    sf.scene.validate();
    sf.intrinsics.validate();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  if (sf.views.empty()) throw InputError(path.string() + ": scene has no views");
  return sf;
}

/// Renders every view of a scene file into `out_dir` in the view file format.
/// Each view's noise stream is seeded from (seed, view position).
inline std::size_t render_scene_views(const SceneFile& sf, const fs::path& out_dir) {
  for (std::size_t i = 0; i < sf.views.size(); ++i) {
    const auto& spec = sf.views[i];
    const auto view = render_synthetic_view(sf.scene, sf.intrinsics, spec.pose, sf.query_label,
                                            derive_seed(sf.seed, {i}), sf.noise_level, spec.id, spec.timestamp);
    write_view(out_dir, view);
  }
  return sf.views.size();
}

}  // namespace oms
