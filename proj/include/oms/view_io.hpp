#pragma once

// On-disk view format. An observation directory holds, per view id:
//   view_<id>.json       {intrinsics: {fx, fy, cx, cy, width, height},
//                         pose: 16 row-major numbers, label, timestamp,
//                         optional paired_view: "<other id>"}
//   depth_<id>.f32       H*W little-endian float32, row-major
//   relevancy_<id>.f32   same layout
// A view naming a paired_view has its relevancy replaced by the absolute
// difference with that view before unprojection; the paired view is consumed.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oms/geometry.hpp"

namespace oms {

namespace fs = std::filesystem;

struct ViewFile {
  CameraView view;
  std::optional<std::string> paired_view;
};

namespace detail {

inline std::uint32_t to_little_endian(std::uint32_t x) {
  if constexpr (std::endian::native == std::endian::big)
    x = (x >> 24) | ((x >> 8) & 0xff00u) | ((x << 8) & 0xff0000u) | (x << 24);
  return x;
}

inline void write_f32_grid(const fs::path& path, const ImageGrid& grid) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  for (float f : grid.values) {
    const auto bits = to_little_endian(std::bit_cast<std::uint32_t>(f));
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  if (!out) throw InputError("failed writing " + path.string());
}

inline ImageGrid read_f32_grid(const fs::path& path, int width, int height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(path.string() + ": cannot open");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t expected = std::size_t(width) * std::size_t(height);
  if (bytes.size() != expected * 4)
    throw InputError(path.string() + ": holds " + std::to_string(bytes.size() / 4) + " values, expected " +
                     std::to_string(expected) + " (" + std::to_string(width) + "x" + std::to_string(height) + ")");
  ImageGrid grid(width, height);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, bytes.data() + 4 * i, 4);
    grid.values[i] = std::bit_cast<float>(to_little_endian(bits));
  }
  return grid;
}

}  // namespace detail

inline void write_view(const fs::path& dir, const CameraView& view,
                       const std::optional<std::string>& paired_view = std::nullopt) {
  view.validate();
  fs::create_directories(dir);
  const auto& k = view.intrinsics;
  nlohmann::json j;
  j["intrinsics"] = {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
  auto pose = nlohmann::json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) pose.push_back(view.pose.matrix()(r, c));
  j["pose"] = pose;
  j["label"] = view.label;
  j["timestamp"] = view.timestamp;
  if (paired_view) j["paired_view"] = *paired_view;

  std::ofstream meta(dir / ("view_" + view.view_id + ".json"), std::ios::trunc);
  meta << j.dump(2) << '\n';
  if (!meta) throw InputError("failed writing view metadata in " + dir.string());
  detail::write_f32_grid(dir / ("depth_" + view.view_id + ".f32"), view.depth);
  detail::write_f32_grid(dir / ("relevancy_" + view.view_id + ".f32"), view.relevancy);
}

/// Reads `view_<id>.json` and its sibling grids. Errors name the offending file.
inline ViewFile read_view(const fs::path& json_path) {
  const std::string name = json_path.filename().string();
  if (!name.starts_with("view_") || !name.ends_with(".json"))
    throw InputError(json_path.string() + ": not a view_<id>.json file");
  const std::string id = name.substr(5, name.size() - 5 - 5);

  std::ifstream in(json_path);
  if (!in) throw InputError(json_path.string() + ": cannot open");
  ViewFile vf;
  try {
    const auto j = nlohmann::json::parse(in);
    const auto& k = j.at("intrinsics");
    vf.view.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                          k.at("cy").get<double>(), k.at("width").get<int>(),  k.at("height").get<int>()};
    const auto& pose = j.at("pose");
    if (!pose.is_array() || pose.size() != 16) throw InputError("pose must hold 16 numbers");
    Mat4 m;
    for (int i = 0; i < 16; ++i) m(i / 4, i % 4) = pose.at(std::size_t(i)).get<double>();
    vf.view.pose = CameraPose(m);
    vf.view.label = j.at("label").get<std::string>();
    vf.view.timestamp = j.at("timestamp").get<double>();
    if (j.contains("paired_view")) vf.paired_view = j.at("paired_view").get<std::string>();
    vf.view.intrinsics.validate();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(json_path.string() + ": " + e.what());
  } catch (const InputError& e) {
    throw InputError(json_path.string() + ": " + e.what());
  }
  vf.view.view_id = id;

  const fs::path dir = json_path.parent_path();
  const auto& k = vf.view.intrinsics;
  vf.view.depth = detail::read_f32_grid(dir / ("depth_" + id + ".f32"), k.width, k.height);
  vf.view.relevancy = detail::read_f32_grid(dir / ("relevancy_" + id + ".f32"), k.width, k.height);
  try {
    vf.view.validate();
  } catch (const InputError& e) {
    throw InputError(json_path.string() + ": " + e.what());
  }
  return vf;
}

/// view_*.json files directly inside `dir`, sorted by file name.
inline std::vector<fs::path> list_view_files(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.starts_with("view_") && name.ends_with(".json")) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace oms
