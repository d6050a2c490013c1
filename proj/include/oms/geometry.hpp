#pragma once

// Camera views, relevancy point clouds and the synthetic renderer that stands
// in for a vision-language relevancy extractor.
//
// Camera convention: +x right, +y down, +z forward. Poses are world-from-camera.
// A depth of 0 means "no reading".

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "oms/error.hpp"

namespace oms {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

inline constexpr double kDefaultRelevancyFloorFraction = 0.5;
inline constexpr double kDefaultTopQuantile = 0.05;

struct CameraIntrinsics {
  double fx = 0;
  double fy = 0;
  double cx = 0;
  double cy = 0;
  int width = 0;
  int height = 0;

  void validate() const {
    if (!(fx > 0) || !(fy > 0)) throw InputError("intrinsics: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw InputError("intrinsics: image size must be positive");
    if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height))
      throw InputError("intrinsics: principal point outside the image");
  }

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

/// Rigid world-from-camera transform.
class CameraPose {
 public:
  static constexpr double kTolerance = 1e-9;

  CameraPose() : transform_(Mat4::Identity()) {}

  explicit CameraPose(const Mat4& transform) : transform_(transform) {
    if (!transform_.allFinite()) throw InputError("pose: non-finite entries");
    const Mat3 r = rotation();
    if (((r.transpose() * r) - Mat3::Identity()).cwiseAbs().maxCoeff() > kTolerance)
      throw InputError("pose: rotation block is not orthonormal");
    if (std::abs(r.determinant() - 1.0) > kTolerance)
      throw InputError("pose: rotation determinant is not +1");
    const Eigen::RowVector4d last = transform_.row(3);
    if ((last - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() != 0.0)
      throw InputError("pose: last row must be (0, 0, 0, 1)");
  }

  static CameraPose from_rotation_translation(const Mat3& r, const Vec3& t) {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = r;
    m.topRightCorner<3, 1>() = t;
    return CameraPose(m);
  }

  /// Camera at `eye` with its optical axis pointing at `target`; `up` is a
  /// world direction that maps to image -y.
  static CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ()) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(up);
    if (right.norm() < 1e-12) right = forward.unitOrthogonal();
    right.normalize();
    const Vec3 down = forward.cross(right);
    Mat3 r;
    r.col(0) = right;
    r.col(1) = down;
    r.col(2) = forward;
    return from_rotation_translation(r, eye);
  }

  const Mat4& matrix() const noexcept { return transform_; }
  Mat3 rotation() const { return transform_.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return transform_.topRightCorner<3, 1>(); }

  Vec3 to_world(const Vec3& camera_point) const { return rotation() * camera_point + translation(); }
  Vec3 to_camera(const Vec3& world_point) const {
    return rotation().transpose() * (world_point - translation());
  }

 private:
  Mat4 transform_;
};

/// Row-major image grid indexed as (u = column, v = row).
template <typename T>
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<T> values;

  Grid() = default;
  Grid(int w, int h, T fill = T{}) : width(w), height(h), values(std::size_t(w) * std::size_t(h), fill) {}

  T& at(int u, int v) { return values[std::size_t(v) * std::size_t(width) + std::size_t(u)]; }
  const T& at(int u, int v) const { return values[std::size_t(v) * std::size_t(width) + std::size_t(u)]; }

  bool consistent() const { return values.size() == std::size_t(width) * std::size_t(height); }

  friend bool operator==(const Grid&, const Grid&) = default;
};

using ImageGrid = Grid<float>;

struct CameraView {
  CameraIntrinsics intrinsics;
  CameraPose pose;
  ImageGrid depth;
  ImageGrid relevancy;
  std::string label;
  std::string view_id;
  double timestamp = 0;

  void validate() const {
    intrinsics.validate();
    for (const ImageGrid* g : {&depth, &relevancy}) {
      if (!g->consistent() || g->width != intrinsics.width || g->height != intrinsics.height)
        throw InputError("view '" + view_id + "': grid dimensions " + std::to_string(g->width) + "x" +
                         std::to_string(g->height) + " do not match intrinsics " +
                         std::to_string(intrinsics.width) + "x" + std::to_string(intrinsics.height));
    }
    for (float d : depth.values)
      if (!std::isfinite(d) || d < 0) throw InputError("view '" + view_id + "': depth must be finite and >= 0");
    for (float r : relevancy.values)
      if (!std::isfinite(r) || r < 0)
        throw InputError("view '" + view_id + "': relevancy must be finite and >= 0");
  }

  float max_relevancy() const {
    float m = 0;
    for (float r : relevancy.values) m = std::max(m, r);
    return m;
  }
};

struct RelevancyPointCloud {
  std::vector<Vec3> points;
  std::vector<double> weights;
  std::string label;
  std::vector<std::string> source_view_ids;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
};

struct Sphere {
  std::string label;
  Vec3 center = Vec3::Zero();
  double radius = 0;
};

struct SyntheticScene {
  std::vector<Sphere> spheres;
  double ground_plane_z = 0;

  void validate() const {
    for (const auto& s : spheres) {
      if (s.label.empty()) throw InputError("scene: sphere label must be non-empty");
      if (!(s.radius > 0)) throw InputError("scene: sphere '" + s.label + "' needs a positive radius");
      if (!s.center.allFinite()) throw InputError("scene: sphere '" + s.label + "' has a non-finite center");
    }
  }
};

/// Pixel coordinates plus z-depth.
struct PixelDepth {
  double u = 0;
  double v = 0;
  double depth = 0;
};

inline Vec3 unproject_pixel(const CameraIntrinsics& k, const CameraPose& pose, double u, double v, double depth) {
  const Vec3 camera((u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth);
  return pose.to_world(camera);
}

/// Inverse of unproject_pixel for points in front of the camera.
inline PixelDepth project_point(const CameraIntrinsics& k, const CameraPose& pose, const Vec3& world) {
  const Vec3 c = pose.to_camera(world);
  if (!(c.z() > 0)) throw InputError("project_point: point is behind the camera");
  return {k.fx * c.x() / c.z() + k.cx, k.fy * c.y() / c.z() + k.cy, c.z()};
}

/// Lifts every pixel with a depth reading and relevancy >= relevancy_floor into
/// the world frame, weighted by its relevancy.
inline RelevancyPointCloud unproject(const CameraView& view, double relevancy_floor) {
  view.validate();
  if (!(relevancy_floor >= 0)) throw InputError("unproject: relevancy_floor must be >= 0");

  RelevancyPointCloud cloud;
  cloud.label = view.label;
  cloud.source_view_ids = {view.view_id};
  for (int v = 0; v < view.intrinsics.height; ++v) {
    for (int u = 0; u < view.intrinsics.width; ++u) {
      const double d = view.depth.at(u, v);
      const double r = view.relevancy.at(u, v);
      if (d <= 0 || r < relevancy_floor) continue;
      cloud.points.push_back(unproject_pixel(view.intrinsics, view.pose, u, v, d));
      cloud.weights.push_back(r);
    }
  }
  return cloud;
}

/// Absolute difference of two relevancy maps of the same scene, used to cancel
/// distractors that light up in both an "open" and a "closed" view. Depth, pose
/// and metadata come from `a`.
inline CameraView subtract_relevancy(const CameraView& a, const CameraView& b) {
  a.validate();
  b.validate();
  if (a.intrinsics != b.intrinsics) throw InputError("subtract_relevancy: views have different intrinsics");
  if (a.label != b.label) throw InputError("subtract_relevancy: views have different labels");

  CameraView out = a;
  for (std::size_t i = 0; i < out.relevancy.values.size(); ++i)
    out.relevancy.values[i] = std::abs(a.relevancy.values[i] - b.relevancy.values[i]);
  return out;
}

inline RelevancyPointCloud merge_clouds(const std::vector<RelevancyPointCloud>& clouds) {
  if (clouds.empty()) throw InputError("merge_clouds: nothing to merge");

  RelevancyPointCloud out;
  out.label = clouds.front().label;
  for (const auto& c : clouds) {
    if (c.label != out.label)
      throw InputError("merge_clouds: mixed labels '" + out.label + "' and '" + c.label + "'");
    if (c.points.size() != c.weights.size()) throw InputError("merge_clouds: points/weights size mismatch");
    out.points.insert(out.points.end(), c.points.begin(), c.points.end());
    out.weights.insert(out.weights.end(), c.weights.begin(), c.weights.end());
    for (const auto& id : c.source_view_ids)
      if (std::find(out.source_view_ids.begin(), out.source_view_ids.end(), id) == out.source_view_ids.end())
        out.source_view_ids.push_back(id);
  }
  return out;
}

/// Relevancy-weighted centroid of the highest-weight points. The selection keeps
/// the ceil(top_quantile * n) heaviest points plus anything tied with the
/// lightest of them.
inline Vec3 localize(const RelevancyPointCloud& cloud, double top_quantile = kDefaultTopQuantile) {
  if (cloud.empty()) throw InputError("localize: empty cloud");
  if (cloud.points.size() != cloud.weights.size()) throw InputError("localize: points/weights size mismatch");
  if (!(top_quantile > 0 && top_quantile <= 1)) throw InputError("localize: top_quantile must be in (0, 1]");

  const std::size_t n = cloud.size();
  if (std::none_of(cloud.weights.begin(), cloud.weights.end(), [](double w) { return w > 0; }))
    throw InputError("localize: all weights are zero");

  std::vector<double> sorted = cloud.weights;
  const auto keep = std::clamp<std::size_t>(std::size_t(std::ceil(top_quantile * double(n))), 1, n);
  std::nth_element(sorted.begin(), sorted.begin() + std::ptrdiff_t(keep - 1), sorted.end(), std::greater<>());
  const double threshold = sorted[keep - 1];

  Vec3 sum = Vec3::Zero();
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (cloud.weights[i] < threshold) continue;
    sum += cloud.weights[i] * cloud.points[i];
    total += cloud.weights[i];
  }
  if (!(total > 0)) throw InputError("localize: selected points carry no relevancy");
  return sum / total;
}

namespace detail {

inline std::optional<double> ray_sphere(const Vec3& origin, const Vec3& dir, const Sphere& s) {
  const Vec3 oc = origin - s.center;
  const double a = dir.squaredNorm();
  const double b = 2.0 * dir.dot(oc);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - 4 * a * c;
  if (disc < 0) return std::nullopt;
  const double root = std::sqrt(disc);
  const double near = (-b - root) / (2 * a);
  if (near > 0) return near;
  const double far = (-b + root) / (2 * a);
  if (far > 0) return far;
  return std::nullopt;
}

}  // namespace detail

/// Ray-casts a scene of labeled spheres over a horizontal ground plane. Pixels
/// whose nearest hit is a sphere carrying `query_label` get relevancy 1; every
/// pixel additionally receives uniform noise in [0, noise_level].
inline CameraView render_synthetic_view(const SyntheticScene& scene, const CameraIntrinsics& intrinsics,
                                        const CameraPose& pose, const std::string& query_label,
                                        std::uint64_t noise_seed, double noise_level = 0.0,
                                        std::string view_id = "0", double timestamp = 0.0) {
  scene.validate();
  intrinsics.validate();
  if (!(noise_level >= 0)) throw InputError("render_synthetic_view: noise_level must be >= 0");

  CameraView view;
  view.intrinsics = intrinsics;
  view.pose = pose;
  view.label = query_label;
  view.view_id = std::move(view_id);
  view.timestamp = timestamp;
  view.depth = ImageGrid(intrinsics.width, intrinsics.height, 0.0f);
  view.relevancy = ImageGrid(intrinsics.width, intrinsics.height, 0.0f);

  std::mt19937_64 rng(noise_seed);
  std::uniform_real_distribution<double> noise(0.0, noise_level);

  const Mat3 r = pose.rotation();
  const Vec3 origin = pose.translation();
  for (int v = 0; v < intrinsics.height; ++v) {
    for (int u = 0; u < intrinsics.width; ++u) {
      // z component of the camera-frame direction is 1, so the ray parameter is z-depth.
      const Vec3 dir = r * Vec3((u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, 1.0);
      double best = std::numeric_limits<double>::infinity();
      const Sphere* hit = nullptr;
      for (const auto& s : scene.spheres) {
        if (auto t = detail::ray_sphere(origin, dir, s); t && *t < best) {
          best = *t;
          hit = &s;
        }
      }
      if (std::abs(dir.z()) > 1e-12) {
        const double t = (scene.ground_plane_z - origin.z()) / dir.z();
        if (t > 0 && t < best) {
          best = t;
          hit = nullptr;
        }
      }
      double rel = 0;
      if (std::isfinite(best)) {
        view.depth.at(u, v) = float(best);
        if (hit && hit->label == query_label) rel = 1.0;
      }
      if (noise_level > 0) rel += noise(rng);
      view.relevancy.at(u, v) = float(rel);
    }
  }
  return view;
}

}  // namespace oms
