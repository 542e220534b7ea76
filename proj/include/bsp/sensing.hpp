#pragma once

#include "bsp/belief.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

namespace bsp {

/// Mapped visual feature with the world-frame direction of its surface normal.
struct Feature {
  int id = 0;
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double normal_angle = 0.0;
};

struct Obstacle {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 1.0;
};

struct Bounds {
  double xmin = 0.0, xmax = 0.0, ymin = 0.0, ymax = 0.0;
};

struct FeatureMap {
  std::vector<Feature> features;
  std::vector<Obstacle> obstacles;
  std::optional<Bounds> bounds;
};

/// Stereo camera whose optical axis is the robot heading. Only horizontal pixels are measured.
struct CameraParams {
  double focal_px = 400.0;
  double baseline_m = 0.2;
  double alpha_max = 15.0 * std::numbers::pi / 180.0;
  double beta_max = 60.0 * std::numbers::pi / 180.0;
  double pixel_noise_std = 1.0;

  void validate() const {
    if (!(focal_px > 0 && baseline_m > 0 && alpha_max > 0 && beta_max > 0 && pixel_noise_std > 0))
      throw Error("CameraParams: all parameters must be strictly positive");
    if (alpha_max > std::numbers::pi / 2) throw Error("CameraParams: alpha_max must not exceed pi/2");
  }
};

inline constexpr double kMinDepth = 0.1;
/// Features closer than this are left out of the active set, so finite-difference probes of a
/// frozen set never reach kMinDepth.
inline constexpr double kActiveDepth = 2.0 * kMinDepth;
inline constexpr double kDefaultPMin = 1e-6;

class NotVisible : public Error {
 public:
  using Error::Error;
};

/// Point in the camera frame as (lateral offset, forward depth).
inline Eigen::Vector2d world_to_camera(const StateVector& x, const Eigen::Vector2d& p) {
  const double dx = p.x() - x(0);
  const double dy = p.y() - x(1);
  const double c = std::cos(x(2));
  const double s = std::sin(x(2));
  return {-s * dx + c * dy, c * dx + s * dy};
}

/// Horizontal pixel coordinates (u_L, u_R) with the principal point at zero.
inline Eigen::Vector2d project_stereo(const Eigen::Vector2d& pc, const CameraParams& cam) {
  const double depth = pc.y();
  if (!(depth > kMinDepth)) throw NotVisible("project_stereo: point at depth " + std::to_string(depth));
  return {cam.focal_px * pc.x() / depth, cam.focal_px * (pc.x() - cam.baseline_m) / depth};
}

/// Analytic Jacobian of project_stereo(world_to_camera(x, p)) with respect to x.
inline Eigen::Matrix<double, 2, 3> stereo_jacobian(const StateVector& x, const Eigen::Vector2d& p,
                                                   const CameraParams& cam) {
  const Eigen::Vector2d pc = world_to_camera(x, p);
  const double lat = pc.x();
  const double depth = pc.y();
  const double c = std::cos(x(2));
  const double s = std::sin(x(2));
  const Eigen::RowVector3d dlat(s, -c, -depth);
  const Eigen::RowVector3d ddepth(-c, -s, lat);
  const double f = cam.focal_px;
  const double inv2 = 1.0 / (depth * depth);
  Eigen::Matrix<double, 2, 3> h;
  h.row(0) = f * (dlat * depth - lat * ddepth) * inv2;
  h.row(1) = f * (dlat * depth - (lat - cam.baseline_m) * ddepth) * inv2;
  return h;
}

struct ViewAngles {
  double alpha = std::numbers::pi;  // camera axis to feature bearing
  double beta = std::numbers::pi;   // feature normal to feature->robot vector
};

inline ViewAngles view_angles(const StateVector& x, const Feature& feat) {
  ViewAngles a;
  const Eigen::Vector2d pc = world_to_camera(x, feat.position);
  const double r = pc.norm();
  if (r <= 0.0) return a;
  a.alpha = std::acos(std::clamp(pc.y() / r, -1.0, 1.0));
  const Eigen::Vector2d to_robot = x.head<2>() - feat.position;
  const Eigen::Vector2d normal(std::cos(feat.normal_angle), std::sin(feat.normal_angle));
  a.beta = std::acos(std::clamp(to_robot.dot(normal) / r, -1.0, 1.0));
  return a;
}

inline double cosine_falloff(double angle, double limit) {
  return 0.5 * (std::cos(angle / limit * std::numbers::pi) + 1.0);
}

inline double visibility_from_angles(const ViewAngles& a, const CameraParams& cam) {
  if (std::abs(a.alpha) >= cam.alpha_max || std::abs(a.beta) >= cam.beta_max) return 0.0;
  return cosine_falloff(a.alpha, cam.alpha_max) * cosine_falloff(a.beta, cam.beta_max);
}

/// Smooth probability that a feature is matched from pose x.
inline double visibility_prob(const StateVector& x, const Feature& feat, const CameraParams& cam) {
  if ((x.head<2>() - feat.position).norm() == 0.0) return 0.0;
  return visibility_from_angles(view_angles(x, feat), cam);
}

/// Hard field-of-view indicator used by the ablation.
inline double visibility_indicator(const StateVector& x, const Feature& feat, const CameraParams& cam) {
  if ((x.head<2>() - feat.position).norm() == 0.0) return 0.0;
  const ViewAngles a = view_angles(x, feat);
  return (std::abs(a.alpha) < cam.alpha_max && std::abs(a.beta) < cam.beta_max) ? 1.0 : 0.0;
}

enum class VisibilityMode { smooth, hard };

inline const char* to_string(VisibilityMode m) { return m == VisibilityMode::smooth ? "smooth" : "hard"; }

/// Stacked stereo measurement of the active features.
struct Measurement {
  std::vector<int> ids;
  std::vector<double> probabilities;
  VectorXd z;
  MatrixXd H;
  MatrixXd R;

  bool empty() const { return ids.empty(); }
  int rows() const { return static_cast<int>(z.size()); }
};

inline double detection_weight(const StateVector& x, const Feature& f, const CameraParams& cam, VisibilityMode mode) {
  return mode == VisibilityMode::smooth ? visibility_prob(x, f, cam) : visibility_indicator(x, f, cam);
}

/// Features whose detection weight reaches p_min and whose depth allows projection, by ascending id.
inline std::vector<int> active_features(const StateVector& x, const FeatureMap& map, const CameraParams& cam,
                                        double p_min, VisibilityMode mode = VisibilityMode::smooth) {
  std::vector<int> ids;
  for (const Feature& f : map.features) {
    if (detection_weight(x, f, cam, mode) < p_min) continue;
    if (world_to_camera(x, f.position).y() <= kActiveDepth) continue;
    ids.push_back(f.id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline const Feature& find_feature(const FeatureMap& map, int id) {
  for (const Feature& f : map.features)
    if (f.id == id) return f;
  throw Error("unknown feature id " + std::to_string(id));
}

/// Builds the measurement blocks for a fixed set of features. Each block's noise is R/p with p
/// floored at p_min so a frozen feature that drifts out of view stays finite.
inline Measurement measurement_for(const StateVector& x, const FeatureMap& map, const CameraParams& cam,
                                   std::span<const int> ids, double p_min, VisibilityMode mode) {
  Measurement m;
  const auto rows = static_cast<Eigen::Index>(2 * ids.size());
  m.ids.assign(ids.begin(), ids.end());
  m.z.resize(rows);
  m.H.resize(rows, 3);
  m.R = MatrixXd::Zero(rows, rows);
  const double var = cam.pixel_noise_std * cam.pixel_noise_std;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Feature& f = find_feature(map, ids[i]);
    const double p = std::max(detection_weight(x, f, cam, mode), p_min);
    const auto r = static_cast<Eigen::Index>(2 * i);
    m.z.segment<2>(r) = project_stereo(world_to_camera(x, f.position), cam);
    m.H.block<2, 3>(r, 0) = stereo_jacobian(x, f.position, cam);
    m.R.block<2, 2>(r, r) = (var / p) * Eigen::Matrix2d::Identity();
    m.probabilities.push_back(p);
  }
  return m;
}

inline Measurement assemble_measurement(const StateVector& x, const FeatureMap& map, const CameraParams& cam,
                                        double p_min = kDefaultPMin, VisibilityMode mode = VisibilityMode::smooth) {
  const std::vector<int> ids = active_features(x, map, cam, p_min, mode);
  return measurement_for(x, map, cam, ids, p_min, mode);
}

}  // namespace bsp
