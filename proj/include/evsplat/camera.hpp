#pragma once

#include <Eigen/Core>
#include <random>
#include <vector>

#include "evsplat/events.hpp"

namespace evsplat {

/// Pinhole intrinsics. Pixel centres sit at integer coordinates.
struct Intrinsics {
  double fx = 300.0;
  double fy = 300.0;
  double cx = 172.5;
  double cy = 129.5;
  int width = 346;
  int height = 260;

  /// fx, fy > 0 and principal point strictly inside the image.
  void validate() const;

  /// 346x260 sensor, f = 300 px, centred principal point.
  static Intrinsics sensor_default();
  /// Square desk-scale camera with centred principal point.
  static Intrinsics desk(int size = 64, double focal = 70.0);

  bool operator==(const Intrinsics&) const = default;
};

/// x_cam = rotation * x_world + translation. Camera looks down +z, +x right, +y down.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  Eigen::Vector3d camera_center() const { return -rotation.transpose() * translation; }

  bool operator==(const RigidTransform& o) const {
    return rotation == o.rotation && translation == o.translation;
  }
};

struct CameraView {
  RigidTransform world_to_cam;
  Timestamp timestamp = 0;
  Intrinsics intrinsics;

  bool operator==(const CameraView&) const = default;
};

enum class SweepKind { TurntableArc, LinearTranslation };

/// Constant-speed camera sweep.
struct SweepTrajectory {
  SweepKind kind = SweepKind::TurntableArc;
  Timestamp duration_us = 1'190'000;
  int frame_count = 120;
  Intrinsics intrinsics = Intrinsics::desk();

  // Turntable: orbit `center` at `radius`; azimuth runs 0 -> arc_degrees about the world y axis.
  // Positive elevation raises the camera towards -y (up).
  double arc_degrees = 90.0;
  double radius = 1.0;
  double elevation_degrees = 0.0;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();

  // Linear: camera centre moves start_center -> start_center + displacement with fixed orientation.
  Eigen::Matrix3d orientation = Eigen::Matrix3d::Identity();  // world-to-camera rotation
  Eigen::Vector3d start_center = Eigen::Vector3d(0.0, 0.0, -1.0);
  Eigen::Vector3d displacement = Eigen::Vector3d(0.2, 0.0, 0.0);

  void validate() const;
};

/// Pose at time t in [0, duration]; throws ValidationError outside that range.
CameraView pose_at(const SweepTrajectory& traj, Timestamp t);

/// frame_count evenly spaced timestamps covering [0, duration] inclusive.
std::vector<Timestamp> sample_view_times(const SweepTrajectory& traj);

struct PixelProjection {
  Eigen::Vector2d pixel;
  double depth = 0.0;
};

/// Projects a world point; depth may be <= 0 and culling is left to the caller.
PixelProjection world_to_pixel(const CameraView& view, const Eigen::Vector3d& point);

/// Moves the camera centre by a random offset of up to `magnitude` along the
/// camera's own x and y axes; orientation unchanged. magnitude == 0 is a no-op.
CameraView jitter_view(const CameraView& view, double magnitude, std::mt19937_64& rng);

}  // namespace evsplat
