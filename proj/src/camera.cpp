#include "evsplat/camera.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "evsplat/error.hpp"

namespace evsplat {

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ValidationError("focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ValidationError("image size must be positive");
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw ValidationError("principal point must lie inside the image");
  }
}

Intrinsics Intrinsics::sensor_default() { return Intrinsics{}; }

Intrinsics Intrinsics::desk(int size, double focal) {
  const double c = 0.5 * (size - 1);
  return Intrinsics{focal, focal, c, c, size, size};
}

void SweepTrajectory::validate() const {
  if (duration_us == 0) throw ValidationError("sweep duration must be positive");
  if (frame_count < 2) throw ValidationError("sweep needs at least two frames");
  intrinsics.validate();
  if (kind == SweepKind::TurntableArc && !(radius > 0.0)) {
    throw ValidationError("turntable radius must be positive");
  }
}

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

Eigen::Matrix3d rot_y(double a) {
  Eigen::Matrix3d r;
  r << std::cos(a), 0.0, std::sin(a), 0.0, 1.0, 0.0, -std::sin(a), 0.0, std::cos(a);
  return r;
}

Eigen::Matrix3d rot_x(double a) {
  Eigen::Matrix3d r;
  r << 1.0, 0.0, 0.0, 0.0, std::cos(a), -std::sin(a), 0.0, std::sin(a), std::cos(a);
  return r;
}

}  // namespace

CameraView pose_at(const SweepTrajectory& traj, Timestamp t) {
  if (t > traj.duration_us) throw ValidationError("pose_at: time outside the sweep");
  const double frac = static_cast<double>(t) / static_cast<double>(traj.duration_us);

  CameraView view;
  view.timestamp = t;
  view.intrinsics = traj.intrinsics;
  if (traj.kind == SweepKind::TurntableArc) {
    const double azimuth = traj.arc_degrees * frac * kDegToRad;
    const Eigen::Matrix3d cam_to_world = rot_y(azimuth) * rot_x(-traj.elevation_degrees * kDegToRad);
    const Eigen::Vector3d position = traj.center + cam_to_world * Eigen::Vector3d(0.0, 0.0, -traj.radius);
    view.world_to_cam.rotation = cam_to_world.transpose();
    view.world_to_cam.translation = -view.world_to_cam.rotation * position;
  } else {
    const Eigen::Vector3d position = traj.start_center + traj.displacement * frac;
    view.world_to_cam.rotation = traj.orientation;
    view.world_to_cam.translation = -traj.orientation * position;
  }
  return view;
}

std::vector<Timestamp> sample_view_times(const SweepTrajectory& traj) {
  traj.validate();
  std::vector<Timestamp> times(static_cast<std::size_t>(traj.frame_count));
  const auto n = static_cast<unsigned __int128>(traj.frame_count - 1);
  for (int k = 0; k < traj.frame_count; ++k) {
    times[k] = static_cast<Timestamp>(static_cast<unsigned __int128>(traj.duration_us) * k / n);
  }
  return times;
}

PixelProjection world_to_pixel(const CameraView& view, const Eigen::Vector3d& point) {
  const Eigen::Vector3d pc = view.world_to_cam.apply(point);
  const Intrinsics& in = view.intrinsics;
  return {Eigen::Vector2d(in.fx * pc.x() / pc.z() + in.cx, in.fy * pc.y() / pc.z() + in.cy), pc.z()};
}

CameraView jitter_view(const CameraView& view, double magnitude, std::mt19937_64& rng) {
  if (magnitude == 0.0) return view;
  std::uniform_real_distribution<double> u(-magnitude, magnitude);
  const double dx = u(rng);
  const double dy = u(rng);
  CameraView out = view;
  // Shifting the centre by +d in camera coordinates shifts the translation by -d.
  out.world_to_cam.translation -= Eigen::Vector3d(dx, dy, 0.0);
  return out;
}

}  // namespace evsplat
