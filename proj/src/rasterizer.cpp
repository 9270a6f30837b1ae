#include "evsplat/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include <omp.h>

#include "evsplat/error.hpp"

namespace evsplat {

namespace {

class Fnv1a {
 public:
  void add(const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= bytes[i];
      h_ *= 1099511628211ULL;
    }
  }
  void add(double v) { add(&v, sizeof v); }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 1469598103934665603ULL;
};

ProjectedSplat project(const Gaussian& g, const CameraView& view, int tile_size, int tiles_x, int tiles_y) {
  ProjectedSplat s;
  const Intrinsics& in = view.intrinsics;
  s.mean_cam = view.world_to_cam.apply(g.position);
  if (!(s.mean_cam.z() > kNearPlane)) return s;

  s.opacity = g.activated_opacity();
  if (!(s.opacity > kAlphaTail)) return s;
  s.color = g.activated_color();

  s.cov3d = build_covariance(g.rotation, g.activated_scale());
  s.jacobian = projection_jacobian(s.mean_cam, in.fx, in.fy);
  const Eigen::Matrix<double, 2, 3> jw = s.jacobian * view.world_to_cam.rotation;
  s.cov2d = jw * s.cov3d * jw.transpose();
  s.cov2d(0, 0) += kLowPassFloor;
  s.cov2d(1, 1) += kLowPassFloor;

  const double a = s.cov2d(0, 0), b = s.cov2d(0, 1), c = s.cov2d(1, 1);
  const double det = a * c - b * b;
  if (!(det > 0.0)) return s;
  s.conic = Eigen::Vector3d(c / det, -b / det, a / det);

  s.min_power = std::log(kAlphaTail / s.opacity);
  // Exact bounding box of the ellipse power >= min_power, with a hair of slack.
  const double reach = -2.0 * s.min_power;
  const double extent_x = std::sqrt(reach * a) + 1e-6, extent_y = std::sqrt(reach * c) + 1e-6;

  s.mean2d = Eigen::Vector2d(in.fx * s.mean_cam.x() / s.mean_cam.z() + in.cx,
                             in.fy * s.mean_cam.y() / s.mean_cam.z() + in.cy);
  const double x_lo = std::ceil(s.mean2d.x() - extent_x), x_hi = std::floor(s.mean2d.x() + extent_x);
  const double y_lo = std::ceil(s.mean2d.y() - extent_y), y_hi = std::floor(s.mean2d.y() + extent_y);
  if (x_hi < 0.0 || y_hi < 0.0 || x_lo > in.width - 1 || y_lo > in.height - 1 || x_lo > x_hi || y_lo > y_hi) {
    return s;
  }
  const int px0 = static_cast<int>(std::max(0.0, x_lo));
  const int px1 = static_cast<int>(std::min<double>(in.width - 1, x_hi));
  const int py0 = static_cast<int>(std::max(0.0, y_lo));
  const int py1 = static_cast<int>(std::min<double>(in.height - 1, y_hi));
  s.tile_x0 = px0 / tile_size;
  s.tile_x1 = std::min(tiles_x, px1 / tile_size + 1);
  s.tile_y0 = py0 / tile_size;
  s.tile_y1 = std::min(tiles_y, py1 / tile_size + 1);
  s.px0 = px0;
  s.px1 = px1;
  s.py0 = py0;
  s.py1 = py1;
  s.radius = static_cast<int>(std::ceil(std::max(extent_x, extent_y)));
  s.visible = true;
  return s;
}

// Compact copy of the fields the per-pixel loops read.
struct PackedSplat {
  double mx, my, ca, cb, cc, min_power, opacity, color;
  int x0, x1, y0, y1;  // support clipped to the tile, inclusive
};

// Splats of one tile in depth order. Each splat walks only its own support, so a
// pixel still sees the splats in depth order.
class TileWork {
 public:
  void load(const RenderResult& r, int tile, int ts, int width, int height) {
    const int tx = tile % r.tiles_x, ty = tile / r.tiles_x;
    bx0 = tx * ts;
    by0 = ty * ts;
    bw = std::min(width, bx0 + ts) - bx0;
    bh = std::min(height, by0 + ts) - by0;
    const std::uint32_t first = r.tile_offsets[tile], last = r.tile_offsets[tile + 1];
    packed.clear();
    for (std::uint32_t e = first; e < last; ++e) {
      const ProjectedSplat& s = r.splats[r.tile_entries[e]];
      packed.push_back({s.mean2d.x(), s.mean2d.y(), s.conic[0], s.conic[1], s.conic[2], s.min_power, s.opacity,
                        s.color, std::max(s.px0, bx0), std::min(s.px1, bx0 + bw - 1), std::max(s.py0, by0),
                        std::min(s.py1, by0 + bh - 1)});
    }
    const std::size_t n = static_cast<std::size_t>(bw) * bh;
    t.assign(n, 1.0);
    c.assign(n, 0.0);
  }
  std::size_t local(int x, int y) const { return static_cast<std::size_t>(y - by0) * bw + (x - bx0); }

  std::vector<PackedSplat> packed;
  std::vector<double> t, c;  // per-pixel running transmittance and colour (or prefix)
  int bx0 = 0, by0 = 0, bw = 0, bh = 0;
};

inline double packed_power(const PackedSplat& s, double dx, double dy) {
  return -0.5 * (s.ca * dx * dx + s.cc * dy * dy) - s.cb * dx * dy;
}

// Adjoints of the 2D quantities one tile-list entry accumulates.
struct SplatAdjoint {
  double mean[2] = {0.0, 0.0};
  double conic[3] = {0.0, 0.0, 0.0};
  double opacity = 0.0;
  double color = 0.0;
};

// dR/dq_k for a unit quaternion q = (w, x, y, z), contracted with G.
Eigen::Vector4d rotation_adjoint(const Eigen::Vector4d& q, const Eigen::Matrix3d& g) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d dw, dx, dy, dz;
  dw << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
  dx << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
  dy << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
  dz << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
  return {g.cwiseProduct(dw).sum(), g.cwiseProduct(dx).sum(), g.cwiseProduct(dy).sum(), g.cwiseProduct(dz).sum()};
}

}  // namespace

std::uint64_t render_tag(const GaussianScene& scene, const CameraView& view, const RenderSettings& settings) {
  Fnv1a h;
  for (const Gaussian& g : scene.gaussians) {
    const ParamVector v = pack(g);
    h.add(v.data(), sizeof(double) * v.size());
  }
  h.add(view.world_to_cam.rotation.data(), sizeof(double) * 9);
  h.add(view.world_to_cam.translation.data(), sizeof(double) * 3);
  const Intrinsics& in = view.intrinsics;
  for (double v : {in.fx, in.fy, in.cx, in.cy, double(in.width), double(in.height), settings.background,
                   double(settings.tile_size)}) {
    h.add(v);
  }
  return h.value();
}

RenderResult render(const GaussianScene& scene, const CameraView& view, const RenderSettings& settings) {
  if (scene.empty()) throw ValidationError("render: empty scene");
  if (settings.tile_size < 1) throw ValidationError("render: tile size must be positive");
  const Intrinsics& in = view.intrinsics;
  if (in.width <= 0 || in.height <= 0) throw ValidationError("render: empty image");

  const int ts = settings.tile_size;
  RenderResult r;
  r.tiles_x = (in.width + ts - 1) / ts;
  r.tiles_y = (in.height + ts - 1) / ts;
  r.tag = render_tag(scene, view, settings);

  const auto n = static_cast<std::int64_t>(scene.size());
  r.splats.resize(scene.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    r.splats[i] = project(scene.gaussians[i], view, ts, r.tiles_x, r.tiles_y);
  }

  for (std::uint32_t i = 0; i < scene.size(); ++i) {
    if (r.splats[i].visible) r.depth_order.push_back(i);
  }
  std::stable_sort(r.depth_order.begin(), r.depth_order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return r.splats[a].mean_cam.z() < r.splats[b].mean_cam.z();
  });

  // Counting sort of (tile, depth) instances; depth order is inherited from depth_order.
  const int num_tiles = r.tiles_x * r.tiles_y;
  r.tile_offsets.assign(num_tiles + 1, 0);
  for (std::uint32_t i : r.depth_order) {
    const ProjectedSplat& s = r.splats[i];
    for (int ty = s.tile_y0; ty < s.tile_y1; ++ty)
      for (int tx = s.tile_x0; tx < s.tile_x1; ++tx) ++r.tile_offsets[ty * r.tiles_x + tx + 1];
  }
  std::partial_sum(r.tile_offsets.begin(), r.tile_offsets.end(), r.tile_offsets.begin());
  r.tile_entries.resize(r.tile_offsets.back());
  {
    std::vector<std::uint32_t> cursor(r.tile_offsets.begin(), r.tile_offsets.end() - 1);
    for (std::uint32_t i : r.depth_order) {
      const ProjectedSplat& s = r.splats[i];
      for (int ty = s.tile_y0; ty < s.tile_y1; ++ty)
        for (int tx = s.tile_x0; tx < s.tile_x1; ++tx) r.tile_entries[cursor[ty * r.tiles_x + tx]++] = i;
    }
  }

  r.image = Image(in.width, in.height);
  r.transmittance = Image(in.width, in.height, 1.0);
  r.contributors.assign(r.image.size(), 0);

#pragma omp parallel
  {
    TileWork work;
    std::vector<std::uint32_t> visited;
#pragma omp for schedule(dynamic)
    for (int tile = 0; tile < num_tiles; ++tile) {
      work.load(r, tile, ts, in.width, in.height);
      const auto count = static_cast<std::uint32_t>(work.packed.size());
      visited.assign(work.t.size(), count);
      for (std::uint32_t j = 0; j < count; ++j) {
        const PackedSplat& s = work.packed[j];
        for (int y = s.y0; y <= s.y1; ++y) {
          const double dy = y - s.my;
          for (int x = s.x0; x <= s.x1; ++x) {
            const std::size_t q = work.local(x, y);
            if (visited[q] != count) continue;  // terminated earlier
            const double power = packed_power(s, x - s.mx, dy);
            if (power < s.min_power) continue;
            const double alpha = std::min(kMaxAlpha, s.opacity * std::exp(power) - kAlphaTail);
            if (alpha <= 0.0) continue;
            work.c[q] += s.color * alpha * work.t[q];
            work.t[q] *= 1.0 - alpha;
            if (work.t[q] < kMinTransmittance) visited[q] = j + 1;
          }
        }
      }
      for (int y = work.by0; y < work.by0 + work.bh; ++y) {
        for (int x = work.bx0; x < work.bx0 + work.bw; ++x) {
          const std::size_t q = work.local(x, y);
          const std::size_t p = static_cast<std::size_t>(y) * in.width + x;
          r.image[p] = work.c[q] + work.t[q] * settings.background;
          r.transmittance[p] = work.t[q];
          r.contributors[p] = visited[q];
        }
      }
    }
  }
  return r;
}

ParamGradients render_backward(const GaussianScene& scene, const CameraView& view, const RenderResult& result,
                               const Image& d_image, const RenderSettings& settings) {
  if (result.tag != render_tag(scene, view, settings)) {
    throw ValidationError("render_backward: render result does not match scene/view/settings");
  }
  require_same_shape(d_image, result.image, "render_backward");

  const Intrinsics& in = view.intrinsics;
  const int ts = settings.tile_size;
  const int num_tiles = result.tiles_x * result.tiles_y;
  std::vector<SplatAdjoint> entry_adj(result.tile_entries.size());

#pragma omp parallel
  {
    TileWork work;
#pragma omp for schedule(dynamic)
    for (int tile = 0; tile < num_tiles; ++tile) {
      const std::uint32_t first = result.tile_offsets[tile];
      work.load(result, tile, ts, in.width, in.height);
      const auto count = static_cast<std::uint32_t>(work.packed.size());
      for (std::uint32_t j = 0; j < count; ++j) {
        const PackedSplat& s = work.packed[j];
        SplatAdjoint& adj = entry_adj[first + j];
        for (int y = s.y0; y <= s.y1; ++y) {
          const double dy = y - s.my;
          for (int x = s.x0; x <= s.x1; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * in.width + x;
            if (j >= result.contributors[p]) continue;
            const double dl_dc = d_image[p];
            if (dl_dc == 0.0) continue;
            const double dx = x - s.mx;
            const double power = packed_power(s, dx, dy);
            if (power < s.min_power) continue;
            const std::size_t q = work.local(x, y);
            const double g = std::exp(power);
            const double raw = s.opacity * g;
            const double alpha = std::min(kMaxAlpha, raw - kAlphaTail);
            if (alpha <= 0.0) continue;
            const double t = work.t[q];
            const double weight = alpha * t;
            work.c[q] += s.color * weight;
            // Everything composited behind this splat, background included.
            const double behind = result.image[p] - work.c[q];
            const double dl_dalpha = dl_dc * (s.color * t - behind / (1.0 - alpha));

            adj.color += dl_dc * weight;
            if (raw - kAlphaTail < kMaxAlpha) {
              adj.opacity += dl_dalpha * g;
              const double dl_dpower = dl_dalpha * raw;
              adj.mean[0] += dl_dpower * (s.ca * dx + s.cb * dy);
              adj.mean[1] += dl_dpower * (s.cb * dx + s.cc * dy);
              adj.conic[0] += -0.5 * dl_dpower * dx * dx;
              adj.conic[1] += -dl_dpower * dx * dy;
              adj.conic[2] += -0.5 * dl_dpower * dy * dy;
            }
            work.t[q] = t * (1.0 - alpha);
          }
        }
      }
    }
  }

  // Deterministic merge: entries are reduced in tile order regardless of thread count.
  std::vector<SplatAdjoint> adj(scene.size());
  for (std::size_t e = 0; e < result.tile_entries.size(); ++e) {
    SplatAdjoint& dst = adj[result.tile_entries[e]];
    const SplatAdjoint& src = entry_adj[e];
    dst.mean[0] += src.mean[0];
    dst.mean[1] += src.mean[1];
    for (int k = 0; k < 3; ++k) dst.conic[k] += src.conic[k];
    dst.opacity += src.opacity;
    dst.color += src.color;
  }

  ParamGradients out;
  out.params.assign(scene.size(), ParamVector{});
  out.mean2d_norm.assign(scene.size(), 0.0);
  out.visible.assign(scene.size(), 0);
  const Eigen::Matrix3d& w = view.world_to_cam.rotation;
  const auto n = static_cast<std::int64_t>(scene.size());

#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const ProjectedSplat& s = result.splats[i];
    if (!s.visible) continue;
    out.visible[i] = 1;
    const Gaussian& gauss = scene.gaussians[i];
    const SplatAdjoint& a = adj[i];

    // Conic -> screen covariance: dL/dS' = -K (dL/dK) K with K = S'^-1.
    Eigen::Matrix2d k, gk;
    k << s.conic[0], s.conic[1], s.conic[1], s.conic[2];
    gk << a.conic[0], 0.5 * a.conic[1], 0.5 * a.conic[1], a.conic[2];
    const Eigen::Matrix2d g_cov2d = -k * gk * k;

    // S' = T Sigma T^T + floor, T = J W.
    const Eigen::Matrix<double, 2, 3> jw = s.jacobian * w;
    const Eigen::Matrix3d g_cov3d = jw.transpose() * g_cov2d * jw;
    const Eigen::Matrix<double, 2, 3> g_jw = 2.0 * g_cov2d * jw * s.cov3d;
    const Eigen::Matrix<double, 2, 3> g_j = g_jw * w.transpose();

    // Camera-space mean: through the pixel mean and through J.
    const Eigen::Vector2d g_mean2d(a.mean[0], a.mean[1]);
    Eigen::Vector3d g_pc = s.jacobian.transpose() * g_mean2d;
    const double px = s.mean_cam.x(), py = s.mean_cam.y(), iz = 1.0 / s.mean_cam.z();
    const double iz2 = iz * iz, iz3 = iz2 * iz;
    g_pc.x() += g_j(0, 2) * (-in.fx * iz2);
    g_pc.y() += g_j(1, 2) * (-in.fy * iz2);
    g_pc.z() += g_j(0, 0) * (-in.fx * iz2) + g_j(0, 2) * (2.0 * in.fx * px * iz3) + g_j(1, 1) * (-in.fy * iz2) +
                g_j(1, 2) * (2.0 * in.fy * py * iz3);
    const Eigen::Vector3d g_pos = w.transpose() * g_pc;

    // Sigma = M M^T, M = R S.
    const double qn = gauss.rotation.norm();
    const Eigen::Vector4d q = gauss.rotation / qn;
    const Eigen::Matrix3d rot = rotation_matrix(q);
    const Eigen::Vector3d scale = gauss.activated_scale();
    const Eigen::Matrix3d m = rot * scale.asDiagonal();
    const Eigen::Matrix3d g_m = 2.0 * g_cov3d * m;
    const Eigen::Matrix3d g_rot = g_m * scale.asDiagonal();
    const Eigen::Vector3d g_scale = (rot.transpose() * g_m).diagonal();
    const Eigen::Vector4d g_qunit = rotation_adjoint(q, g_rot);
    const Eigen::Vector4d g_q = (g_qunit - q * q.dot(g_qunit)) / qn;

    ParamVector& gv = out.params[i];
    gv[0] = g_pos.x();
    gv[1] = g_pos.y();
    gv[2] = g_pos.z();
    gv[3] = a.color * s.color * (1.0 - s.color);
    gv[4] = a.opacity * s.opacity * (1.0 - s.opacity);
    for (int c = 0; c < 4; ++c) gv[5 + c] = g_q[c];
    for (int c = 0; c < 3; ++c) gv[9 + c] = g_scale[c] * scale[c];

    out.mean2d_norm[i] = std::hypot(a.mean[0] * 0.5 * in.width, a.mean[1] * 0.5 * in.height);
  }
  return out;
}

std::pair<RenderResult, RenderResult> render_grayscale_pair(const GaussianScene& scene, const CameraView& view_0,
                                                            const CameraView& view_k, const RenderSettings& settings) {
  return {render(scene, view_0, settings), render(scene, view_k, settings)};
}

void set_worker_threads(int count) {
  if (count < 1) throw ValidationError("thread count must be >= 1");
  omp_set_num_threads(count);
}

int worker_threads() { return omp_get_max_threads(); }

}  // namespace evsplat
