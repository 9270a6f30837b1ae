#include <doctest.h>

#include <cmath>
#include <random>

#include "evsplat/error.hpp"
#include "evsplat/rasterizer.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace evsplat;

namespace {

CameraView straight_view(int size = 16, double focal = 20.0) {
  CameraView v;
  v.intrinsics = Intrinsics::desk(size, focal);
  v.world_to_cam.translation = Eigen::Vector3d(0, 0, 2.0);
  return v;
}

// Gaussian at the world origin, which projects onto the principal point.
Gaussian centred(double opacity, double color, double scale = 0.05) {
  Gaussian g;
  g.opacity_logit = logit(opacity);
  g.color = logit(color);
  g.log_scale = Eigen::Vector3d::Constant(std::log(scale));
  return g;
}

CameraView centred_pixel_view() {
  CameraView v = straight_view(17, 20.0);  // principal point exactly on pixel (8, 8)
  return v;
}

double image_dot(const Image& a, const Image& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_SUITE("rasterizer") {
  TEST_CASE("empty scene is rejected") {
    CHECK_THROWS_AS(render(GaussianScene{}, straight_view()), ValidationError);
  }

  TEST_CASE("single splat at a pixel centre gives c * a") {
    GaussianScene s;
    s.gaussians.push_back(centred(0.6, 0.7));
    const RenderResult r = render(s, centred_pixel_view());
    CHECK(r.image(8, 8) == doctest::Approx(0.6 * 0.7).epsilon(1e-7));
    CHECK(r.transmittance(8, 8) == doctest::Approx(0.4).epsilon(1e-7));
  }

  TEST_CASE("two coincident splats blend front to back") {
    GaussianScene s;
    Gaussian front = centred(0.5, 0.9), back = centred(0.3, 0.2);
    back.position.z() = 0.05;  // farther from the camera
    s.gaussians = {back, front};
    const CameraView v = centred_pixel_view();
    const RenderResult r = render(s, v);
    // The back splat projects to the same pixel centre (on the optical axis).
    CHECK(r.image(8, 8) == doctest::Approx(0.9 * 0.5 + 0.2 * 0.3 * (1 - 0.5)).epsilon(1e-7));
    CHECK(r.depth_order == std::vector<std::uint32_t>{1, 0});
  }

  TEST_CASE("equal depths keep index order") {
    GaussianScene s;
    s.gaussians = {centred(0.5, 0.9), centred(0.3, 0.2)};
    const RenderResult r = render(s, centred_pixel_view());
    CHECK(r.depth_order == std::vector<std::uint32_t>{0, 1});
    CHECK(r.image(8, 8) == doctest::Approx(0.9 * 0.5 + 0.2 * 0.3 * 0.5).epsilon(1e-7));
  }

  TEST_CASE("splats behind the near plane are culled") {
    GaussianScene s;
    Gaussian g = centred(0.9, 0.9);
    g.position.z() = -2.0;
    s.gaussians = {g};
    const RenderResult r = render(s, straight_view());
    CHECK(!r.splats[0].visible);
    for (double v : r.image.pixels()) CHECK(v == 0.0);
  }

  TEST_CASE("background shows through the residual transmittance") {
    GaussianScene s;
    s.gaussians.push_back(centred(0.6, 0.7));
    RenderSettings settings;
    settings.background = 1.0;
    const RenderResult r = render(s, centred_pixel_view(), settings);
    CHECK(r.image(8, 8) == doctest::Approx(0.42 + 0.4).epsilon(1e-7));
    CHECK(r.image(0, 0) == doctest::Approx(1.0));
  }

  TEST_CASE("tiled renderer matches the untiled oracle on random scenes") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 30; ++trial) {
      const GaussianScene s = fixture::random_scene(rng, 1 + trial % 20, 0.99);
      const CameraView v = fixture::random_view(rng);
      const Image got = render(s, v).image;
      const Image want = oracle::render(s, v);
      double worst = 0.0;
      for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
      CHECK(worst < 1e-5);
    }
  }

  TEST_CASE("tile size does not change the image") {
    std::mt19937_64 rng(22);
    const GaussianScene s = fixture::random_scene(rng, 40);
    const CameraView v = fixture::random_view(rng, 48, 50.0);
    const Image base = render(s, v).image;
    for (int ts : {1, 5, 8, 64}) {
      RenderSettings settings;
      settings.tile_size = ts;
      const Image other = render(s, v, settings).image;
      double worst = 0.0;
      for (std::size_t i = 0; i < base.size(); ++i) worst = std::max(worst, std::abs(base[i] - other[i]));
      CHECK(worst < 1e-12);
    }
  }

  TEST_CASE("pixels stay in [0, 1) and transmittance in [0, 1]") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 10; ++trial) {
      const GaussianScene s = fixture::random_scene(rng, 30, 0.99);
      const RenderResult r = render(s, fixture::random_view(rng, 24, 26.0));
      for (std::size_t i = 0; i < r.image.size(); ++i) {
        CHECK(r.image[i] >= 0.0);
        CHECK(r.image[i] < 1.0);
        CHECK(r.transmittance[i] >= 0.0);
        CHECK(r.transmittance[i] <= 1.0);
      }
    }
  }

  TEST_CASE("render is bit-identical across thread counts") {
    std::mt19937_64 rng(24);
    const GaussianScene s = fixture::random_scene(rng, 200);
    const CameraView v = fixture::random_view(rng, 64, 70.0);
    const int saved = worker_threads();
    set_worker_threads(1);
    const RenderResult a = render(s, v);
    Image d(64, 64, 0.3);
    const ParamGradients ga = render_backward(s, v, a, d);
    set_worker_threads(4);
    const RenderResult b = render(s, v);
    const ParamGradients gb = render_backward(s, v, b, d);
    set_worker_threads(saved);
    CHECK(a.image == b.image);
    CHECK(ga.params == gb.params);
    CHECK(ga.mean2d_norm == gb.mean2d_norm);
  }

  TEST_CASE("render pair equals two independent renders") {
    std::mt19937_64 rng(25);
    const GaussianScene s = fixture::random_scene(rng, 10);
    const CameraView a = fixture::random_view(rng), b = fixture::random_view(rng);
    const auto [ra, rb] = render_grayscale_pair(s, a, b);
    CHECK(ra.image == render(s, a).image);
    CHECK(rb.image == render(s, b).image);
    const auto [same0, same1] = render_grayscale_pair(s, a, a);
    CHECK(same0.image == same1.image);
  }

  TEST_CASE("zero upstream gradient gives exactly zero gradients") {
    std::mt19937_64 rng(26);
    const GaussianScene s = fixture::random_scene(rng, 8);
    const CameraView v = fixture::random_view(rng);
    const RenderResult r = render(s, v);
    const ParamGradients g = render_backward(s, v, r, Image(16, 16));
    for (const auto& p : g.params)
      for (double x : p) CHECK(x == 0.0);
  }

  TEST_CASE("backward rejects a result from different inputs") {
    std::mt19937_64 rng(27);
    GaussianScene s = fixture::random_scene(rng, 3);
    const CameraView v = fixture::random_view(rng);
    const RenderResult r = render(s, v);
    s.gaussians[0].color += 0.1;
    CHECK_THROWS_AS(render_backward(s, v, r, Image(16, 16)), ValidationError);
    CHECK_THROWS_AS(render_backward(s, v, render(s, v), Image(8, 8)), ValidationError);
  }

  TEST_CASE("single splat colour gradient at the centre pixel equals alpha") {
    GaussianScene s;
    s.gaussians.push_back(centred(0.6, 0.7));
    const CameraView v = centred_pixel_view();
    const RenderResult r = render(s, v);
    Image d(17, 17);
    d(8, 8) = 1.0;
    const ParamGradients g = render_backward(s, v, r, d);
    // Gradient with respect to the activated colour; the stored one is pre-sigmoid.
    const double dc = g.params[0][3] / (0.7 * 0.3);
    CHECK(dc == doctest::Approx(0.6).epsilon(1e-7));
  }

  TEST_CASE("every parameter gradient matches central differences") {
    std::mt19937_64 rng(28);
    const double h = 1e-4;
    int checked = 0;
    for (int trial = 0; trial < 6; ++trial) {
      const GaussianScene s = fixture::random_scene(rng, 5);
      const CameraView v = fixture::random_view(rng);
      const RenderResult r = render(s, v);
      const Image d = fixture::random_image(rng, 16, 16, -1.0, 1.0);
      const ParamGradients g = render_backward(s, v, r, d);
      for (std::size_t i = 0; i < s.size(); ++i) {
        for (int p = 0; p < kParamsPerGaussian; ++p) {
          GaussianScene plus = s, minus = s;
          ParamVector vp = pack(s.gaussians[i]), vm = vp;
          vp[p] += h;
          vm[p] -= h;
          plus.gaussians[i] = unpack(vp);
          minus.gaussians[i] = unpack(vm);
          const double numeric = (image_dot(d, render(plus, v).image) - image_dot(d, render(minus, v).image)) / (2 * h);
          CHECK_MESSAGE(oracle::grad_close(g.params[i][p], numeric, 1e-3, 1e-6),
                        "gaussian " << i << " param " << p << ": " << g.params[i][p] << " vs " << numeric);
          ++checked;
        }
      }
    }
    CHECK(checked == 6 * 5 * kParamsPerGaussian);
  }

  TEST_CASE("densification statistic is the NDC norm of the mean gradient") {
    // Isotropic splat on the optical axis: to first order a shift in x moves only the
    // pixel mean (by fx / z per unit), so the position gradient isolates d/d mean.
    GaussianScene s;
    s.gaussians.push_back(centred(0.6, 0.7, 0.08));
    const CameraView v = straight_view(32, 40.0);
    Image d(32, 32);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) d(x, y) = x / 32.0;
    const ParamGradients grads = render_backward(s, v, render(s, v), d);
    CHECK(grads.visible[0] == 1);
    const double h = 1e-5;
    GaussianScene plus = s, minus = s;
    plus.gaussians[0].position.x() += h;
    minus.gaussians[0].position.x() -= h;
    const double d_pos = (image_dot(d, render(plus, v).image) - image_dot(d, render(minus, v).image)) / (2 * h);
    const double d_mean_px = d_pos / (40.0 / 2.0);
    CHECK(grads.mean2d_norm[0] == doctest::Approx(std::abs(d_mean_px) * 16.0).epsilon(1e-4));
  }
}
