#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "evsplat/commands.hpp"
#include "evsplat/io.hpp"
#include "evsplat/rasterizer.hpp"
#include "evsplat/simulator.hpp"

using namespace evsplat;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "evsplat");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("evsplat_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::uint8_t> bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t count_files(const fs::path& dir, const std::string& ext) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext;
  return n;
}

// Small dataset shared by several cases.
const fs::path& dataset() {
  static const fs::path dir = [] {
    const fs::path d = scratch("data");
    const Run r = cli({"simulate", "--out", d.string(), "--size", "16", "--focal", "18", "--frames", "8",
                       "--scene-gaussians", "12", "--noise-rate", "1"});
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit 2 and help exits 0") {
    CHECK(cli({}).code == kExitValidation);
    CHECK(cli({"frobnicate"}).code == kExitValidation);
    CHECK(cli({"train", "--out", "x"}).code == kExitValidation);
    CHECK(cli({"train", "--manifest", "m", "--out", "x", "--loss", "l1"}).code == kExitValidation);
    CHECK(cli({"--help"}).code == kExitOk);
  }

  TEST_CASE("simulate writes the 250-frame 90 degree sweep") {
    const fs::path d = scratch("sweep");
    const Run r = cli({"simulate", "--out", d.string(), "--frames", "250", "--arc-deg", "90", "--size", "12",
                       "--focal", "14", "--scene-gaussians", "8"});
    REQUIRE(r.code == kExitOk);
    CHECK(count_files(d / "frames", ".png") == 250);
    const auto views = read_poses(d / "poses.json");
    REQUIRE(views.size() == 250);
    const Eigen::Vector3d c0 = views.front().world_to_cam.camera_center();
    const Eigen::Vector3d c1 = views.back().world_to_cam.camera_center();
    CHECK(std::acos(c0.normalized().dot(c1.normalized())) * 180.0 / M_PI == doctest::Approx(90.0).epsilon(1e-9));
    CHECK(read_times(d / "times.txt").size() == 250);
    for (const char* f : {"manifest.json", "events.bin", "initial_frame.f32", "initial_frame.png", "gt_scene.swgs"})
      CHECK(fs::exists(d / f));
    fs::remove_all(d);
  }

  TEST_CASE("simulate is seed-deterministic and noise-free output satisfies the roundtrip bound") {
    const fs::path a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c");
    const std::vector<std::string> base{"--size", "16", "--focal", "18", "--frames", "10", "--noise-rate", "3"};
    auto run = [&](const fs::path& d, const std::string& seed) {
      std::vector<std::string> args{"simulate", "--out", d.string(), "--seed", seed};
      args.insert(args.end(), base.begin(), base.end());
      return cli(args).code;
    };
    REQUIRE(run(a, "5") == 0);
    REQUIRE(run(b, "5") == 0);
    REQUIRE(run(c, "6") == 0);
    CHECK(bytes_of(a / "events.bin") == bytes_of(b / "events.bin"));
    CHECK(bytes_of(a / "events.bin") != bytes_of(c / "events.bin"));

    const fs::path q = scratch("quiet");
    REQUIRE(cli({"simulate", "--out", q.string(), "--size", "16", "--focal", "18", "--frames", "10"}).code == 0);
    const LoadedDataset data = load_dataset(read_manifest(q / "manifest.json"));
    const auto frames = read_frame_dir(q / "frames", 16, 16);
    const auto times = read_times(q / "times.txt");
    const AccumImage sum = accumulate(data.stream, times.front(), times.back() + 1);
    double worst = 0.0;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        auto lg = [](double v) { return std::log(std::pow(v, 2.2) + 1e-5); };
        worst = std::max(worst, std::abs(0.25 * sum(x, y) - (lg(frames.back()(x, y)) - lg(frames.front()(x, y)))));
      }
    CHECK(worst < 0.25);
    for (const fs::path& d : {a, b, c, q}) fs::remove_all(d);
  }

  TEST_CASE("simulate --csv and --frames-dir") {
    const fs::path d = scratch("csv");
    REQUIRE(cli({"simulate", "--out", d.string(), "--size", "12", "--focal", "14", "--frames", "6", "--csv"}).code ==
            0);
    CHECK(fs::exists(d / "events.csv"));
    const LoadedDataset data = load_dataset(read_manifest(d / "manifest.json"));
    const fs::path e = scratch("from_frames");
    // Only PNGs are read, so quantisation can change the count but the command must succeed.
    const Run r = cli({"simulate", "--out", e.string(), "--frames-dir", (d / "frames").string(), "--times",
                       (d / "times.txt").string()});
    CHECK(r.code == 0);
    CHECK(read_events(e / "events.bin").resolution() == data.stream.resolution());
    CHECK(cli({"simulate", "--out", e.string(), "--frames-dir", (d / "frames").string()}).code == kExitValidation);
    fs::remove_all(d);
    fs::remove_all(e);
  }

  TEST_CASE("train echoes the loss constants and zero iterations emit the init checkpoint") {
    const fs::path out = scratch("train0");
    const Run r = cli({"train", "--manifest", (dataset() / "manifest.json").string(), "--out", out.string(),
                       "--iterations", "0", "--init-count", "40", "--seed", "3"});
    REQUIRE(r.code == kExitOk);
    const nlohmann::json cfg = file_json(out / "config.json");
    CHECK(cfg["lambda"] == 0.1);
    CHECK(cfg["linlog_threshold"] == 20.0);
    CHECK(cfg["gamma"] == 2.2);
    CHECK(cfg["loss"] == "ours");
    CHECK(cfg["noise_filter"] == true);
    CHECK(cfg["frame_anchor"] == true);
    CHECK(read_scene(out / "final.swgs") == decode_scene(encode_scene(random_init(40, Box{}, 3))));
    for (const auto& e : fs::directory_iterator(out)) CHECK(!e.path().filename().string().starts_with("ckpt_"));
    fs::remove_all(out);
  }

  TEST_CASE("ablation flags reach the config echo") {
    const fs::path out = scratch("train_abl");
    const Run r = cli({"train", "--manifest", (dataset() / "manifest.json").string(), "--out", out.string(),
                       "--iterations", "3", "--init-count", "40", "--loss", "mse", "--no-noise-filter",
                       "--no-frame-anchor", "--lambda", "0.3", "--log-every", "1"});
    REQUIRE(r.code == kExitOk);
    const nlohmann::json cfg = file_json(out / "config.json");
    CHECK(cfg["loss"] == "mse");
    CHECK(cfg["noise_filter"] == false);
    CHECK(cfg["frame_anchor"] == false);
    CHECK(cfg["lambda"] == 0.3);
    CHECK(r.out.find("iter 3 ") != std::string::npos);
    fs::remove_all(out);
  }

  TEST_CASE("train is byte-reproducible across thread counts") {
    const int threads_before = worker_threads();
    const fs::path a = scratch("train_a"), b = scratch("train_b");
    const std::string m = (dataset() / "manifest.json").string();
    const std::vector<std::string> common{"--iterations", "25", "--init-count", "60", "--seed", "9",
                                          "--densify-from", "5", "--densify-interval", "10"};
    std::vector<std::string> ra{"train", "--manifest", m, "--out", a.string(), "--threads", "1"};
    std::vector<std::string> rb{"train", "--manifest", m, "--out", b.string(), "--threads", "4"};
    ra.insert(ra.end(), common.begin(), common.end());
    rb.insert(rb.end(), common.begin(), common.end());
    REQUIRE(cli(ra).code == 0);
    REQUIRE(cli(rb).code == 0);
    CHECK(bytes_of(a / "final.swgs") == bytes_of(b / "final.swgs"));
    CHECK(bytes_of(a / "loss.csv") == bytes_of(b / "loss.csv"));
    set_worker_threads(threads_before);
    fs::remove_all(a);
    fs::remove_all(b);
  }

  TEST_CASE("render with zero jitter equals the plain render, and eval scores it") {
    const fs::path d = dataset();
    const fs::path plain = scratch("render_plain"), jit0 = scratch("render_jit0"), jit = scratch("render_jit");
    const std::string ckpt = (d / "gt_scene.swgs").string();
    const std::vector<std::string> traj{"--size", "16", "--focal", "18", "--frames", "8", "--float"};
    auto render_into = [&](const fs::path& out, const std::string& jitter) {
      std::vector<std::string> args{"render", "--checkpoint", ckpt, "--out", out.string(), "--jitter", jitter};
      args.insert(args.end(), traj.begin(), traj.end());
      return cli(args).code;
    };
    REQUIRE(render_into(plain, "0") == 0);
    REQUIRE(render_into(jit0, "0") == 0);
    REQUIRE(render_into(jit, "0.05") == 0);
    CHECK(count_files(plain, ".png") == 8);
    for (int i = 0; i < 8; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%05d.f32", i);
      CHECK(bytes_of(plain / name) == bytes_of(jit0 / name));
    }
    CHECK(read_poses(plain / "poses.json") == read_poses(d / "poses.json"));
    CHECK(!(read_poses(jit / "poses.json") == read_poses(plain / "poses.json")));

    // The GT scene is stored at float32, so rendering it reproduces the frames closely but not exactly.
    const Run e = cli({"eval", "--checkpoint", ckpt, "--poses", (d / "poses.json").string(), "--gt-dir",
                       (d / "frames").string()});
    REQUIRE(e.code == 0);
    const nlohmann::json rep = nlohmann::json::parse(e.out);
    CHECK(rep["views"].size() == 8);
    CHECK((rep["mean_psnr_infinite"] == true || rep["mean_psnr"].get<double>() > 60.0));
    CHECK(rep["mean_ssim"].get<double>() > 0.999);

    const fs::path report = plain / "metrics.json";
    REQUIRE(cli({"eval", "--checkpoint", ckpt, "--poses", (jit / "poses.json").string(), "--gt-dir",
                 (d / "frames").string(), "--out", report.string()})
                .code == 0);
    CHECK(file_json(report)["mean_psnr"].get<double>() < 60.0);
    for (const fs::path& p : {plain, jit0, jit}) fs::remove_all(p);
  }

  TEST_CASE("eval with mismatched counts and missing inputs fails cleanly") {
    const fs::path d = dataset();
    const fs::path few = scratch("few_poses");
    auto views = read_poses(d / "poses.json");
    views.pop_back();
    write_poses(few / "poses.json", views);
    const Run r = cli({"eval", "--checkpoint", (d / "gt_scene.swgs").string(), "--poses",
                       (few / "poses.json").string(), "--gt-dir", (d / "frames").string()});
    CHECK(r.code == kExitValidation);
    CHECK(r.err.find("ground-truth") != std::string::npos);
    CHECK(cli({"eval", "--checkpoint", (d / "missing.swgs").string(), "--poses", (d / "poses.json").string(),
               "--gt-dir", (d / "frames").string()})
              .code == kExitValidation);
    CHECK(cli({"render", "--checkpoint", (d / "missing.swgs").string(), "--out", few.string()}).code ==
          kExitValidation);
    fs::remove_all(few);
  }

  TEST_CASE("runtime failures exit 3") {
    const fs::path d = scratch("blocked");
    std::ofstream(d / "file") << "x";
    const Run r = cli({"simulate", "--out", (d / "file" / "sub").string(), "--size", "8", "--focal", "9",
                       "--frames", "2"});
    CHECK(r.code == kExitRuntime);
    CHECK(!r.err.empty());
    fs::remove_all(d);
  }

  TEST_CASE("manifest resolution mismatch is rejected with exit 2") {
    const fs::path d = scratch("mismatch");
    fs::copy(dataset(), d, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    nlohmann::json m = file_json(d / "manifest.json");
    m["width"] = 20;
    write_json(d / "manifest.json", m);
    const Run r = cli({"train", "--manifest", (d / "manifest.json").string(), "--out", (d / "out").string(),
                       "--iterations", "1"});
    CHECK(r.code == kExitValidation);
    CHECK(!fs::exists(d / "out" / "config.json"));
    fs::remove_all(d);
  }
}
