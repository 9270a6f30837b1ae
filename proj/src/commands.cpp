#include "evsplat/commands.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <random>

#include "evsplat/error.hpp"
#include "evsplat/io.hpp"
#include "evsplat/rasterizer.hpp"
#include "evsplat/simulator.hpp"
#include "evsplat/trainer.hpp"

namespace evsplat {

namespace {

struct TrajectoryFlags {
  std::string sweep = "turntable";
  int frames = 120;
  double arc_deg = 90.0;
  double radius = 1.0;
  double elevation_deg = 0.0;
  Timestamp duration_us = 1'190'000;
  int size = 64;
  double focal = 70.0;
  std::vector<double> start{0.0, 0.0, -1.0};
  std::vector<double> displacement{0.2, 0.0, 0.0};

  void add_to(CLI::App* cmd) {
    cmd->add_option("--sweep", sweep, "turntable or linear")->check(CLI::IsMember({"turntable", "linear"}));
    cmd->add_option("--frames", frames, "number of views along the sweep");
    cmd->add_option("--arc-deg", arc_deg, "turntable arc in degrees");
    cmd->add_option("--radius", radius, "turntable radius");
    cmd->add_option("--elevation-deg", elevation_deg, "turntable elevation");
    cmd->add_option("--duration-us", duration_us, "sweep duration in microseconds");
    cmd->add_option("--size", size, "square image size in pixels");
    cmd->add_option("--focal", focal, "focal length in pixels");
    cmd->add_option("--start", start, "linear sweep start centre")->expected(3);
    cmd->add_option("--displacement", displacement, "linear sweep displacement")->expected(3);
  }

  SweepTrajectory build() const {
    SweepTrajectory t;
    t.kind = sweep == "linear" ? SweepKind::LinearTranslation : SweepKind::TurntableArc;
    t.frame_count = frames;
    t.arc_degrees = arc_deg;
    t.radius = radius;
    t.elevation_degrees = elevation_deg;
    t.duration_us = duration_us;
    if (size <= 0) throw ValidationError("--size must be positive");
    t.intrinsics = Intrinsics::desk(size, focal);
    t.start_center = Eigen::Vector3d(start[0], start[1], start[2]);
    t.displacement = Eigen::Vector3d(displacement[0], displacement[1], displacement[2]);
    t.validate();
    return t;
  }
};

std::string frame_name(std::size_t i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05zu%s", i, ext);
  return buf;
}

// ---- simulate ----

struct SimulateFlags {
  std::string out;
  std::string scene = "builtin";
  std::size_t scene_gaussians = 50;
  std::uint64_t scene_seed = 7;
  TrajectoryFlags traj;
  SimConfig sim;
  std::uint64_t seed = 0;
  bool csv = false;
  std::string frames_dir;
  std::string times;
};

int simulate_from_frames(const SimulateFlags& f, std::ostream& out) {
  if (f.times.empty()) throw ValidationError("--frames-dir requires --times");
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(f.frames_dir)) {
    if (entry.path().extension() == ".png") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  const std::vector<Timestamp> times = read_times(f.times);
  if (paths.size() != times.size()) {
    throw ValidationError(std::to_string(paths.size()) + " frames but " + std::to_string(times.size()) + " times");
  }
  std::vector<Image> frames;
  for (const auto& p : paths) frames.push_back(read_png(p));
  const EventStream stream = frames_to_events(frames, times, f.sim, f.seed);
  fs::create_directories(f.out);
  if (f.csv) {
    write_events_csv(fs::path(f.out) / "events.csv", stream);
  } else {
    write_events(fs::path(f.out) / "events.bin", stream);
  }
  out << "simulated " << stream.size() << " events from " << frames.size() << " frames\n";
  return kExitOk;
}

int cmd_simulate(const SimulateFlags& f, std::ostream& out) {
  f.sim.validate();
  if (!f.frames_dir.empty()) return simulate_from_frames(f, out);

  const SweepTrajectory traj = f.traj.build();
  const GaussianScene scene =
      f.scene == "builtin" ? make_reference_scene(f.scene_gaussians, f.scene_seed) : read_scene(f.scene);
  if (scene.empty()) throw ValidationError("scene has no Gaussians");

  const fs::path dir(f.out);
  fs::create_directories(dir / "frames");
  const std::vector<Timestamp> times = sample_view_times(traj);
  std::vector<CameraView> views;
  std::vector<Image> frames;
  for (std::size_t i = 0; i < times.size(); ++i) {
    views.push_back(pose_at(traj, times[i]));
    frames.push_back(render(scene, views.back()).image);
    write_png(dir / "frames" / frame_name(i, ".png"), frames.back());
    write_float_image(dir / "frames" / frame_name(i, ".f32"), frames.back());
  }
  const EventStream stream = frames_to_events(frames, times, f.sim, f.seed);

  write_times(dir / "times.txt", times);
  write_poses(dir / "poses.json", views);
  write_float_image(dir / "initial_frame.f32", frames.front());
  write_png(dir / "initial_frame.png", frames.front());
  write_scene(dir / "gt_scene.swgs", scene);

  DatasetManifest m;
  m.events_csv = f.csv;
  m.events = f.csv ? "events.csv" : "events.bin";
  if (f.csv) {
    write_events_csv(dir / m.events, stream);
  } else {
    write_events(dir / m.events, stream);
  }
  m.poses = "poses.json";
  m.initial_frame = "initial_frame.f32";
  m.gt_dir = "frames";
  m.times = "times.txt";
  m.width = traj.intrinsics.width;
  m.height = traj.intrinsics.height;
  m.contrast_threshold = f.sim.contrast_threshold;
  write_manifest(dir / "manifest.json", m);

  out << "simulated " << stream.size() << " events over " << frames.size() << " frames into " << dir.string()
      << "\n";
  return kExitOk;
}

// ---- train ----

struct TrainFlags {
  std::string manifest;
  std::string out;
  TrainConfig cfg;
  std::string loss = "ours";
  bool no_noise_filter = false;
  bool no_frame_anchor = false;
  int threads = 0;
  int log_every = 100;
};

nlohmann::json config_echo(const TrainConfig& c) {
  return {{"iterations", c.iterations},
          {"seed", c.seed},
          {"init_count", c.init_count},
          {"loss", c.loss == LossKind::Event ? "ours" : "mse"},
          {"lambda", c.loss_cfg.lambda},
          {"linlog_threshold", c.loss_cfg.linlog_threshold},
          {"gamma", c.loss_cfg.gamma},
          {"epsilon", c.loss_cfg.epsilon},
          {"noise_filter", c.noise_filter},
          {"noise_tau_us", c.filter.tau_us},
          {"noise_radius", c.filter.radius},
          {"frame_anchor", c.frame_anchor},
          {"anchor_weight", c.anchor_weight},
          {"position_lr_init", c.position_lr_init},
          {"position_lr_final", c.position_lr_final},
          {"color_lr", c.color_lr},
          {"opacity_lr", c.opacity_lr},
          {"scale_lr", c.scale_lr},
          {"rotation_lr", c.rotation_lr},
          {"densify_interval", c.densify_interval},
          {"densify_from", c.densify_from},
          {"densify_until", c.densify_until},
          {"densify_grad_threshold", c.densify_grad_threshold},
          {"opacity_reset_interval", c.opacity_reset_interval},
          {"checkpoint_interval", c.checkpoint_interval}};
}

int cmd_train(TrainFlags f, std::ostream& out) {
  TrainConfig& cfg = f.cfg;
  cfg.loss = f.loss == "mse" ? LossKind::Mse : LossKind::Event;
  cfg.noise_filter = !f.no_noise_filter;
  cfg.frame_anchor = !f.no_frame_anchor;
  cfg.validate();
  if (f.threads > 0) set_worker_threads(f.threads);

  const DatasetManifest manifest = read_manifest(f.manifest);
  LoadedDataset loaded = load_dataset(manifest);
  cfg.init_bounds = loaded.scene_bounds;

  const fs::path dir(f.out);
  fs::create_directories(dir);
  write_json(dir / "config.json", config_echo(cfg));

  Dataset dataset{std::move(loaded.stream), std::move(loaded.views), std::move(loaded.initial_frame)};
  TrainOutput output;
  output.checkpoint_dir = dir;
  output.on_step = [&](const StepReport& r) {
    if (f.log_every > 0 && r.iteration % f.log_every == 0) {
      out << "iter " << r.iteration << " loss " << r.loss.total << " gaussians " << r.gaussian_count << "\n";
    }
  };
  const TrainResult result = train(dataset, cfg, output);
  out << "trained " << cfg.iterations << " iterations, " << result.scene.size() << " Gaussians, checkpoint "
      << (dir / "final.swgs").string() << "\n";
  return kExitOk;
}

// ---- render ----

struct RenderFlags {
  std::string checkpoint;
  std::string poses;
  std::string times;
  bool midpoints = false;
  TrajectoryFlags traj;
  double jitter = 0.0;
  std::uint64_t seed = 0;
  bool write_float = false;
  std::string out;
};

int cmd_render(const RenderFlags& f, std::ostream& out) {
  const GaussianScene scene = read_scene(f.checkpoint);
  if (scene.empty()) throw ValidationError("checkpoint has no Gaussians");
  if (f.jitter < 0.0) throw ValidationError("--jitter must be >= 0");

  std::vector<CameraView> views;
  if (!f.poses.empty()) {
    views = read_poses(f.poses);
  } else {
    const SweepTrajectory traj = f.traj.build();
    std::vector<Timestamp> times = f.times.empty() ? sample_view_times(traj) : read_times(f.times);
    if (f.midpoints) {
      std::vector<Timestamp> mids;
      for (std::size_t i = 0; i + 1 < times.size(); ++i) mids.push_back(times[i] + (times[i + 1] - times[i]) / 2);
      times = std::move(mids);
    }
    for (Timestamp t : times) views.push_back(pose_at(traj, t));
  }
  std::mt19937_64 rng(f.seed);
  for (CameraView& v : views) v = jitter_view(v, f.jitter, rng);

  const fs::path dir(f.out);
  fs::create_directories(dir);
  for (std::size_t i = 0; i < views.size(); ++i) {
    const Image img = render(scene, views[i]).image;
    write_png(dir / frame_name(i, ".png"), img);
    if (f.write_float) write_float_image(dir / frame_name(i, ".f32"), img);
  }
  write_poses(dir / "poses.json", views);
  out << "rendered " << views.size() << " views into " << dir.string() << "\n";
  return kExitOk;
}

// ---- eval ----

struct EvalFlags {
  std::string checkpoint;
  std::string poses;
  std::string gt_dir;
  std::string out;
};

int cmd_eval(const EvalFlags& f, std::ostream& out) {
  const std::vector<CameraView> views = read_poses(f.poses);
  if (views.empty()) throw ValidationError("pose file has no poses");
  const Intrinsics& in = views.front().intrinsics;
  const std::vector<Image> gt = read_frame_dir(f.gt_dir, in.width, in.height);
  if (gt.size() != views.size()) {
    throw ValidationError(std::to_string(views.size()) + " poses but " + std::to_string(gt.size()) +
                          " ground-truth frames");
  }
  const GaussianScene scene = read_scene(f.checkpoint);
  const EvalReport report = evaluate(scene, views, gt);
  const nlohmann::json doc = report_to_json(report);
  if (f.out.empty()) {
    out << doc.dump(2) << "\n";
  } else {
    write_json(f.out, doc);
    out << "mean PSNR " << report.mean_psnr << " dB, mean SSIM " << report.mean_ssim << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Event-supervised Gaussian splatting"};
  app.require_subcommand(1);

  SimulateFlags sim;
  auto* simulate = app.add_subcommand("simulate", "render a sweep of a scene and simulate its events");
  simulate->add_option("--out", sim.out, "output directory")->required();
  simulate->add_option("--scene", sim.scene, "'builtin' or a checkpoint file");
  simulate->add_option("--scene-gaussians", sim.scene_gaussians, "size of the builtin scene");
  simulate->add_option("--scene-seed", sim.scene_seed, "seed of the builtin scene");
  sim.traj.add_to(simulate);
  simulate->add_option("--contrast", sim.sim.contrast_threshold, "contrast threshold A (log units)");
  simulate->add_option("--refractory-us", sim.sim.refractory_us, "per-pixel refractory period");
  simulate->add_option("--noise-rate", sim.sim.noise_rate, "uniform noise events per pixel per second");
  simulate->add_option("--seed", sim.seed, "noise seed");
  simulate->add_flag("--csv", sim.csv, "write events as t_us,x,y,p text");
  simulate->add_option("--frames-dir", sim.frames_dir, "convert numbered PNG frames instead of a scene");
  simulate->add_option("--times", sim.times, "frame timestamps for --frames-dir, one per line");

  TrainFlags tr;
  auto* trainc = app.add_subcommand("train", "optimise Gaussians against an event dataset");
  trainc->add_option("--manifest", tr.manifest, "dataset manifest")->required();
  trainc->add_option("--out", tr.out, "output directory")->required();
  trainc->add_option("--iterations", tr.cfg.iterations);
  trainc->add_option("--seed", tr.cfg.seed);
  trainc->add_option("--init-count", tr.cfg.init_count, "random initial Gaussians");
  trainc->add_option("--loss", tr.loss, "ours or mse")->check(CLI::IsMember({"ours", "mse"}));
  trainc->add_option("--lambda", tr.cfg.loss_cfg.lambda, "D-SSIM weight");
  trainc->add_flag("--no-noise-filter", tr.no_noise_filter);
  trainc->add_option("--noise-tau-us", tr.cfg.filter.tau_us);
  trainc->add_option("--noise-radius", tr.cfg.filter.radius);
  trainc->add_flag("--no-frame-anchor", tr.no_frame_anchor, "drop the initial-frame term");
  trainc->add_option("--anchor-weight", tr.cfg.anchor_weight);
  trainc->add_option("--densify-from", tr.cfg.densify_from);
  trainc->add_option("--densify-until", tr.cfg.densify_until);
  trainc->add_option("--densify-interval", tr.cfg.densify_interval);
  trainc->add_option("--densify-grad-threshold", tr.cfg.densify_grad_threshold);
  trainc->add_option("--opacity-reset-interval", tr.cfg.opacity_reset_interval);
  trainc->add_option("--checkpoint-every", tr.cfg.checkpoint_interval);
  trainc->add_option("--threads", tr.threads, "worker threads (0 = default)");
  trainc->add_option("--log-every", tr.log_every, "progress line interval (0 = silent)");

  RenderFlags rf;
  auto* renderc = app.add_subcommand("render", "render views of a checkpoint");
  renderc->add_option("--checkpoint", rf.checkpoint)->required();
  renderc->add_option("--out", rf.out, "output directory")->required();
  renderc->add_option("--poses", rf.poses, "pose file (otherwise the trajectory flags are used)");
  renderc->add_option("--times", rf.times, "timestamps along the trajectory");
  renderc->add_flag("--midpoints", rf.midpoints, "render halfway between consecutive times");
  rf.traj.add_to(renderc);
  renderc->add_option("--jitter", rf.jitter, "uniform camera-plane shift magnitude");
  renderc->add_option("--seed", rf.seed, "jitter seed");
  renderc->add_flag("--float", rf.write_float, "also write float32 dumps");

  EvalFlags ef;
  auto* evalc = app.add_subcommand("eval", "score a checkpoint against ground-truth frames");
  evalc->add_option("--checkpoint", ef.checkpoint)->required();
  evalc->add_option("--poses", ef.poses)->required();
  evalc->add_option("--gt-dir", ef.gt_dir)->required();
  evalc->add_option("--out", ef.out, "metrics JSON path (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*simulate) return cmd_simulate(sim, out);
    if (*trainc) return cmd_train(tr, out);
    if (*renderc) return cmd_render(rf, out);
    if (*evalc) return cmd_eval(ef, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace evsplat
