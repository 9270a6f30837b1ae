#include "evsplat/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "evsplat/error.hpp"
#include "evsplat/io.hpp"

namespace evsplat {

void TrainConfig::validate() const {
  if (iterations < 0) throw ValidationError("iterations must be >= 0");
  for (double lr : {position_lr_init, position_lr_final, color_lr, opacity_lr, scale_lr, rotation_lr}) {
    if (!(lr > 0.0)) throw ValidationError("learning rates must be positive");
  }
  if (densify_interval < 1 || opacity_reset_interval < 1 || checkpoint_interval < 1) {
    throw ValidationError("intervals must be >= 1");
  }
  if (init_count == 0) throw ValidationError("init_count must be >= 1");
  if (!(anchor_weight >= 0.0)) throw ValidationError("anchor weight must be >= 0");
  loss_cfg.validate();
}

double position_lr(int iteration, const TrainConfig& cfg) {
  if (cfg.iterations <= 1) return cfg.position_lr_init;
  const double f = std::clamp(static_cast<double>(iteration) / (cfg.iterations - 1), 0.0, 1.0);
  return std::exp(std::log(cfg.position_lr_init) * (1.0 - f) + std::log(cfg.position_lr_final) * f);
}

PreparedDataset prepare_dataset(const Dataset& dataset, const TrainConfig& cfg) {
  if (dataset.views.empty()) throw ValidationError("dataset has no views");
  const Intrinsics& in = dataset.views.front().intrinsics;
  if (dataset.stream.resolution() != Resolution{in.width, in.height}) {
    throw ValidationError("event resolution does not match the camera");
  }
  if (dataset.initial_frame && (dataset.initial_frame->width() != in.width || dataset.initial_frame->height() != in.height)) {
    throw ValidationError("initial frame resolution does not match the camera");
  }

  PreparedDataset out;
  out.views = dataset.views;
  out.initial_frame = dataset.initial_frame;
  const EventStream stream = cfg.noise_filter ? y_noise_filter(dataset.stream, cfg.filter) : dataset.stream;
  out.event_count = stream.size();

  std::vector<Timestamp> times;
  for (const CameraView& v : dataset.views) times.push_back(v.timestamp);
  out.targets = split_windows(stream, times.front(), times);
  const double scale = -stream.contrast_threshold();
  for (AccumImage& t : out.targets) t *= scale;
  return out;
}

TrainState init_state(GaussianScene scene, const TrainConfig& cfg) {
  TrainState s;
  s.scene = std::move(scene);
  s.exp_avg.assign(s.scene.size(), ParamVector{});
  s.exp_avg_sq.assign(s.scene.size(), ParamVector{});
  s.grad_accum.assign(s.scene.size(), 0.0);
  s.grad_count.assign(s.scene.size(), 0);
  s.scene_extent = s.scene.bounds.diagonal();
  s.rng.seed(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  return s;
}

TrainState init_state(const TrainConfig& cfg) {
  return init_state(random_init(cfg.init_count, cfg.init_bounds, cfg.seed), cfg);
}

namespace {

void check_finite(double v, const char* what, int iteration) {
  if (!std::isfinite(v)) {
    throw RuntimeFailure(std::string("non-finite ") + what + " at iteration " + std::to_string(iteration));
  }
}

std::array<double, kParamsPerGaussian> learning_rates(int iteration, const TrainConfig& cfg) {
  std::array<double, kParamsPerGaussian> lr{};
  const double group_lr[5] = {position_lr(iteration, cfg), cfg.color_lr, cfg.opacity_lr, cfg.rotation_lr,
                              cfg.scale_lr};
  for (int g = 0; g < 5; ++g)
    for (int k = 0; k < kGroupSize[g]; ++k) lr[kGroupOffset[g] + k] = group_lr[g];
  return lr;
}

void accumulate_stats(TrainState& state, const ParamGradients& grads) {
  for (std::size_t i = 0; i < grads.visible.size(); ++i) {
    if (!grads.visible[i]) continue;
    state.grad_accum[i] += grads.mean2d_norm[i];
    ++state.grad_count[i];
  }
}

}  // namespace

PairObjective pair_objective(const GaussianScene& scene, const CameraView& view_0, const CameraView& view_k,
                             const AccumImage& target, const Image* initial_frame, const TrainConfig& cfg) {
  const auto [r0, rk] = render_grayscale_pair(scene, view_0, view_k, cfg.render);
  const AccumImage e_pred = predicted_difference(r0.image, rk.image, cfg.loss_cfg);

  PairObjective out;
  Image d_epred;
  if (cfg.loss == LossKind::Event) {
    out.loss = total_loss(e_pred, target, cfg.loss_cfg);
    d_epred = std::move(out.loss.d_epred);
    out.loss.d_epred = Image();
  } else {
    LossGradient mse = mse_loss(e_pred, target);
    out.loss.total = out.loss.event_term = mse.loss;
    out.loss.dssim_term = 1.0;
    d_epred = std::move(mse.grad);
  }

  const Image dlog_0 = log_image_derivative(r0.image, cfg.loss_cfg);
  const Image dlog_k = log_image_derivative(rk.image, cfg.loss_cfg);
  Image d_i0(d_epred.width(), d_epred.height()), d_ik(d_epred.width(), d_epred.height());
  for (std::size_t i = 0; i < d_epred.size(); ++i) {
    d_i0[i] = d_epred[i] * dlog_0[i];
    d_ik[i] = -d_epred[i] * dlog_k[i];
  }
  if (cfg.frame_anchor && initial_frame && cfg.anchor_weight > 0.0) {
    const LossGradient anchor = mse_loss(r0.image, *initial_frame);
    out.anchor_term = cfg.anchor_weight * anchor.loss;
    for (std::size_t i = 0; i < d_i0.size(); ++i) d_i0[i] += cfg.anchor_weight * anchor.grad[i];
  }

  out.grad_0 = render_backward(scene, view_0, r0, d_i0, cfg.render);
  out.grad_k = render_backward(scene, view_k, rk, d_ik, cfg.render);
  out.grad.resize(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i)
    for (int p = 0; p < kParamsPerGaussian; ++p) out.grad[i][p] = out.grad_0.params[i][p] + out.grad_k.params[i][p];
  return out;
}

StepReport train_step(TrainState& state, const PreparedDataset& data, const TrainConfig& cfg) {
  if (state.scene.empty()) throw ValidationError("train_step: empty scene");
  std::uniform_int_distribution<std::size_t> pick(0, data.views.size() - 1);
  const std::size_t k = pick(state.rng);
  const Image* anchor = data.initial_frame ? &*data.initial_frame : nullptr;
  PairObjective obj = pair_objective(state.scene, data.views.front(), data.views[k], data.targets[k], anchor, cfg);
  check_finite(obj.loss.total, "loss", state.iteration);
  check_finite(obj.anchor_term, "anchor loss", state.iteration);
  accumulate_stats(state, obj.grad_0);
  accumulate_stats(state, obj.grad_k);

  // Adam with bias correction; one shared step count across parameter groups.
  ++state.adam_step;
  const auto lr = learning_rates(state.iteration, cfg);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.adam_step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.adam_step));
  for (std::size_t i = 0; i < state.scene.size(); ++i) {
    ParamVector params = pack(state.scene.gaussians[i]);
    ParamVector& m = state.exp_avg[i];
    ParamVector& v = state.exp_avg_sq[i];
    for (int p = 0; p < kParamsPerGaussian; ++p) {
      const double g = obj.grad[i][p];
      check_finite(g, "gradient", state.iteration);
      m[p] = cfg.beta1 * m[p] + (1.0 - cfg.beta1) * g;
      v[p] = cfg.beta2 * v[p] + (1.0 - cfg.beta2) * g * g;
      params[p] -= lr[p] * (m[p] / bc1) / (std::sqrt(v[p] / bc2) + cfg.adam_eps);
    }
    state.scene.gaussians[i] = unpack(params);
  }

  ++state.iteration;
  StepReport report;
  report.iteration = state.iteration;
  report.view_index = k;
  report.loss = std::move(obj.loss);
  report.anchor_term = obj.anchor_term;
  report.gaussian_count = state.scene.size();
  return report;
}

void densify_and_prune(TrainState& state, const TrainConfig& cfg) {
  const std::size_t n = state.scene.size();
  const double big = cfg.percent_dense * state.scene_extent;
  std::vector<Gaussian> clones, children;
  std::vector<std::uint8_t> drop(n, 0);
  std::normal_distribution<double> normal(0.0, 1.0);

  for (std::size_t i = 0; i < n; ++i) {
    if (state.grad_count[i] == 0) continue;
    const double mean_grad = state.grad_accum[i] / state.grad_count[i];
    if (!(mean_grad > cfg.densify_grad_threshold)) continue;
    const Gaussian& g = state.scene.gaussians[i];
    const Eigen::Vector3d scale = g.activated_scale();
    if (scale.maxCoeff() <= big) {
      clones.push_back(g);
      continue;
    }
    const Eigen::Matrix3d rot = rotation_matrix(g.rotation.normalized());
    for (int c = 0; c < 2; ++c) {
      Gaussian child = g;
      const Eigen::Vector3d offset(scale.x() * normal(state.rng), scale.y() * normal(state.rng),
                                   scale.z() * normal(state.rng));
      child.position = g.position + rot * offset;
      child.log_scale = (scale / cfg.split_scale_divisor).array().log();
      children.push_back(child);
    }
    drop[i] = 1;
  }

  std::vector<Gaussian> next;
  std::vector<ParamVector> m, v;
  next.reserve(n + clones.size() + children.size());
  auto keep = [&](const Gaussian& g, const ParamVector& mi, const ParamVector& vi) {
    if (g.activated_opacity() < cfg.prune_opacity) return;
    next.push_back(g);
    m.push_back(mi);
    v.push_back(vi);
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (!drop[i]) keep(state.scene.gaussians[i], state.exp_avg[i], state.exp_avg_sq[i]);
  }
  for (const Gaussian& g : clones) keep(g, ParamVector{}, ParamVector{});
  for (const Gaussian& g : children) keep(g, ParamVector{}, ParamVector{});

  state.scene.gaussians = std::move(next);
  state.exp_avg = std::move(m);
  state.exp_avg_sq = std::move(v);
  state.grad_accum.assign(state.scene.size(), 0.0);
  state.grad_count.assign(state.scene.size(), 0);
}

void reset_opacity(TrainState& state, double cap) {
  const double cap_logit = logit(cap);
  const int slot = kGroupOffset[static_cast<int>(ParamGroup::Opacity)];
  for (std::size_t i = 0; i < state.scene.size(); ++i) {
    Gaussian& g = state.scene.gaussians[i];
    g.opacity_logit = std::min(g.opacity_logit, cap_logit);
    state.exp_avg[i][slot] = 0.0;
    state.exp_avg_sq[i][slot] = 0.0;
  }
}

namespace {

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int iteration) {
  char name[32];
  std::snprintf(name, sizeof name, "ckpt_%06d.swgs", iteration);
  return dir / name;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<StepReport>& curve) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << "iteration,total,event_term,dssim_term,anchor_term\n";
  out.precision(17);
  for (const StepReport& r : curve) {
    out << r.iteration << ',' << r.loss.total << ',' << r.loss.event_term << ',' << r.loss.dssim_term << ','
        << r.anchor_term << '\n';
  }
  if (!out) throw RuntimeFailure("failed writing " + path.string());
}

}  // namespace

TrainResult train(const Dataset& dataset, const TrainConfig& cfg, const TrainOutput& output) {
  cfg.validate();
  const PreparedDataset data = prepare_dataset(dataset, cfg);
  TrainState state = init_state(cfg);

  TrainResult result;
  result.curve.reserve(static_cast<std::size_t>(cfg.iterations));
  if (output.checkpoint_dir) std::filesystem::create_directories(*output.checkpoint_dir);

  while (state.iteration < cfg.iterations) {
    StepReport report = train_step(state, data, cfg);
    const int it = state.iteration;
    if (it < cfg.densify_until) {
      if (it > cfg.densify_from && it % cfg.densify_interval == 0) densify_and_prune(state, cfg);
      if (it % cfg.opacity_reset_interval == 0) reset_opacity(state, cfg.reset_opacity_cap);
    }
    if (state.scene.empty()) throw RuntimeFailure("all Gaussians were pruned at iteration " + std::to_string(it));
    report.gaussian_count = state.scene.size();
    if (output.on_step) output.on_step(report);
    result.curve.push_back(std::move(report));
    if (output.checkpoint_dir && it % cfg.checkpoint_interval == 0) {
      write_scene(checkpoint_path(*output.checkpoint_dir, it), state.scene);
    }
  }

  if (output.checkpoint_dir) {
    write_scene(*output.checkpoint_dir / "final.swgs", state.scene);
    write_loss_csv(*output.checkpoint_dir / "loss.csv", result.curve);
  }
  result.scene = std::move(state.scene);
  return result;
}

}  // namespace evsplat
