#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "evsplat/camera.hpp"
#include "evsplat/events.hpp"
#include "evsplat/gaussian.hpp"
#include "evsplat/loss.hpp"
#include "evsplat/rasterizer.hpp"

namespace evsplat {

enum class LossKind { Event, Mse };

struct TrainConfig {
  int iterations = 50'000;
  double position_lr_init = 1.6e-4;
  double position_lr_final = 1.6e-6;
  double color_lr = 2.5e-3;
  double opacity_lr = 5e-2;
  double scale_lr = 5e-3;
  double rotation_lr = 1e-3;

  int densify_interval = 100;
  int densify_from = 500;
  int densify_until = 50'000;
  double densify_grad_threshold = 2e-4;
  double percent_dense = 0.01;
  int opacity_reset_interval = 3'000;
  double prune_opacity = 0.005;
  double reset_opacity_cap = 0.01;
  double split_scale_divisor = 1.6;

  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-15;

  int checkpoint_interval = 5'000;
  std::uint64_t seed = 0;

  std::size_t init_count = 10'000;
  Box init_bounds;

  LossKind loss = LossKind::Event;
  LossConfig loss_cfg;
  bool frame_anchor = true;
  double anchor_weight = 1.0;
  bool noise_filter = true;
  NoiseFilterParams filter;
  RenderSettings render;

  void validate() const;
};

/// Position learning rate: log-linear from init (iteration 0) to final (iteration iterations-1).
double position_lr(int iteration, const TrainConfig& cfg);

struct Dataset {
  EventStream stream;
  std::vector<CameraView> views;  // views[0] is the static start pose at t0
  std::optional<Image> initial_frame;
};

/// Dataset after denoising, with the per-view supervision targets precomputed.
struct PreparedDataset {
  std::vector<CameraView> views;
  /// Target for E_pred = L(I_0) - L(I_k): the accumulated polarities over [t0, t_k),
  /// scaled by A and negated (the events measure L(I_k) - L(I_0)).
  std::vector<AccumImage> targets;
  std::optional<Image> initial_frame;
  std::size_t event_count = 0;
};

PreparedDataset prepare_dataset(const Dataset& dataset, const TrainConfig& cfg);

/// Training objective of one view pair: the event loss (or MSE) on E_pred plus the
/// optional initial-frame anchor on I_0, with gradients through both renders.
struct PairObjective {
  LossValue loss;
  double anchor_term = 0.0;
  std::vector<ParamVector> grad;  // summed over both renders, scene order
  ParamGradients grad_0;          // per-render gradients (densification statistics)
  ParamGradients grad_k;

  double value() const { return loss.total + anchor_term; }
};

PairObjective pair_objective(const GaussianScene& scene, const CameraView& view_0, const CameraView& view_k,
                             const AccumImage& target, const Image* initial_frame, const TrainConfig& cfg);

struct TrainState {
  GaussianScene scene;
  std::vector<ParamVector> exp_avg;
  std::vector<ParamVector> exp_avg_sq;
  std::uint64_t adam_step = 0;
  int iteration = 0;
  std::vector<double> grad_accum;  // summed 2D gradient norms
  std::vector<std::uint32_t> grad_count;
  double scene_extent = 1.0;
  std::mt19937_64 rng;
};

/// Fresh state around a random initial scene.
TrainState init_state(const TrainConfig& cfg);
/// State around an existing scene (moments zero, statistics empty).
TrainState init_state(GaussianScene scene, const TrainConfig& cfg);

struct StepReport {
  int iteration = 0;  // 1-based count of completed steps
  std::size_t view_index = 0;
  LossValue loss;
  double anchor_term = 0.0;
  std::size_t gaussian_count = 0;
};

/// One optimisation step: render the start view and a sampled view, build E_pred,
/// compare with the event target, backpropagate through both renders and apply Adam.
/// Throws RuntimeFailure on a non-finite loss.
StepReport train_step(TrainState& state, const PreparedDataset& data, const TrainConfig& cfg);

/// Clone/split Gaussians with a high mean 2D gradient, prune transparent ones,
/// keep optimizer buffers aligned and reset the statistics.
void densify_and_prune(TrainState& state, const TrainConfig& cfg);

/// Caps every activated opacity at `cap` and clears the opacity moments.
void reset_opacity(TrainState& state, double cap = 0.01);

struct TrainResult {
  GaussianScene scene;
  std::vector<StepReport> curve;
};

struct TrainOutput {
  std::optional<std::filesystem::path> checkpoint_dir;  // checkpoints + loss.csv when set
  std::function<void(const StepReport&)> on_step;
};

TrainResult train(const Dataset& dataset, const TrainConfig& cfg, const TrainOutput& output = {});

}  // namespace evsplat
