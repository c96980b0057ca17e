#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "sswe/autodiff.hpp"
#include "sswe/dataio.hpp"
#include "sswe/unet.hpp"

namespace sswe {

struct TrainConfig {
  std::size_t batch_size = 64;
  int epochs = 2100;
  double augment_fraction = 0.9;
  double confidence_threshold = 0.75;
  double initial_lr = 1e-3;
  int plateau_patience = 10;
  double plateau_factor = 0.5;
  double min_lr = 1e-6;
  double plateau_threshold = 1e-6;  // absolute improvement that resets patience
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double dropout = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Loss

/// sqrt(sum(mask * (label - pred)^2) / sum(mask)), pooled over every pixel of
/// the batch. Masked-out pixels are never read, so their label and prediction
/// values cannot influence the loss or its gradient.
template <typename Scalar>
Var masked_rmse(Graph<Scalar>& g, Var pred, const Tensor<Scalar>& label, const Tensor<Scalar>& mask) {
  const Tensor<Scalar>& p = g.value(pred);
  if (!p.same_shape(label) || !p.same_shape(mask)) {
    throw ShapeError("masked_rmse: shapes " + to_string(p.shape()) + ", " + to_string(label.shape()) + ", " +
                     to_string(mask.shape()) + " differ");
  }
  auto valid = std::make_shared<std::vector<Index>>();
  double squared = 0.0;
  for (Index i = 0; i < mask.size(); ++i) {
    if (mask[i] == Scalar(0)) continue;
    if (mask[i] != Scalar(1)) throw DataError("masked_rmse: mask must be binary");
    const double d = static_cast<double>(label[i]) - static_cast<double>(p[i]);
    squared += d * d;
    valid->push_back(i);
  }
  if (valid->empty()) throw DataError("masked_rmse: batch has no valid pixels");
  const auto count = static_cast<double>(valid->size());
  const double loss = std::sqrt(squared / count);
  if (!std::isfinite(loss)) throw NumericError("masked_rmse: non-finite loss");
  auto target = std::make_shared<Tensor<Scalar>>(label);
  return g.record("masked_rmse", {pred}, Tensor<Scalar>({1}, {static_cast<Scalar>(loss)}),
                  [pred, valid, target, loss, count](Graph<Scalar>& g, const Tensor<Scalar>& gout) {
                    Tensor<Scalar> grad(g.value(pred).shape());
                    if (loss > 0.0) {
                      const double scale = static_cast<double>(gout[0]) / (count * loss);
                      const Tensor<Scalar>& p = g.value(pred);
                      for (Index i : *valid) {
                        grad[i] = static_cast<Scalar>(scale * (static_cast<double>(p[i]) - (*target)[i]));
                      }
                    }
                    g.accumulate(pred, grad);
                  });
}

// ---------------------------------------------------------------------------
// Optimizer and schedule

template <typename Scalar>
struct AdamState {
  std::vector<Tensor<Scalar>> m;
  std::vector<Tensor<Scalar>> v;
  std::int64_t step = 0;
  double lr = 1e-3;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update of every tensor in `params`.
template <typename Scalar>
void adam_step(std::span<Tensor<Scalar>* const> params, std::span<const Tensor<Scalar>* const> grads,
               AdamState<Scalar>& state, const AdamOptions& opt) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: params/grads count mismatch");
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (!params[k]->same_shape(*grads[k])) throw ShapeError("adam_step: gradient shape mismatch");
    for (Scalar gv : grads[k]->values()) {
      if (!std::isfinite(static_cast<double>(gv))) throw NumericError("adam_step: non-finite gradient");
    }
  }
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<Scalar>& theta = *params[k];
    const Tensor<Scalar>& g = *grads[k];
    Tensor<Scalar>& m = state.m[k];
    Tensor<Scalar>& v = state.v[k];
    for (Index i = 0; i < theta.size(); ++i) {
      const double gi = g[i];
      const double mi = opt.beta1 * m[i] + (1.0 - opt.beta1) * gi;
      const double vi = opt.beta2 * v[i] + (1.0 - opt.beta2) * gi * gi;
      m[i] = static_cast<Scalar>(mi);
      v[i] = static_cast<Scalar>(vi);
      theta[i] = static_cast<Scalar>(theta[i] - state.lr * (mi / c1) / (std::sqrt(vi / c2) + opt.epsilon));
    }
  }
}

/// Reduce-on-plateau: after `patience` epochs without an improvement larger
/// than `threshold`, lr <- max(lr * factor, min_lr) and the counter resets.
struct PlateauScheduler {
  double lr = 1e-3;
  double best = std::numeric_limits<double>::infinity();
  int wait = 0;
  int patience = 10;
  double factor = 0.5;
  double min_lr = 1e-6;
  double threshold = 1e-6;

  static PlateauScheduler from(const TrainConfig& c) {
    return {c.initial_lr, std::numeric_limits<double>::infinity(), 0, c.plateau_patience, c.plateau_factor,
            c.min_lr, c.plateau_threshold};
  }

  /// Records one epoch loss; returns the learning rate for the next epoch.
  double observe(double loss) {
    if (loss < best - threshold) {
      best = loss;
      wait = 0;
    } else if (++wait >= patience) {
      lr = std::max(lr * factor, min_lr);
      wait = 0;
    }
    return lr;
  }
};

/// Learning rate after replaying `history` through a fresh scheduler.
double plateau_lr(std::span<const double> history, const TrainConfig& config);

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentParams {
  bool mirror = false;
  double crop_left = 0.0;  // fractions of the frame, each <= 0.05
  double crop_right = 0.0;
  double crop_top = 0.0;
  double crop_bottom = 0.0;
  double contrast = 1.0;        // [0.5, 1.5]
  double rotation_deg = 0.0;    // [-10, 10]
  double shift_lateral = 0.0;   // fraction of width, [-0.5, 0.5]
  double shift_axial = 0.0;     // fraction of height, [-0.1, 0.1]

  static constexpr double kMaxCrop = 0.05;
  static constexpr double kMaxContrastChange = 0.5;
  static constexpr double kMaxRotationDeg = 10.0;
  static constexpr double kMaxShiftLateral = 0.5;
  static constexpr double kMaxShiftAxial = 0.1;

  /// Throws std::invalid_argument when any field leaves its range.
  void validate() const;
};

/// Independent uniform draws over every range; mirror with probability 1/2.
AugmentParams sample_augment_params(Rng& rng);

/// Source position (y, x) sampled by output pixel (y, x) of an h x w frame.
std::pair<double, double> source_coordinate(const AugmentParams& p, Index h, Index w, Index y, Index x);

/// Applies mirror, rotation, shift and crop-and-resize through one coordinate
/// map to all three rasters, then contrast to the B-mode. The confidence
/// raster is treated as a binary validity mask: output pixels are valid only
/// when every bilinear source pixel is inside the frame and valid.
Sample augment(const Sample& sample, const AugmentParams& params);

// ---------------------------------------------------------------------------
// Training loop

struct EpochRecord {
  int epoch = 0;  // 1-based
  double loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainState {
  AdamState<float> adam;
  PlateauScheduler scheduler;
  int epoch = 0;  // completed epochs
  std::vector<EpochRecord> history;

  static TrainState fresh(const TrainConfig& config);
};

/// One pass over `dataset`: seeded shuffle, batches of batch_size (last one
/// short), per-sample augmentation with probability augment_fraction,
/// masked RMSE, backprop and Adam. Returns the mean batch loss and appends
/// it to state.history; the scheduler then sets the next epoch's lr.
double train_epoch(std::span<const Sample> dataset, UNetParams<float>& params, const TrainConfig& config,
                   TrainState& state);

/// Pooled masked RMSE of the network over `dataset` in infer mode.
double evaluate_loss(const UNetParams<float>& params, std::span<const Sample> dataset, double confidence_threshold,
                     std::size_t batch_size = 32);

/// Stacks per-sample [1,H,W] rasters into [N,1,H,W].
Tensorf stack(std::span<const Tensorf* const> images);

// ---------------------------------------------------------------------------
// Grid search

struct GridSpec {
  std::vector<std::size_t> batch_sizes{16, 32, 64};
  std::vector<int> encoder_blocks{2, 3, 4};
  std::vector<int> epochs{2100, 2450, 2800};
  double epoch_scale = 1.0;  // epochs actually run = round(nominal * scale), at least 1
};

struct GridRow {
  std::size_t batch_size = 0;
  int encoder_blocks = 0;
  int epochs_nominal = 0;
  int epochs_run = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct GridResult {
  std::vector<GridRow> rows;
  std::size_t best = 0;
  TrainConfig best_train;
  NetConfig best_net;
};

/// Trains every (batch size, depth, epochs) cell and picks the lowest
/// validation masked RMSE. Throws DataError if a patient is in both sets.
GridResult grid_search(std::span<const Sample> train, std::span<const Sample> validation, const TrainConfig& base_train,
                       const NetConfig& base_net, const GridSpec& spec,
                       const std::function<void(const GridRow&)>& on_row = {});

}  // namespace sswe
