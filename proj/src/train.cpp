#include "sswe/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

namespace sswe {

namespace {

// Stream tags; every random draw in training is keyed by (seed, tag, epoch, index).
constexpr std::uint64_t kShuffleStream = 0x5348;
constexpr std::uint64_t kAugmentStream = 0x4147;
constexpr std::uint64_t kDropoutStream = 0x4450;

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
  if (!(augment_fraction >= 0.0 && augment_fraction <= 1.0)) {
    throw std::invalid_argument("TrainConfig: augment_fraction must be in [0,1]");
  }
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) {
    throw std::invalid_argument("TrainConfig: plateau_factor must be in (0,1)");
  }
  if (plateau_patience < 1) throw std::invalid_argument("TrainConfig: plateau_patience must be >= 1");
  if (!(initial_lr > 0.0) || !(min_lr >= 0.0)) throw std::invalid_argument("TrainConfig: learning rates must be positive");
  if (!(confidence_threshold >= 0.0 && confidence_threshold < 1.0)) {
    throw std::invalid_argument("TrainConfig: confidence_threshold must be in [0,1)");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("TrainConfig: dropout must be in [0,1)");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 && adam_epsilon > 0.0)) {
    throw std::invalid_argument("TrainConfig: invalid Adam hyperparameters");
  }
}

double plateau_lr(std::span<const double> history, const TrainConfig& config) {
  PlateauScheduler s = PlateauScheduler::from(config);
  for (double loss : history) s.observe(loss);
  return s.lr;
}

TrainState TrainState::fresh(const TrainConfig& config) {
  TrainState s;
  s.scheduler = PlateauScheduler::from(config);
  s.adam.lr = config.initial_lr;
  return s;
}

Tensorf stack(std::span<const Tensorf* const> images) {
  if (images.empty()) throw ShapeError("stack: no images");
  const Shape& s = images.front()->shape();
  Shape out_shape{static_cast<Index>(images.size())};
  out_shape.insert(out_shape.end(), s.begin(), s.end());
  Tensorf out(out_shape);
  const Index n = images.front()->size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i]->shape() != s) throw ShapeError("stack: images differ in shape");
    std::copy(images[i]->data(), images[i]->data() + n, out.data() + static_cast<Index>(i) * n);
  }
  return out;
}

double train_epoch(std::span<const Sample> dataset, UNetParams<float>& params, const TrainConfig& config,
                   TrainState& state) {
  if (dataset.empty()) throw DataError("train_epoch: empty dataset");
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const int epoch = state.epoch + 1;

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle = Rng(config.seed, kShuffleStream).derive(static_cast<std::uint64_t>(epoch));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

  UNetParams<float> net = params;
  net.config.dropout = config.dropout;
  AdamOptions opt{config.adam_beta1, config.adam_beta2, config.adam_epsilon};
  state.adam.lr = state.scheduler.lr;

  double loss_sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
    const std::size_t end = std::min(order.size(), begin + config.batch_size);
    std::vector<Sample> batch;
    batch.reserve(end - begin);
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t idx = order[k];
      Sample s = dataset[idx];
      s.confidence = confidence_mask(s.confidence, config.confidence_threshold);
      Rng aug = Rng(config.seed, kAugmentStream).derive(static_cast<std::uint64_t>(epoch), idx);
      if (aug.uniform01<double>() < config.augment_fraction) s = augment(s, sample_augment_params(aug));
      batch.push_back(std::move(s));
    }
    std::vector<const Tensorf*> xs, ys, ms;
    for (const auto& s : batch) {
      xs.push_back(&s.bmode);
      ys.push_back(&s.elasticity);
      ms.push_back(&s.confidence);
    }

    Graph<float> g;
    Rng drop = Rng(config.seed, kDropoutStream).derive(static_cast<std::uint64_t>(epoch), batches);
    const UNetTrace t = trace(g, net, g.constant(stack(xs)), Mode::train, drop);
    const Var loss = masked_rmse(g, t.output, stack(ys), stack(ms));
    g.backward(loss);

    std::vector<Tensorf*> p;
    std::vector<const Tensorf*> grads;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      p.push_back(&net.layers[l].weights);
      grads.push_back(&g.grad(t.weights[l]));
      p.push_back(&net.layers[l].bias);
      grads.push_back(&g.grad(t.biases[l]));
    }
    adam_step<float>(p, grads, state.adam, opt);
    loss_sum += g.value(loss)[0];
    ++batches;
  }

  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    params.layers[l].weights = std::move(net.layers[l].weights);
    params.layers[l].bias = std::move(net.layers[l].bias);
  }
  const double epoch_loss = loss_sum / static_cast<double>(batches);
  if (!std::isfinite(epoch_loss)) throw NumericError("train_epoch: non-finite epoch loss");
  const double used_lr = state.adam.lr;
  state.scheduler.observe(epoch_loss);
  state.epoch = epoch;
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  state.history.push_back({epoch, epoch_loss, used_lr, seconds});
  return epoch_loss;
}

double evaluate_loss(const UNetParams<float>& params, std::span<const Sample> dataset, double confidence_threshold,
                     std::size_t batch_size) {
  if (dataset.empty()) throw DataError("evaluate_loss: empty dataset");
  double squared = 0.0, count = 0.0;
  Rng unused(0);
  for (std::size_t begin = 0; begin < dataset.size(); begin += batch_size) {
    const std::size_t end = std::min(dataset.size(), begin + batch_size);
    std::vector<const Tensorf*> xs;
    for (std::size_t k = begin; k < end; ++k) xs.push_back(&dataset[k].bmode);
    const Tensorf pred = forward(params, stack(xs), Mode::infer, unused);
    const Index n = dataset[begin].bmode.size();
    for (std::size_t k = begin; k < end; ++k) {
      const Sample& s = dataset[k];
      const float* p = pred.data() + static_cast<Index>(k - begin) * n;
      for (Index i = 0; i < n; ++i) {
        if (!(s.confidence[i] > confidence_threshold)) continue;
        const double d = static_cast<double>(s.elasticity[i]) - p[i];
        squared += d * d;
        count += 1.0;
      }
    }
  }
  if (count == 0.0) throw DataError("evaluate_loss: no valid pixels");
  return std::sqrt(squared / count);
}

GridResult grid_search(std::span<const Sample> train, std::span<const Sample> validation, const TrainConfig& base_train,
                       const NetConfig& base_net, const GridSpec& spec,
                       const std::function<void(const GridRow&)>& on_row) {
  if (train.empty() || validation.empty()) throw DataError("grid_search: empty train or validation set");
  std::set<std::string> train_patients;
  for (const auto& s : train) train_patients.insert(s.patient_id);
  for (const auto& s : validation) {
    if (train_patients.contains(s.patient_id)) {
      throw DataError("grid_search: patient " + s.patient_id + " is in both train and validation sets");
    }
  }
  std::vector<int> epochs = spec.epochs;
  std::sort(epochs.begin(), epochs.end());

  GridResult result;
  for (std::size_t batch : spec.batch_sizes) {
    for (int blocks : spec.encoder_blocks) {
      TrainConfig tc = base_train;
      tc.batch_size = batch;
      NetConfig nc = base_net;
      nc.encoder_blocks = blocks;
      Rng init(tc.seed);
      UNetParams<float> params = build<float>(nc, init);
      TrainState state = TrainState::fresh(tc);
      // Every draw is keyed by epoch, so the first k epochs of a longer run are
      // exactly a k-epoch run; cells sharing (batch, depth) extend one trajectory.
      for (int nominal : epochs) {
        const int target = std::max(1, static_cast<int>(std::lround(nominal * spec.epoch_scale)));
        double last = 0.0;
        while (state.epoch < target) last = train_epoch(train, params, tc, state);
        if (!state.history.empty()) last = state.history.back().loss;
        GridRow row{batch, blocks, nominal, target, last,
                    evaluate_loss(params, validation, tc.confidence_threshold)};
        if (on_row) on_row(row);
        result.rows.push_back(row);
      }
    }
  }
  for (std::size_t i = 1; i < result.rows.size(); ++i) {
    if (result.rows[i].validation_loss < result.rows[result.best].validation_loss) result.best = i;
  }
  const GridRow& best = result.rows[result.best];
  result.best_train = base_train;
  result.best_train.batch_size = best.batch_size;
  result.best_train.epochs = best.epochs_nominal;
  result.best_net = base_net;
  result.best_net.encoder_blocks = best.encoder_blocks;
  return result;
}

}  // namespace sswe
