#include "sswe/cli.hpp"

#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sswe/checkpoint.hpp"
#include "sswe/config.hpp"
#include "sswe/dataio.hpp"
#include "sswe/eval.hpp"
#include "sswe/phantom.hpp"
#include "sswe/train.hpp"
#include "sswe/tsne.hpp"

namespace sswe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path output_root() {
  const char* root = std::getenv(kOutputRootEnv);
  return root && *root ? fs::path(root) : fs::path("runs");
}

fs::path resolve_out(const std::string& out, const std::string& fallback) {
  if (out.empty()) return output_root() / fallback;
  const fs::path p(out);
  const char* root = std::getenv(kOutputRootEnv);
  return p.is_relative() && root && *root ? fs::path(root) / p : p;
}

// Output directory built under a hidden sibling and renamed into place on
// success, so a failed run never leaves a partial directory behind.
class StagedDir {
 public:
  explicit StagedDir(fs::path target) : target_(std::move(target)) {
    if (fs::exists(target_)) throw UsageError("output directory " + target_.string() + " already exists");
    const fs::path parent = target_.has_parent_path() ? target_.parent_path() : fs::path(".");
    fs::create_directories(parent);
    staging_ = parent / ("." + target_.filename().string() + ".tmp-" + std::to_string(::getpid()));
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;
  ~StagedDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }

  const fs::path& path() const { return staging_; }
  const fs::path& target() const { return target_; }

  void commit() {
    if (fs::exists(target_)) throw UsageError("output directory " + target_.string() + " appeared during the run");
    fs::rename(staging_, target_);
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path staging_;
  bool committed_ = false;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
  if (!text.empty() && text.back() != '\n') os << '\n';
  if (!os) throw DataError("short write to " + path.string());
}

RunConfig base_config(const std::string& path) { return path.empty() ? RunConfig{} : load_run_config(path); }

void check_dataset(std::span<const Sample> samples, const NetConfig& net, const std::string& what) {
  if (samples.empty()) throw DataError(what + " has no samples");
  for (const auto& s : samples) {
    if (s.bmode.shape() != net.image_shape()) {
      throw DataError(what + ": sample " + s.patient_id + "/" + s.plane_id + " is " + to_string(s.bmode.shape()) +
                      ", network expects " + to_string(net.image_shape()));
    }
  }
}

// ---------------------------------------------------------------------------

struct PhantomArgs {
  std::string config, out, profile;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

int cmd_phantom(const PhantomArgs& a, std::ostream& out) {
  if (a.count < 1) throw UsageError("--count must be at least 1");
  RunConfig rc = base_config(a.config);
  if (!a.profile.empty()) {
    const PhantomConfig from_file = rc.phantom;
    rc.phantom = PhantomConfig::defaults(profile_from_string(a.profile));
    rc.phantom.seed = from_file.seed;
  }
  if (a.seed_opt->count() > 0) rc.phantom.seed = a.seed;
  try {
    rc.phantom.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  StagedDir dir(resolve_out(a.out, "phantom-" + std::to_string(rc.phantom.seed)));
  const auto samples = generate_samples(rc.phantom, a.count);
  save_dataset(dir.path(), samples);
  write_text(dir.path() / "config.json", to_json(rc));
  dir.commit();
  out << "wrote " << samples.size() << " samples to " << dir.target().string() << '\n';
  return kExitOk;
}

struct SplitArgs {
  std::string data, out;
  std::size_t train = 0, test = 0;
  std::uint64_t seed = 0;
};

int cmd_split(const SplitArgs& a, std::ostream& out) {
  const auto samples = load_dataset(a.data);
  const PatientSplit split = split_by_patient(samples, a.train, a.test, a.seed);
  StagedDir dir(resolve_out(a.out, "split-" + std::to_string(a.seed)));
  save_dataset(dir.path() / "train", select(samples, split.train));
  save_dataset(dir.path() / "test", select(samples, split.test));
  const json j = {{"seed", a.seed},
                  {"train_patients", split.train_patients},
                  {"test_patients", split.test_patients},
                  {"train_samples", split.train.size()},
                  {"test_samples", split.test.size()}};
  write_text(dir.path() / "split.json", j.dump(2));
  dir.commit();
  out << "train: " << split.train.size() << " samples from " << split.train_patients.size() << " patients\n"
      << "test: " << split.test.size() << " samples from " << split.test_patients.size() << " patients\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data, config, out, resume;
  std::uint64_t seed = 0;
  int epochs = 0, blocks = 0, checkpoint_every = 100;
  std::size_t batch_size = 0;
  double dropout = 0.0, augment_fraction = 0.0;
  CLI::Option *seed_opt = nullptr, *epochs_opt = nullptr, *blocks_opt = nullptr, *batch_opt = nullptr,
              *dropout_opt = nullptr, *augment_opt = nullptr;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig rc = base_config(a.config);
  UNetParams<float> params;
  TrainState state;
  if (!a.resume.empty()) {
    Checkpoint ck = load_checkpoint(a.resume);
    if (!ck.state) throw DataError("checkpoint " + a.resume + " has no training state to resume from");
    params = std::move(ck.params);
    rc.net = params.config;
    rc.train = ck.train;
    state = std::move(*ck.state);
  }
  if (a.seed_opt->count() > 0) {
    if (!a.resume.empty() && a.seed != rc.train.seed) throw UsageError("--seed differs from the resumed run's seed");
    rc.train.seed = a.seed;
  }
  if (a.epochs_opt->count() > 0) rc.train.epochs = a.epochs;
  if (a.batch_opt->count() > 0) rc.train.batch_size = a.batch_size;
  if (a.dropout_opt->count() > 0) rc.train.dropout = a.dropout;
  if (a.augment_opt->count() > 0) rc.train.augment_fraction = a.augment_fraction;
  if (a.blocks_opt->count() > 0) {
    if (!a.resume.empty() && a.blocks != rc.net.encoder_blocks) throw UsageError("--blocks cannot change on resume");
    rc.net.encoder_blocks = a.blocks;
  }
  rc.net.dropout = rc.train.dropout;
  try {
    rc.net.validate();
    rc.train.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (a.resume.empty()) {
    Rng init(rc.train.seed);
    params = build<float>(rc.net, init);
    state = TrainState::fresh(rc.train);
  }
  const auto samples = load_dataset(a.data);
  check_dataset(samples, rc.net, "training set");

  StagedDir dir(resolve_out(a.out, "train-" + std::to_string(rc.train.seed)));
  write_text(dir.path() / "config.json", to_json(rc));
  std::ofstream log(dir.path() / "train.log");
  if (!log) throw DataError("cannot write train.log");
  log << std::setprecision(9);
  out << std::setprecision(6);
  while (state.epoch < rc.train.epochs) {
    train_epoch(samples, params, rc.train, state);
    const EpochRecord& r = state.history.back();
    log << "epoch " << r.epoch << " loss " << r.loss << " lr " << r.lr << " seconds " << r.seconds << '\n';
    out << "epoch " << r.epoch << '/' << rc.train.epochs << " loss " << r.loss << " lr " << r.lr << std::endl;
    if (a.checkpoint_every > 0 && r.epoch % a.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch-%06d", r.epoch);
      save_checkpoint(dir.path() / "checkpoints" / name, params, rc.train, &state);
    }
  }
  log.close();
  save_checkpoint(dir.path() / "model", params, rc.train, &state);

  json summary;
  summary["config"] = json::parse(to_json(rc));
  summary["parameters"] = param_count(params);
  summary["epochs"] = state.epoch;
  summary["loss"] = json::array();
  summary["lr"] = json::array();
  for (const auto& r : state.history) {
    summary["loss"].push_back(r.loss);
    summary["lr"].push_back(r.lr);
  }
  summary["final_loss"] = state.history.empty() ? json(nullptr) : json(state.history.back().loss);
  write_text(dir.path() / "summary.json", summary.dump(2));
  dir.commit();
  out << "model written to " << (dir.target() / "model").string() << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string data, model, out;
  double threshold = 0.75;
  bool no_maps = false;
  CLI::Option* threshold_opt = nullptr;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.model);
  const double threshold = a.threshold_opt->count() > 0 ? a.threshold : ck.train.confidence_threshold;
  const auto samples = load_dataset(a.data);
  check_dataset(samples, ck.params.config, "evaluation set");
  StagedDir dir(resolve_out(a.out, "eval"));
  const auto preds = predict(ck.params, samples);
  std::vector<MetricsRow> rows;
  if (!a.no_maps) fs::create_directories(dir.path() / "maps");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    const Tensorf mask = confidence_mask(s.confidence, threshold);
    rows.push_back({s.patient_id, s.plane_id, metrics(preds[i], s.elasticity, mask, s.profile)});
    if (!a.no_maps) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "%05zu", i);
      export_image(preds[i], ImageKind::elasticity, dir.path() / "maps" / (std::string(stem) + "_sswe.ppm"));
      export_image(difference_map(preds[i], s.elasticity, mask), ImageKind::signed_difference,
                   dir.path() / "maps" / (std::string(stem) + "_difference.ppm"));
    }
  }
  const MetricsReport report = aggregate_per_patient(std::move(rows), unit_label(samples.front().profile));
  std::ostringstream text;
  write_report_text(text, report);
  write_text(dir.path() / "report.txt", text.str());
  write_text(dir.path() / "report.json", report_json(report));
  dir.commit();
  out << std::fixed << std::setprecision(4) << "RMSE " << report.rmse.mean << " +- " << report.rmse.std << " MAE "
      << report.mae.mean << " +- " << report.mae.std << " ME " << report.me.mean << " +- " << report.me.std << ' '
      << report.unit << " over " << report.patients.size() << " patients\n";
  return kExitOk;
}

struct InferArgs {
  std::string image, model, out;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.model);
  int maxval = 0;
  const Tensorf raw = read_pgm(a.image, &maxval);
  const Tensorf gray = raw * (1.0f / static_cast<float>(maxval));
  const NetConfig& net = ck.params.config;
  const Tensorf input = regrid_bilinear(gray, net.height, net.width);
  Rng unused(0);
  const Tensorf pred = forward(ck.params, input, Mode::infer, unused);
  StagedDir dir(resolve_out(a.out, "infer"));
  write_raster(dir.path() / "sswe.f32", pred);
  export_image(pred, ImageKind::elasticity, dir.path() / "sswe.ppm");
  export_image(input, ImageKind::gray, dir.path() / "input.pgm");
  const json j = {{"source", a.image},
                  {"source_height", raw.dim(1)},
                  {"source_width", raw.dim(2)},
                  {"height", net.height},
                  {"width", net.width},
                  {"raster", "sswe.f32"},
                  {"mean_normalized", mean(pred)}};
  write_text(dir.path() / "infer.json", j.dump(2));
  dir.commit();
  out << "sSWE map " << net.height << 'x' << net.width << " written to " << dir.target().string() << '\n';
  return kExitOk;
}

struct GridArgs {
  std::string train, val, config, out;
  std::uint64_t seed = 0;
  double epoch_scale = 1.0;
  std::vector<std::size_t> batch_sizes;
  std::vector<int> blocks, epochs;
  CLI::Option* seed_opt = nullptr;
};

int cmd_gridsearch(const GridArgs& a, std::ostream& out) {
  RunConfig rc = base_config(a.config);
  if (a.seed_opt->count() > 0) rc.train.seed = a.seed;
  GridSpec spec;
  spec.epoch_scale = a.epoch_scale;
  if (!a.batch_sizes.empty()) spec.batch_sizes = a.batch_sizes;
  if (!a.blocks.empty()) spec.encoder_blocks = a.blocks;
  if (!a.epochs.empty()) spec.epochs = a.epochs;
  if (!(spec.epoch_scale > 0.0)) throw UsageError("--epoch-scale must be positive");
  const auto train = load_dataset(a.train);
  const auto val = load_dataset(a.val);
  check_dataset(train, rc.net, "training set");
  check_dataset(val, rc.net, "validation set");
  StagedDir dir(resolve_out(a.out, "gridsearch-" + std::to_string(rc.train.seed)));
  write_text(dir.path() / "config.json", to_json(rc));
  std::ostringstream table;
  table << std::setprecision(9) << "batch_size\tencoder_blocks\tepochs\tepochs_run\ttrain_loss\tvalidation_loss\n";
  out << std::setprecision(6);
  const GridResult result = grid_search(train, val, rc.train, rc.net, spec, [&](const GridRow& r) {
    table << r.batch_size << '\t' << r.encoder_blocks << '\t' << r.epochs_nominal << '\t' << r.epochs_run << '\t'
          << r.train_loss << '\t' << r.validation_loss << '\n';
    out << "batch " << r.batch_size << " blocks " << r.encoder_blocks << " epochs " << r.epochs_nominal << " ("
        << r.epochs_run << " run) validation " << r.validation_loss << '\n';
  });
  write_text(dir.path() / "grid.tsv", table.str());
  const GridRow& best = result.rows[result.best];
  const json j = {{"batch_size", best.batch_size},
                  {"encoder_blocks", best.encoder_blocks},
                  {"epochs", best.epochs_nominal},
                  {"epochs_run", best.epochs_run},
                  {"validation_loss", best.validation_loss},
                  {"cells", result.rows.size()}};
  write_text(dir.path() / "best.json", j.dump(2));
  dir.commit();
  out << "best: batch " << best.batch_size << " blocks " << best.encoder_blocks << " epochs " << best.epochs_nominal
      << '\n';
  return kExitOk;
}

struct EmbedArgs {
  std::vector<std::string> data, labels;
  std::string model, config, out;
  std::uint64_t seed = 0;
  double perplexity = 0.0;
  int iterations = 0;
  CLI::Option *seed_opt = nullptr, *perplexity_opt = nullptr, *iterations_opt = nullptr;
};

int cmd_embed(const EmbedArgs& a, std::ostream& out) {
  if (!a.labels.empty() && a.labels.size() != a.data.size()) {
    throw UsageError("--label must be given once per --data or not at all");
  }
  RunConfig rc = base_config(a.config);
  if (a.seed_opt->count() > 0) rc.embedding.seed = a.seed;
  if (a.perplexity_opt->count() > 0) rc.embedding.perplexity = a.perplexity;
  if (a.iterations_opt->count() > 0) rc.embedding.iterations = a.iterations;
  const Checkpoint ck = load_checkpoint(a.model);
  std::vector<Sample> samples;
  std::vector<std::string> ids, domains;
  for (std::size_t k = 0; k < a.data.size(); ++k) {
    const std::string label = a.labels.empty() ? fs::path(a.data[k]).filename().string() : a.labels[k];
    for (auto& s : load_dataset(a.data[k])) {
      ids.push_back(s.patient_id + "/" + s.plane_id);
      domains.push_back(label);
      samples.push_back(std::move(s));
    }
  }
  check_dataset(samples, ck.params.config, "embedding input");
  try {
    rc.embedding.validate(static_cast<Index>(samples.size()));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const Embedding e = embed(latent_features(ck.params, samples), rc.embedding);
  StagedDir dir(resolve_out(a.out, "embed-" + std::to_string(rc.embedding.seed)));
  write_embedding_csv(dir.path() / "embedding.csv", ids, domains, e.coords);
  write_scatter(dir.path() / "embedding.ppm", domains, e.coords);
  const json j = {{"config", json::parse(to_json(rc))["embedding"]},
                  {"points", samples.size()},
                  {"final_kl", e.kl.empty() ? 0.0 : e.kl.back()}};
  write_text(dir.path() / "embedding.json", j.dump(2));
  dir.commit();
  out << "embedded " << samples.size() << " images into " << dir.target().string() << '\n';
  return kExitOk;
}

struct ExportArgs {
  std::string data, out;
};

int cmd_export(const ExportArgs& a, std::ostream& out) {
  const auto samples = load_dataset(a.data);
  StagedDir dir(resolve_out(a.out, "export"));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "%05zu", i);
    const fs::path base = dir.path() / stem;
    export_image(samples[i].bmode, ImageKind::gray, base.string() + "_bmode.pgm");
    export_image(samples[i].elasticity, ImageKind::elasticity, base.string() + "_elasticity.ppm");
    export_image(samples[i].confidence, ImageKind::gray, base.string() + "_confidence.pgm");
  }
  dir.commit();
  out << "exported " << samples.size() << " samples to " << dir.target().string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthetic shear-wave elastography from B-mode images", "sswe"};
  app.require_subcommand(1);

  PhantomArgs ph;
  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic B-mode/elasticity dataset");
  phantom->add_option("--config", ph.config, "Run config JSON");
  phantom->add_option("--count", ph.count, "Number of samples")->required();
  phantom->add_option("--out", ph.out, "Output dataset directory");
  ph.seed_opt = phantom->add_option("--seed", ph.seed, "Random seed");
  phantom->add_option("--profile", ph.profile, "prostate or thyroid (resets phantom ranges to that profile)");

  SplitArgs sp;
  auto* split = app.add_subcommand("split", "Split a dataset by patient into train/ and test/");
  split->add_option("--data", sp.data, "Dataset directory")->required();
  split->add_option("--train", sp.train, "Training patients")->required();
  split->add_option("--test", sp.test, "Test patients")->required();
  split->add_option("--seed", sp.seed, "Random seed");
  split->add_option("--out", sp.out, "Output directory");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train the network");
  train->add_option("--data", tr.data, "Training dataset directory")->required();
  train->add_option("--config", tr.config, "Run config JSON");
  train->add_option("--out", tr.out, "Run directory");
  tr.seed_opt = train->add_option("--seed", tr.seed, "Random seed");
  train->add_option("--resume", tr.resume, "Checkpoint directory to continue from");
  tr.epochs_opt = train->add_option("--epochs", tr.epochs, "Total epochs");
  tr.batch_opt = train->add_option("--batch-size", tr.batch_size, "Batch size");
  tr.blocks_opt = train->add_option("--blocks", tr.blocks, "Encoder blocks");
  tr.dropout_opt = train->add_option("--dropout", tr.dropout, "Dropout rate");
  tr.augment_opt = train->add_option("--augment-fraction", tr.augment_fraction, "Fraction of samples augmented");
  train->add_option("--checkpoint-every", tr.checkpoint_every, "Epochs between checkpoints (0 disables)");

  EvalArgs ev;
  auto* evaluate_cmd = app.add_subcommand("eval", "Evaluate a model on a dataset");
  evaluate_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  evaluate_cmd->add_option("--model", ev.model, "Checkpoint directory")->required();
  evaluate_cmd->add_option("--out", ev.out, "Report directory");
  ev.threshold_opt = evaluate_cmd->add_option("--threshold", ev.threshold, "Confidence threshold");
  evaluate_cmd->add_flag("--no-maps", ev.no_maps, "Skip per-image map export");

  InferArgs in;
  auto* infer = app.add_subcommand("infer", "Predict an sSWE map for one B-mode PGM image");
  infer->add_option("--image", in.image, "Gray PGM image of any size")->required();
  infer->add_option("--model", in.model, "Checkpoint directory")->required();
  infer->add_option("--out", in.out, "Output directory");

  GridArgs gr;
  auto* grid = app.add_subcommand("gridsearch", "Search batch size, depth and epochs");
  grid->add_option("--train", gr.train, "Training dataset directory")->required();
  grid->add_option("--val", gr.val, "Validation dataset directory")->required();
  grid->add_option("--config", gr.config, "Run config JSON");
  grid->add_option("--out", gr.out, "Output directory");
  gr.seed_opt = grid->add_option("--seed", gr.seed, "Random seed");
  grid->add_option("--epoch-scale", gr.epoch_scale, "Multiplier applied to every epoch count");
  grid->add_option("--batch-sizes", gr.batch_sizes, "Batch sizes to try");
  grid->add_option("--blocks", gr.blocks, "Encoder depths to try");
  grid->add_option("--epochs", gr.epochs, "Epoch counts to try");

  EmbedArgs em;
  auto* embed_cmd = app.add_subcommand("embed", "t-SNE of latent features from one or more datasets");
  embed_cmd->add_option("--data", em.data, "Dataset directory (repeat for several domains)")->required();
  embed_cmd->add_option("--label", em.labels, "Domain label per --data");
  embed_cmd->add_option("--model", em.model, "Checkpoint directory")->required();
  embed_cmd->add_option("--config", em.config, "Run config JSON");
  embed_cmd->add_option("--out", em.out, "Output directory");
  em.seed_opt = embed_cmd->add_option("--seed", em.seed, "Random seed");
  em.perplexity_opt = embed_cmd->add_option("--perplexity", em.perplexity, "Perplexity");
  em.iterations_opt = embed_cmd->add_option("--iterations", em.iterations, "Iterations");

  ExportArgs ex;
  auto* export_cmd = app.add_subcommand("export", "Write dataset rasters as PGM/PPM images");
  export_cmd->add_option("--data", ex.data, "Dataset directory")->required();
  export_cmd->add_option("--out", ex.out, "Output directory");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (phantom->parsed()) return cmd_phantom(ph, out);
    if (split->parsed()) return cmd_split(sp, out);
    if (train->parsed()) return cmd_train(tr, out);
    if (evaluate_cmd->parsed()) return cmd_eval(ev, out);
    if (infer->parsed()) return cmd_infer(in, out);
    if (grid->parsed()) return cmd_gridsearch(gr, out);
    if (embed_cmd->parsed()) return cmd_embed(em, out);
    if (export_cmd->parsed()) return cmd_export(ex, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ShapeError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace sswe
