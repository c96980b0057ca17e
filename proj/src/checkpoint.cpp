#include "sswe/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "sswe/config.hpp"
#include "sswe/dataio.hpp"

namespace sswe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kCheckpointVersion = 1;

json tensor_entry(const fs::path& dir, const std::string& file, const Tensorf& t) {
  write_raster(dir / file, t);
  return {{"file", file}, {"shape", t.shape()}};
}

Tensorf read_entry(const fs::path& dir, const json& entry) {
  return read_raster(dir / entry.at("file").get<std::string>(), entry.at("shape").get<Shape>());
}

}  // namespace

void save_checkpoint(const fs::path& dir, const UNetParams<float>& params, const TrainConfig& train,
                     const TrainState* state) {
  fs::create_directories(dir / "tensors");
  json j;
  j["format"] = "sswe-checkpoint";
  j["format_version"] = kCheckpointVersion;
  j["net"] = json::parse(to_json(params.config));
  j["train"] = json::parse(to_json(train));
  j["seed"] = train.seed;
  j["epoch"] = state ? state->epoch : 0;
  j["layers"] = json::array();
  for (const auto& l : params.layers) {
    j["layers"].push_back({{"name", l.name},
                           {"weights", tensor_entry(dir, "tensors/" + l.name + ".weights.f32", l.weights)},
                           {"bias", tensor_entry(dir, "tensors/" + l.name + ".bias.f32", l.bias)}});
  }
  if (state) {
    json s;
    s["adam"] = {{"step", state->adam.step}, {"lr", state->adam.lr}};
    s["adam"]["m"] = json::array();
    s["adam"]["v"] = json::array();
    for (std::size_t k = 0; k < state->adam.m.size(); ++k) {
      const std::string stem = "tensors/adam." + std::to_string(k);
      s["adam"]["m"].push_back(tensor_entry(dir, stem + ".m.f32", state->adam.m[k]));
      s["adam"]["v"].push_back(tensor_entry(dir, stem + ".v.f32", state->adam.v[k]));
    }
    const PlateauScheduler& p = state->scheduler;
    s["scheduler"] = {{"lr", p.lr},       {"best", std::isfinite(p.best) ? json(p.best) : json(nullptr)},
                      {"wait", p.wait},   {"patience", p.patience},
                      {"factor", p.factor}, {"min_lr", p.min_lr},
                      {"threshold", p.threshold}};
    s["history"] = json::array();
    for (const auto& h : state->history) s["history"].push_back({{"epoch", h.epoch}, {"loss", h.loss}, {"lr", h.lr}});
    j["state"] = std::move(s);
  }
  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  if (!os) throw DataError("cannot write checkpoint manifest in " + dir.string());
  os << j.dump(2) << '\n';
  if (!os) throw DataError("short write to " + (dir / "manifest.json").string());
}

Checkpoint load_checkpoint(const fs::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw DataError("missing model: no manifest.json in " + dir.string());
  Checkpoint c;
  try {
    const json j = json::parse(is);
    if (j.value("format", "") != "sswe-checkpoint") throw DataError("not a checkpoint: " + dir.string());
    if (j.at("format_version").get<int>() != kCheckpointVersion) throw DataError("unsupported checkpoint version");
    c.params.config = parse_net_config(j.at("net").dump());
    c.train = parse_train_config(j.at("train").dump());
    c.params.config.validate();
    const auto specs = layer_specs(c.params.config);
    const json& layers = j.at("layers");
    if (layers.size() != specs.size()) {
      throw DataError("checkpoint has " + std::to_string(layers.size()) + " layers, config implies " +
                      std::to_string(specs.size()));
    }
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const json& l = layers[i];
      Layer<float> layer{l.at("name").get<std::string>(), read_entry(dir, l.at("weights")), read_entry(dir, l.at("bias"))};
      const Shape w{specs[i].out_channels, specs[i].in_channels, 3, 3}, b{specs[i].out_channels};
      if (layer.name != specs[i].name || layer.weights.shape() != w || layer.bias.shape() != b) {
        throw DataError("checkpoint layer " + layer.name + " does not match " + specs[i].name + " " + to_string(w));
      }
      c.params.layers.push_back(std::move(layer));
    }
    if (j.contains("state")) {
      const json& s = j.at("state");
      TrainState st;
      st.epoch = j.at("epoch").get<int>();
      st.adam.step = s.at("adam").at("step").get<std::int64_t>();
      st.adam.lr = s.at("adam").at("lr").get<double>();
      for (const auto& e : s.at("adam").at("m")) st.adam.m.push_back(read_entry(dir, e));
      for (const auto& e : s.at("adam").at("v")) st.adam.v.push_back(read_entry(dir, e));
      const json& p = s.at("scheduler");
      st.scheduler.lr = p.at("lr").get<double>();
      st.scheduler.best = p.at("best").is_null() ? std::numeric_limits<double>::infinity() : p.at("best").get<double>();
      st.scheduler.wait = p.at("wait").get<int>();
      st.scheduler.patience = p.at("patience").get<int>();
      st.scheduler.factor = p.at("factor").get<double>();
      st.scheduler.min_lr = p.at("min_lr").get<double>();
      st.scheduler.threshold = p.at("threshold").get<double>();
      for (const auto& h : s.at("history")) {
        st.history.push_back({h.at("epoch").get<int>(), h.at("loss").get<double>(), h.at("lr").get<double>(), 0.0});
      }
      c.state = std::move(st);
    }
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint " + dir.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError("malformed checkpoint " + dir.string() + ": " + e.what());
  }
  return c;
}

}  // namespace sswe
