#include "sswe/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace sswe {

namespace {

using nlohmann::json;

// Reads known keys from an object and rejects the rest, so a misspelt field
// in a config file fails loudly instead of silently keeping its default.
class Reader {
 public:
  Reader(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw std::invalid_argument("config: section '" + section_ + "' must be an object");
  }

  template <typename T>
  void operator()(const char* key, T& field) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      field = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument("config: " + section_ + "." + key + ": " + e.what());
    }
  }

  void range(const char* key, Range& r) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      throw std::invalid_argument("config: " + section_ + "." + key + " must be [lo, hi]");
    }
    r = {v[0].get<double>(), v[1].get<double>()};
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw std::invalid_argument("config: unknown key " + section_ + "." + key);
    }
  }

 private:
  const json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

json net_json(const NetConfig& c) {
  return {{"encoder_blocks", c.encoder_blocks}, {"channels", c.channels}, {"height", c.height},
          {"width", c.width}, {"leaky_alpha", c.leaky_alpha}, {"dropout", c.dropout},
          {"init_range", c.init_range}};
}

NetConfig read_net(const json& j) {
  NetConfig c;
  Reader r(j, "net");
  r("encoder_blocks", c.encoder_blocks);
  r("channels", c.channels);
  r("height", c.height);
  r("width", c.width);
  r("leaky_alpha", c.leaky_alpha);
  r("dropout", c.dropout);
  r("init_range", c.init_range);
  r.finish();
  return c;
}

json train_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"augment_fraction", c.augment_fraction},
          {"confidence_threshold", c.confidence_threshold},
          {"initial_lr", c.initial_lr},
          {"plateau_patience", c.plateau_patience},
          {"plateau_factor", c.plateau_factor},
          {"min_lr", c.min_lr},
          {"plateau_threshold", c.plateau_threshold},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"dropout", c.dropout},
          {"seed", c.seed}};
}

TrainConfig read_train(const json& j) {
  TrainConfig c;
  Reader r(j, "train");
  r("batch_size", c.batch_size);
  r("epochs", c.epochs);
  r("augment_fraction", c.augment_fraction);
  r("confidence_threshold", c.confidence_threshold);
  r("initial_lr", c.initial_lr);
  r("plateau_patience", c.plateau_patience);
  r("plateau_factor", c.plateau_factor);
  r("min_lr", c.min_lr);
  r("plateau_threshold", c.plateau_threshold);
  r("adam_beta1", c.adam_beta1);
  r("adam_beta2", c.adam_beta2);
  r("adam_epsilon", c.adam_epsilon);
  r("dropout", c.dropout);
  r("seed", c.seed);
  r.finish();
  return c;
}

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

json phantom_json(const PhantomConfig& c) {
  return {{"profile", to_string(c.profile)},
          {"height", c.height},
          {"width", c.width},
          {"background", range_json(c.background)},
          {"inclusions_min", c.inclusions_min},
          {"inclusions_max", c.inclusions_max},
          {"inclusion_elasticity", range_json(c.inclusion_elasticity)},
          {"inclusion_radius", range_json(c.inclusion_radius)},
          {"speckle_correlation", range_json(c.speckle_correlation)},
          {"coupling", range_json(c.coupling)},
          {"voids_min", c.voids_min},
          {"voids_max", c.voids_max},
          {"planes_per_patient", c.planes_per_patient},
          {"depth_attenuation", c.depth_attenuation},
          {"speckle_sigma", c.speckle_sigma},
          {"pixel_spacing_mm", c.pixel_spacing_mm},
          {"seed", c.seed}};
}

PhantomConfig read_phantom(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: section 'phantom' must be an object");
  // The profile picks the default ranges; explicit fields then override them.
  PhantomConfig c;
  if (j.contains("profile")) {
    try {
      c = PhantomConfig::defaults(profile_from_string(j.at("profile").get<std::string>()));
    } catch (const std::exception& e) {
      throw std::invalid_argument(std::string("config: phantom.profile: ") + e.what());
    }
  }
  std::string profile = to_string(c.profile);
  Reader r(j, "phantom");
  r("profile", profile);
  r("height", c.height);
  r("width", c.width);
  r.range("background", c.background);
  r("inclusions_min", c.inclusions_min);
  r("inclusions_max", c.inclusions_max);
  r.range("inclusion_elasticity", c.inclusion_elasticity);
  r.range("inclusion_radius", c.inclusion_radius);
  r.range("speckle_correlation", c.speckle_correlation);
  r.range("coupling", c.coupling);
  r("voids_min", c.voids_min);
  r("voids_max", c.voids_max);
  r("planes_per_patient", c.planes_per_patient);
  r("depth_attenuation", c.depth_attenuation);
  r("speckle_sigma", c.speckle_sigma);
  r("pixel_spacing_mm", c.pixel_spacing_mm);
  r("seed", c.seed);
  r.finish();
  return c;
}

json embedding_json(const EmbeddingConfig& c) {
  return {{"perplexity", c.perplexity},
          {"iterations", c.iterations},
          {"learning_rate", c.learning_rate},
          {"exaggeration", c.exaggeration},
          {"exaggeration_iterations", c.exaggeration_iterations},
          {"initial_momentum", c.initial_momentum},
          {"final_momentum", c.final_momentum},
          {"momentum_switch", c.momentum_switch},
          {"init_sigma", c.init_sigma},
          {"entropy_tolerance", c.entropy_tolerance},
          {"max_bisection_steps", c.max_bisection_steps},
          {"seed", c.seed}};
}

EmbeddingConfig read_embedding(const json& j) {
  EmbeddingConfig c;
  Reader r(j, "embedding");
  r("perplexity", c.perplexity);
  r("iterations", c.iterations);
  r("learning_rate", c.learning_rate);
  r("exaggeration", c.exaggeration);
  r("exaggeration_iterations", c.exaggeration_iterations);
  r("initial_momentum", c.initial_momentum);
  r("final_momentum", c.final_momentum);
  r("momentum_switch", c.momentum_switch);
  r("init_sigma", c.init_sigma);
  r("entropy_tolerance", c.entropy_tolerance);
  r("max_bisection_steps", c.max_bisection_steps);
  r("seed", c.seed);
  r.finish();
  return c;
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
}

}  // namespace

std::string to_json(const RunConfig& c) {
  const json j = {{"phantom", phantom_json(c.phantom)},
                  {"net", net_json(c.net)},
                  {"train", train_json(c.train)},
                  {"embedding", embedding_json(c.embedding)}};
  return j.dump(2);
}

std::string to_json(const NetConfig& c) { return net_json(c).dump(2); }
std::string to_json(const TrainConfig& c) { return train_json(c).dump(2); }

RunConfig parse_run_config(const std::string& text) {
  const json j = parse(text);
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "phantom") {
      c.phantom = read_phantom(value);
    } else if (key == "net") {
      c.net = read_net(value);
    } else if (key == "train") {
      c.train = read_train(value);
    } else if (key == "embedding") {
      c.embedding = read_embedding(value);
    } else {
      throw std::invalid_argument("config: unknown section '" + key + "'");
    }
  }
  return c;
}

NetConfig parse_net_config(const std::string& text) { return read_net(parse(text)); }
TrainConfig parse_train_config(const std::string& text) { return read_train(parse(text)); }

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("config: cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace sswe
