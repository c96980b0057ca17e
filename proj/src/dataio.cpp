#include "sswe/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

namespace sswe {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Profile profile) {
  return profile == Profile::prostate_kpa ? "prostate-kPa" : "thyroid-m/s";
}

Profile profile_from_string(const std::string& name) {
  if (name == "prostate-kPa" || name == "prostate") return Profile::prostate_kpa;
  if (name == "thyroid-m/s" || name == "thyroid") return Profile::thyroid_mps;
  throw DataError("unknown profile '" + name + "'");
}

double physical_scale(Profile profile) { return profile == Profile::prostate_kpa ? 100.0 : 10.0; }

std::string unit_label(Profile profile) { return profile == Profile::prostate_kpa ? "kPa" : "m/s"; }

namespace {

void check_unit_range(const Tensorf& t, const char* what) {
  for (float v : t.values()) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw DataError(std::string(what) + " value " + std::to_string(v) + " outside [0,1]");
    }
  }
}

}  // namespace

void validate(const Sample& s) {
  if (s.bmode.rank() != 3 || s.bmode.dim(0) != 1) {
    throw DataError("sample " + s.patient_id + "/" + s.plane_id + ": bmode must be [1,H,W], got " +
                    to_string(s.bmode.shape()));
  }
  if (!s.bmode.same_shape(s.elasticity) || !s.bmode.same_shape(s.confidence)) {
    throw DataError("sample " + s.patient_id + "/" + s.plane_id + ": rasters are not co-registered");
  }
  check_unit_range(s.bmode, "bmode");
  check_unit_range(s.elasticity, "elasticity");
  check_unit_range(s.confidence, "confidence");
}

Tensorf confidence_mask(const Tensorf& confidence, double threshold) {
  Tensorf mask(confidence.shape());
  for (Index i = 0; i < confidence.size(); ++i) mask[i] = confidence[i] > threshold ? 1.0f : 0.0f;
  return mask;
}

Tensorf normalize(const Tensorf& raw, Quantity quantity, Profile profile) {
  const double scale = quantity == Quantity::bmode ? 255.0 : physical_scale(profile);
  Tensorf out(raw.shape());
  for (Index i = 0; i < raw.size(); ++i) {
    const double v = raw[i];
    if (!std::isfinite(v) || v < 0.0) throw DataError("normalize: negative or non-finite input " + std::to_string(v));
    out[i] = static_cast<float>(std::min(1.0, v / scale));
  }
  return out;
}

Tensorf denormalize(const Tensorf& normalized, Quantity quantity, Profile profile) {
  const double scale = quantity == Quantity::bmode ? 255.0 : physical_scale(profile);
  Tensorf out(normalized.shape());
  for (Index i = 0; i < normalized.size(); ++i) out[i] = static_cast<float>(normalized[i] * scale);
  return out;
}

PatientSplit split_by_patient(std::span<const std::string> patient_ids, std::size_t train_count,
                              std::size_t test_count, std::uint64_t seed) {
  std::set<std::string> distinct(patient_ids.begin(), patient_ids.end());
  if (train_count + test_count > distinct.size()) {
    throw DataError("split_by_patient: requested " + std::to_string(train_count) + "+" +
                    std::to_string(test_count) + " patients, dataset has " + std::to_string(distinct.size()));
  }
  std::vector<std::string> order(distinct.begin(), distinct.end());
  Rng rng(seed, 0x5157);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  PatientSplit split;
  split.train_patients.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_count));
  split.test_patients.assign(order.begin() + static_cast<std::ptrdiff_t>(train_count),
                             order.begin() + static_cast<std::ptrdiff_t>(train_count + test_count));
  std::sort(split.train_patients.begin(), split.train_patients.end());
  std::sort(split.test_patients.begin(), split.test_patients.end());
  const std::set<std::string> train(split.train_patients.begin(), split.train_patients.end());
  const std::set<std::string> test(split.test_patients.begin(), split.test_patients.end());
  for (std::size_t i = 0; i < patient_ids.size(); ++i) {
    if (train.contains(patient_ids[i])) split.train.push_back(i);
    if (test.contains(patient_ids[i])) split.test.push_back(i);
  }
  return split;
}

PatientSplit split_by_patient(std::span<const Sample> samples, std::size_t train_count,
                              std::size_t test_count, std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) ids.push_back(s.patient_id);
  return split_by_patient(ids, train_count, test_count, seed);
}

std::vector<Sample> select(std::span<const Sample> samples, std::span<const std::size_t> indices) {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(samples[i]);
  return out;
}

// ---------------------------------------------------------------------------

void write_raster(const fs::path& path, const Tensorf& tensor) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  std::vector<char> bytes(static_cast<std::size_t>(tensor.size()) * 4);
  for (Index i = 0; i < tensor.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(tensor[i]);
    for (int b = 0; b < 4; ++b) bytes[static_cast<std::size_t>(i * 4 + b)] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DataError("short write to " + path.string());
}

Tensorf read_raster(const fs::path& path, const Shape& shape) {
  std::error_code ec;
  const auto bytes_on_disk = fs::file_size(path, ec);
  if (ec) throw DataError("missing raster " + path.string());
  Tensorf t(shape);
  const auto expected = static_cast<std::uintmax_t>(t.size()) * 4;
  if (bytes_on_disk != expected) {
    throw DataError("raster " + path.string() + " has " + std::to_string(bytes_on_disk) +
                    " bytes, expected " + std::to_string(expected));
  }
  std::ifstream is(path, std::ios::binary);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(expected));
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!is) throw DataError("cannot read " + path.string());
  for (Index i = 0; i < t.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t{bytes[static_cast<std::size_t>(i * 4 + b)]} << (8 * b);
    t[i] = std::bit_cast<float>(bits);
  }
  return t;
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  json j;
  j["format"] = "sswe-dataset";
  j["format_version"] = manifest.format_version;
  j["samples"] = json::array();
  for (const auto& r : manifest.samples) {
    j["samples"].push_back({{"bmode", r.bmode},
                            {"elasticity", r.elasticity},
                            {"confidence", r.confidence},
                            {"width", r.width},
                            {"height", r.height},
                            {"patient_id", r.patient_id},
                            {"plane_id", r.plane_id},
                            {"profile", to_string(r.profile)},
                            {"pixel_spacing_mm", r.pixel_spacing_mm}});
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("missing manifest " + path.string());
  DatasetManifest m;
  try {
    const json j = json::parse(is);
    if (j.value("format", "") != "sswe-dataset") throw DataError("not a dataset manifest: " + path.string());
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != DatasetManifest::kFormatVersion) {
      throw DataError("unsupported manifest version " + std::to_string(m.format_version));
    }
    for (const auto& s : j.at("samples")) {
      SampleRecord r;
      r.bmode = s.at("bmode").get<std::string>();
      r.elasticity = s.at("elasticity").get<std::string>();
      r.confidence = s.at("confidence").get<std::string>();
      r.width = s.at("width").get<Index>();
      r.height = s.at("height").get<Index>();
      r.patient_id = s.at("patient_id").get<std::string>();
      r.plane_id = s.at("plane_id").get<std::string>();
      r.profile = profile_from_string(s.at("profile").get<std::string>());
      r.pixel_spacing_mm = s.value("pixel_spacing_mm", 0.0);
      if (r.width < 1 || r.height < 1) throw DataError("manifest: non-positive raster size");
      m.samples.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }
  return m;
}

void save_dataset(const fs::path& dir, std::span<const Sample> samples) {
  fs::create_directories(dir / "rasters");
  DatasetManifest m;
  char stem[32];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    validate(s);
    std::snprintf(stem, sizeof stem, "rasters/%05zu", i);
    SampleRecord r{std::string(stem) + "_bmode.f32", std::string(stem) + "_elasticity.f32",
                   std::string(stem) + "_confidence.f32", s.bmode.dim(2), s.bmode.dim(1),
                   s.patient_id, s.plane_id, s.profile, s.pixel_spacing_mm};
    write_raster(dir / r.bmode, s.bmode);
    write_raster(dir / r.elasticity, s.elasticity);
    write_raster(dir / r.confidence, s.confidence);
    m.samples.push_back(std::move(r));
  }
  write_manifest(dir / kManifestName, m);
}

std::vector<Sample> load_dataset(const fs::path& path) {
  const fs::path manifest_path = fs::is_directory(path) ? path / kManifestName : path;
  const fs::path root = manifest_path.parent_path();
  const DatasetManifest m = read_manifest(manifest_path);
  std::vector<Sample> out;
  out.reserve(m.samples.size());
  for (const auto& r : m.samples) {
    const Shape shape{1, r.height, r.width};
    Sample s{read_raster(root / r.bmode, shape), read_raster(root / r.elasticity, shape),
             read_raster(root / r.confidence, shape), r.patient_id, r.plane_id, r.profile,
             r.pixel_spacing_mm};
    validate(s);
    out.push_back(std::move(s));
  }
  return out;
}

DatasetManifest rebase_manifest(const DatasetManifest& manifest, const fs::path& source_dir,
                                const fs::path& target_dir) {
  DatasetManifest out = manifest;
  const fs::path src = fs::absolute(source_dir), dst = fs::absolute(target_dir);
  for (auto& r : out.samples) {
    for (std::string* p : {&r.bmode, &r.elasticity, &r.confidence}) {
      *p = fs::relative(src / *p, dst).generic_string();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::uint8_t gray_byte(double value) {
  const double v = std::floor(std::clamp(value, 0.0, 1.0) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

namespace {

Rgb lerp_stops(double t, std::span<const std::array<double, 3>> stops) {
  t = std::clamp(t, 0.0, 1.0) * static_cast<double>(stops.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(t), stops.size() - 2);
  const double f = t - static_cast<double>(i);
  auto channel = [&](int c) {
    const double v = (1.0 - f) * stops[i][c] + f * stops[i + 1][c];
    return static_cast<std::uint8_t>(std::floor(v + 0.5));
  };
  return {channel(0), channel(1), channel(2)};
}

constexpr std::array<std::array<double, 3>, 5> kElasticityStops{{
    {0, 0, 255}, {0, 255, 255}, {0, 255, 0}, {255, 255, 0}, {255, 0, 0}}};
constexpr std::array<std::array<double, 3>, 3> kDifferenceStops{{{0, 0, 255}, {255, 255, 255}, {255, 0, 0}}};

}  // namespace

Rgb elasticity_color(double value) { return lerp_stops(value, kElasticityStops); }

Rgb difference_color(double percent) {
  if (std::isnan(percent)) percent = 0.0;
  return lerp_stops((std::clamp(percent, -100.0, 100.0) + 100.0) / 200.0, kDifferenceStops);
}

void export_image(const Tensorf& map, ImageKind kind, const fs::path& path) {
  if (map.rank() < 2) throw ShapeError("export_image: need [H,W] or [1,H,W]");
  const Index h = map.dim(map.rank() - 2), w = map.dim(map.rank() - 1);
  if (map.size() != h * w) throw ShapeError("export_image: single-plane map required");
  for (float v : map.values()) {
    if (!std::isfinite(v)) throw DataError("export_image: non-finite value");
  }
  if (kind == ImageKind::gray) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write " + path.string());
    os << "P5\n" << w << ' ' << h << "\n255\n";
    for (float v : map.values()) os.put(static_cast<char>(gray_byte(v)));
    if (!os) throw DataError("short write to " + path.string());
    return;
  }
  std::vector<Rgb> pixels;
  pixels.reserve(static_cast<std::size_t>(map.size()));
  for (float v : map.values()) pixels.push_back(kind == ImageKind::elasticity ? elasticity_color(v) : difference_color(v));
  write_ppm(path, h, w, pixels);
}

void write_ppm(const fs::path& path, Index height, Index width, std::span<const Rgb> pixels) {
  if (static_cast<Index>(pixels.size()) != height * width) throw ShapeError("write_ppm: pixel count mismatch");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << "P6\n" << width << ' ' << height << "\n255\n";
  for (const Rgb& c : pixels) os.put(static_cast<char>(c.r)).put(static_cast<char>(c.g)).put(static_cast<char>(c.b));
  if (!os) throw DataError("short write to " + path.string());
}

Tensorf read_pgm(const fs::path& path, int* maxval_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("missing image " + path.string());
  auto next_token = [&]() {
    std::string tok;
    char c;
    while (is.get(c)) {
      if (c == '#') {
        std::string rest;
        std::getline(is, rest);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(c);
    }
    return tok;
  };
  const std::string magic = next_token();
  if (magic != "P5" && magic != "P2") throw DataError(path.string() + ": not a PGM image");
  Index w = 0, h = 0;
  int maxval = 0;
  try {
    w = std::stol(next_token());
    h = std::stol(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw DataError(path.string() + ": malformed PGM header");
  }
  if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) throw DataError(path.string() + ": bad PGM header");
  Tensorf img({1, h, w});
  if (magic == "P5") {
    const int bytes_per = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> buf(static_cast<std::size_t>(w * h * bytes_per));
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (is.gcount() != static_cast<std::streamsize>(buf.size())) throw DataError(path.string() + ": truncated PGM");
    for (Index i = 0; i < w * h; ++i) {
      img[i] = bytes_per == 1 ? buf[static_cast<std::size_t>(i)]
                              : static_cast<float>(buf[static_cast<std::size_t>(2 * i)] << 8 |
                                                   buf[static_cast<std::size_t>(2 * i + 1)]);
    }
  } else {
    for (Index i = 0; i < w * h; ++i) {
      const std::string tok = next_token();
      if (tok.empty()) throw DataError(path.string() + ": truncated PGM");
      img[i] = std::stof(tok);
    }
  }
  for (float v : img.values()) {
    if (v > static_cast<float>(maxval)) throw DataError(path.string() + ": pixel exceeds maxval");
  }
  if (maxval_out) *maxval_out = maxval;
  return img;
}

}  // namespace sswe
