#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sswe/tensor.hpp"

namespace sswe {

/// Elasticity quantity carried by the label raster.
enum class Profile {
  prostate_kpa,  // Young's modulus, normalized by 100 kPa
  thyroid_mps,   // shear-wave speed, normalized by 10 m/s
};

std::string to_string(Profile profile);
Profile profile_from_string(const std::string& name);
/// Physical value of a normalized 1.0.
double physical_scale(Profile profile);
std::string unit_label(Profile profile);

/// Co-registered B-mode, elasticity label and confidence, each [1,H,W] in [0,1].
struct Sample {
  Tensorf bmode;
  Tensorf elasticity;
  Tensorf confidence;
  std::string patient_id;
  std::string plane_id;
  Profile profile = Profile::prostate_kpa;
  double pixel_spacing_mm = 0.0;
};

/// Throws DataError on shape disagreement, non-finite or out-of-range values.
void validate(const Sample& sample);

/// Binary mask (1 where confidence > threshold, else 0).
Tensorf confidence_mask(const Tensorf& confidence, double threshold);

// ---------------------------------------------------------------------------
// Preprocessing

/// Corner-aligned bilinear resampling of every trailing [H,W] plane.
template <typename Scalar>
Tensor<Scalar> regrid_bilinear(const Tensor<Scalar>& image, Index height, Index width) {
  if (image.rank() < 2) throw ShapeError("regrid_bilinear: need at least 2 dimensions");
  if (height < 2 || width < 2) throw ShapeError("regrid_bilinear: target must be at least 2x2");
  const Index ih = image.dim(image.rank() - 2), iw = image.dim(image.rank() - 1);
  if (ih < 2 || iw < 2) throw ShapeError("regrid_bilinear: source must be at least 2x2");
  Shape out_shape = image.shape();
  out_shape[out_shape.size() - 2] = height;
  out_shape[out_shape.size() - 1] = width;
  Tensor<Scalar> out(out_shape);
  const double sy = static_cast<double>(ih - 1) / static_cast<double>(height - 1);
  const double sx = static_cast<double>(iw - 1) / static_cast<double>(width - 1);
  const Index planes = image.size() / (ih * iw);
  for (Index p = 0; p < planes; ++p) {
    auto src = image.plane(p);
    auto dst = out.plane(p);
    for (Index y = 0; y < height; ++y) {
      const double fy = static_cast<double>(y) * sy;
      const Index y0 = std::min<Index>(static_cast<Index>(fy), ih - 2);
      const double ty = fy - static_cast<double>(y0);
      for (Index x = 0; x < width; ++x) {
        const double fx = static_cast<double>(x) * sx;
        const Index x0 = std::min<Index>(static_cast<Index>(fx), iw - 2);
        const double tx = fx - static_cast<double>(x0);
        const double top = (1.0 - tx) * src(y0, x0) + tx * src(y0, x0 + 1);
        const double bottom = (1.0 - tx) * src(y0 + 1, x0) + tx * src(y0 + 1, x0 + 1);
        dst(y, x) = static_cast<Scalar>((1.0 - ty) * top + ty * bottom);
      }
    }
  }
  return out;
}

enum class Quantity { bmode, elasticity };

/// B-mode: x/255. Elasticity: x / physical_scale(profile). Clamped to [0,1].
/// Throws DataError on negative or non-finite input.
Tensorf normalize(const Tensorf& raw, Quantity quantity, Profile profile = Profile::prostate_kpa);
Tensorf denormalize(const Tensorf& normalized, Quantity quantity, Profile profile = Profile::prostate_kpa);

// ---------------------------------------------------------------------------
// Patient-level splitting

struct PatientSplit {
  std::vector<std::size_t> train;  // sample indices, ascending
  std::vector<std::size_t> test;
  std::vector<std::string> train_patients;  // sorted
  std::vector<std::string> test_patients;
};

/// Shuffles the distinct patient ids with `seed` and assigns the first
/// `train_count` patients to train and the next `test_count` to test.
PatientSplit split_by_patient(std::span<const std::string> patient_ids, std::size_t train_count,
                              std::size_t test_count, std::uint64_t seed);
PatientSplit split_by_patient(std::span<const Sample> samples, std::size_t train_count,
                              std::size_t test_count, std::uint64_t seed);

std::vector<Sample> select(std::span<const Sample> samples, std::span<const std::size_t> indices);

// ---------------------------------------------------------------------------
// Files

/// Raw row-major little-endian float32, no header.
void write_raster(const std::filesystem::path& path, const Tensorf& tensor);
Tensorf read_raster(const std::filesystem::path& path, const Shape& shape);

struct SampleRecord {
  std::string bmode;  // raster paths, relative to the manifest directory
  std::string elasticity;
  std::string confidence;
  Index width = 0;
  Index height = 0;
  std::string patient_id;
  std::string plane_id;
  Profile profile = Profile::prostate_kpa;
  double pixel_spacing_mm = 0.0;
};

struct DatasetManifest {
  static constexpr int kFormatVersion = 1;
  int format_version = kFormatVersion;
  std::vector<SampleRecord> samples;
};

constexpr const char* kManifestName = "manifest.json";

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Writes rasters/ and manifest.json under `dir` (created if needed).
void save_dataset(const std::filesystem::path& dir, std::span<const Sample> samples);
/// Accepts a dataset directory or a manifest path. Validates sizes and ranges.
std::vector<Sample> load_dataset(const std::filesystem::path& path);
/// Manifest whose paths point at the rasters of `source_dir`, relative to `target_dir`.
DatasetManifest rebase_manifest(const DatasetManifest& manifest, const std::filesystem::path& source_dir,
                                const std::filesystem::path& target_dir);

// ---------------------------------------------------------------------------
// Image export

enum class ImageKind {
  gray,               // PGM; value in [0,1] -> round-half-up(255 v)
  elasticity,         // PPM; value in [0,1] through the elasticity colormap
  signed_difference,  // PPM; percentage in [-100,100] through a diverging map
};

struct Rgb {
  std::uint8_t r, g, b;
  bool operator==(const Rgb&) const = default;
};

std::uint8_t gray_byte(double value);
/// Blue-cyan-green-yellow-red ramp at stops 0, .25, .5, .75, 1.
Rgb elasticity_color(double value);
/// Blue at -100 %, white at 0 %, red at +100 % (clamped).
Rgb difference_color(double percent);

/// Writes a [H,W] or [1,H,W] map as a binary PGM/PPM with max value 255.
void export_image(const Tensorf& map, ImageKind kind, const std::filesystem::path& path);

/// Writes row-major RGB pixels as a binary PPM.
void write_ppm(const std::filesystem::path& path, Index height, Index width, std::span<const Rgb> pixels);

/// Reads a binary (P5) or ASCII (P2) PGM as raw gray levels in [0, maxval], shape [1,H,W].
Tensorf read_pgm(const std::filesystem::path& path, int* maxval = nullptr);

}  // namespace sswe
