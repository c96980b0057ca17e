#pragma once

#include <cstdint>
#include <vector>

#include "sswe/dataio.hpp"
#include "sswe/tensor.hpp"

namespace sswe {

struct Range {
  double lo;
  double hi;
  bool operator==(const Range&) const = default;
};

/// Synthetic dataset description. Elasticity values are normalized (x100 kPa
/// or x10 m/s depending on the profile). Radii and lengths are in pixels.
struct PhantomConfig {
  Profile profile = Profile::prostate_kpa;
  Index height = 64;
  Index width = 96;
  Range background{0.15, 0.35};
  int inclusions_min = 0;
  int inclusions_max = 3;
  Range inclusion_elasticity{0.4, 0.9};
  Range inclusion_radius{6.0, 20.0};
  Range speckle_correlation{1.5, 3.0};
  Range coupling{0.2, 0.6};  // echogenicity-elasticity coupling kappa
  int voids_min = 0;
  int voids_max = 2;
  int planes_per_patient = 3;
  double depth_attenuation = 0.3;  // log-amplitude loss from top to bottom row
  double speckle_sigma = 0.6;      // std of the log speckle field
  double pixel_spacing_mm = 1.0;
  std::uint64_t seed = 0;

  static PhantomConfig defaults(Profile profile);
  /// Throws std::invalid_argument on out-of-range or inverted fields.
  void validate() const;
  bool operator==(const PhantomConfig&) const = default;
};

struct Ellipse {
  double cy = 0.0;
  double cx = 0.0;
  double ry = 0.0;
  double rx = 0.0;
  double angle = 0.0;  // radians, rotation of the x semi-axis towards +y
};

struct Inclusion {
  Ellipse shape;
  double elasticity = 0.0;
};

struct PhantomSample {
  Sample sample;
  std::vector<Inclusion> inclusions;
  double background = 0.0;  // base elasticity before smooth variation
  double coupling = 0.0;
};

/// Fractional membership of pixel (y, x) with a one-pixel anti-aliasing band.
double ellipse_coverage(const Ellipse& e, double y, double x);

/// canvas <- canvas * (1 - a) + value * a for every pixel of the last two axes.
template <typename Scalar>
void render_ellipse(const Ellipse& e, double value, Tensor<Scalar>& canvas) {
  if (!(e.rx > 0.0 && e.ry > 0.0)) return;
  const Index h = canvas.dim(canvas.rank() - 2), w = canvas.dim(canvas.rank() - 1);
  const Index planes = canvas.size() / (h * w);
  for (Index p = 0; p < planes; ++p) {
    auto m = canvas.plane(p);
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) {
        const double a = ellipse_coverage(e, static_cast<double>(y), static_cast<double>(x));
        if (a <= 0.0) continue;
        m(y, x) = a >= 1.0 ? static_cast<Scalar>(value)
                           : static_cast<Scalar>(m(y, x) * (1.0 - a) + value * a);
      }
    }
  }
}

/// Sample `index` of the dataset determined by `config` (independent stream per index).
PhantomSample generate_one(const PhantomConfig& config, std::size_t index);
std::vector<PhantomSample> generate(const PhantomConfig& config, std::size_t n);
std::vector<Sample> generate_samples(const PhantomConfig& config, std::size_t n);

}  // namespace sswe
