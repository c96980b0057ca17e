#include <cmath>
#include <numbers>
#include <stdexcept>

#include "sswe/train.hpp"

namespace sswe {

void AugmentParams::validate() const {
  auto check = [](double v, double lo, double hi, const char* what) {
    if (!(v >= lo && v <= hi)) {
      throw std::invalid_argument(std::string("AugmentParams: ") + what + " = " + std::to_string(v) +
                                  " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
  };
  check(crop_left, 0.0, kMaxCrop, "crop_left");
  check(crop_right, 0.0, kMaxCrop, "crop_right");
  check(crop_top, 0.0, kMaxCrop, "crop_top");
  check(crop_bottom, 0.0, kMaxCrop, "crop_bottom");
  check(contrast, 1.0 - kMaxContrastChange, 1.0 + kMaxContrastChange, "contrast");
  check(rotation_deg, -kMaxRotationDeg, kMaxRotationDeg, "rotation_deg");
  check(shift_lateral, -kMaxShiftLateral, kMaxShiftLateral, "shift_lateral");
  check(shift_axial, -kMaxShiftAxial, kMaxShiftAxial, "shift_axial");
}

AugmentParams sample_augment_params(Rng& rng) {
  AugmentParams p;
  p.mirror = rng.bernoulli(0.5);
  p.crop_left = rng.uniform(0.0, AugmentParams::kMaxCrop);
  p.crop_right = rng.uniform(0.0, AugmentParams::kMaxCrop);
  p.crop_top = rng.uniform(0.0, AugmentParams::kMaxCrop);
  p.crop_bottom = rng.uniform(0.0, AugmentParams::kMaxCrop);
  p.contrast = rng.uniform(1.0 - AugmentParams::kMaxContrastChange, 1.0 + AugmentParams::kMaxContrastChange);
  p.rotation_deg = rng.uniform(-AugmentParams::kMaxRotationDeg, AugmentParams::kMaxRotationDeg);
  p.shift_lateral = rng.uniform(-AugmentParams::kMaxShiftLateral, AugmentParams::kMaxShiftLateral);
  p.shift_axial = rng.uniform(-AugmentParams::kMaxShiftAxial, AugmentParams::kMaxShiftAxial);
  return p;
}

namespace {

// Coordinates within this distance of a grid node sample that node exactly.
constexpr double kSnap = 1e-6;

double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < kSnap ? r : v;
}

}  // namespace

std::pair<double, double> source_coordinate(const AugmentParams& p, Index h, Index w, Index y, Index x) {
  const double hm = static_cast<double>(h - 1), wm = static_cast<double>(w - 1);
  // Undo, in reverse order: mirror, rotation about the frame centre, shift, crop-and-resize.
  double sx = p.mirror ? wm - static_cast<double>(x) : static_cast<double>(x);
  double sy = static_cast<double>(y);
  if (p.rotation_deg != 0.0) {
    const double a = p.rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(a), s = std::sin(a);
    const double dx = sx - wm / 2.0, dy = sy - hm / 2.0;
    sx = wm / 2.0 + c * dx + s * dy;
    sy = hm / 2.0 - s * dx + c * dy;
  }
  sx -= p.shift_lateral * static_cast<double>(w);
  sy -= p.shift_axial * static_cast<double>(h);
  sx = p.crop_left * wm + sx * (1.0 - p.crop_left - p.crop_right);
  sy = p.crop_top * hm + sy * (1.0 - p.crop_top - p.crop_bottom);
  return {snap(sy), snap(sx)};
}

Sample augment(const Sample& sample, const AugmentParams& params) {
  params.validate();
  if (!sample.bmode.same_shape(sample.elasticity) || !sample.bmode.same_shape(sample.confidence) ||
      sample.bmode.rank() != 3 || sample.bmode.dim(0) != 1) {
    throw ShapeError("augment: rasters must be co-registered [1,H,W]");
  }
  const Index h = sample.bmode.dim(1), w = sample.bmode.dim(2);
  Sample out = sample;
  auto bm = out.bmode.plane(0);
  auto el = out.elasticity.plane(0);
  auto cf = out.confidence.plane(0);
  const auto src_b = sample.bmode.plane(0);
  const auto src_e = sample.elasticity.plane(0);
  const auto src_c = sample.confidence.plane(0);

  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const auto [fy, fx] = source_coordinate(params, h, w, y, x);
      const double y0 = std::floor(fy), x0 = std::floor(fx);
      const double ty = fy - y0, tx = fx - x0;
      const double wy[2] = {1.0 - ty, ty}, wx[2] = {1.0 - tx, tx};
      double vb = 0.0, ve = 0.0;
      bool valid = true;
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
          const double weight = wy[i] * wx[j];
          if (weight <= 0.0) continue;
          const auto yy = static_cast<Index>(y0) + i, xx = static_cast<Index>(x0) + j;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) {
            valid = false;
            continue;
          }
          vb += weight * src_b(yy, xx);
          ve += weight * src_e(yy, xx);
          valid = valid && src_c(yy, xx) > 0.5f;
        }
      }
      bm(y, x) = static_cast<float>(vb);
      el(y, x) = static_cast<float>(ve);
      cf(y, x) = valid ? 1.0f : 0.0f;
    }
  }

  if (params.contrast != 1.0) {
    const double mu = mean(out.bmode);
    for (float& v : out.bmode.values()) {
      v = static_cast<float>(std::clamp(mu + params.contrast * (static_cast<double>(v) - mu), 0.0, 1.0));
    }
  }
  return out;
}

}  // namespace sswe
