#include "sswe/phantom.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace sswe {

PhantomConfig PhantomConfig::defaults(Profile profile) {
  PhantomConfig c;
  c.profile = profile;
  if (profile == Profile::thyroid_mps) {
    c.background = {0.2, 0.4};
    c.inclusion_elasticity = {0.45, 0.8};
    c.pixel_spacing_mm = 0.6;
  }
  return c;
}

void PhantomConfig::validate() const {
  auto unit = [](Range r, const char* what) {
    if (!(r.lo >= 0.0 && r.hi <= 1.0 && r.lo <= r.hi)) {
      throw std::invalid_argument(std::string("PhantomConfig: ") + what + " must be an ordered range in [0,1]");
    }
  };
  unit(background, "background");
  unit(inclusion_elasticity, "inclusion_elasticity");
  unit(coupling, "coupling");
  if (height < 8 || width < 8) throw std::invalid_argument("PhantomConfig: frame too small");
  if (inclusions_min < 0 || inclusions_max < inclusions_min) {
    throw std::invalid_argument("PhantomConfig: inclusion count range invalid");
  }
  if (voids_min < 0 || voids_max < voids_min) throw std::invalid_argument("PhantomConfig: void count range invalid");
  const double half = 0.5 * static_cast<double>(std::min(height, width));
  if (!(inclusion_radius.lo >= 0.0 && inclusion_radius.lo <= inclusion_radius.hi && inclusion_radius.hi <= half)) {
    throw std::invalid_argument("PhantomConfig: inclusion radii must fit the frame");
  }
  if (!(speckle_correlation.lo > 0.0 && speckle_correlation.lo <= speckle_correlation.hi)) {
    throw std::invalid_argument("PhantomConfig: speckle correlation length must be positive");
  }
  if (planes_per_patient < 1) throw std::invalid_argument("PhantomConfig: planes_per_patient must be >= 1");
  if (!(depth_attenuation >= 0.0) || !(speckle_sigma >= 0.0)) {
    throw std::invalid_argument("PhantomConfig: attenuation and speckle sigma must be non-negative");
  }
}

double ellipse_coverage(const Ellipse& e, double y, double x) {
  if (!(e.rx > 0.0 && e.ry > 0.0)) return 0.0;
  const double dy = y - e.cy, dx = x - e.cx;
  const double c = std::cos(e.angle), s = std::sin(e.angle);
  const double u = c * dx + s * dy, v = -s * dx + c * dy;
  const double rho = std::hypot(u / e.rx, v / e.ry);
  // Signed distance to the boundary along the ray from the centre.
  const double dist = rho > 0.0 ? (rho - 1.0) * std::hypot(u, v) / rho : -std::min(e.rx, e.ry);
  return std::clamp(0.5 - dist, 0.0, 1.0);
}

namespace {

double draw(Rng& rng, Range r) { return r.lo < r.hi ? rng.uniform<double>(r.lo, r.hi) : r.lo; }

int draw_count(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    total += k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
  }
  for (double& v : k) v /= total;
  return k;
}

/// Zero-mean, unit-variance Gaussian field with Gaussian autocorrelation of width `sigma`.
Tensord correlated_field(Rng& rng, Index h, Index w, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const auto r = static_cast<Index>(k.size() / 2);
  const Index ph = h + 2 * r, pw = w + 2 * r;
  Tensord noise({ph, pw});
  for (double& v : noise.values()) v = rng.normal();
  Tensord rows({ph, w});
  for (Index y = 0; y < ph; ++y) {
    for (Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (Index i = 0; i < static_cast<Index>(k.size()); ++i) acc += k[static_cast<std::size_t>(i)] * noise(y, x + i);
      rows(y, x) = acc;
    }
  }
  double k2 = 0.0;
  for (double v : k) k2 += v * v;
  const double norm = 1.0 / k2;  // (sqrt(sum k^2))^2 for the separable 2-D kernel
  Tensord out({h, w});
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (Index i = 0; i < static_cast<Index>(k.size()); ++i) acc += k[static_cast<std::size_t>(i)] * rows(y + i, x);
      out(y, x) = acc * norm;
    }
  }
  return out;
}

}  // namespace

PhantomSample generate_one(const PhantomConfig& config, std::size_t index) {
  config.validate();
  Rng rng = Rng(config.seed).derive(0x9a47, index);
  const Index h = config.height, w = config.width;
  const double hd = static_cast<double>(h), wd = static_cast<double>(w);
  PhantomSample out;

  // Elasticity: base level with a smooth low-frequency variation, then inclusions.
  out.background = draw(rng, config.background);
  Tensord elasticity({1, h, w});
  const double amplitude = 0.15 * (config.background.hi - config.background.lo);
  struct Wave {
    double fy, fx, phase;
  };
  Wave modes[3];
  for (auto& m : modes) m = {rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5), rng.uniform(0.0, 2.0 * std::numbers::pi)};
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      double v = 0.0;
      for (const auto& m : modes) {
        v += std::cos(std::numbers::pi * (m.fy * y / hd + m.fx * x / wd) + m.phase);
      }
      elasticity(0, y, x) = std::clamp(out.background + amplitude * v / 3.0, config.background.lo,
                                       config.background.hi);
    }
  }
  const int n_inc = draw_count(rng, config.inclusions_min, config.inclusions_max);
  for (int i = 0; i < n_inc; ++i) {
    Inclusion inc;
    inc.shape.cy = rng.uniform(0.15 * hd, 0.85 * hd);
    inc.shape.cx = rng.uniform(0.15 * wd, 0.85 * wd);
    inc.shape.ry = draw(rng, config.inclusion_radius);
    inc.shape.rx = draw(rng, config.inclusion_radius);
    inc.shape.angle = rng.uniform(0.0, std::numbers::pi);
    inc.elasticity = draw(rng, config.inclusion_elasticity);
    render_ellipse(inc.shape, inc.elasticity, elasticity);
    out.inclusions.push_back(inc);
  }

  // B-mode: echogenicity darkens with stiffness relative to the reference
  // background level, times depth attenuation and log-normal speckle.
  out.coupling = draw(rng, config.coupling);
  const double reference = 0.5 * (config.background.lo + config.background.hi);
  const double ell = draw(rng, config.speckle_correlation);
  const Tensord speckle = correlated_field(rng, h, w, ell);
  const double sig = config.speckle_sigma;
  Tensord bmode({1, h, w});
  for (Index y = 0; y < h; ++y) {
    const double attenuation = std::exp(-config.depth_attenuation * static_cast<double>(y) / (hd - 1.0));
    for (Index x = 0; x < w; ++x) {
      const double echo = std::exp(-3.0 * out.coupling * (elasticity(0, y, x) - reference));
      const double intensity = echo * attenuation * std::exp(sig * speckle(y, x) - 0.5 * sig * sig);
      bmode(0, y, x) = 1.0 - std::exp(-0.6 * intensity);
    }
  }

  // Confidence: elliptical region of interest with optional low-confidence voids.
  Tensord confidence({1, h, w});
  Ellipse roi{hd / 2.0 + rng.uniform(-0.04, 0.04) * hd, wd / 2.0 + rng.uniform(-0.04, 0.04) * wd,
              rng.uniform(0.35, 0.45) * hd, rng.uniform(0.35, 0.45) * wd, 0.0};
  render_ellipse(roi, 1.0, confidence);
  const int n_voids = draw_count(rng, config.voids_min, config.voids_max);
  for (int i = 0; i < n_voids; ++i) {
    const double t = rng.uniform(0.0, 2.0 * std::numbers::pi), r = rng.uniform(0.0, 0.6);
    Ellipse v{roi.cy + r * roi.ry * std::sin(t), roi.cx + r * roi.rx * std::cos(t), rng.uniform(3.0, 8.0),
              rng.uniform(3.0, 8.0), rng.uniform(0.0, std::numbers::pi)};
    render_ellipse(v, rng.uniform(0.2, 0.6), confidence);
  }

  char patient[32], plane[32];
  const auto planes = static_cast<std::size_t>(config.planes_per_patient);
  std::snprintf(patient, sizeof patient, "P%04zu", index / planes);
  std::snprintf(plane, sizeof plane, "plane%zu", index % planes);
  out.sample = Sample{bmode.cast<float>(), elasticity.cast<float>(), confidence.cast<float>(), patient, plane,
                      config.profile, config.pixel_spacing_mm};
  return out;
}

std::vector<PhantomSample> generate(const PhantomConfig& config, std::size_t n) {
  if (n < 1) throw std::invalid_argument("generate: count must be at least 1");
  std::vector<PhantomSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_one(config, i));
  return out;
}

std::vector<Sample> generate_samples(const PhantomConfig& config, std::size_t n) {
  std::vector<Sample> out;
  for (auto& p : generate(config, n)) out.push_back(std::move(p.sample));
  return out;
}

}  // namespace sswe
