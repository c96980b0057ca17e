#include "sswe/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>

#include <json.hpp>

#include "sswe/train.hpp"

namespace sswe {

ImageMetrics metrics(const Tensorf& pred, const Tensorf& label, const Tensorf& mask, Profile profile) {
  if (!pred.same_shape(label) || !pred.same_shape(mask)) throw ShapeError("metrics: rasters are not co-registered");
  double se = 0.0, ae = 0.0, e = 0.0;
  Index n = 0;
  for (Index i = 0; i < mask.size(); ++i) {
    if (!(mask[i] > 0.5f)) continue;
    const double d = static_cast<double>(label[i]) - static_cast<double>(pred[i]);
    se += d * d;
    ae += std::abs(d);
    e += d;
    ++n;
  }
  if (n == 0) throw DataError("metrics: no valid pixels");
  const double scale = physical_scale(profile), count = static_cast<double>(n);
  return {scale * std::sqrt(se / count), scale * ae / count, scale * e / count, n};
}

namespace {

Summary summarize(const std::vector<double>& values) {
  Summary s;
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

}  // namespace

MetricsReport aggregate_per_patient(std::vector<MetricsRow> rows, const std::string& unit) {
  std::sort(rows.begin(), rows.end(), [](const MetricsRow& a, const MetricsRow& b) {
    return std::tie(a.patient_id, a.plane_id) < std::tie(b.patient_id, b.plane_id);
  });
  MetricsReport report;
  report.unit = unit;
  for (std::size_t i = 0; i < rows.size();) {
    PatientMetrics p{rows[i].patient_id, 0, 0.0, 0.0, 0.0};
    std::size_t j = i;
    for (; j < rows.size() && rows[j].patient_id == p.patient_id; ++j) {
      p.rmse += rows[j].metrics.rmse;
      p.mae += rows[j].metrics.mae;
      p.me += rows[j].metrics.me;
      ++p.images;
    }
    const auto n = static_cast<double>(p.images);
    p.rmse /= n;
    p.mae /= n;
    p.me /= n;
    report.patients.push_back(p);
    i = j;
  }
  report.rows = std::move(rows);
  if (report.patients.empty()) return report;
  std::vector<double> r, a, e;
  for (const auto& p : report.patients) {
    r.push_back(p.rmse);
    a.push_back(p.mae);
    e.push_back(p.me);
  }
  report.rmse = summarize(r);
  report.mae = summarize(a);
  report.me = summarize(e);
  report.std_defined = report.patients.size() > 1;
  return report;
}

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);
  const double front =
      std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x)) / a;
  // Modified Lentz evaluation of the continued fraction.
  constexpr double tiny = 1e-300;
  double f = 1.0, c = 1.0, d = 0.0;
  for (int i = 0; i <= 400; ++i) {
    const int m = i / 2;
    double numerator;
    if (i == 0) {
      numerator = 1.0;
    } else if (i % 2 == 0) {
      numerator = (m * (b - m) * x) / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
    } else {
      numerator = -((a + m) * (a + b + m) * x) / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
    }
    d = 1.0 + numerator * d;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    c = 1.0 + numerator / c;
    if (std::abs(c) < tiny) c = tiny;
    const double cd = c * d;
    f *= cd;
    if (std::abs(1.0 - cd) < 1e-16) break;
  }
  return front * (f - 1.0);
}

double student_t_cdf(double t, double dof) {
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
  return t > 0 ? 1.0 - tail : tail;
}

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired_ttest: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("paired_ttest: need at least two pairs");
  const auto n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
  TTestResult r;
  r.dof = static_cast<int>(a.size()) - 1;
  const double sd = std::sqrt(ss / (n - 1.0));
  if (sd == 0.0) {
    r.degenerate = true;
    if (mean == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = std::copysign(std::numeric_limits<double>::infinity(), mean);
      r.p = 0.0;
    }
    return r;
  }
  r.t = mean / (sd / std::sqrt(n));
  r.p = incomplete_beta(0.5 * r.dof, 0.5, r.dof / (r.dof + r.t * r.t));
  return r;
}

Tensorf difference_map(const Tensorf& pred, const Tensorf& label, const Tensorf& mask, double epsilon) {
  if (!pred.same_shape(label) || !pred.same_shape(mask)) throw ShapeError("difference_map: rasters are not co-registered");
  Tensorf out(pred.shape());
  for (Index i = 0; i < pred.size(); ++i) {
    const double p = pred[i], l = label[i];
    if (mask[i] > 0.5f && p > epsilon && l > epsilon) out[i] = static_cast<float>(100.0 * (p - l) / p);
  }
  return out;
}

std::vector<Tensorf> predict(const UNetParams<float>& params, std::span<const Sample> samples, std::size_t batch_size) {
  std::vector<Tensorf> out;
  out.reserve(samples.size());
  Rng unused(0);
  for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
    const std::size_t end = std::min(samples.size(), begin + batch_size);
    std::vector<const Tensorf*> xs;
    for (std::size_t k = begin; k < end; ++k) xs.push_back(&samples[k].bmode);
    const Tensorf pred = forward(params, stack(xs), Mode::infer, unused);
    const Shape& shape = samples[begin].bmode.shape();
    const Index n = shape_size(shape);
    for (std::size_t k = begin; k < end; ++k) {
      Tensorf::Storage data = pred.array().segment(static_cast<Index>(k - begin) * n, n);
      out.emplace_back(shape, std::move(data));
    }
  }
  return out;
}

MetricsReport evaluate(const UNetParams<float>& params, std::span<const Sample> samples, double confidence_threshold) {
  if (samples.empty()) throw DataError("evaluate: no samples");
  const auto preds = predict(params, samples);
  std::vector<MetricsRow> rows;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    rows.push_back({s.patient_id, s.plane_id,
                    metrics(preds[i], s.elasticity, confidence_mask(s.confidence, confidence_threshold), s.profile)});
  }
  return aggregate_per_patient(std::move(rows), unit_label(samples.front().profile));
}

void write_report_text(std::ostream& os, const MetricsReport& r) {
  const auto flags = os.flags();
  os << std::fixed << std::setprecision(4);
  os << "# per-image metrics (" << r.unit << "); ME = mean(label - prediction), "
     << "negative ME means predictions are biased high\n";
  os << std::left << std::setw(12) << "patient" << std::setw(12) << "plane" << std::right << std::setw(12) << "RMSE"
     << std::setw(12) << "MAE" << std::setw(12) << "ME" << std::setw(10) << "pixels" << '\n';
  for (const auto& row : r.rows) {
    os << std::left << std::setw(12) << row.patient_id << std::setw(12) << row.plane_id << std::right << std::setw(12)
       << row.metrics.rmse << std::setw(12) << row.metrics.mae << std::setw(12) << row.metrics.me << std::setw(10)
       << row.metrics.valid_pixels << '\n';
  }
  os << "\n# per-patient means\n";
  os << std::left << std::setw(12) << "patient" << std::right << std::setw(8) << "images" << std::setw(12) << "RMSE"
     << std::setw(12) << "MAE" << std::setw(12) << "ME" << '\n';
  for (const auto& p : r.patients) {
    os << std::left << std::setw(12) << p.patient_id << std::right << std::setw(8) << p.images << std::setw(12)
       << p.rmse << std::setw(12) << p.mae << std::setw(12) << p.me << '\n';
  }
  os << "\n# across " << r.patients.size() << " patients (mean +- sample std"
     << (r.std_defined ? "" : "; std undefined for one patient, shown as 0") << ")\n";
  os << "RMSE " << r.rmse.mean << " +- " << r.rmse.std << ' ' << r.unit << '\n';
  os << "MAE  " << r.mae.mean << " +- " << r.mae.std << ' ' << r.unit << '\n';
  os << "ME   " << r.me.mean << " +- " << r.me.std << ' ' << r.unit << '\n';
  os.flags(flags);
}

std::string report_json(const MetricsReport& r) {
  using nlohmann::json;
  json j;
  j["unit"] = r.unit;
  j["std_defined"] = r.std_defined;
  j["summary"] = {{"rmse", {{"mean", r.rmse.mean}, {"std", r.rmse.std}}},
                  {"mae", {{"mean", r.mae.mean}, {"std", r.mae.std}}},
                  {"me", {{"mean", r.me.mean}, {"std", r.me.std}}}};
  j["patients"] = json::array();
  for (const auto& p : r.patients) {
    j["patients"].push_back(
        {{"patient_id", p.patient_id}, {"images", p.images}, {"rmse", p.rmse}, {"mae", p.mae}, {"me", p.me}});
  }
  j["images"] = json::array();
  for (const auto& row : r.rows) {
    j["images"].push_back({{"patient_id", row.patient_id},
                           {"plane_id", row.plane_id},
                           {"rmse", row.metrics.rmse},
                           {"mae", row.metrics.mae},
                           {"me", row.metrics.me},
                           {"valid_pixels", row.metrics.valid_pixels}});
  }
  return j.dump(2);
}

}  // namespace sswe
