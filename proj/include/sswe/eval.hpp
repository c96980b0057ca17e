#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sswe/dataio.hpp"
#include "sswe/unet.hpp"

namespace sswe {

/// Error statistics over valid pixels, in physical units.
struct ImageMetrics {
  double rmse = 0.0;
  double mae = 0.0;
  double me = 0.0;  // mean of (label - prediction)
  Index valid_pixels = 0;
};

/// Throws DataError when the mask has no valid pixel. `mask` is binary.
ImageMetrics metrics(const Tensorf& pred, const Tensorf& label, const Tensorf& mask, Profile profile);

struct MetricsRow {
  std::string patient_id;
  std::string plane_id;
  ImageMetrics metrics;
};

struct PatientMetrics {
  std::string patient_id;
  std::size_t images = 0;
  double rmse = 0.0;  // means over the patient's images
  double mae = 0.0;
  double me = 0.0;
};

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation across patients
};

struct MetricsReport {
  std::vector<MetricsRow> rows;          // sorted by (patient, plane)
  std::vector<PatientMetrics> patients;  // sorted by patient id
  Summary rmse, mae, me;
  bool std_defined = true;  // false with a single patient (std reported as 0)
  std::string unit;
};

/// Per-patient means, then mean and n-1 standard deviation across patients.
/// The result does not depend on the order of `rows`.
MetricsReport aggregate_per_patient(std::vector<MetricsRow> rows, const std::string& unit);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  int dof = 0;
  bool degenerate = false;  // zero variance of the differences
};

/// Two-sided paired t-test of a - b.
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

/// P(T <= t) for Student's t with `dof` degrees of freedom.
double student_t_cdf(double t, double dof);
/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// 100 (pred - label) / pred at valid pixels where both pred and label exceed
/// `epsilon`; 0 elsewhere.
Tensorf difference_map(const Tensorf& pred, const Tensorf& label, const Tensorf& mask, double epsilon = 1e-3);

/// Infer-mode predictions for every sample, one [1,H,W] tensor each.
std::vector<Tensorf> predict(const UNetParams<float>& params, std::span<const Sample> samples,
                             std::size_t batch_size = 32);

/// Metrics of `params` on `samples` using masks at `confidence_threshold`.
MetricsReport evaluate(const UNetParams<float>& params, std::span<const Sample> samples,
                       double confidence_threshold = 0.75);

void write_report_text(std::ostream& os, const MetricsReport& report);
std::string report_json(const MetricsReport& report);

}  // namespace sswe
