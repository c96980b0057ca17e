#include "sswe/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "sswe/rng.hpp"
#include "sswe/train.hpp"

namespace sswe {

void EmbeddingConfig::validate(Eigen::Index n) const {
  if (n < 5) throw std::invalid_argument("embed: need at least 5 points, got " + std::to_string(n));
  if (!(perplexity > 0.0) || !(perplexity < static_cast<double>(n - 1) / 3.0)) {
    throw std::invalid_argument("embed: perplexity " + std::to_string(perplexity) + " too large for " +
                                std::to_string(n) + " points (must be < (n-1)/3)");
  }
  if (iterations < 250) throw std::invalid_argument("embed: iterations must be >= 250");
  if (!(learning_rate > 0.0) || !(exaggeration >= 1.0)) throw std::invalid_argument("embed: bad step parameters");
  if (max_bisection_steps < 1 || !(entropy_tolerance > 0.0)) throw std::invalid_argument("embed: bad search parameters");
}

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x) {
  const Eigen::VectorXd norms = x.rowwise().squaredNorm();
  Eigen::MatrixXd d = (-2.0 * x * x.transpose()).colwise() + norms;
  d.rowwise() += norms.transpose();
  d = d.cwiseMax(0.0);
  d.diagonal().setZero();
  return d;
}

namespace {

// Entropy in bits of row i under bandwidth beta; fills `row` with the
// normalized affinities. Distances are offset by the row minimum so the
// largest weight is exp(0) and the sum never underflows.
double row_entropy(const Eigen::MatrixXd& d, Eigen::Index i, double d_min, double beta, Eigen::VectorXd& row) {
  const Eigen::Index n = d.rows();
  double z = 0.0, weighted = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j == i) {
      row[j] = 0.0;
      continue;
    }
    const double shifted = d(i, j) - d_min;
    row[j] = std::exp(-beta * shifted);
    z += row[j];
    weighted += shifted * row[j];
  }
  row /= z;
  return (std::log(z) + beta * weighted / z) / std::log(2.0);
}

}  // namespace

Eigen::MatrixXd conditional_affinities(const Eigen::MatrixXd& d, double perplexity, double tolerance, int max_steps,
                                       Eigen::VectorXd* beta_out, Eigen::VectorXd* entropy_out) {
  const Eigen::Index n = d.rows();
  const double target = std::log2(perplexity);
  // Upper bound on log(beta): beyond it the kernel is numerically a hard
  // nearest-neighbour assignment, which also covers duplicate points.
  constexpr double kMaxLogBeta = 700.0;
  Eigen::MatrixXd p(n, n);
  Eigen::VectorXd row(n);
  if (beta_out) beta_out->resize(n);
  if (entropy_out) entropy_out->resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double d_min = std::numeric_limits<double>::infinity(), d_sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      d_min = std::min(d_min, d(i, j));
      d_sum += d(i, j);
    }
    const double spread = d_sum / static_cast<double>(n - 1) - d_min;
    auto entropy_at = [&](double log_beta) { return row_entropy(d, i, d_min, std::exp(log_beta), row); };

    // Bracket the root in log(beta); entropy decreases with beta.
    double mid = spread > 0.0 ? -std::log(spread) : 0.0;
    double lo = mid, hi = mid;
    while (entropy_at(lo) < target) lo -= 2.0;
    while (hi < kMaxLogBeta && entropy_at(hi) > target) hi = std::min(hi + 2.0, kMaxLogBeta);

    double h = entropy_at(mid = 0.5 * (lo + hi));
    for (int step = 0; step < max_steps && std::abs(h - target) >= tolerance; ++step) {
      (h > target ? lo : hi) = mid;
      h = entropy_at(mid = 0.5 * (lo + hi));
    }
    p.row(i) = row.transpose();
    if (beta_out) (*beta_out)[i] = std::exp(mid);
    if (entropy_out) (*entropy_out)[i] = h;
  }
  return p;
}

Embedding embed(const Eigen::MatrixXd& features, const EmbeddingConfig& config) {
  const Eigen::Index n = features.rows();
  config.validate(n);
  Embedding out;
  out.conditional = conditional_affinities(squared_distances(features), config.perplexity, config.entropy_tolerance,
                                           config.max_bisection_steps, &out.beta, &out.entropy);
  Eigen::MatrixXd p = (out.conditional + out.conditional.transpose()) / (2.0 * static_cast<double>(n));
  p = p.cwiseMax(1e-12);
  p.diagonal().setZero();

  Rng rng(config.seed);
  Eigen::MatrixXd y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i, 0) = config.init_sigma * rng.normal();
    y(i, 1) = config.init_sigma * rng.normal();
  }
  Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(n, 2);
  Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);
  Eigen::MatrixXd num(n, n), grad(n, 2);
  out.kl.reserve(static_cast<std::size_t>(config.iterations));

  for (int it = 0; it < config.iterations; ++it) {
    const double exaggeration = it < config.exaggeration_iterations ? config.exaggeration : 1.0;
    const double momentum = it < config.momentum_switch ? config.initial_momentum : config.final_momentum;
    num = (1.0 + squared_distances(y).array()).inverse().matrix();
    num.diagonal().setZero();
    const double z = num.sum();
    // dC/dy_i = 4 sum_j (p_ij - q_ij) (1 + |y_i - y_j|^2)^-1 (y_i - y_j)
    const Eigen::MatrixXd w = ((exaggeration * p).array() - num.array() / z).matrix().cwiseProduct(num);
    grad = 4.0 * (w.rowwise().sum().asDiagonal() * y - w * y);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < 2; ++k) {
        const bool same_sign = (grad(i, k) > 0.0) == (velocity(i, k) > 0.0);
        gains(i, k) = std::max(same_sign ? gains(i, k) * 0.8 : gains(i, k) + 0.2, 0.01);
      }
    }
    velocity = momentum * velocity - config.learning_rate * gains.cwiseProduct(grad);
    y += velocity;
    y.rowwise() -= y.colwise().mean();

    num = (1.0 + squared_distances(y).array()).inverse().matrix();
    num.diagonal().setZero();
    const double z_new = num.sum();
    double kl = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (i != j) kl += p(i, j) * std::log(p(i, j) * z_new / num(i, j));
      }
    }
    out.kl.push_back(kl);
  }
  y.rowwise() -= y.colwise().mean();
  out.coords = std::move(y);
  return out;
}

Eigen::MatrixXd latent_features(const UNetParams<float>& params, std::span<const Sample> samples,
                                std::size_t batch_size) {
  const Shape expected = params.config.image_shape();
  const Shape latent = params.config.latent_shape();
  const Index d = shape_size(latent);
  Eigen::MatrixXd out(static_cast<Index>(samples.size()), d);
  Rng unused(0);
  for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
    const std::size_t end = std::min(samples.size(), begin + batch_size);
    std::vector<const Tensorf*> xs;
    for (std::size_t k = begin; k < end; ++k) {
      if (samples[k].bmode.shape() != expected) {
        throw ShapeError("latent_features: sample " + std::to_string(k) + " has shape " +
                         to_string(samples[k].bmode.shape()) + ", model expects " + to_string(expected));
      }
      xs.push_back(&samples[k].bmode);
    }
    const Tensorf z = encode(params, stack(xs), Mode::infer, unused);
    for (std::size_t k = begin; k < end; ++k) {
      out.row(static_cast<Index>(k)) =
          z.array().segment(static_cast<Index>(k - begin) * d, d).cast<double>().matrix().transpose();
    }
  }
  return out;
}

void write_embedding_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                         std::span<const std::string> domains, const Eigen::MatrixXd& coords) {
  const auto n = static_cast<std::size_t>(coords.rows());
  if (ids.size() != n || domains.size() != n || coords.cols() != 2) {
    throw ShapeError("write_embedding_csv: ids, domains and coordinates disagree in length");
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os.precision(17);
  os << "id,domain,x,y\n";
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Index>(i);
    os << ids[i] << ',' << domains[i] << ',' << coords(r, 0) << ',' << coords(r, 1) << '\n';
  }
  if (!os) throw DataError("short write to " + path.string());
}

void write_scatter(const std::filesystem::path& path, std::span<const std::string> domains,
                   const Eigen::MatrixXd& coords, Index size) {
  if (static_cast<Index>(domains.size()) != coords.rows() || coords.cols() != 2) {
    throw ShapeError("write_scatter: domains and coordinates disagree in length");
  }
  static constexpr Rgb kPalette[] = {{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {148, 103, 189}, {255, 127, 14}};
  std::map<std::string, std::size_t> colour;
  for (const auto& d : domains) colour.emplace(d, colour.size());

  std::vector<Rgb> pixels(static_cast<std::size_t>(size * size), Rgb{255, 255, 255});
  const Eigen::Vector2d lo = coords.colwise().minCoeff(), hi = coords.colwise().maxCoeff();
  const double span = std::max((hi - lo).maxCoeff(), 1e-12);
  const double margin = 4.0, scale = (static_cast<double>(size) - 1.0 - 2.0 * margin) / span;
  for (Index i = 0; i < coords.rows(); ++i) {
    const Rgb c = kPalette[colour[domains[static_cast<std::size_t>(i)]] % std::size(kPalette)];
    const auto cx = static_cast<Index>(std::lround(margin + (coords(i, 0) - lo[0]) * scale));
    const auto cy = static_cast<Index>(std::lround(static_cast<double>(size) - 1.0 - margin - (coords(i, 1) - lo[1]) * scale));
    for (Index dy = -1; dy <= 1; ++dy) {
      for (Index dx = -1; dx <= 1; ++dx) {
        const Index yy = cy + dy, xx = cx + dx;
        if (yy >= 0 && yy < size && xx >= 0 && xx < size) pixels[static_cast<std::size_t>(yy * size + xx)] = c;
      }
    }
  }
  write_ppm(path, size, size, pixels);
}

}  // namespace sswe
