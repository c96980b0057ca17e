#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sswe/dataio.hpp"
#include "sswe/unet.hpp"

namespace sswe {

struct EmbeddingConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double exaggeration = 12.0;
  int exaggeration_iterations = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch = 250;
  double init_sigma = 1e-4;
  double entropy_tolerance = 1e-5;  // bits
  int max_bisection_steps = 50;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument; `n` is the number of points to embed.
  void validate(Eigen::Index n) const;
};

struct Embedding {
  Eigen::MatrixXd coords;       // n x 2, centred
  Eigen::MatrixXd conditional;  // row i is p(j | i)
  Eigen::VectorXd beta;         // 1 / (2 sigma_i^2)
  Eigen::VectorXd entropy;      // bits, per point
  std::vector<double> kl;       // KL(P || Q) after each iteration
};

/// Squared Euclidean distances between the rows of `x`.
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x);

/// Per-point conditional affinities with entropy log2(perplexity). Writes the
/// bandwidths and achieved entropies when the outputs are non-null.
Eigen::MatrixXd conditional_affinities(const Eigen::MatrixXd& sq_dist, double perplexity, double tolerance,
                                       int max_steps, Eigen::VectorXd* beta = nullptr,
                                       Eigen::VectorXd* entropy = nullptr);

/// Exact t-SNE of the rows of `features` into two dimensions.
Embedding embed(const Eigen::MatrixXd& features, const EmbeddingConfig& config);

/// Flattened infer-mode latent activations, one row per sample.
Eigen::MatrixXd latent_features(const UNetParams<float>& params, std::span<const Sample> samples,
                                std::size_t batch_size = 32);

/// Delimited text with header "id,domain,x,y".
void write_embedding_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                         std::span<const std::string> domains, const Eigen::MatrixXd& coords);

/// Square scatter plot, one colour per distinct domain label.
void write_scatter(const std::filesystem::path& path, std::span<const std::string> domains,
                   const Eigen::MatrixXd& coords, Index size = 256);

}  // namespace sswe
