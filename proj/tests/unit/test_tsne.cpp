#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "sswe/rng.hpp"
#include "sswe/tsne.hpp"

namespace sswe {
namespace {

// Two isotropic 10-D Gaussian clusters (sigma 1) whose means are `separation` apart.
Eigen::MatrixXd two_clusters(Eigen::Index n, double separation, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(n, 10);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index d = 0; d < 10; ++d) x(i, d) = rng.normal();
    if (i >= n / 2) x(i, 0) += separation;
  }
  return x;
}

// Mean silhouette with Euclidean distances and labels i < n/2 -> 0, else 1.
double silhouette(const Eigen::MatrixXd& y) {
  const Eigen::Index n = y.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double own = 0.0, other = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = (y.row(i) - y.row(j)).norm();
      ((i < n / 2) == (j < n / 2) ? own : other) += d;
    }
    own /= static_cast<double>(n / 2 - 1);
    other /= static_cast<double>(n / 2);
    total += (other - own) / std::max(own, other);
  }
  return total / static_cast<double>(n);
}

TEST(Tsne, SilhouetteOracleSanity) {
  Eigen::MatrixXd y(4, 2);
  y << 0, 0, 0, 1, 10, 0, 10, 1;
  // Every point: a = 1, b = (10 + sqrt(101)) / 2.
  EXPECT_NEAR(silhouette(y), 1.0 - 2.0 / (10.0 + std::sqrt(101.0)), 1e-12);
}

TEST(Tsne, SquaredDistances) {
  Eigen::MatrixXd x(3, 2);
  x << 0, 0, 3, 4, 1, 1;
  const Eigen::MatrixXd d = squared_distances(x);
  EXPECT_DOUBLE_EQ(d(0, 1), 25.0);
  EXPECT_DOUBLE_EQ(d(1, 0), 25.0);
  EXPECT_DOUBLE_EQ(d(2, 2), 0.0);
  EXPECT_DOUBLE_EQ(d(1, 2), 13.0);
}

TEST(Tsne, ConditionalRowsNormalizedAndEntropyOnTarget) {
  const Eigen::MatrixXd x = two_clusters(100, 10.0, 1);
  Eigen::VectorXd beta, entropy;
  const Eigen::MatrixXd p = conditional_affinities(squared_distances(x), 30.0, 1e-5, 50, &beta, &entropy);
  for (Eigen::Index i = 0; i < 100; ++i) {
    EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-9);
    EXPECT_EQ(p(i, i), 0.0);
    // Independent entropy oracle from the returned row.
    double h = 0.0;
    for (Eigen::Index j = 0; j < 100; ++j) {
      if (p(i, j) > 0) h -= p(i, j) * std::log2(p(i, j));
    }
    EXPECT_NEAR(h, std::log2(30.0), 1e-5) << i;
    EXPECT_NEAR(entropy(i), h, 1e-9);
    EXPECT_GT(beta(i), 0.0);
  }
}

TEST(Tsne, DuplicatePointsStillReachTheEntropyTarget) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(20, 3);
  for (Eigen::Index i = 10; i < 20; ++i) x(i, 0) = static_cast<double>(i);
  Eigen::VectorXd entropy;
  const Eigen::MatrixXd p = conditional_affinities(squared_distances(x), 5.0, 1e-5, 50, nullptr, &entropy);
  for (Eigen::Index i = 0; i < 20; ++i) {
    EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-9);
    EXPECT_TRUE(p.row(i).allFinite());
  }
}

TEST(Tsne, TwoClusterBenchmarkSeparates) {
  const Eigen::MatrixXd x = two_clusters(100, 10.0, 2);
  EmbeddingConfig c;
  c.seed = 3;
  const Embedding e = embed(x, c);
  ASSERT_EQ(e.coords.rows(), 100);
  ASSERT_EQ(e.coords.cols(), 2);
  EXPECT_GT(silhouette(e.coords), 0.5);
  EXPECT_LT(std::abs(e.coords.col(0).mean()), 1e-6);
  EXPECT_LT(std::abs(e.coords.col(1).mean()), 1e-6);
  for (Eigen::Index i = 0; i < 100; ++i) {
    EXPECT_NEAR(e.conditional.row(i).sum(), 1.0, 1e-9);
    EXPECT_NEAR(e.entropy(i), std::log2(30.0), 1e-5);
  }
  EXPECT_EQ(e.kl.size(), 1000u);
}

TEST(Tsne, KlDescendsAtTheEndOfMostRuns) {
  // Momentum leaves ripples of ~1e-7 relative near convergence; those count
  // as non-increasing, a genuine rebound does not.
  int descending = 0;
  const int runs = 20;
  for (int s = 0; s < runs; ++s) {
    const Eigen::MatrixXd x = two_clusters(100, 10.0, 100 + s);
    EmbeddingConfig c;
    c.seed = static_cast<std::uint64_t>(s);
    const std::vector<double> kl = embed(x, c).kl;
    bool ok = true;
    for (std::size_t i = kl.size() - 100; i < kl.size(); ++i) ok = ok && kl[i] <= kl[i - 1] * (1.0 + 1e-6);
    descending += ok;
  }
  EXPECT_GE(descending, 19);  // at least 95 %
}

TEST(Tsne, SameSeedSameEmbedding) {
  const Eigen::MatrixXd x = two_clusters(30, 5.0, 4);
  EmbeddingConfig c;
  c.perplexity = 5.0;
  c.iterations = 300;
  c.seed = 9;
  EXPECT_EQ(embed(x, c).coords, embed(x, c).coords);
  c.seed = 10;
  const Embedding other = embed(x, c);
  c.seed = 9;
  EXPECT_NE(other.coords, embed(x, c).coords);
}

TEST(Tsne, RejectsTooFewPointsForPerplexity) {
  EmbeddingConfig c;
  EXPECT_THROW(embed(two_clusters(40, 5.0, 5), c), std::invalid_argument);  // 30 >= 39/3
  EXPECT_THROW(c.validate(4), std::invalid_argument);
  c.perplexity = 5.0;
  c.iterations = 100;
  EXPECT_THROW(c.validate(100), std::invalid_argument);
}

TEST(Tsne, LatentFeaturesShapeAndRows) {
  NetConfig nc;
  Rng rng(6);
  const auto params = build<float>(nc, rng);
  Sample s;
  s.bmode = uniform<float>(rng, {1, 64, 96}, 0.0f, 1.0f);
  s.elasticity = s.confidence = Tensorf({1, 64, 96});
  std::vector<Sample> samples{s, s, s};
  samples[2].bmode = uniform<float>(rng, {1, 64, 96}, 0.0f, 1.0f);
  const Eigen::MatrixXd f = latent_features(params, samples, 2);
  EXPECT_EQ(f.rows(), 3);
  EXPECT_EQ(f.cols(), 12288);
  EXPECT_EQ(f.row(0), f.row(1));
  EXPECT_NE(f.row(0), f.row(2));
  samples[1].bmode = Tensorf({1, 32, 96});
  EXPECT_THROW(latent_features(params, samples), ShapeError);
}

TEST(Tsne, CsvAndScatterFiles) {
  const auto dir = std::filesystem::temp_directory_path() / ("sswe_tsne_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  Eigen::MatrixXd y(2, 2);
  y << 0.5, -1.0, -0.5, 1.0;
  const std::vector<std::string> ids{"a", "b"}, domains{"prostate", "thyroid"};
  write_embedding_csv(dir / "e.csv", ids, domains, y);
  std::ifstream is(dir / "e.csv");
  std::string header, first;
  std::getline(is, header);
  std::getline(is, first);
  EXPECT_EQ(header, "id,domain,x,y");
  EXPECT_EQ(first.substr(0, 11), "a,prostate,");
  write_scatter(dir / "s.ppm", domains, y, 64);
  EXPECT_GT(std::filesystem::file_size(dir / "s.ppm"), 64u * 64u * 3u);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace sswe
