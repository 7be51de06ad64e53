#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "trex/metrics.hpp"

namespace trex {

struct BoostingConfig {
  int n_trees = 400;
  int max_leaves = 16;
  double learning_rate = 0.05;
  int min_samples_per_leaf = 4;
  double subsample = 0.8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainingSet {
  std::vector<std::vector<double>> features;  // simplex points, length k each
  std::vector<double> targets;                // overall NSL, > 0

  std::size_t size() const { return targets.size(); }
  std::size_t dimension() const {
    return features.empty() ? 0 : features.front().size();
  }
};

// Least-squares gradient boosting with leaf-wise tree growth: each round fits
// one regression tree to the current residuals on a seeded subsample, splits
// chosen by maximum variance reduction. Tree structure is learned on the
// subsample; leaf values are refit on the full fit set, which keeps the
// training MSE non-increasing in the number of trees.
class RegressionModel {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  struct Tree {
    std::vector<Node> nodes;  // node 0 is the root
  };

  static RegressionModel fit(const TrainingSet& data,
                             const BoostingConfig& cfg);

  double predict(std::span<const double> w) const;
  std::vector<double> predict_batch(
      const std::vector<std::vector<double>>& rows) const;

  EvalReport evaluate(const TrainingSet& holdout) const;

  std::size_t dimension() const { return k_; }
  double base_prediction() const { return base_prediction_; }
  const std::vector<Tree>& trees() const { return trees_; }
  // Set when all fit targets were equal and the model degraded to a constant.
  bool constant_warning() const { return constant_warning_; }

  void save(const std::filesystem::path& path) const;
  static RegressionModel load(const std::filesystem::path& path);

 private:
  std::size_t k_ = 0;
  double base_prediction_ = 0.0;
  BoostingConfig cfg_;
  std::vector<Tree> trees_;
  bool constant_warning_ = false;
};

}  // namespace trex
