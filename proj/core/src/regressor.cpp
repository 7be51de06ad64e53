#include "trex/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "trex/common.hpp"
#include <json.hpp>

namespace trex {

void BoostingConfig::validate() const {
  if (n_trees < 0) throw ValidationError("n_trees must be >= 0");
  if (max_leaves < 2) throw ValidationError("max_leaves must be >= 2");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw ValidationError("learning_rate must be in (0, 1]");
  }
  if (min_samples_per_leaf < 1) {
    throw ValidationError("min_samples_per_leaf must be >= 1");
  }
  if (!(subsample > 0.0 && subsample <= 1.0)) {
    throw ValidationError("subsample must be in (0, 1]");
  }
}

namespace {

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

// Best variance-reduction split of `rows` (indices into the subsample view),
// honoring min_samples_per_leaf on both sides. Deterministic: features in
// order, strictly-greater gain wins.
SplitChoice best_split(const std::vector<std::vector<double>>& features,
                       const std::vector<double>& residuals,
                       const std::vector<std::size_t>& rows, std::size_t k,
                       int min_samples) {
  SplitChoice best;
  const std::size_t n = rows.size();
  if (n < 2 * static_cast<std::size_t>(min_samples)) return best;
  double total_sum = 0.0;
  for (std::size_t r : rows) total_sum += residuals[r];

  std::vector<std::size_t> order(rows);
  for (std::size_t f = 0; f < k; ++f) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return features[a][f] < features[b][f];
                     });
    double left_sum = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      left_sum += residuals[order[i]];
      const std::size_t nl = i + 1;
      const std::size_t nr = n - nl;
      if (nl < static_cast<std::size_t>(min_samples)) continue;
      if (nr < static_cast<std::size_t>(min_samples)) break;
      const double lo = features[order[i]][f];
      const double hi = features[order[i + 1]][f];
      if (lo == hi) continue;  // cannot separate equal values
      const double right_sum = total_sum - left_sum;
      // Variance reduction up to constants: sum^2/n of children minus parent.
      const double gain = left_sum * left_sum / static_cast<double>(nl) +
                          right_sum * right_sum / static_cast<double>(nr) -
                          total_sum * total_sum / static_cast<double>(n);
      if (gain > best.gain) {
        best = {static_cast<int>(f), 0.5 * (lo + hi), gain};
      }
    }
  }
  return best;
}

struct LeafState {
  int node = -1;
  std::vector<std::size_t> rows;
  SplitChoice split;
};

}  // namespace

RegressionModel RegressionModel::fit(const TrainingSet& data,
                                     const BoostingConfig& cfg) {
  cfg.validate();
  const std::size_t n = data.size();
  const std::size_t min_rows =
      std::max<std::size_t>(2 * static_cast<std::size_t>(cfg.min_samples_per_leaf), 16);
  if (n < min_rows) {
    throw ValidationError("fit split needs at least " +
                          std::to_string(min_rows) + " rows, got " +
                          std::to_string(n));
  }
  const std::size_t k = data.dimension();
  for (const auto& row : data.features) {
    if (row.size() != k) throw ValidationError("ragged feature matrix");
  }
  for (double t : data.targets) {
    if (!(t > 0.0)) throw ValidationError("targets must be positive");
  }

  RegressionModel model;
  model.k_ = k;
  model.cfg_ = cfg;
  model.base_prediction_ =
      std::accumulate(data.targets.begin(), data.targets.end(), 0.0) /
      static_cast<double>(n);

  const auto [tmin, tmax] =
      std::minmax_element(data.targets.begin(), data.targets.end());
  if (*tmin == *tmax) {
    model.constant_warning_ = true;
    return model;
  }

  std::vector<double> residuals(n);
  for (std::size_t i = 0; i < n; ++i) {
    residuals[i] = data.targets[i] - model.base_prediction_;
  }

  const auto sample_size = std::max<std::size_t>(
      static_cast<std::size_t>(cfg.subsample * static_cast<double>(n)),
      2 * static_cast<std::size_t>(cfg.min_samples_per_leaf));
  std::vector<std::size_t> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), 0);

  for (int t = 0; t < cfg.n_trees; ++t) {
    std::vector<std::size_t> sample = all_rows;
    if (sample_size < n) {
      std::mt19937_64 rng(derive_seed(cfg.seed, "boost_subsample",
                                      static_cast<std::uint64_t>(t)));
      std::shuffle(sample.begin(), sample.end(), rng);
      sample.resize(sample_size);
      std::sort(sample.begin(), sample.end());
    }

    Tree tree;
    tree.nodes.push_back(Node{});
    std::vector<LeafState> leaves;
    leaves.push_back({0, sample, best_split(data.features, residuals, sample,
                                            k, cfg.min_samples_per_leaf)});

    while (static_cast<int>(leaves.size()) < cfg.max_leaves) {
      // Leaf-wise growth: split the leaf with the largest gain.
      std::size_t best_leaf = leaves.size();
      double best_gain = 0.0;
      for (std::size_t li = 0; li < leaves.size(); ++li) {
        if (leaves[li].split.gain > best_gain) {
          best_gain = leaves[li].split.gain;
          best_leaf = li;
        }
      }
      if (best_leaf == leaves.size()) break;

      LeafState leaf = std::move(leaves[best_leaf]);
      leaves.erase(leaves.begin() + static_cast<std::ptrdiff_t>(best_leaf));

      LeafState left, right;
      for (std::size_t r : leaf.rows) {
        if (data.features[r][static_cast<std::size_t>(leaf.split.feature)] <=
            leaf.split.threshold) {
          left.rows.push_back(r);
        } else {
          right.rows.push_back(r);
        }
      }
      auto& parent = tree.nodes[static_cast<std::size_t>(leaf.node)];
      parent.feature = leaf.split.feature;
      parent.threshold = leaf.split.threshold;
      parent.left = static_cast<int>(tree.nodes.size());
      parent.right = static_cast<int>(tree.nodes.size() + 1);
      left.node = parent.left;
      right.node = parent.right;
      tree.nodes.push_back(Node{});
      tree.nodes.push_back(Node{});
      left.split = best_split(data.features, residuals, left.rows, k,
                              cfg.min_samples_per_leaf);
      right.split = best_split(data.features, residuals, right.rows, k,
                               cfg.min_samples_per_leaf);
      leaves.push_back(std::move(left));
      leaves.push_back(std::move(right));
    }

    if (tree.nodes.size() == 1) break;  // nothing splittable anymore

    // Refit leaf values on the full fit set so every boosting round shrinks
    // residuals toward zero on the data the loss is measured on.
    std::vector<double> leaf_sum(tree.nodes.size(), 0.0);
    std::vector<std::size_t> leaf_count(tree.nodes.size(), 0);
    std::vector<int> assigned(n);
    for (std::size_t i = 0; i < n; ++i) {
      int node = 0;
      while (tree.nodes[static_cast<std::size_t>(node)].feature >= 0) {
        const auto& nd = tree.nodes[static_cast<std::size_t>(node)];
        node = data.features[i][static_cast<std::size_t>(nd.feature)] <=
                       nd.threshold
                   ? nd.left
                   : nd.right;
      }
      assigned[i] = node;
      leaf_sum[static_cast<std::size_t>(node)] += residuals[i];
      ++leaf_count[static_cast<std::size_t>(node)];
    }
    for (std::size_t ni = 0; ni < tree.nodes.size(); ++ni) {
      if (tree.nodes[ni].feature < 0 && leaf_count[ni] > 0) {
        tree.nodes[ni].value = leaf_sum[ni] / static_cast<double>(leaf_count[ni]);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      residuals[i] -= cfg.learning_rate *
                      tree.nodes[static_cast<std::size_t>(assigned[i])].value;
    }
    model.trees_.push_back(std::move(tree));
  }
  return model;
}

double RegressionModel::predict(std::span<const double> w) const {
  if (w.size() != k_) {
    throw ValidationError("predict: expected " + std::to_string(k_) +
                          " features, got " + std::to_string(w.size()));
  }
  double sum = 0.0;
  for (const auto& tree : trees_) {
    int node = 0;
    while (tree.nodes[static_cast<std::size_t>(node)].feature >= 0) {
      const auto& nd = tree.nodes[static_cast<std::size_t>(node)];
      node = w[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left
                                                                     : nd.right;
    }
    sum += tree.nodes[static_cast<std::size_t>(node)].value;
  }
  return base_prediction_ + cfg_.learning_rate * sum;
}

std::vector<double> RegressionModel::predict_batch(
    const std::vector<std::vector<double>>& rows) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) out.push_back(predict(row));
  return out;
}

EvalReport RegressionModel::evaluate(const TrainingSet& holdout) const {
  if (holdout.size() < 2) {
    throw ValidationError("evaluate: holdout needs at least 2 rows");
  }
  const auto preds = predict_batch(holdout.features);
  EvalReport report;
  report.n_points = holdout.size();
  report.mape = mape(preds, holdout.targets);
  report.spearman = spearman(preds, holdout.targets);
  return report;
}

void RegressionModel::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["k"] = k_;
  j["hyperparameters"] = {{"n_trees", cfg_.n_trees},
                          {"max_leaves", cfg_.max_leaves},
                          {"learning_rate", cfg_.learning_rate},
                          {"min_samples_per_leaf", cfg_.min_samples_per_leaf},
                          {"subsample", cfg_.subsample},
                          {"seed", cfg_.seed}};
  j["base_prediction"] = base_prediction_;
  j["constant_warning"] = constant_warning_;
  nlohmann::ordered_json trees = nlohmann::ordered_json::array();
  for (const auto& tree : trees_) {
    nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
    for (const auto& nd : tree.nodes) {
      nodes.push_back({{"feature", nd.feature},
                       {"threshold", nd.threshold},
                       {"left", nd.left},
                       {"right", nd.right},
                       {"value", nd.value}});
    }
    trees.push_back({{"nodes", nodes}});
  }
  j["trees"] = trees;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write model: " + path.string());
  out << j.dump() << "\n";
}

RegressionModel RegressionModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open model: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model file: ") + e.what());
  }
  if (!j.contains("version") || !j["version"].is_number_integer()) {
    throw ParseError("model file: missing 'version'");
  }
  if (j["version"].get<int>() != 1) {
    throw ParseError("model file: unsupported version " + j["version"].dump());
  }
  RegressionModel model;
  model.k_ = j.at("k").get<std::size_t>();
  const auto& hp = j.at("hyperparameters");
  model.cfg_.n_trees = hp.at("n_trees").get<int>();
  model.cfg_.max_leaves = hp.at("max_leaves").get<int>();
  model.cfg_.learning_rate = hp.at("learning_rate").get<double>();
  model.cfg_.min_samples_per_leaf = hp.at("min_samples_per_leaf").get<int>();
  model.cfg_.subsample = hp.at("subsample").get<double>();
  model.cfg_.seed = hp.at("seed").get<std::uint64_t>();
  model.base_prediction_ = j.at("base_prediction").get<double>();
  model.constant_warning_ = j.value("constant_warning", false);
  for (const auto& tj : j.at("trees")) {
    Tree tree;
    for (const auto& nj : tj.at("nodes")) {
      Node nd;
      nd.feature = nj.at("feature").get<int>();
      nd.threshold = nj.at("threshold").get<double>();
      nd.left = nj.at("left").get<int>();
      nd.right = nj.at("right").get<int>();
      nd.value = nj.at("value").get<double>();
      if (nd.feature >= static_cast<int>(model.k_)) {
        throw ParseError("model file: node feature index out of range");
      }
      tree.nodes.push_back(nd);
    }
    if (tree.nodes.empty()) throw ParseError("model file: empty tree");
    model.trees_.push_back(std::move(tree));
  }
  return model;
}

}  // namespace trex
