#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "trex/corpus.hpp"
#include "trex/metrics.hpp"
#include "trex/mixture.hpp"
#include "trex/regressor.hpp"

namespace trex {

// Fleet exceeded its per-mixture failure budget. CLI maps this to exit 3.
class FleetFailureError : public std::runtime_error {
 public:
  explicit FleetFailureError(const std::string& msg)
      : std::runtime_error(msg) {}
};

struct ScaleConfig {
  std::uint64_t bytes = 0;
  std::uint32_t vocab = 0;
};

struct PipelineConfig {
  std::filesystem::path corpus_manifest;
  ScaleConfig proxy_scale{512 * 1024, 1024};
  ScaleConfig full_scale{4 * 1024 * 1024, 4096};
  std::size_t n_mixtures = 64;
  std::size_t fit_count = 48;
  std::size_t holdout_count = 16;
  DirichletConfig dirichlet;
  // The BoostingConfig defaults suit hundreds of fleet records; a 64-run
  // fleet needs a smaller, more regularized model to generalize from 48
  // fit rows. Leaves of at least 8 samples stop single lucky proxy runs
  // from carving out their own prediction pockets, and a short, fast
  // ensemble keeps the model from chasing residual noise.
  BoostingConfig boosting{.n_trees = 60, .max_leaves = 8,
                          .learning_rate = 0.10, .min_samples_per_leaf = 8};
  std::size_t search_candidates = 1'000'000;
  // Empty means "train-uniform": the reference is trained on the uniform
  // mixture at the evaluation scale.
  std::filesystem::path reference_tokenizer;
  unsigned jobs = 1;
  std::uint64_t master_seed = 0;
  std::filesystem::path out_dir = "out";
  double test_fraction = 0.005;

  void validate() const;
  static PipelineConfig from_json_file(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

struct SearchResult {
  Mixture best;
  double predicted = 0.0;
  std::vector<std::pair<Mixture, double>> top;  // best-first, default m=100
  std::size_t candidates_scanned = 0;
  double wall_seconds = 0.0;

  void save(const std::filesystem::path& path,
            const LanguageIndex& index) const;
};

struct RankInvarianceReport {
  std::vector<ScaleConfig> scales;
  std::vector<std::vector<double>> spearman_matrix;  // NaN = undefined cell
  std::vector<std::vector<double>> overall_nsl;      // [scale][mixture]

  void save(const std::filesystem::path& path) const;
};

struct CostEstimate {
  std::string name;
  double nsl = 0.0;
  double estimated_hours = 0.0;
};

struct CostReport {
  double baseline_hours = 0.0;
  double baseline_nsl = 0.0;
  std::string hardware;
  // Iteration count of the iterative-search baseline the report contrasts
  // against; informational only.
  int adaptmix_iterations = 20;
  std::vector<CostEstimate> estimates;

  void save(const std::filesystem::path& path) const;
};

struct FleetOutcome {
  std::vector<CompressionRecord> records;
  std::size_t failed = 0;
  std::vector<std::string> failures;  // "index: message"
};

// Loads the configured reference tokenizer, or trains one on the uniform
// mixture at the given scale when none is configured.
SubwordTokenizer resolve_reference(const PipelineConfig& cfg,
                                   const CorpusStore& corpus,
                                   const ScaleConfig& scale);

// Stage 1+2: sample N mixtures, train one proxy per mixture, measure NSL
// against the reference. Resumable: each finished mixture is persisted as
// out_dir/records/<index>.json and skipped on rerun. Throws FleetFailureError
// when more than 5% of mixtures fail.
FleetOutcome run_proxy_fleet(const PipelineConfig& cfg,
                             const CorpusStore& corpus,
                             const SubwordTokenizer& reference);

void write_records_csv(const std::filesystem::path& path,
                       const std::vector<CompressionRecord>& records,
                       const LanguageIndex& index);
std::vector<CompressionRecord> read_records_csv(
    const std::filesystem::path& path, const LanguageIndex& index);

// Stage 3: seeded fit/holdout split, fit, evaluate.
std::pair<RegressionModel, EvalReport> fit_and_evaluate(
    const std::vector<CompressionRecord>& records, const PipelineConfig& cfg);

// Stage 4: stream search_candidates mixtures through the model and keep the
// minimum plus the top-m. Ties resolve to the first candidate in stream
// order, and the result is independent of the parallelism degree.
SearchResult search(const RegressionModel& model, const PipelineConfig& cfg,
                    const CorpusStore& corpus, std::size_t top_m = 100);

// Full-scale training of one mixture plus its evaluation record.
std::pair<SubwordTokenizer, CompressionRecord> train_full(
    const Mixture& w, const PipelineConfig& cfg, const CorpusStore& corpus,
    const SubwordTokenizer& reference);

// Builds one CompressionRecord for an already-trained tokenizer.
CompressionRecord evaluate_tokenizer(const SubwordTokenizer& tokenizer,
                                     const Mixture& w,
                                     const ScaleConfig& scale,
                                     const CorpusStore& corpus,
                                     const SubwordTokenizer& reference);

// Trains every mixture at every scale and fills the pairwise Spearman matrix
// of overall-NSL vectors.
RankInvarianceReport analyze_rank_invariance(
    const std::vector<Mixture>& mixtures,
    const std::vector<ScaleConfig>& scale_grid, const PipelineConfig& cfg,
    const CorpusStore& corpus);

// Linear-in-tokens cost model: hours_i = baseline_hours * nsl_i / baseline_nsl.
CostReport estimate_cost(double baseline_hours, double baseline_nsl,
                         const std::vector<std::pair<std::string, double>>& nsls,
                         std::string hardware = "32x H100");

struct EntropyRow {
  std::size_t id;
  double entropy;
  double overall_nsl;
};
std::vector<EntropyRow> analyze_entropy(
    const std::vector<CompressionRecord>& records);
void write_entropy_csv(const std::filesystem::path& path,
                       const std::vector<EntropyRow>& rows);

// Runs fn(0..n) across `jobs` workers; the first stored exception rethrows.
void parallel_for(std::size_t n, unsigned jobs,
                  const std::function<void(std::size_t)>& fn);

}  // namespace trex
