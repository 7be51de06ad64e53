#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "trex/bpe.hpp"
#include "trex/mixture.hpp"

namespace trex {

// One fleet measurement: mixture, training scale, per-language and weighted
// overall NSL against a fixed reference tokenizer.
struct CompressionRecord {
  Mixture mixture;
  std::uint64_t scale_bytes = 0;
  std::uint32_t scale_vocab = 0;
  std::map<std::string, double> per_language;
  double overall = 0.0;
  std::uint64_t reference_hash = 0;

  std::string to_json(const LanguageIndex& index) const;
  static CompressionRecord from_json(std::string_view text,
                                     const LanguageIndex& index);
};

struct EvalReport {
  double mape = 0.0;
  double spearman = 0.0;
  std::size_t n_points = 0;
};

// Normalized sequence length: total target tokens over total reference tokens
// on the same documents (sum of sums, not mean of per-document ratios).
// Below 1 means the target compresses better than the reference.
double nsl(const SubwordTokenizer& target, const SubwordTokenizer& reference,
           std::span<const std::string> test_docs);

// Weighted mean of per-language NSLs; weights are the per-language byte
// fractions of the test corpus.
double weighted_compression(const std::map<std::string, double>& per_language,
                            const std::map<std::string, double>& test_weights);

// 100 * mean(|pred - actual| / |actual|).
double mape(std::span<const double> predicted, std::span<const double> actual);

// Pearson correlation of fractional ranks; ties get average rank. Throws when
// either side has zero rank variance (correlation undefined).
double spearman(std::span<const double> xs, std::span<const double> ys);

}  // namespace trex
