#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace trex {

// Fixes the correspondence between mixture positions and language corpora.
// Order is immutable after construction.
class LanguageIndex {
 public:
  explicit LanguageIndex(std::vector<std::string> tags);

  std::size_t size() const { return tags_.size(); }
  const std::string& tag(std::size_t i) const { return tags_.at(i); }
  const std::vector<std::string>& tags() const { return tags_; }
  std::optional<std::size_t> find(std::string_view tag) const;

  bool operator==(const LanguageIndex& other) const {
    return tags_ == other.tags_;
  }

 private:
  std::vector<std::string> tags_;
};

// A point on the k-dimensional probability simplex. Construction renormalizes
// (sums from file input rarely hit 1 exactly), then asserts the invariants.
class Mixture {
 public:
  explicit Mixture(std::vector<double> weights);

  static Mixture uniform(std::size_t k);

  std::size_t size() const { return weights_.size(); }
  double operator[](std::size_t i) const { return weights_[i]; }
  std::span<const double> weights() const { return weights_; }

  // Hash over the 6-decimal serialized form; used as the fleet resume key.
  std::uint64_t hash() const;

  // JSON object {language_tag: weight}; writing emits 6-decimal weights in
  // index order, reading accepts any order and renormalizes.
  std::string to_json(const LanguageIndex& index) const;
  static Mixture from_json(std::string_view json_text,
                           const LanguageIndex& index);

 private:
  std::vector<double> weights_;
};

struct DirichletConfig {
  // Mildly concentrated by default: alpha around 2.5 per language keeps the
  // sampled mixtures spread over the simplex while making draws that starve
  // a language to a few percent rare, which small proxy runs cannot measure
  // reliably anyway.
  double base_concentration = 2.5;
  bool size_weighting = true;
  std::uint64_t seed = 0;
};

// Dirichlet concentrations: proportional to per-language byte counts when
// size weighting is on (floored at 1e-6 of the total so tiny languages keep
// positive mass), uniform otherwise; normalized to sum to k and scaled by
// base_concentration.
std::vector<double> dirichlet_alphas(const std::vector<double>& sizes,
                                     const DirichletConfig& cfg);

std::vector<Mixture> sample_mixtures(const LanguageIndex& index,
                                     const std::vector<double>& sizes,
                                     const DirichletConfig& cfg, std::size_t n);

// Deterministic candidate stream for the search stage: a 50/50 blend of
// size-weighted and uniform Dirichlet draws, generated in fixed-size chunks
// so parallel consumers see the same candidates regardless of worker count.
class CandidateStream {
 public:
  static constexpr std::size_t kChunkSize = 8192;

  CandidateStream(const LanguageIndex& index, std::vector<double> sizes,
                  std::size_t n, std::uint64_t seed);

  std::size_t total() const { return n_; }
  std::size_t chunk_count() const;
  // Candidates for chunk `ci`, paired with their global stream indices.
  std::vector<std::pair<std::size_t, Mixture>> chunk(std::size_t ci) const;

 private:
  std::size_t k_;
  std::vector<double> sized_alphas_;
  std::vector<double> uniform_alphas_;
  std::size_t n_;
  std::uint64_t seed_;
};

// Shannon entropy of the weights normalized by log(k): 1 at the uniform
// mixture, 0 at a single-language vertex. 0*log 0 counts as 0.
double mixture_entropy(const Mixture& w);

}  // namespace trex
