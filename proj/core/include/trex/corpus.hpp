#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "trex/mixture.hpp"

namespace trex {

enum class Split : std::uint8_t { kUnassigned = 0, kTrain = 1, kTest = 2 };

struct IngestReport {
  std::size_t documents = 0;
  std::size_t skipped_invalid_utf8 = 0;
  std::vector<std::string> skipped_locations;  // "file:line"
};

// Language-tagged document collection. Documents are whole lines; each one
// belongs to exactly one language and, after split_corpus, one split.
class CorpusStore {
 public:
  struct LanguageData {
    std::vector<std::string> docs;
    std::vector<Split> split;  // parallel to docs
    std::uint64_t total_bytes = 0;
  };

  explicit CorpusStore(LanguageIndex index);

  const LanguageIndex& index() const { return index_; }
  const LanguageData& language(std::size_t i) const { return langs_.at(i); }
  std::size_t document_count() const;
  std::uint64_t manifest_checksum() const { return checksum_; }
  bool has_split() const { return has_split_; }

  std::vector<double> language_byte_sizes() const;
  // Byte counts restricted to one split.
  std::vector<std::uint64_t> split_bytes(Split s) const;
  // Per-language byte fraction of the test split (the NSL aggregation weights).
  std::vector<double> test_byte_fractions() const;
  std::vector<std::string> test_documents(std::size_t lang) const;

  friend CorpusStore ingest(
      const std::vector<std::pair<std::string, std::filesystem::path>>& paths,
      const LanguageIndex& index, IngestReport* report);
  friend CorpusStore split_corpus(const CorpusStore& store,
                                  double test_fraction, std::uint64_t seed);

 private:
  LanguageIndex index_;
  std::vector<LanguageData> langs_;
  std::uint64_t checksum_ = 0;
  bool has_split_ = false;
};

// Loads newline-delimited UTF-8 documents, one file per language tag. Blank
// lines are skipped; invalid UTF-8 lines are skipped and reported.
CorpusStore ingest(
    const std::vector<std::pair<std::string, std::filesystem::path>>& paths,
    const LanguageIndex& index, IngestReport* report = nullptr);

// Assigns ~test_fraction of each language's bytes to the test split by whole
// documents, at least one per language. Deterministic per seed.
CorpusStore split_corpus(const CorpusStore& store, double test_fraction,
                         std::uint64_t seed);

struct MaterializedSubset {
  struct DocRef {
    std::uint32_t lang;
    std::uint32_t doc;
  };
  std::vector<DocRef> docs;
  std::vector<std::uint64_t> realized_bytes;  // per language
  std::vector<bool> shortfall;                // target exceeded train bytes
  Mixture mixture;
  std::uint64_t budget_bytes;

  // Concatenated training text, one document per line.
  std::string concatenated(const CorpusStore& store) const;
};

// Draws train-split documents per language (seeded shuffle, whole documents)
// until each w_i * budget target is met. Languages whose target is smaller
// than their smallest document contribute nothing; languages that run out of
// train bytes are flagged as shortfalls, not errors.
MaterializedSubset materialize(const CorpusStore& store, const Mixture& w,
                               std::uint64_t budget_bytes, std::uint64_t seed);

// Corpus manifest (JSON): language tags, file paths, counts, split settings.
struct CorpusManifest {
  std::vector<std::string> tags;
  std::vector<std::filesystem::path> files;
  std::vector<std::uint64_t> doc_counts;
  std::vector<std::uint64_t> byte_counts;
  double test_fraction = 0.0;  // 0 = unsplit
  std::uint64_t split_seed = 0;
  std::uint64_t checksum = 0;

  void save(const std::filesystem::path& path) const;
  static CorpusManifest load(const std::filesystem::path& path);
};

// Loads the corpus a manifest describes and re-applies its split (if any).
CorpusStore load_corpus(const CorpusManifest& manifest);

bool valid_utf8(std::string_view s);

// Synthetic test corpus: each "language" draws from a distinct codepoint
// inventory with its own lexicon size and word-length profile, so languages
// have genuinely different compressibility. Writes one text file per language
// plus a manifest.
CorpusManifest generate_synthetic_corpus(const std::filesystem::path& out_dir,
                                         std::size_t k,
                                         std::uint64_t bytes_per_lang,
                                         std::uint64_t seed);

}  // namespace trex
