#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace trex {

struct TokenizerMetadata {
  std::uint64_t mixture_hash = 0;
  std::uint64_t corpus_bytes = 0;
  std::uint64_t seed = 0;
};

struct TokenSequence {
  std::vector<std::uint32_t> ids;
  std::size_t source_bytes = 0;
};

// Splits text into pre-tokens whose concatenation reproduces the input
// byte-exactly. A single trailing U+0020 of a whitespace run attaches to the
// following word; the rest of the run forms its own pre-token. Merges never
// cross pre-token boundaries.
std::vector<std::string_view> pretokenize(std::string_view text);

// Byte-level BPE: ids 0-255 are the single bytes, each merge appends one
// token whose byte sequence is the concatenation of its two parts.
class SubwordTokenizer {
 public:
  using MergePair = std::pair<std::uint32_t, std::uint32_t>;

  // Greedy trainer: repeatedly merges the globally most frequent adjacent
  // pair, ties broken by lexicographically smaller byte sequences (left,
  // then right). Stops early when no pair occurs at least twice.
  static SubwordTokenizer train(std::string_view text, std::size_t vocab_size,
                                const TokenizerMetadata& meta = {});

  std::size_t vocab_size() const { return 256 + merges_.size(); }
  std::size_t requested_vocab_size() const { return requested_vocab_; }
  bool stopped_early() const { return vocab_size() < requested_vocab_; }
  const std::vector<MergePair>& merges() const { return merges_; }
  const std::string& token_bytes(std::uint32_t id) const;
  const TokenizerMetadata& metadata() const { return meta_; }

  TokenSequence encode(std::string_view text) const;
  std::string decode(std::span<const std::uint32_t> ids) const;

  void save(const std::filesystem::path& path) const;
  static SubwordTokenizer load(const std::filesystem::path& path);

  // Content hash over the merge list; identifies the reference tokenizer in
  // compression records.
  std::uint64_t hash() const;

 private:
  SubwordTokenizer(std::vector<MergePair> merges, std::size_t requested,
                   TokenizerMetadata meta);

  std::vector<MergePair> merges_;
  std::vector<std::string> vocab_bytes_;  // id -> byte sequence
  struct PairHash {
    std::size_t operator()(const MergePair& p) const {
      return std::hash<std::uint64_t>()(
          (static_cast<std::uint64_t>(p.first) << 32) | p.second);
    }
  };
  std::unordered_map<MergePair, std::uint32_t, PairHash> merge_rank_;
  std::size_t requested_vocab_ = 0;
  TokenizerMetadata meta_;
};

}  // namespace trex
