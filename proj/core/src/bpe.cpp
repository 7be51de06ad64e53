#include "trex/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <queue>

#include "trex/common.hpp"
#include <json.hpp>

namespace trex {

namespace {

bool is_unicode_space(std::uint32_t cp) {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

// Returns the codepoint starting at s[i] and advances i. Invalid sequences
// are consumed one byte at a time and treated as non-space.
std::uint32_t next_codepoint(std::string_view s, std::size_t& i) {
  unsigned char c = static_cast<unsigned char>(s[i]);
  std::size_t len = 1;
  std::uint32_t cp = c;
  if ((c & 0xE0) == 0xC0) { len = 2; cp = c & 0x1F; }
  else if ((c & 0xF0) == 0xE0) { len = 3; cp = c & 0x0F; }
  else if ((c & 0xF8) == 0xF0) { len = 4; cp = c & 0x07; }
  if (len > 1) {
    if (i + len > s.size()) { ++i; return c; }
    for (std::size_t j = 1; j < len; ++j) {
      unsigned char cc = static_cast<unsigned char>(s[i + j]);
      if ((cc & 0xC0) != 0x80) { ++i; return c; }
      cp = (cp << 6) | (cc & 0x3F);
    }
  }
  i += len;
  return cp;
}

}  // namespace

std::vector<std::string_view> pretokenize(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  std::size_t ws_start = 0;   // start of current whitespace run
  std::size_t word_start = 0; // start of current word (when in_word)
  bool in_word = false;
  bool last_was_plain_space = false;  // run's final codepoint was U+0020
  while (i < text.size()) {
    const std::size_t start = i;
    const std::uint32_t cp = next_codepoint(text, i);
    const bool space = is_unicode_space(cp);
    if (in_word) {
      if (space) {
        out.push_back(text.substr(word_start, start - word_start));
        in_word = false;
        ws_start = start;
        last_was_plain_space = (cp == 0x20);
      }
    } else {
      if (space) {
        last_was_plain_space = (cp == 0x20);
      } else {
        // End of whitespace run: attach a single trailing plain space to the
        // word; any remaining whitespace stands alone.
        std::size_t attach = start;
        if (last_was_plain_space) attach = start - 1;
        if (attach > ws_start) out.push_back(text.substr(ws_start, attach - ws_start));
        word_start = attach;
        in_word = true;
      }
    }
  }
  if (in_word) {
    out.push_back(text.substr(word_start));
  } else if (text.size() > ws_start) {
    out.push_back(text.substr(ws_start));
  }
  return out;
}

SubwordTokenizer::SubwordTokenizer(std::vector<MergePair> merges,
                                   std::size_t requested,
                                   TokenizerMetadata meta)
    : merges_(std::move(merges)), requested_vocab_(requested),
      meta_(meta) {
  vocab_bytes_.reserve(256 + merges_.size());
  for (int b = 0; b < 256; ++b) {
    vocab_bytes_.emplace_back(1, static_cast<char>(b));
  }
  for (std::size_t m = 0; m < merges_.size(); ++m) {
    const auto [l, r] = merges_[m];
    if (l >= vocab_bytes_.size() || r >= vocab_bytes_.size()) {
      throw ParseError("merge " + std::to_string(m) +
                       " references undefined token id");
    }
    vocab_bytes_.push_back(vocab_bytes_[l] + vocab_bytes_[r]);
    merge_rank_.emplace(merges_[m], static_cast<std::uint32_t>(m));
  }
}

const std::string& SubwordTokenizer::token_bytes(std::uint32_t id) const {
  if (id >= vocab_bytes_.size()) {
    throw ValidationError("token id " + std::to_string(id) +
                          " outside vocabulary");
  }
  return vocab_bytes_[id];
}

namespace {

struct U64PairHash {
  std::size_t operator()(std::uint64_t v) const {
    return std::hash<std::uint64_t>()(v);
  }
};

inline std::uint64_t pack(std::uint32_t a, std::uint32_t b) {
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

struct HeapEntry {
  std::int64_t count;
  std::uint32_t left;
  std::uint32_t right;
};

}  // namespace

SubwordTokenizer SubwordTokenizer::train(std::string_view text,
                                         std::size_t vocab_size,
                                         const TokenizerMetadata& meta) {
  if (text.empty()) throw ValidationError("training text is empty");
  if (vocab_size < 257) throw ValidationError("vocab_size must be >= 257");

  // Unique pre-tokens with frequencies; merges operate on these, weighted.
  std::unordered_map<std::string_view, std::int64_t> freq;
  for (std::string_view pt : pretokenize(text)) ++freq[pt];

  std::vector<std::vector<std::uint32_t>> words;
  std::vector<std::int64_t> counts;
  words.reserve(freq.size());
  for (const auto& [pt, n] : freq) {
    std::vector<std::uint32_t> syms;
    syms.reserve(pt.size());
    for (unsigned char c : pt) syms.push_back(c);
    words.push_back(std::move(syms));
    counts.push_back(n);
  }

  std::vector<std::string> vocab;
  vocab.reserve(vocab_size);
  for (int b = 0; b < 256; ++b) vocab.emplace_back(1, static_cast<char>(b));

  std::unordered_map<std::uint64_t, std::int64_t, U64PairHash> pair_counts;
  // Words that may contain the pair; may hold stale entries, revalidated on use.
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>, U64PairHash>
      pair_where;
  for (std::uint32_t w = 0; w < words.size(); ++w) {
    const auto& syms = words[w];
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      const std::uint64_t p = pack(syms[i], syms[i + 1]);
      pair_counts[p] += counts[w];
      auto& lst = pair_where[p];
      if (lst.empty() || lst.back() != w) lst.push_back(w);
    }
  }

  // Max-heap with lazy invalidation; ties prefer the lexicographically
  // smaller (left bytes, right bytes).
  auto worse = [&vocab](const HeapEntry& a, const HeapEntry& b) {
    if (a.count != b.count) return a.count < b.count;
    if (vocab[a.left] != vocab[b.left]) return vocab[a.left] > vocab[b.left];
    return vocab[a.right] > vocab[b.right];
  };
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, decltype(worse)> heap(
      worse);
  for (const auto& [p, c] : pair_counts) {
    if (c >= 2) {
      heap.push({c, static_cast<std::uint32_t>(p >> 32),
                 static_cast<std::uint32_t>(p & 0xFFFFFFFF)});
    }
  }

  std::vector<MergePair> merges;
  merges.reserve(vocab_size - 256);
  std::unordered_map<std::uint64_t, std::int64_t, U64PairHash> delta;

  while (vocab.size() < vocab_size && !heap.empty()) {
    const HeapEntry top = heap.top();
    heap.pop();
    const std::uint64_t p = pack(top.left, top.right);
    auto it = pair_counts.find(p);
    const std::int64_t current = (it == pair_counts.end()) ? 0 : it->second;
    if (current != top.count) {
      if (current >= 2) heap.push({current, top.left, top.right});
      continue;
    }
    if (current < 2) continue;

    const std::uint32_t a = top.left;
    const std::uint32_t b = top.right;
    const auto new_id = static_cast<std::uint32_t>(vocab.size());
    vocab.push_back(vocab[a] + vocab[b]);
    merges.emplace_back(a, b);

    auto where = std::move(pair_where[p]);
    pair_where.erase(p);
    for (std::uint32_t w : where) {
      auto& syms = words[w];
      const std::int64_t n = counts[w];
      bool present = false;
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        if (syms[i] == a && syms[i + 1] == b) {
          present = true;
          break;
        }
      }
      if (!present) continue;  // stale where-list entry

      // Pre-tokens are short; recount the whole word around the rewrite.
      delta.clear();
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        delta[pack(syms[i], syms[i + 1])] -= n;
      }
      std::size_t write = 0;
      for (std::size_t read = 0; read < syms.size();) {
        if (read + 1 < syms.size() && syms[read] == a && syms[read + 1] == b) {
          syms[write++] = new_id;
          read += 2;
        } else {
          syms[write++] = syms[read++];
        }
      }
      syms.resize(write);
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        delta[pack(syms[i], syms[i + 1])] += n;
      }
      for (const auto& [dp, dn] : delta) {
        if (dn == 0) continue;
        auto& cnt = pair_counts[dp];
        cnt += dn;
        if (dn > 0) {
          auto& lst = pair_where[dp];
          if (lst.empty() || lst.back() != w) lst.push_back(w);
        }
        if (cnt >= 2) {
          heap.push({cnt, static_cast<std::uint32_t>(dp >> 32),
                     static_cast<std::uint32_t>(dp & 0xFFFFFFFF)});
        }
      }
    }
    pair_counts.erase(p);
  }

  TokenizerMetadata m = meta;
  m.corpus_bytes = text.size();
  return SubwordTokenizer(std::move(merges), vocab_size, m);
}

TokenSequence SubwordTokenizer::encode(std::string_view text) const {
  TokenSequence seq;
  seq.source_bytes = text.size();
  std::vector<std::uint32_t> syms;
  for (std::string_view pt : pretokenize(text)) {
    syms.clear();
    syms.reserve(pt.size());
    for (unsigned char c : pt) syms.push_back(c);
    while (syms.size() > 1) {
      // Apply the earliest-trained merge present among adjacent pairs.
      std::uint32_t best_rank = UINT32_MAX;
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        auto it = merge_rank_.find({syms[i], syms[i + 1]});
        if (it != merge_rank_.end() && it->second < best_rank) {
          best_rank = it->second;
        }
      }
      if (best_rank == UINT32_MAX) break;
      const auto [a, b] = merges_[best_rank];
      const std::uint32_t merged = 256 + best_rank;
      std::size_t write = 0;
      for (std::size_t read = 0; read < syms.size();) {
        if (read + 1 < syms.size() && syms[read] == a && syms[read + 1] == b) {
          syms[write++] = merged;
          read += 2;
        } else {
          syms[write++] = syms[read++];
        }
      }
      syms.resize(write);
    }
    seq.ids.insert(seq.ids.end(), syms.begin(), syms.end());
  }
  return seq;
}

std::string SubwordTokenizer::decode(std::span<const std::uint32_t> ids) const {
  std::string out;
  for (std::uint32_t id : ids) {
    if (id >= vocab_bytes_.size()) {
      throw ValidationError("decode: unknown token id " + std::to_string(id));
    }
    out += vocab_bytes_[id];
  }
  return out;
}

void SubwordTokenizer::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["vocab_size"] = vocab_size();
  j["merges"] = nlohmann::json::array();
  for (const auto& [l, r] : merges_) {
    j["merges"].push_back(nlohmann::ordered_json::array({l, r}));
  }
  j["pretokenizer"] = "whitespace_leading_space";
  j["metadata"] = {{"mixture_hash", meta_.mixture_hash},
                   {"corpus_bytes", meta_.corpus_bytes},
                   {"seed", meta_.seed},
                   {"requested_vocab_size", requested_vocab_}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write tokenizer: " + path.string());
  out << j.dump() << "\n";
}

SubwordTokenizer SubwordTokenizer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open tokenizer: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("tokenizer file: ") + e.what());
  }
  if (!j.contains("version") || !j["version"].is_number_integer()) {
    throw ParseError("tokenizer file: missing 'version'");
  }
  if (j["version"].get<int>() != 1) {
    throw ParseError("tokenizer file: unsupported version " +
                     j["version"].dump());
  }
  if (!j.contains("merges") || !j["merges"].is_array()) {
    throw ParseError("tokenizer file: missing 'merges' array");
  }
  const std::string pre = j.value("pretokenizer", "");
  if (pre != "whitespace_leading_space") {
    throw ParseError("tokenizer file: unsupported pretokenizer '" + pre + "'");
  }
  std::vector<MergePair> merges;
  for (const auto& m : j["merges"]) {
    if (!m.is_array() || m.size() != 2 || !m[0].is_number_unsigned() ||
        !m[1].is_number_unsigned()) {
      throw ParseError("tokenizer file: malformed merge entry " + m.dump());
    }
    merges.emplace_back(m[0].get<std::uint32_t>(), m[1].get<std::uint32_t>());
  }
  if (j.contains("vocab_size") &&
      j["vocab_size"].get<std::size_t>() != 256 + merges.size()) {
    throw ParseError("tokenizer file: vocab_size disagrees with merge count");
  }
  TokenizerMetadata meta;
  std::size_t requested = 256 + merges.size();
  if (j.contains("metadata") && j["metadata"].is_object()) {
    const auto& md = j["metadata"];
    meta.mixture_hash = md.value("mixture_hash", std::uint64_t{0});
    meta.corpus_bytes = md.value("corpus_bytes", std::uint64_t{0});
    meta.seed = md.value("seed", std::uint64_t{0});
    requested = md.value("requested_vocab_size", requested);
  }
  return SubwordTokenizer(std::move(merges), requested, meta);
}

std::uint64_t SubwordTokenizer::hash() const {
  std::uint64_t h = 0x8a5cd789635d2dffULL;
  for (const auto& [l, r] : merges_) {
    h = splitmix64(h ^ pack(l, r));
  }
  return h;
}

}  // namespace trex
