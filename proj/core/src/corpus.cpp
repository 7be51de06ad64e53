#include "trex/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "trex/common.hpp"
#include <json.hpp>

namespace trex {

bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    std::size_t len;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (std::size_t j = 1; j < len; ++j) {
      unsigned char cc = static_cast<unsigned char>(s[i + j]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Overlongs, surrogates, out of range.
    if (len == 2 && cp < 0x80) return false;
    if (len == 3 && (cp < 0x800 || (cp >= 0xD800 && cp <= 0xDFFF))) return false;
    if (len == 4 && (cp < 0x10000 || cp > 0x10FFFF)) return false;
    i += len;
  }
  return true;
}

CorpusStore::CorpusStore(LanguageIndex index)
    : index_(std::move(index)), langs_(index_.size()) {}

std::size_t CorpusStore::document_count() const {
  std::size_t n = 0;
  for (const auto& l : langs_) n += l.docs.size();
  return n;
}

std::vector<double> CorpusStore::language_byte_sizes() const {
  std::vector<double> out;
  out.reserve(langs_.size());
  for (const auto& l : langs_) out.push_back(static_cast<double>(l.total_bytes));
  return out;
}

std::vector<std::uint64_t> CorpusStore::split_bytes(Split s) const {
  std::vector<std::uint64_t> out(langs_.size(), 0);
  for (std::size_t i = 0; i < langs_.size(); ++i) {
    for (std::size_t d = 0; d < langs_[i].docs.size(); ++d) {
      if (langs_[i].split[d] == s) out[i] += langs_[i].docs[d].size();
    }
  }
  return out;
}

std::vector<double> CorpusStore::test_byte_fractions() const {
  auto bytes = split_bytes(Split::kTest);
  double total = 0.0;
  for (auto b : bytes) total += static_cast<double>(b);
  if (total <= 0.0) throw ValidationError("corpus has no test split");
  std::vector<double> out(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    out[i] = static_cast<double>(bytes[i]) / total;
  }
  return out;
}

std::vector<std::string> CorpusStore::test_documents(std::size_t lang) const {
  const auto& l = langs_.at(lang);
  std::vector<std::string> out;
  for (std::size_t d = 0; d < l.docs.size(); ++d) {
    if (l.split[d] == Split::kTest) out.push_back(l.docs[d]);
  }
  return out;
}

CorpusStore ingest(
    const std::vector<std::pair<std::string, std::filesystem::path>>& paths,
    const LanguageIndex& index, IngestReport* report) {
  CorpusStore store(index);
  IngestReport local;
  for (const auto& [tag, path] : paths) {
    auto pos = index.find(tag);
    if (!pos) throw ValidationError("unknown language tag: " + tag);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open corpus file: " + path.string());
    auto& lang = store.langs_[*pos];
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      if (!valid_utf8(line)) {
        ++local.skipped_invalid_utf8;
        local.skipped_locations.push_back(path.string() + ":" +
                                          std::to_string(line_no));
        continue;
      }
      lang.total_bytes += line.size();
      lang.docs.push_back(std::move(line));
      lang.split.push_back(Split::kUnassigned);
      ++local.documents;
    }
  }
  // Checksum over tags and document contents, in index order.
  std::uint64_t h = 0x2545f4914f6cdd1dULL;
  for (std::size_t i = 0; i < index.size(); ++i) {
    h = splitmix64(h ^ fnv1a64(index.tag(i)));
    for (const auto& doc : store.langs_[i].docs) {
      h = splitmix64(h ^ fnv1a64(doc));
    }
  }
  store.checksum_ = h;
  if (report) *report = std::move(local);
  return store;
}

CorpusStore split_corpus(const CorpusStore& store, double test_fraction,
                         std::uint64_t seed) {
  if (test_fraction < 0.0005 || test_fraction > 0.01) {
    throw ValidationError("test_fraction must be in [0.0005, 0.01]");
  }
  CorpusStore out = store;
  for (std::size_t i = 0; i < out.langs_.size(); ++i) {
    auto& lang = out.langs_[i];
    if (lang.docs.size() < 2) {
      throw ValidationError("language " + out.index_.tag(i) +
                            " has fewer than 2 documents, cannot split");
    }
    std::vector<std::size_t> order(lang.docs.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, "split", i));
    std::shuffle(order.begin(), order.end(), rng);

    const double target = test_fraction * static_cast<double>(lang.total_bytes);
    std::uint64_t test_bytes = 0;
    std::size_t taken = 0;
    std::fill(lang.split.begin(), lang.split.end(), Split::kTrain);
    for (std::size_t d : order) {
      if (taken > 0 && static_cast<double>(test_bytes) >= target) break;
      if (taken + 1 >= lang.docs.size()) break;  // keep train non-empty
      lang.split[d] = Split::kTest;
      test_bytes += lang.docs[d].size();
      ++taken;
    }
  }
  out.has_split_ = true;
  return out;
}

std::string MaterializedSubset::concatenated(const CorpusStore& store) const {
  std::string out;
  std::uint64_t total = 0;
  for (auto b : realized_bytes) total += b;
  out.reserve(total + docs.size());
  for (const auto& ref : docs) {
    out += store.language(ref.lang).docs[ref.doc];
    out += '\n';
  }
  return out;
}

MaterializedSubset materialize(const CorpusStore& store, const Mixture& w,
                               std::uint64_t budget_bytes, std::uint64_t seed) {
  if (budget_bytes < 1) throw ValidationError("budget must be >= 1 byte");
  if (w.size() != store.index().size()) {
    throw ValidationError("mixture/corpus dimension mismatch");
  }
  if (!store.has_split()) {
    throw ValidationError("corpus must be split before materialization");
  }
  const std::size_t k = w.size();
  MaterializedSubset subset{{}, std::vector<std::uint64_t>(k, 0),
                            std::vector<bool>(k, false), w, budget_bytes};
  for (std::size_t i = 0; i < k; ++i) {
    const double target = w[i] * static_cast<double>(budget_bytes);
    if (target <= 0.0) continue;
    const auto& lang = store.language(i);
    std::vector<std::size_t> train;
    std::uint64_t smallest = UINT64_MAX;
    for (std::size_t d = 0; d < lang.docs.size(); ++d) {
      if (lang.split[d] == Split::kTrain) {
        train.push_back(d);
        smallest = std::min<std::uint64_t>(smallest, lang.docs[d].size());
      }
    }
    if (train.empty() || static_cast<double>(smallest) > target) {
      // Target too small for a whole document; contributes nothing.
      continue;
    }
    std::mt19937_64 rng(derive_seed(seed, "materialize", i));
    std::shuffle(train.begin(), train.end(), rng);
    std::uint64_t realized = 0;
    for (std::size_t d : train) {
      if (static_cast<double>(realized) >= target) break;
      subset.docs.push_back({static_cast<std::uint32_t>(i),
                             static_cast<std::uint32_t>(d)});
      realized += lang.docs[d].size();
    }
    subset.realized_bytes[i] = realized;
    if (static_cast<double>(realized) < target * 0.98) {
      subset.shortfall[i] = true;  // ran out of train bytes
    }
  }
  return subset;
}

void CorpusManifest::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["languages"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < tags.size(); ++i) {
    nlohmann::ordered_json l;
    l["tag"] = tags[i];
    l["file"] = files[i].string();
    l["documents"] = doc_counts[i];
    l["bytes"] = byte_counts[i];
    j["languages"].push_back(l);
  }
  j["test_fraction"] = test_fraction;
  j["split_seed"] = split_seed;
  j["checksum"] = checksum;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write manifest: " + path.string());
  out << j.dump(2) << "\n";
}

CorpusManifest CorpusManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open manifest: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  CorpusManifest m;
  if (!j.contains("languages") || !j["languages"].is_array()) {
    throw ParseError("manifest: missing 'languages' array");
  }
  for (const auto& l : j["languages"]) {
    if (!l.contains("tag") || !l.contains("file")) {
      throw ParseError("manifest: language entry missing 'tag' or 'file'");
    }
    m.tags.push_back(l["tag"].get<std::string>());
    std::filesystem::path f = l["file"].get<std::string>();
    if (f.is_relative()) f = path.parent_path() / f;
    m.files.push_back(f);
    m.doc_counts.push_back(l.value("documents", std::uint64_t{0}));
    m.byte_counts.push_back(l.value("bytes", std::uint64_t{0}));
  }
  m.test_fraction = j.value("test_fraction", 0.0);
  m.split_seed = j.value("split_seed", std::uint64_t{0});
  m.checksum = j.value("checksum", std::uint64_t{0});
  return m;
}

CorpusStore load_corpus(const CorpusManifest& manifest) {
  LanguageIndex index(manifest.tags);
  std::vector<std::pair<std::string, std::filesystem::path>> paths;
  for (std::size_t i = 0; i < manifest.tags.size(); ++i) {
    paths.emplace_back(manifest.tags[i], manifest.files[i]);
  }
  CorpusStore store = ingest(paths, index);
  if (manifest.test_fraction > 0.0) {
    store = split_corpus(store, manifest.test_fraction, manifest.split_seed);
  }
  return store;
}

namespace {

// Codepoint inventories per synthetic language, deliberately covering 1-, 2-
// and 3-byte UTF-8 scripts.
struct ScriptRange {
  std::uint32_t base;
  std::uint32_t count;
};
constexpr ScriptRange kScripts[] = {
    {0x0061, 26},   // basic latin lowercase
    {0x0430, 32},   // cyrillic
    {0x03B1, 25},   // greek
    {0x0627, 20},   // arabic
    {0x05D0, 27},   // hebrew
    {0x0E01, 44},   // thai
    {0x3041, 80},   // hiragana
    {0x4E00, 512},  // cjk ideographs
};

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

}  // namespace

CorpusManifest generate_synthetic_corpus(const std::filesystem::path& out_dir,
                                         std::size_t k,
                                         std::uint64_t bytes_per_lang,
                                         std::uint64_t seed) {
  if (k < 1) throw ValidationError("need k >= 1 synthetic languages");
  if (bytes_per_lang < 1024) {
    throw ValidationError("need at least 1 KiB per synthetic language");
  }
  std::filesystem::create_directories(out_dir);
  CorpusManifest manifest;
  for (std::size_t i = 0; i < k; ++i) {
    std::mt19937_64 rng(derive_seed(seed, "synthetic", i));

    // Two language families. "Saturated" languages reuse a tiny lexicon, so
    // every word becomes a whole-pretoken merge at any scale and any
    // non-trivial weight; their compression is flat in the mixture and
    // training weight spent on them is wasted. The remaining languages are
    // data-hungry with large Zipf lexicons and keep rewarding extra budget.
    // That asymmetry puts the compression optimum well away from the uniform
    // mixture, and it points the same way at every scale.
    const std::size_t saturated_count = k / 2;
    const bool saturated = i < saturated_count;
    const std::size_t hungry_rank = saturated ? 0 : i - saturated_count;
    const ScriptRange script = kScripts[i % std::size(kScripts)];
    // Six words keep every saturated word frequent enough to be a
    // whole-pretoken merge at tiny weights. Hungry lexicons share one size
    // but grade word length by rank, so the languages differ in how much
    // vocab budget their tails demand and the compression landscape keeps a
    // measurable slope in every mixture direction.
    const std::size_t lexicon_size = saturated ? 6 : 16000;
    const std::size_t min_len = saturated ? 2 : 4 + hungry_rank;
    const std::size_t max_len = saturated ? 3 : 7 + hungry_rank;
    std::vector<std::string> lexicon(lexicon_size);
    std::uniform_int_distribution<std::size_t> len_dist(min_len, max_len);
    std::uniform_int_distribution<std::uint32_t> cp_dist(0, script.count - 1);
    for (auto& word : lexicon) {
      const std::size_t len = len_dist(rng);
      for (std::size_t c = 0; c < len; ++c) {
        append_utf8(word, script.base + cp_dist(rng));
      }
    }

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> sent_len(5, 15);
    const std::string tag = "syn" + std::to_string(i);
    const std::filesystem::path file = out_dir / (tag + ".txt");
    std::ofstream out(file, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + file.string());
    std::uint64_t written = 0;
    std::uint64_t docs = 0;
    std::string line;
    while (written < bytes_per_lang) {
      line.clear();
      const std::size_t words = sent_len(rng);
      for (std::size_t wd = 0; wd < words; ++wd) {
        // Saturated lines start with a space so each of their words has a
        // single pretoken form; a rare line-initial bare variant would fall
        // out of vocab at small scales and dent their otherwise flat
        // compression.
        if (wd || saturated) line += ' ';
        // Saturated words are drawn uniformly from their tiny lexicon.
        // Hungry words follow a Zipf law via log-uniform index sampling, so
        // coverage keeps growing with training data.
        const double u = unit(rng);
        const auto idx =
            saturated
                ? static_cast<std::size_t>(
                      u * static_cast<double>(lexicon_size))
                : static_cast<std::size_t>(
                      std::exp(u * std::log(static_cast<double>(lexicon_size)))) -
                      1;
        line += lexicon[std::min(idx, lexicon_size - 1)];
      }
      out << line << "\n";
      written += line.size();
      ++docs;
    }
    manifest.tags.push_back(tag);
    manifest.files.push_back(file);
    manifest.doc_counts.push_back(docs);
    manifest.byte_counts.push_back(written);
  }
  return manifest;
}

}  // namespace trex
