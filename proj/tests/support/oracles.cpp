#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "trex/bpe.hpp"

namespace trex::testing {

std::vector<std::pair<std::uint32_t, std::uint32_t>> reference_bpe_merges(
    const std::string& text, std::size_t vocab_size) {
  // Words as symbol sequences with multiplicities.
  std::map<std::vector<std::uint32_t>, std::int64_t> words;
  for (auto pt : trex::pretokenize(text)) {
    std::vector<std::uint32_t> syms;
    for (unsigned char c : pt) syms.push_back(c);
    ++words[syms];
  }
  std::vector<std::string> vocab;
  for (int b = 0; b < 256; ++b) vocab.emplace_back(1, static_cast<char>(b));

  std::vector<std::pair<std::uint32_t, std::uint32_t>> merges;
  while (vocab.size() < vocab_size) {
    // Full recount of every adjacent pair.
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::int64_t> counts;
    for (const auto& [syms, n] : words) {
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        counts[{syms[i], syms[i + 1]}] += n;
      }
    }
    bool have = false;
    std::pair<std::uint32_t, std::uint32_t> best{};
    std::int64_t best_count = 1;  // require count >= 2
    for (const auto& [pair, n] : counts) {
      if (n < best_count) continue;
      if (n > best_count) {
        best = pair;
        best_count = n;
        have = true;
        continue;
      }
      // Tie: lexicographically smaller (left bytes, right bytes) wins.
      const auto& bl = vocab[best.first];
      const auto& br = vocab[best.second];
      const auto& cl = vocab[pair.first];
      const auto& cr = vocab[pair.second];
      if (cl < bl || (cl == bl && cr < br)) best = pair;
    }
    if (!have) break;

    const auto new_id = static_cast<std::uint32_t>(vocab.size());
    vocab.push_back(vocab[best.first] + vocab[best.second]);
    merges.push_back(best);

    std::map<std::vector<std::uint32_t>, std::int64_t> next;
    for (const auto& [syms, n] : words) {
      std::vector<std::uint32_t> out;
      for (std::size_t i = 0; i < syms.size();) {
        if (i + 1 < syms.size() && syms[i] == best.first &&
            syms[i + 1] == best.second) {
          out.push_back(new_id);
          i += 2;
        } else {
          out.push_back(syms[i++]);
        }
      }
      next[out] += n;
    }
    words = std::move(next);
  }
  return merges;
}

double reference_mape(const std::vector<double>& predicted,
                      const std::vector<double>& actual) {
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    sum += std::abs(predicted[i] - actual[i]) / std::abs(actual[i]);
  }
  return 100.0 * sum / static_cast<double>(predicted.size());
}

namespace {

// O(n^2) average ranks: rank_i = (#smaller) + (#equal + 1) / 2.
std::vector<double> naive_ranks(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t smaller = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (xs[j] < xs[i]) ++smaller;
      if (xs[j] == xs[i]) ++equal;
    }
    ranks[i] = static_cast<double>(smaller) +
               (static_cast<double>(equal) + 1.0) / 2.0;
  }
  return ranks;
}

}  // namespace

double reference_spearman(const std::vector<double>& xs,
                          const std::vector<double>& ys) {
  const auto rx = naive_ranks(xs);
  const auto ry = naive_ranks(ys);
  const std::size_t n = xs.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
    sxy += (rx[i] - mx) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw std::domain_error("undefined correlation");
  }
  return sxy / std::sqrt(sxx * syy);
}

std::string random_utf8(std::mt19937_64& rng, std::size_t codepoints) {
  std::string out;
  std::uniform_int_distribution<int> klass(0, 5);
  std::uniform_int_distribution<std::uint32_t> ascii(0x20, 0x7E);
  std::uniform_int_distribution<std::uint32_t> latin1(0xA1, 0xFF);
  std::uniform_int_distribution<std::uint32_t> cjk(0x4E00, 0x9FFF);
  std::uniform_int_distribution<std::uint32_t> emoji(0x1F300, 0x1F5FF);
  for (std::size_t i = 0; i < codepoints; ++i) {
    std::uint32_t cp;
    switch (klass(rng)) {
      case 0: cp = '\n'; break;
      case 1: cp = ' '; break;
      case 2: cp = latin1(rng); break;
      case 3: cp = cjk(rng); break;
      case 4: cp = emoji(rng); break;
      default: cp = ascii(rng); break;
    }
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
  return out;
}

std::string random_bytes(std::mt19937_64& rng, std::size_t n) {
  std::string out(n, '\0');
  std::uniform_int_distribution<int> byte(0, 255);
  for (auto& c : out) c = static_cast<char>(byte(rng));
  return out;
}

std::vector<double> random_simplex_point(std::mt19937_64& rng, std::size_t k) {
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> w(k);
  double sum = 0.0;
  for (auto& x : w) {
    x = expo(rng);
    sum += x;
  }
  for (auto& x : w) x /= sum;
  return w;
}

}  // namespace trex::testing
