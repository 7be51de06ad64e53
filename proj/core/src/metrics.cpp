#include "trex/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trex/common.hpp"
#include <json.hpp>

namespace trex {

double nsl(const SubwordTokenizer& target, const SubwordTokenizer& reference,
           std::span<const std::string> test_docs) {
  if (test_docs.empty()) throw ValidationError("nsl: empty test set");
  std::uint64_t target_tokens = 0;
  std::uint64_t reference_tokens = 0;
  for (const auto& doc : test_docs) {
    target_tokens += target.encode(doc).ids.size();
    reference_tokens += reference.encode(doc).ids.size();
  }
  if (reference_tokens == 0) {
    throw ValidationError("nsl: reference produced zero tokens");
  }
  return static_cast<double>(target_tokens) /
         static_cast<double>(reference_tokens);
}

double weighted_compression(const std::map<std::string, double>& per_language,
                            const std::map<std::string, double>& test_weights) {
  if (per_language.size() != test_weights.size()) {
    throw ValidationError("weighted_compression: key mismatch");
  }
  double wsum = 0.0;
  for (const auto& [lang, w] : test_weights) {
    if (w < 0.0) throw ValidationError("weighted_compression: negative weight");
    if (!per_language.contains(lang)) {
      throw ValidationError("weighted_compression: missing language " + lang);
    }
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-9) {
    throw ValidationError("weighted_compression: weights do not sum to 1");
  }
  double out = 0.0;
  for (const auto& [lang, w] : test_weights) {
    out += w * per_language.at(lang);
  }
  return out;
}

double mape(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size()) {
    throw ValidationError("mape: length mismatch");
  }
  if (predicted.empty()) throw ValidationError("mape: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (actual[i] == 0.0) throw ValidationError("mape: zero actual value");
    sum += std::abs(predicted[i] - actual[i]) / std::abs(actual[i]);
  }
  return 100.0 * sum / static_cast<double>(predicted.size());
}

namespace {

// Fractional ranks, average rank for ties.
std::vector<double> fractional_ranks(std::span<const double> xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&xs](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ValidationError("spearman: length mismatch");
  const std::size_t n = xs.size();
  if (n < 2) throw ValidationError("spearman: need at least 2 points");
  const auto rx = fractional_ranks(xs);
  const auto ry = fractional_ranks(ys);
  const double mean = (static_cast<double>(n) + 1.0) / 2.0;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = rx[i] - mean;
    const double dy = ry[i] - mean;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw ValidationError("spearman: undefined (zero rank variance)");
  }
  return sxy / std::sqrt(sxx * syy);
}

std::string CompressionRecord::to_json(const LanguageIndex& index) const {
  nlohmann::ordered_json j;
  j["mixture"] = nlohmann::ordered_json::parse(mixture.to_json(index));
  j["scale_bytes"] = scale_bytes;
  j["scale_vocab"] = scale_vocab;
  nlohmann::ordered_json per;
  for (std::size_t i = 0; i < index.size(); ++i) {
    auto it = per_language.find(index.tag(i));
    if (it != per_language.end()) per[index.tag(i)] = it->second;
  }
  j["per_language"] = per;
  j["overall"] = overall;
  j["reference_hash"] = reference_hash;
  return j.dump();
}

CompressionRecord CompressionRecord::from_json(std::string_view text,
                                               const LanguageIndex& index) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("compression record: ") + e.what());
  }
  CompressionRecord rec{Mixture::from_json(j.at("mixture").dump(), index),
                        j.value("scale_bytes", std::uint64_t{0}),
                        j.value("scale_vocab", std::uint32_t{0}),
                        {},
                        j.value("overall", 0.0),
                        j.value("reference_hash", std::uint64_t{0})};
  if (j.contains("per_language")) {
    for (auto it = j["per_language"].begin(); it != j["per_language"].end();
         ++it) {
      rec.per_language[it.key()] = it.value().get<double>();
    }
  }
  return rec;
}

}  // namespace trex
