#include "trex/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "trex/common.hpp"
#include <json.hpp>

namespace trex {

LanguageIndex::LanguageIndex(std::vector<std::string> tags)
    : tags_(std::move(tags)) {
  std::set<std::string_view> seen;
  for (const auto& t : tags_) {
    if (!seen.insert(t).second) {
      throw ValidationError("duplicate language tag: " + t);
    }
  }
}

std::optional<std::size_t> LanguageIndex::find(std::string_view tag) const {
  for (std::size_t i = 0; i < tags_.size(); ++i) {
    if (tags_[i] == tag) return i;
  }
  return std::nullopt;
}

Mixture::Mixture(std::vector<double> weights) : weights_(std::move(weights)) {
  if (weights_.empty()) throw ValidationError("mixture has no weights");
  double sum = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ValidationError("mixture weight negative or non-finite");
    }
    sum += w;
  }
  if (sum <= 0.0) throw ValidationError("mixture weights sum to zero");
  for (double& w : weights_) w /= sum;
  double check = 0.0;
  for (double w : weights_) check += w;
  if (std::abs(check - 1.0) > 1e-9) {
    throw ValidationError("mixture renormalization failed");
  }
}

Mixture Mixture::uniform(std::size_t k) {
  if (k == 0) throw ValidationError("uniform mixture needs k >= 1");
  return Mixture(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

std::uint64_t Mixture::hash() const {
  std::uint64_t h = 0x9ae16a3b2f90404fULL;
  char buf[32];
  for (double w : weights_) {
    int n = std::snprintf(buf, sizeof(buf), "%.6f", w);
    h = splitmix64(h ^ fnv1a64(std::string_view(buf, static_cast<std::size_t>(n))));
  }
  return h;
}

std::string Mixture::to_json(const LanguageIndex& index) const {
  if (index.size() != size()) {
    throw ValidationError("mixture/index dimension mismatch");
  }
  std::ostringstream out;
  out << "{";
  char buf[32];
  for (std::size_t i = 0; i < size(); ++i) {
    if (i) out << ", ";
    std::snprintf(buf, sizeof(buf), "%.6f", weights_[i]);
    out << nlohmann::json(index.tag(i)).dump() << ": " << buf;
  }
  out << "}";
  return out.str();
}

Mixture Mixture::from_json(std::string_view json_text,
                           const LanguageIndex& index) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("mixture json: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("mixture json: expected an object");
  std::vector<double> w(index.size(), 0.0);
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto pos = index.find(it.key());
    if (!pos) throw ValidationError("unknown language tag: " + it.key());
    if (!it.value().is_number()) {
      throw ParseError("mixture json: weight for " + it.key() +
                       " is not a number");
    }
    w[*pos] = it.value().get<double>();
  }
  return Mixture(std::move(w));
}

std::vector<double> dirichlet_alphas(const std::vector<double>& sizes,
                                     const DirichletConfig& cfg) {
  if (cfg.base_concentration <= 0.0) {
    throw ValidationError("base_concentration must be positive");
  }
  if (sizes.empty()) throw ValidationError("empty size vector");
  const std::size_t k = sizes.size();
  std::vector<double> alphas(k);
  if (cfg.size_weighting) {
    double total = 0.0;
    for (double s : sizes) {
      if (!(s > 0.0)) throw ValidationError("language size must be positive");
      total += s;
    }
    const double floor = 1e-6 * total;
    double asum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      alphas[i] = std::max(sizes[i], floor);
      asum += alphas[i];
    }
    // Normalize to sum to k so the variance scale matches the uniform case.
    for (double& a : alphas) a *= static_cast<double>(k) / asum;
  } else {
    std::fill(alphas.begin(), alphas.end(), 1.0);
  }
  for (double& a : alphas) a *= cfg.base_concentration;
  return alphas;
}

namespace {

Mixture dirichlet_draw(const std::vector<double>& alphas,
                       std::mt19937_64& rng) {
  std::vector<double> w(alphas.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    std::gamma_distribution<double> gamma(alphas[i], 1.0);
    w[i] = gamma(rng);
    sum += w[i];
  }
  if (sum <= 0.0) {
    // All gammas underflowed; fall back to the largest-concentration vertex.
    std::size_t best = static_cast<std::size_t>(
        std::max_element(alphas.begin(), alphas.end()) - alphas.begin());
    std::fill(w.begin(), w.end(), 0.0);
    w[best] = 1.0;
  }
  return Mixture(std::move(w));
}

}  // namespace

std::vector<Mixture> sample_mixtures(const LanguageIndex& index,
                                     const std::vector<double>& sizes,
                                     const DirichletConfig& cfg,
                                     std::size_t n) {
  if (n < 1) throw ValidationError("need n >= 1 mixtures");
  if (sizes.size() != index.size()) {
    throw ValidationError("sizes/index dimension mismatch");
  }
  auto alphas = dirichlet_alphas(sizes, cfg);
  std::mt19937_64 rng(cfg.seed);
  std::vector<Mixture> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(dirichlet_draw(alphas, rng));
  return out;
}

CandidateStream::CandidateStream(const LanguageIndex& index,
                                 std::vector<double> sizes, std::size_t n,
                                 std::uint64_t seed)
    : k_(index.size()), n_(n), seed_(seed) {
  if (n < 1) throw ValidationError("need n >= 1 candidates");
  if (sizes.size() != k_) {
    throw ValidationError("sizes/index dimension mismatch");
  }
  DirichletConfig sized{1.0, true, 0};
  sized_alphas_ = dirichlet_alphas(sizes, sized);
  uniform_alphas_.assign(k_, 1.0);
}

std::size_t CandidateStream::chunk_count() const {
  return (n_ + kChunkSize - 1) / kChunkSize;
}

std::vector<std::pair<std::size_t, Mixture>> CandidateStream::chunk(
    std::size_t ci) const {
  const std::size_t begin = ci * kChunkSize;
  if (begin >= n_) return {};
  const std::size_t end = std::min(begin + kChunkSize, n_);
  std::mt19937_64 rng(derive_seed(seed_, "candidates", ci));
  std::vector<std::pair<std::size_t, Mixture>> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    const auto& alphas = (i % 2 == 0) ? sized_alphas_ : uniform_alphas_;
    out.emplace_back(i, dirichlet_draw(alphas, rng));
  }
  return out;
}

double mixture_entropy(const Mixture& w) {
  const std::size_t k = w.size();
  if (k == 1) return 0.0;
  double h = 0.0;
  for (double wi : w.weights()) {
    if (wi > 0.0) h -= wi * std::log(wi);
  }
  double norm = h / std::log(static_cast<double>(k));
  return std::clamp(norm, 0.0, 1.0);
}

}  // namespace trex
