#include "trex/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "trex/common.hpp"
#include <json.hpp>

namespace trex {

void PipelineConfig::validate() const {
  if (n_mixtures == 0) throw ValidationError("n_mixtures must be positive");
  if (fit_count + holdout_count != n_mixtures) {
    throw ValidationError("fit_count + holdout_count must equal n_mixtures");
  }
  if (proxy_scale.bytes == 0 || full_scale.bytes == 0) {
    throw ValidationError("scale byte budgets must be positive");
  }
  if (proxy_scale.bytes > full_scale.bytes) {
    throw ValidationError("proxy scale bytes must not exceed full scale");
  }
  if (proxy_scale.vocab > full_scale.vocab) {
    throw ValidationError("proxy vocab must not exceed full vocab");
  }
  if (proxy_scale.vocab < 257 || full_scale.vocab < 257) {
    throw ValidationError("vocab sizes must be >= 257");
  }
  if (search_candidates == 0) {
    throw ValidationError("search_candidates must be positive");
  }
  if (jobs == 0) throw ValidationError("jobs must be positive");
  boosting.validate();
}

PipelineConfig PipelineConfig::from_json_file(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  PipelineConfig cfg;
  if (j.contains("corpus_manifest")) {
    std::filesystem::path m = j["corpus_manifest"].get<std::string>();
    if (m.is_relative()) m = path.parent_path() / m;
    cfg.corpus_manifest = m;
  }
  auto scale = [&j](const char* key, ScaleConfig& s) {
    if (j.contains(key)) {
      s.bytes = j[key].value("bytes", s.bytes);
      s.vocab = j[key].value("vocab", s.vocab);
    }
  };
  scale("proxy_scale", cfg.proxy_scale);
  scale("full_scale", cfg.full_scale);
  cfg.n_mixtures = j.value("n_mixtures", cfg.n_mixtures);
  cfg.fit_count = j.value("fit_count", cfg.fit_count);
  cfg.holdout_count = j.value("holdout_count", cfg.holdout_count);
  if (j.contains("dirichlet")) {
    const auto& d = j["dirichlet"];
    cfg.dirichlet.base_concentration =
        d.value("base_concentration", cfg.dirichlet.base_concentration);
    cfg.dirichlet.size_weighting =
        d.value("size_weighting", cfg.dirichlet.size_weighting);
  }
  if (j.contains("boosting")) {
    const auto& b = j["boosting"];
    cfg.boosting.n_trees = b.value("n_trees", cfg.boosting.n_trees);
    cfg.boosting.max_leaves = b.value("max_leaves", cfg.boosting.max_leaves);
    cfg.boosting.learning_rate =
        b.value("learning_rate", cfg.boosting.learning_rate);
    cfg.boosting.min_samples_per_leaf =
        b.value("min_samples_per_leaf", cfg.boosting.min_samples_per_leaf);
    cfg.boosting.subsample = b.value("subsample", cfg.boosting.subsample);
  }
  cfg.search_candidates = j.value("search_candidates", cfg.search_candidates);
  if (j.contains("reference_tokenizer")) {
    const std::string ref = j["reference_tokenizer"].get<std::string>();
    if (ref != "train-uniform" && !ref.empty()) {
      std::filesystem::path r = ref;
      if (r.is_relative()) r = path.parent_path() / r;
      cfg.reference_tokenizer = r;
    }
  }
  cfg.jobs = j.value("jobs", cfg.jobs);
  cfg.master_seed = j.value("master_seed", cfg.master_seed);
  if (j.contains("out_dir")) {
    cfg.out_dir = j["out_dir"].get<std::string>();
  }
  cfg.test_fraction = j.value("test_fraction", cfg.test_fraction);
  return cfg;
}

void PipelineConfig::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["corpus_manifest"] = corpus_manifest.string();
  j["proxy_scale"] = {{"bytes", proxy_scale.bytes}, {"vocab", proxy_scale.vocab}};
  j["full_scale"] = {{"bytes", full_scale.bytes}, {"vocab", full_scale.vocab}};
  j["n_mixtures"] = n_mixtures;
  j["fit_count"] = fit_count;
  j["holdout_count"] = holdout_count;
  j["dirichlet"] = {{"base_concentration", dirichlet.base_concentration},
                    {"size_weighting", dirichlet.size_weighting}};
  j["boosting"] = {{"n_trees", boosting.n_trees},
                   {"max_leaves", boosting.max_leaves},
                   {"learning_rate", boosting.learning_rate},
                   {"min_samples_per_leaf", boosting.min_samples_per_leaf},
                   {"subsample", boosting.subsample}};
  j["search_candidates"] = search_candidates;
  j["reference_tokenizer"] = reference_tokenizer.empty()
                                 ? std::string("train-uniform")
                                 : reference_tokenizer.string();
  j["jobs"] = jobs;
  j["master_seed"] = master_seed;
  j["out_dir"] = out_dir.string();
  j["test_fraction"] = test_fraction;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write config: " + path.string());
  out << j.dump(2) << "\n";
}

void parallel_for(std::size_t n, unsigned jobs,
                  const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  const unsigned w = std::min<unsigned>(jobs, static_cast<unsigned>(n));
  threads.reserve(w);
  for (unsigned t = 0; t < w; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

SubwordTokenizer resolve_reference(const PipelineConfig& cfg,
                                   const CorpusStore& corpus,
                                   const ScaleConfig& scale) {
  if (!cfg.reference_tokenizer.empty()) {
    return SubwordTokenizer::load(cfg.reference_tokenizer);
  }
  const Mixture uniform = Mixture::uniform(corpus.index().size());
  const std::uint64_t seed =
      derive_seed(cfg.master_seed, "reference", scale.bytes ^ scale.vocab);
  auto subset = materialize(corpus, uniform, scale.bytes, seed);
  TokenizerMetadata meta;
  meta.mixture_hash = uniform.hash();
  meta.seed = seed;
  return SubwordTokenizer::train(subset.concatenated(corpus), scale.vocab,
                                 meta);
}

CompressionRecord evaluate_tokenizer(const SubwordTokenizer& tokenizer,
                                     const Mixture& w,
                                     const ScaleConfig& scale,
                                     const CorpusStore& corpus,
                                     const SubwordTokenizer& reference) {
  const auto& index = corpus.index();
  CompressionRecord rec{w, scale.bytes, scale.vocab, {}, 0.0,
                        reference.hash()};
  const auto fractions = corpus.test_byte_fractions();
  std::map<std::string, double> weights;
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto docs = corpus.test_documents(i);
    rec.per_language[index.tag(i)] = nsl(tokenizer, reference, docs);
    weights[index.tag(i)] = fractions[i];
  }
  rec.overall = weighted_compression(rec.per_language, weights);
  return rec;
}

namespace {

CompressionRecord train_and_evaluate(const Mixture& w,
                                     const ScaleConfig& scale,
                                     const CorpusStore& corpus,
                                     const SubwordTokenizer& reference,
                                     std::uint64_t seed) {
  auto subset = materialize(corpus, w, scale.bytes, seed);
  TokenizerMetadata meta;
  meta.mixture_hash = w.hash();
  meta.seed = seed;
  auto tokenizer =
      SubwordTokenizer::train(subset.concatenated(corpus), scale.vocab, meta);
  return evaluate_tokenizer(tokenizer, w, scale, corpus, reference);
}

}  // namespace

FleetOutcome run_proxy_fleet(const PipelineConfig& cfg,
                             const CorpusStore& corpus,
                             const SubwordTokenizer& reference) {
  cfg.validate();
  const auto& index = corpus.index();
  const auto sizes = corpus.language_byte_sizes();
  DirichletConfig dcfg = cfg.dirichlet;
  dcfg.seed = derive_seed(cfg.master_seed, "mixtures");
  const auto mixtures = sample_mixtures(index, sizes, dcfg, cfg.n_mixtures);

  const auto records_dir = cfg.out_dir / "records";
  std::filesystem::create_directories(records_dir);

  std::vector<std::optional<CompressionRecord>> results(cfg.n_mixtures);
  std::mutex failure_mutex;
  FleetOutcome outcome;

  parallel_for(cfg.n_mixtures, cfg.jobs, [&](std::size_t i) {
    const auto record_path = records_dir / (std::to_string(i) + ".json");
    if (std::filesystem::exists(record_path)) {
      std::ifstream in(record_path, std::ios::binary);
      std::stringstream buf;
      buf << in.rdbuf();
      auto rec = CompressionRecord::from_json(buf.str(), index);
      // A resumed record must belong to the same sampled mixture. Swap in
      // the freshly sampled weights: the persisted form is rounded to six
      // decimals, and resumed runs must stay byte-identical to fresh ones.
      if (rec.mixture.hash() == mixtures[i].hash()) {
        rec.mixture = mixtures[i];
        results[i] = std::move(rec);
        return;
      }
    }
    try {
      // One subset seed per scale, shared by every mixture: with common
      // random numbers the doc-draw noise cancels between mixtures, which
      // the regression stage would otherwise have to soak up.
      auto rec = train_and_evaluate(
          mixtures[i], cfg.proxy_scale, corpus, reference,
          derive_seed(cfg.master_seed, "materialize", cfg.proxy_scale.bytes));
      // Write via rename so a killed run never leaves a torn record.
      const auto tmp = records_dir / (std::to_string(i) + ".json.tmp");
      {
        std::ofstream out(tmp, std::ios::binary);
        out << rec.to_json(index) << "\n";
      }
      std::filesystem::rename(tmp, record_path);
      results[i] = std::move(rec);
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      outcome.failures.push_back(std::to_string(i) + ": " + e.what());
      ++outcome.failed;
    }
  });

  for (auto& r : results) {
    if (r) outcome.records.push_back(std::move(*r));
  }
  if (outcome.failed * 20 > cfg.n_mixtures) {  // 5% budget
    throw FleetFailureError(
        "fleet failure budget exceeded: " + std::to_string(outcome.failed) +
        " of " + std::to_string(cfg.n_mixtures) + " mixtures failed");
  }
  return outcome;
}

void write_records_csv(const std::filesystem::path& path,
                       const std::vector<CompressionRecord>& records,
                       const LanguageIndex& index) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "id";
  for (const auto& tag : index.tags()) out << ",w_" << tag;
  for (const auto& tag : index.tags()) out << ",nsl_" << tag;
  out << ",overall\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    out << i;
    for (std::size_t j = 0; j < index.size(); ++j) {
      out << "," << format_double(records[i].mixture[j]);
    }
    for (const auto& tag : index.tags()) {
      auto it = records[i].per_language.find(tag);
      out << "," << (it == records[i].per_language.end()
                         ? "nan"
                         : format_double(it->second));
    }
    out << "," << format_double(records[i].overall) << "\n";
  }
}

std::vector<CompressionRecord> read_records_csv(
    const std::filesystem::path& path, const LanguageIndex& index) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw ParseError("records csv: empty file");
  const std::size_t k = index.size();
  std::vector<CompressionRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 2 * k + 2) {
      throw ParseError("records csv: wrong column count in row '" + line + "'");
    }
    std::vector<double> w(k);
    for (std::size_t j = 0; j < k; ++j) w[j] = std::stod(cells[1 + j]);
    CompressionRecord rec{Mixture(std::move(w)), 0, 0, {},
                          std::stod(cells[2 * k + 1]), 0};
    for (std::size_t j = 0; j < k; ++j) {
      rec.per_language[index.tag(j)] = std::stod(cells[1 + k + j]);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::pair<RegressionModel, EvalReport> fit_and_evaluate(
    const std::vector<CompressionRecord>& records, const PipelineConfig& cfg) {
  if (records.size() < 16) {
    throw ValidationError("need at least 16 records to fit");
  }
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(cfg.master_seed, "fit_split"));
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t n_fit = std::min(cfg.fit_count, records.size());
  TrainingSet fit_set, holdout;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[order[i]];
    auto& dst = (i < n_fit) ? fit_set : holdout;
    dst.features.emplace_back(rec.mixture.weights().begin(),
                              rec.mixture.weights().end());
    dst.targets.push_back(rec.overall);
  }
  BoostingConfig bcfg = cfg.boosting;
  bcfg.seed = derive_seed(cfg.master_seed, "boosting");
  auto model = RegressionModel::fit(fit_set, bcfg);
  EvalReport report = model.evaluate(holdout);
  return {std::move(model), report};
}

SearchResult search(const RegressionModel& model, const PipelineConfig& cfg,
                    const CorpusStore& corpus, std::size_t top_m) {
  if (model.dimension() != corpus.index().size()) {
    throw ValidationError("model dimension does not match language index");
  }
  const auto t0 = std::chrono::steady_clock::now();
  CandidateStream stream(corpus.index(), corpus.language_byte_sizes(),
                         cfg.search_candidates,
                         derive_seed(cfg.master_seed, "search"));
  const std::size_t chunks = stream.chunk_count();

  struct Scored {
    double pred;
    std::size_t idx;
    Mixture mixture;
  };
  std::vector<std::vector<Scored>> per_chunk_top(chunks);

  parallel_for(chunks, cfg.jobs, [&](std::size_t ci) {
    auto candidates = stream.chunk(ci);
    std::vector<Scored> scored;
    scored.reserve(candidates.size());
    for (auto& [idx, mix] : candidates) {
      const double p = model.predict(mix.weights());
      scored.push_back({p, idx, std::move(mix)});
    }
    const std::size_t keep = std::min(top_m, scored.size());
    std::partial_sort(scored.begin(),
                      scored.begin() + static_cast<std::ptrdiff_t>(keep),
                      scored.end(), [](const Scored& a, const Scored& b) {
                        return a.pred != b.pred ? a.pred < b.pred
                                                : a.idx < b.idx;
                      });
    scored.erase(scored.begin() + static_cast<std::ptrdiff_t>(keep),
                 scored.end());
    per_chunk_top[ci] = std::move(scored);
  });

  std::vector<Scored> all;
  for (auto& chunk : per_chunk_top) {
    for (auto& s : chunk) all.push_back(std::move(s));
  }
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
    return a.pred != b.pred ? a.pred < b.pred : a.idx < b.idx;
  });
  if (all.empty()) throw ValidationError("search produced no candidates");
  if (all.size() > top_m) {
    all.erase(all.begin() + static_cast<std::ptrdiff_t>(top_m), all.end());
  }

  SearchResult result{all.front().mixture, all.front().pred, {},
                      cfg.search_candidates, 0.0};
  for (auto& s : all) result.top.emplace_back(std::move(s.mixture), s.pred);
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return result;
}

void SearchResult::save(const std::filesystem::path& path,
                        const LanguageIndex& index) const {
  nlohmann::ordered_json j;
  j["best_mixture"] = nlohmann::ordered_json::parse(best.to_json(index));
  j["predicted"] = predicted;
  j["candidates_scanned"] = candidates_scanned;
  j["wall_seconds"] = wall_seconds;
  j["top"] = nlohmann::ordered_json::array();
  for (const auto& [mix, pred] : top) {
    j["top"].push_back({{"mixture", nlohmann::ordered_json::parse(mix.to_json(index))},
                        {"predicted", pred}});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::pair<SubwordTokenizer, CompressionRecord> train_full(
    const Mixture& w, const PipelineConfig& cfg, const CorpusStore& corpus,
    const SubwordTokenizer& reference) {
  const std::uint64_t seed =
      derive_seed(cfg.master_seed, "materialize", cfg.full_scale.bytes);
  auto subset = materialize(corpus, w, cfg.full_scale.bytes, seed);
  TokenizerMetadata meta;
  meta.mixture_hash = w.hash();
  meta.seed = seed;
  auto tokenizer = SubwordTokenizer::train(subset.concatenated(corpus),
                                           cfg.full_scale.vocab, meta);
  auto rec = evaluate_tokenizer(tokenizer, w, cfg.full_scale, corpus, reference);
  return {std::move(tokenizer), std::move(rec)};
}

RankInvarianceReport analyze_rank_invariance(
    const std::vector<Mixture>& mixtures,
    const std::vector<ScaleConfig>& scale_grid, const PipelineConfig& cfg,
    const CorpusStore& corpus) {
  if (mixtures.size() < 8) {
    throw ValidationError("rank invariance needs at least 8 mixtures");
  }
  if (scale_grid.size() < 2) {
    throw ValidationError("rank invariance needs at least 2 scales");
  }
  const std::size_t s = scale_grid.size();
  const std::size_t m = mixtures.size();
  RankInvarianceReport report;
  report.scales = scale_grid;
  report.overall_nsl.assign(s, std::vector<double>(m, 0.0));

  std::vector<SubwordTokenizer> references;
  references.reserve(s);
  for (std::size_t si = 0; si < s; ++si) {
    references.push_back(resolve_reference(cfg, corpus, scale_grid[si]));
  }

  parallel_for(s * m, cfg.jobs, [&](std::size_t task) {
    const std::size_t si = task / m;
    const std::size_t mi = task % m;
    auto rec = train_and_evaluate(
        mixtures[mi], scale_grid[si], corpus, references[si],
        derive_seed(cfg.master_seed, "materialize", scale_grid[si].bytes));
    report.overall_nsl[si][mi] = rec.overall;
  });

  report.spearman_matrix.assign(s, std::vector<double>(s, 1.0));
  for (std::size_t a = 0; a < s; ++a) {
    for (std::size_t b = a + 1; b < s; ++b) {
      double rho;
      try {
        rho = spearman(report.overall_nsl[a], report.overall_nsl[b]);
      } catch (const ValidationError&) {
        rho = std::numeric_limits<double>::quiet_NaN();  // flagged cell
      }
      report.spearman_matrix[a][b] = rho;
      report.spearman_matrix[b][a] = rho;
    }
  }
  return report;
}

void RankInvarianceReport::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["scales"] = nlohmann::ordered_json::array();
  for (const auto& s : scales) {
    j["scales"].push_back({{"bytes", s.bytes}, {"vocab", s.vocab}});
  }
  j["spearman"] = nlohmann::ordered_json::array();
  for (const auto& row : spearman_matrix) {
    nlohmann::ordered_json r = nlohmann::ordered_json::array();
    for (double v : row) {
      if (std::isnan(v)) {
        r.push_back(nullptr);
      } else {
        r.push_back(v);
      }
    }
    j["spearman"].push_back(r);
  }
  j["overall_nsl"] = overall_nsl;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

CostReport estimate_cost(double baseline_hours, double baseline_nsl,
                         const std::vector<std::pair<std::string, double>>& nsls,
                         std::string hardware) {
  if (!(baseline_hours > 0.0)) {
    throw ValidationError("baseline hours must be positive");
  }
  if (!(baseline_nsl > 0.0)) {
    throw ValidationError("baseline NSL must be positive");
  }
  CostReport report;
  report.baseline_hours = baseline_hours;
  report.baseline_nsl = baseline_nsl;
  report.hardware = std::move(hardware);
  for (const auto& [name, nsl_value] : nsls) {
    if (!(nsl_value > 0.0)) {
      throw ValidationError("NSL for " + name + " must be positive");
    }
    report.estimates.push_back(
        {name, nsl_value, baseline_hours * nsl_value / baseline_nsl});
  }
  return report;
}

void CostReport::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["baseline_hours"] = baseline_hours;
  j["baseline_nsl"] = baseline_nsl;
  j["hardware"] = hardware;
  j["adaptmix_iterations"] = adaptmix_iterations;
  j["estimates"] = nlohmann::ordered_json::array();
  for (const auto& e : estimates) {
    j["estimates"].push_back({{"name", e.name},
                              {"nsl", e.nsl},
                              {"estimated_hours", e.estimated_hours}});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::vector<EntropyRow> analyze_entropy(
    const std::vector<CompressionRecord>& records) {
  if (records.empty()) throw ValidationError("no records to analyze");
  std::vector<EntropyRow> rows;
  rows.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    rows.push_back({i, mixture_entropy(records[i].mixture), records[i].overall});
  }
  return rows;
}

void write_entropy_csv(const std::filesystem::path& path,
                       const std::vector<EntropyRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "id,entropy,overall_nsl\n";
  for (const auto& row : rows) {
    out << row.id << "," << format_double(row.entropy) << ","
        << format_double(row.overall_nsl) << "\n";
  }
}

}  // namespace trex
