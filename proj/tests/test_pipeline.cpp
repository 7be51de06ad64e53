#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "trex/common.hpp"
#include "trex/pipeline.hpp"

using namespace trex;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("trex_pipeline_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

CorpusStore make_corpus(const TempDir& tmp, std::size_t langs = 3,
                        std::size_t bytes_per_lang = 64 * 1024) {
  auto manifest =
      generate_synthetic_corpus(tmp.path / "corpus", langs, bytes_per_lang, 5);
  manifest.test_fraction = 0.005;
  manifest.split_seed = 5;
  return load_corpus(manifest);
}

PipelineConfig small_config(const TempDir& tmp) {
  PipelineConfig cfg;
  cfg.proxy_scale = {16 * 1024, 300};
  cfg.full_scale = {32 * 1024, 320};
  cfg.n_mixtures = 20;
  cfg.fit_count = 16;
  cfg.holdout_count = 4;
  cfg.boosting.n_trees = 50;
  cfg.search_candidates = 20000;
  cfg.master_seed = 9;
  cfg.jobs = 2;
  cfg.out_dir = tmp.path / "out";
  return cfg;
}

RegressionModel constant_model(std::size_t k) {
  TrainingSet data;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 64; ++i) {
    data.features.push_back(trex::testing::random_simplex_point(rng, k));
    data.targets.push_back(0.95);
  }
  BoostingConfig cfg;
  cfg.n_trees = 5;
  return RegressionModel::fit(data, cfg);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("config validation and json round trip") {
  TempDir tmp;
  PipelineConfig cfg = small_config(tmp);
  CHECK_NOTHROW(cfg.validate());

  PipelineConfig bad = cfg;
  bad.fit_count = 10;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.proxy_scale.bytes = cfg.full_scale.bytes + 1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.proxy_scale.vocab = 256;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.jobs = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);

  cfg.save(tmp.path / "config.json");
  auto back = PipelineConfig::from_json_file(tmp.path / "config.json");
  CHECK(back.proxy_scale.bytes == cfg.proxy_scale.bytes);
  CHECK(back.proxy_scale.vocab == cfg.proxy_scale.vocab);
  CHECK(back.n_mixtures == cfg.n_mixtures);
  CHECK(back.boosting.n_trees == cfg.boosting.n_trees);
  CHECK(back.master_seed == cfg.master_seed);
  CHECK(back.test_fraction == cfg.test_fraction);
  CHECK(back.reference_tokenizer.empty());
}

TEST_CASE("parallel_for visits every index once and rethrows") {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(1000, 8, [&](std::size_t i) { ++hits[i]; });
  for (const auto& h : hits) CHECK(h.load() == 1);

  CHECK_THROWS_AS(parallel_for(100, 4,
                               [](std::size_t i) {
                                 if (i == 57) throw ValidationError("boom");
                               }),
                  ValidationError);
}

TEST_CASE("proxy fleet: runs, resumes, and rebuilds deleted records") {
  TempDir tmp;
  auto corpus = make_corpus(tmp);
  auto cfg = small_config(tmp);
  auto reference = resolve_reference(cfg, corpus, cfg.proxy_scale);

  auto first = run_proxy_fleet(cfg, corpus, reference);
  CHECK(first.failed == 0);
  REQUIRE(first.records.size() == cfg.n_mixtures);
  for (const auto& rec : first.records) {
    CHECK(rec.overall > 0.0);
    CHECK(rec.per_language.size() == 3);
    CHECK(rec.reference_hash == reference.hash());
  }

  write_records_csv(tmp.path / "records_a.csv", first.records, corpus.index());

  // Resume with all records present, then with one removed.
  auto resumed = run_proxy_fleet(cfg, corpus, reference);
  write_records_csv(tmp.path / "records_b.csv", resumed.records,
                    corpus.index());
  CHECK(slurp(tmp.path / "records_a.csv") == slurp(tmp.path / "records_b.csv"));

  fs::remove(cfg.out_dir / "records" / "7.json");
  auto rebuilt = run_proxy_fleet(cfg, corpus, reference);
  write_records_csv(tmp.path / "records_c.csv", rebuilt.records,
                    corpus.index());
  CHECK(slurp(tmp.path / "records_a.csv") == slurp(tmp.path / "records_c.csv"));
}

TEST_CASE("records csv round trip") {
  TempDir tmp;
  auto corpus = make_corpus(tmp);
  auto cfg = small_config(tmp);
  auto reference = resolve_reference(cfg, corpus, cfg.proxy_scale);
  auto outcome = run_proxy_fleet(cfg, corpus, reference);

  const auto path = tmp.path / "records.csv";
  write_records_csv(path, outcome.records, corpus.index());
  auto back = read_records_csv(path, corpus.index());
  REQUIRE(back.size() == outcome.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].overall ==
          doctest::Approx(outcome.records[i].overall).epsilon(1e-12));
    for (const auto& [tag, v] : outcome.records[i].per_language) {
      CHECK(back[i].per_language.at(tag) == doctest::Approx(v).epsilon(1e-12));
    }
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(back[i].mixture[j] ==
            doctest::Approx(outcome.records[i].mixture[j]).epsilon(1e-5));
    }
  }
}

TEST_CASE("fit_and_evaluate needs enough records") {
  TempDir tmp;
  auto cfg = small_config(tmp);
  std::vector<CompressionRecord> few(
      4, CompressionRecord{Mixture::uniform(3), 0, 0, {}, 1.0, 0});
  CHECK_THROWS_AS(fit_and_evaluate(few, cfg), ValidationError);
}

TEST_CASE("search: constant model ties resolve to the first candidate") {
  TempDir tmp;
  auto corpus = make_corpus(tmp);
  auto cfg = small_config(tmp);
  auto model = constant_model(3);
  REQUIRE(model.constant_warning());

  auto result = search(model, cfg, corpus, 10);
  CHECK(result.candidates_scanned == cfg.search_candidates);
  CHECK(result.top.size() == 10);

  CandidateStream stream(corpus.index(), corpus.language_byte_sizes(),
                         cfg.search_candidates,
                         derive_seed(cfg.master_seed, "search"));
  const auto chunk0 = stream.chunk(0);
  const auto& first = chunk0.front();
  CHECK(first.first == 0);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(result.best[j] == first.second[j]);
  }
}

TEST_CASE("search result is independent of the parallelism degree") {
  TempDir tmp;
  auto corpus = make_corpus(tmp);
  auto cfg = small_config(tmp);

  // Target decreasing in w0: the minimum sits at high w0.
  TrainingSet data;
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    auto w = trex::testing::random_simplex_point(rng, 3);
    data.features.push_back(w);
    data.targets.push_back(1.0 - 0.15 * w[0]);
  }
  BoostingConfig bcfg;
  bcfg.n_trees = 100;
  auto model = RegressionModel::fit(data, bcfg);

  cfg.jobs = 1;
  auto serial = search(model, cfg, corpus);
  cfg.jobs = 8;
  auto parallel = search(model, cfg, corpus);
  CHECK(serial.predicted == parallel.predicted);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(serial.best[j] == parallel.best[j]);
  }
  CHECK(serial.best[0] > 0.5);
  REQUIRE(serial.top.size() == parallel.top.size());
  for (std::size_t i = 0; i < serial.top.size(); ++i) {
    CHECK(serial.top[i].second == parallel.top[i].second);
  }
}

TEST_CASE("search result serializes") {
  TempDir tmp;
  auto corpus = make_corpus(tmp);
  auto cfg = small_config(tmp);
  cfg.search_candidates = 5000;
  auto result = search(constant_model(3), cfg, corpus, 5);
  result.save(tmp.path / "search.json", corpus.index());
  CHECK(fs::exists(tmp.path / "search.json"));
}

TEST_CASE("train_full produces a record at the full scale") {
  TempDir tmp;
  auto corpus = make_corpus(tmp);
  auto cfg = small_config(tmp);
  auto reference = resolve_reference(cfg, corpus, cfg.full_scale);
  auto [tokenizer, rec] =
      train_full(Mixture::uniform(3), cfg, corpus, reference);
  CHECK(tokenizer.vocab_size() <= cfg.full_scale.vocab);
  CHECK(rec.scale_bytes == cfg.full_scale.bytes);
  CHECK(rec.scale_vocab == cfg.full_scale.vocab);
  CHECK(rec.overall > 0.0);
}

TEST_CASE("rank invariance: matrix shape, symmetry, unit diagonal") {
  TempDir tmp;
  auto corpus = make_corpus(tmp);
  auto cfg = small_config(tmp);

  std::vector<Mixture> mixtures;
  std::mt19937_64 rng(6);
  for (int i = 0; i < 8; ++i) {
    mixtures.emplace_back(trex::testing::random_simplex_point(rng, 3));
  }
  std::vector<ScaleConfig> scales{{8 * 1024, 280}, {16 * 1024, 300}};

  CHECK_THROWS_AS(
      analyze_rank_invariance({mixtures[0]}, scales, cfg, corpus),
      ValidationError);
  CHECK_THROWS_AS(
      analyze_rank_invariance(mixtures, {scales[0]}, cfg, corpus),
      ValidationError);

  auto report = analyze_rank_invariance(mixtures, scales, cfg, corpus);
  REQUIRE(report.spearman_matrix.size() == 2);
  CHECK(report.spearman_matrix[0][0] == 1.0);
  CHECK(report.spearman_matrix[1][1] == 1.0);
  CHECK(report.spearman_matrix[0][1] == report.spearman_matrix[1][0]);
  for (const auto& row : report.overall_nsl) {
    REQUIRE(row.size() == 8);
    for (double v : row) CHECK(v > 0.0);
  }
  report.save(tmp.path / "rank.json");
  CHECK(fs::exists(tmp.path / "rank.json"));
}

TEST_CASE("cost estimates scale linearly with NSL") {
  auto report = estimate_cost(8009.6, 1.0,
                              {{"baseline", 1.0}, {"half", 0.5}, {"opt", 0.871}});
  REQUIRE(report.estimates.size() == 3);
  CHECK(report.estimates[0].estimated_hours == doctest::Approx(8009.6));
  CHECK(report.estimates[1].estimated_hours == doctest::Approx(4004.8));
  CHECK(report.estimates[2].estimated_hours ==
        doctest::Approx(8009.6 * 0.871));
  CHECK(report.adaptmix_iterations == 20);

  CHECK_THROWS_AS(estimate_cost(0.0, 1.0, {}), ValidationError);
  CHECK_THROWS_AS(estimate_cost(1.0, 0.0, {}), ValidationError);
  CHECK_THROWS_AS(estimate_cost(1.0, 1.0, {{"x", -1.0}}), ValidationError);
}

TEST_CASE("entropy analysis matches mixture_entropy") {
  std::vector<CompressionRecord> records;
  records.push_back({Mixture::uniform(4), 0, 0, {}, 0.9, 0});
  records.push_back({Mixture({1.0, 0.0, 0.0, 0.0}), 0, 0, {}, 1.1, 0});
  auto rows = analyze_entropy(records);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].entropy == doctest::Approx(1.0));
  CHECK(rows[0].overall_nsl == 0.9);
  CHECK(rows[1].entropy == doctest::Approx(0.0));

  TempDir tmp;
  write_entropy_csv(tmp.path / "entropy.csv", rows);
  auto text = slurp(tmp.path / "entropy.csv");
  CHECK(text.starts_with("id,entropy,overall_nsl\n"));

  CHECK_THROWS_AS(analyze_entropy({}), ValidationError);
}
