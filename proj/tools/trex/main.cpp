#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "trex/bpe.hpp"
#include "trex/common.hpp"
#include "trex/corpus.hpp"
#include "trex/metrics.hpp"
#include "trex/mixture.hpp"
#include "trex/pipeline.hpp"
#include "trex/regressor.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitFleetBudget = 3;

struct GlobalOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  std::optional<std::string> out;
  std::optional<std::string> corpus;
};

trex::PipelineConfig load_config(const GlobalOpts& g) {
  trex::PipelineConfig cfg;
  if (!g.config_path.empty()) {
    cfg = trex::PipelineConfig::from_json_file(g.config_path);
  }
  if (g.seed) cfg.master_seed = *g.seed;
  if (g.jobs) cfg.jobs = *g.jobs;
  if (g.out) cfg.out_dir = *g.out;
  if (g.corpus) cfg.corpus_manifest = *g.corpus;
  return cfg;
}

trex::CorpusStore load_corpus_for(const trex::PipelineConfig& cfg) {
  if (cfg.corpus_manifest.empty()) {
    throw trex::ValidationError(
        "no corpus manifest configured (--corpus or config corpus_manifest)");
  }
  auto manifest = trex::CorpusManifest::load(cfg.corpus_manifest);
  auto store = trex::load_corpus(manifest);
  if (!store.has_split() && cfg.test_fraction > 0.0) {
    store = trex::split_corpus(store, cfg.test_fraction,
                               trex::derive_seed(cfg.master_seed, "split"));
  }
  return store;
}

std::vector<trex::ScaleConfig> parse_scales(const std::string& spec) {
  std::vector<trex::ScaleConfig> scales;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw trex::ValidationError("scale '" + item +
                                  "' is not of the form bytes:vocab");
    }
    trex::ScaleConfig s;
    s.bytes = std::stoull(item.substr(0, colon));
    s.vocab = static_cast<std::uint32_t>(std::stoul(item.substr(colon + 1)));
    scales.push_back(s);
  }
  if (scales.empty()) throw trex::ValidationError("empty scale grid");
  return scales;
}

trex::Mixture load_mixture_arg(const std::string& arg,
                               const trex::LanguageIndex& index) {
  if (arg == "uniform") return trex::Mixture::uniform(index.size());
  std::ifstream in(arg, std::ios::binary);
  if (!in) throw trex::ValidationError("cannot open mixture file: " + arg);
  std::stringstream buf;
  buf << in.rdbuf();
  return trex::Mixture::from_json(buf.str(), index);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TReX: compression-optimal data mixtures for tokenizer training"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.fallthrough();
  app.add_option("--config", g.config_path, "Pipeline config (JSON)");
  app.add_option("--seed", g.seed, "Master seed (overrides config)");
  app.add_option("--jobs", g.jobs, "Worker threads (overrides config)");
  app.add_option("--out", g.out, "Output directory (overrides config)");
  app.add_option("--corpus", g.corpus, "Corpus manifest path (overrides config)");

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic corpus");
  std::size_t gen_langs = 5;
  std::uint64_t gen_bytes = 2 * 1024 * 1024;
  gen->add_option("--langs", gen_langs, "Number of synthetic languages");
  gen->add_option("--bytes-per-lang", gen_bytes, "Bytes of text per language");

  // ingest
  auto* ing = app.add_subcommand("ingest", "Validate and index a corpus manifest");

  // split
  auto* spl = app.add_subcommand("split", "Record the train/test split in the manifest");
  double split_fraction = 0.001;
  spl->add_option("--fraction", split_fraction, "Test fraction [0.0005, 0.01]");

  // fleet
  auto* fleet_cmd = app.add_subcommand("fleet", "Run the proxy-tokenizer fleet");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Fit the regression model on records.csv");

  // search
  auto* search_cmd = app.add_subcommand("search", "Sweep candidate mixtures through the model");

  // train-full
  auto* full_cmd = app.add_subcommand("train-full", "Train a full-scale tokenizer for one mixture");
  std::string full_mixture = "search-best";
  std::string full_name = "full";
  full_cmd->add_option("--mixture", full_mixture,
                       "'uniform', 'search-best', or a mixture JSON file");
  full_cmd->add_option("--name", full_name, "Artifact name prefix");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a saved tokenizer on the test split");
  std::string eval_tokenizer;
  std::string eval_mixture = "uniform";
  eval_cmd->add_option("--tokenizer", eval_tokenizer, "Tokenizer JSON file")
      ->required();
  eval_cmd->add_option("--mixture", eval_mixture,
                       "Mixture the tokenizer was trained on (for the record)");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Diagnostics");
  analyze->require_subcommand(1);
  auto* ri_cmd = analyze->add_subcommand("rank-invariance",
                                         "Cross-scale Spearman matrix");
  std::size_t ri_mixtures = 16;
  std::string ri_scales = "262144:512,1048576:1024";
  ri_cmd->add_option("--mixtures", ri_mixtures, "Number of sampled mixtures (>= 8)");
  ri_cmd->add_option("--scales", ri_scales, "Comma-separated bytes:vocab grid");
  auto* ent_cmd = analyze->add_subcommand("entropy",
                                          "Mixture entropy vs overall NSL");

  // estimate-cost
  auto* cost_cmd = app.add_subcommand("estimate-cost", "Linear-in-tokens training cost estimates");
  double baseline_hours = 0.0;
  double baseline_nsl = 1.0;
  std::string hardware = "32x H100";
  std::vector<std::string> cost_nsls;
  cost_cmd->add_option("--baseline-hours", baseline_hours, "Baseline training hours")
      ->required();
  cost_cmd->add_option("--baseline-nsl", baseline_nsl, "Baseline NSL");
  cost_cmd->add_option("--hardware", hardware, "Hardware description");
  cost_cmd->add_option("--nsl", cost_nsls, "name=nsl entries to estimate");

  CLI11_PARSE(app, argc, argv);

  try {
    trex::PipelineConfig cfg = load_config(g);
    fs::create_directories(cfg.out_dir);

    if (*gen) {
      auto manifest = trex::generate_synthetic_corpus(
          cfg.out_dir / "corpus", gen_langs, gen_bytes, cfg.master_seed);
      const auto path = cfg.out_dir / "manifest.json";
      manifest.save(path);
      std::cout << "wrote " << path.string() << " (" << gen_langs
                << " languages)\n";
      return 0;
    }

    if (*ing) {
      auto manifest = trex::CorpusManifest::load(cfg.corpus_manifest);
      trex::LanguageIndex index(manifest.tags);
      std::vector<std::pair<std::string, fs::path>> paths;
      for (std::size_t i = 0; i < manifest.tags.size(); ++i) {
        paths.emplace_back(manifest.tags[i], manifest.files[i]);
      }
      trex::IngestReport report;
      auto store = trex::ingest(paths, index, &report);
      manifest.checksum = store.manifest_checksum();
      for (std::size_t i = 0; i < index.size(); ++i) {
        manifest.doc_counts[i] = store.language(i).docs.size();
        manifest.byte_counts[i] = store.language(i).total_bytes;
      }
      manifest.save(cfg.corpus_manifest);
      std::cout << report.documents << " documents, "
                << report.skipped_invalid_utf8 << " skipped (invalid UTF-8)\n";
      for (const auto& loc : report.skipped_locations) {
        std::cerr << "skipped " << loc << "\n";
      }
      return 0;
    }

    if (*spl) {
      auto manifest = trex::CorpusManifest::load(cfg.corpus_manifest);
      manifest.test_fraction = split_fraction;
      manifest.split_seed = trex::derive_seed(cfg.master_seed, "split");
      // Validate that the split is actually constructible.
      trex::load_corpus(manifest);
      manifest.save(cfg.corpus_manifest);
      std::cout << "split recorded: test fraction " << split_fraction << "\n";
      return 0;
    }

    if (*fleet_cmd) {
      cfg.validate();
      auto corpus = load_corpus_for(cfg);
      auto reference = trex::resolve_reference(cfg, corpus, cfg.proxy_scale);
      reference.save(cfg.out_dir / "reference_tokenizer.json");
      auto outcome = trex::run_proxy_fleet(cfg, corpus, reference);
      trex::write_records_csv(cfg.out_dir / "records.csv", outcome.records,
                              corpus.index());
      std::cout << outcome.records.size() << " records ("
                << outcome.failed << " failed)\n";
      for (const auto& f : outcome.failures) std::cerr << "failed " << f << "\n";
      return 0;
    }

    if (*fit_cmd) {
      auto corpus = load_corpus_for(cfg);
      auto records =
          trex::read_records_csv(cfg.out_dir / "records.csv", corpus.index());
      auto [model, report] = trex::fit_and_evaluate(records, cfg);
      model.save(cfg.out_dir / "model.json");
      std::ofstream rep(cfg.out_dir / "eval_report.json", std::ios::binary);
      rep << "{\"mape\": " << trex::format_double(report.mape)
          << ", \"spearman\": " << trex::format_double(report.spearman)
          << ", \"n_points\": " << report.n_points << "}\n";
      std::cout << "MAPE " << report.mape << "  spearman " << report.spearman
                << " on " << report.n_points << " holdout points\n";
      return 0;
    }

    if (*search_cmd) {
      auto corpus = load_corpus_for(cfg);
      auto model = trex::RegressionModel::load(cfg.out_dir / "model.json");
      auto result = trex::search(model, cfg, corpus);
      result.save(cfg.out_dir / "search_result.json", corpus.index());
      std::cout << "best predicted NSL " << result.predicted << " over "
                << result.candidates_scanned << " candidates ("
                << result.wall_seconds << " s)\n"
                << result.best.to_json(corpus.index()) << "\n";
      return 0;
    }

    if (*full_cmd) {
      auto corpus = load_corpus_for(cfg);
      trex::Mixture w = trex::Mixture::uniform(corpus.index().size());
      if (full_mixture == "search-best") {
        std::ifstream in(cfg.out_dir / "search_result.json", std::ios::binary);
        if (!in) {
          throw trex::ValidationError(
              "no search_result.json in out dir; run `trex search` first or "
              "pass --mixture");
        }
        std::stringstream buf;
        buf << in.rdbuf();
        auto j = nlohmann::json::parse(buf.str());
        w = trex::Mixture::from_json(j.at("best_mixture").dump(),
                                     corpus.index());
      } else {
        w = load_mixture_arg(full_mixture, corpus.index());
      }
      auto reference = trex::resolve_reference(cfg, corpus, cfg.full_scale);
      auto [tokenizer, record] = trex::train_full(w, cfg, corpus, reference);
      tokenizer.save(cfg.out_dir / (full_name + "_tokenizer.json"));
      std::ofstream rec(cfg.out_dir / (full_name + "_record.json"),
                        std::ios::binary);
      rec << record.to_json(corpus.index()) << "\n";
      std::cout << full_name << " overall NSL " << record.overall << "\n";
      return 0;
    }

    if (*eval_cmd) {
      auto corpus = load_corpus_for(cfg);
      auto tokenizer = trex::SubwordTokenizer::load(eval_tokenizer);
      auto w = load_mixture_arg(eval_mixture, corpus.index());
      auto reference = trex::resolve_reference(cfg, corpus, cfg.full_scale);
      auto record = trex::evaluate_tokenizer(tokenizer, w, cfg.full_scale,
                                             corpus, reference);
      std::cout << record.to_json(corpus.index()) << "\n";
      return 0;
    }

    if (*ri_cmd) {
      auto corpus = load_corpus_for(cfg);
      auto scales = parse_scales(ri_scales);
      trex::DirichletConfig dcfg = cfg.dirichlet;
      dcfg.seed = trex::derive_seed(cfg.master_seed, "ri_mixtures");
      auto mixtures = trex::sample_mixtures(
          corpus.index(), corpus.language_byte_sizes(), dcfg, ri_mixtures);
      auto report =
          trex::analyze_rank_invariance(mixtures, scales, cfg, corpus);
      report.save(cfg.out_dir / "rank_invariance.json");
      std::cout << "spearman matrix:\n";
      for (const auto& row : report.spearman_matrix) {
        for (double v : row) std::cout << "  " << v;
        std::cout << "\n";
      }
      return 0;
    }

    if (*ent_cmd) {
      auto corpus = load_corpus_for(cfg);
      auto records =
          trex::read_records_csv(cfg.out_dir / "records.csv", corpus.index());
      auto rows = trex::analyze_entropy(records);
      trex::write_entropy_csv(cfg.out_dir / "entropy.csv", rows);
      std::cout << rows.size() << " rows -> "
                << (cfg.out_dir / "entropy.csv").string() << "\n";
      return 0;
    }

    if (*cost_cmd) {
      std::vector<std::pair<std::string, double>> nsls;
      for (const auto& entry : cost_nsls) {
        const auto eq = entry.find('=');
        if (eq == std::string::npos) {
          throw trex::ValidationError("--nsl entries must be name=value");
        }
        nsls.emplace_back(entry.substr(0, eq), std::stod(entry.substr(eq + 1)));
      }
      auto report =
          trex::estimate_cost(baseline_hours, baseline_nsl, nsls, hardware);
      report.save(cfg.out_dir / "cost_report.json");
      for (const auto& e : report.estimates) {
        std::cout << e.name << ": " << e.estimated_hours << " h (NSL "
                  << e.nsl << ")\n";
      }
      return 0;
    }
  } catch (const trex::FleetFailureError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFleetBudget;
  } catch (const trex::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const trex::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
