// exdr: explanation-driven dynamic retrieval for image-text claim checking.
//
//   exdr index  --corpus corpus.jsonl --out index.exdr
//   exdr tune   --val val.jsonl --corpus corpus.jsonl --index index.exdr --out thresholds.json
//   exdr run    --data test.jsonl --corpus corpus.jsonl --index index.exdr --modes no,full,dynamic
//   exdr report --outcomes outcomes.jsonl

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "exdr/pipeline.hpp"

namespace {

struct BackendOptions {
  std::string kind = "fixture";
  std::vector<std::string> fixtures;
  std::string url;

  void attach(CLI::App* app) {
    app->add_option("--backend", kind, "Model backend")->check(CLI::IsMember({"http", "fixture"}));
    app->add_option("--fixtures", fixtures, "Fixture JSONL file(s) for --backend fixture");
    app->add_option("--url", url, "Backend base URL (default: $EXDR_BACKEND_URL)");
  }

  std::unique_ptr<exdr::Backend> make() const {
    std::string u = url;
    if (u.empty()) {
      if (const char* env = std::getenv("EXDR_BACKEND_URL")) u = env;
    }
    return exdr::make_backend(kind, fixtures, u);
  }
};

struct EngineOptions {
  std::size_t k_vote = 10;
  std::size_t k_tok = 10;
  bool prompt3_literal = false;
  std::size_t jobs = 1;
  std::string prompt_dir;
  std::string lexicons;

  void attach(CLI::App* app) {
    app->add_option("--k-vote", k_vote, "Neighbours for fine-label voting")->check(CLI::PositiveNumber);
    app->add_option("--k-tok", k_tok, "Top candidates at the verdict position")->check(CLI::PositiveNumber);
    app->add_flag("--prompt3-literal", prompt3_literal,
                  "Use fixed real/fake wording for the two few-shot examples");
    app->add_option("--jobs", jobs, "Concurrent samples")->check(CLI::PositiveNumber);
    app->add_option("--prompt-dir", prompt_dir, "Directory with prompt overrides");
    app->add_option("--lexicons", lexicons, "JSON file overriding the support lexicons");
  }

  exdr::RunConfig config() const {
    exdr::RunConfig cfg;
    cfg.k_vote = k_vote;
    cfg.k_tok = k_tok;
    cfg.prompt3_literal = prompt3_literal;
    cfg.jobs = jobs;
    if (!prompt_dir.empty()) cfg.prompts = exdr::PromptSet::from_dir(prompt_dir);
    if (!lexicons.empty()) cfg.lexicons = exdr::SupportLexicons::from_json_file(lexicons);
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explanation-driven dynamic retrieval for image-text claim verification"};
  app.require_subcommand(1);

  // index
  auto* index_cmd = app.add_subcommand("index", "Build the hybrid evidence index");
  std::string corpus_path, index_out;
  std::size_t index_jobs = 1;
  BackendOptions index_backend;
  index_cmd->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  index_cmd->add_option("--out", index_out, "Index file to write")->required();
  index_cmd->add_option("--jobs", index_jobs, "Concurrent entries")->check(CLI::PositiveNumber);
  index_backend.attach(index_cmd);

  // tune
  auto* tune_cmd = app.add_subcommand("tune", "Search trigger thresholds on a validation set");
  std::string val_path, tune_corpus, tune_index, tune_out;
  exdr::SearchConfig search;
  BackendOptions tune_backend;
  EngineOptions tune_engine;
  tune_cmd->add_option("--val", val_path, "Validation dataset JSONL (gold labels required)")->required();
  tune_cmd->add_option("--corpus", tune_corpus, "Corpus JSONL")->required();
  tune_cmd->add_option("--index", tune_index, "Index file")->required();
  tune_cmd->add_option("--out", tune_out, "thresholds.json to write")->required();
  tune_cmd->add_option("--seed", search.rng_seed, "RNG seed");
  tune_cmd->add_option("--n-iter", search.n_iter, "Monte Carlo samples");
  tune_cmd->add_option("--top-k-centers", search.top_k_centers, "Centers refined locally");
  tune_cmd->add_option("--delta", search.delta_fraction, "Local step as a fraction of each range");
  tune_cmd->add_option("--radius", search.local_radius, "Local grid radius in steps");
  tune_backend.attach(tune_cmd);
  tune_engine.attach(tune_cmd);

  // run
  auto* run_cmd = app.add_subcommand("run", "Run detection with optional retrieval");
  std::string data_path, run_corpus, run_index, thresholds_arg, out_dir = ".";
  std::string mode_arg, modes_arg;
  std::uint64_t run_seed = 0;
  BackendOptions run_backend;
  EngineOptions run_engine;
  run_cmd->add_option("--data", data_path, "Dataset JSONL")->required();
  run_cmd->add_option("--corpus", run_corpus, "Corpus JSONL");
  run_cmd->add_option("--index", run_index, "Index file");
  auto* mode_opt = run_cmd->add_option("--mode", mode_arg, "no | full | dynamic");
  run_cmd->add_option("--modes", modes_arg, "Comma-separated modes sharing one plain pass")
      ->excludes(mode_opt);
  run_cmd->add_option("--thresholds", thresholds_arg, "thresholds.json or a,b,c");
  run_cmd->add_option("--seed", run_seed, "Recorded in the summary; inference is deterministic");
  run_cmd->add_option("--out", out_dir, "Output directory for summary.json and outcomes.jsonl");
  run_backend.attach(run_cmd);
  run_engine.attach(run_cmd);

  // report
  auto* report_cmd = app.add_subcommand("report", "Recompute the summary from outcomes.jsonl");
  std::string outcomes_path, report_out;
  report_cmd->add_option("--outcomes", outcomes_path, "outcomes.jsonl")->required();
  report_cmd->add_option("--out", report_out, "Write the summary here as well as stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (index_cmd->parsed()) {
      const auto corpus = exdr::load_corpus(corpus_path);
      auto backend = index_backend.make();
      const auto index = exdr::build_index(corpus, *backend, index_jobs);
      exdr::save_index(index, index_out);
      std::cout << "indexed " << index.records.size() << " entries (dim " << index.dim << ") -> "
                << index_out << "\n";
    } else if (tune_cmd->parsed()) {
      const auto samples = exdr::load_dataset(val_path);
      const auto corpus = exdr::load_corpus(tune_corpus);
      const auto index = exdr::load_index(tune_index);
      auto backend = tune_backend.make();
      exdr::RunConfig cfg = tune_engine.config();
      cfg.modes = {exdr::Mode::FullRag};
      exdr::Engine engine(*backend, cfg, &corpus, &index);
      std::vector<exdr::SampleFailure> failures;
      const auto cache = engine.build_validation_cache(samples, &failures);
      const auto result = exdr::hybrid_search(cache, search);
      auto j = exdr::thresholds_json(result, search, cache.size());
      j["n_failed"] = failures.size();
      exdr::write_json(j, tune_out);
      std::cout << j.dump(2) << "\n";
    } else if (run_cmd->parsed()) {
      exdr::RunConfig cfg = run_engine.config();
      if (!modes_arg.empty()) {
        cfg.modes = exdr::parse_modes(modes_arg);
      } else if (!mode_arg.empty()) {
        cfg.modes = {exdr::parse_mode(mode_arg)};
      }
      if (!thresholds_arg.empty()) cfg.thresholds = exdr::parse_thresholds_arg(thresholds_arg);
      const auto samples = exdr::load_dataset(data_path);
      std::vector<exdr::CorpusEntry> corpus;
      std::optional<exdr::EvidenceIndex> index;
      if (!run_corpus.empty()) corpus = exdr::load_corpus(run_corpus);
      if (!run_index.empty()) index = exdr::load_index(run_index);
      auto backend = run_backend.make();
      exdr::Engine engine(*backend, cfg, run_corpus.empty() ? nullptr : &corpus,
                          index ? &*index : nullptr);
      auto report = engine.run(samples);
      report.summary["config"]["seed"] = run_seed;
      std::filesystem::create_directories(out_dir);
      const auto dir = std::filesystem::path(out_dir);
      exdr::write_outcomes_jsonl(report.outcomes, (dir / "outcomes.jsonl").string());
      exdr::write_json(report.summary, (dir / "summary.json").string());
      std::cout << report.summary.dump(2) << "\n";
    } else if (report_cmd->parsed()) {
      const auto outcomes = exdr::read_outcomes_jsonl(outcomes_path);
      const auto summary = exdr::summarize(outcomes, {});
      if (!report_out.empty()) exdr::write_json(summary, report_out);
      std::cout << summary.dump(2) << "\n";
    }
  } catch (const exdr::Error& e) {
    std::cerr << "exdr: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "exdr: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
