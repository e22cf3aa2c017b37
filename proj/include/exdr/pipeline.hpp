#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "exdr/backends.hpp"
#include "exdr/confidence.hpp"
#include "exdr/index.hpp"
#include "exdr/metrics.hpp"
#include "exdr/prompts.hpp"
#include "exdr/retriever.hpp"
#include "exdr/trigger.hpp"

namespace exdr {

enum class Mode { NoRag, FullRag, DynamicRag };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);
/// Comma-separated list such as "no,full,dynamic".
std::vector<Mode> parse_modes(std::string_view text);

struct RunConfig {
  std::vector<Mode> modes{Mode::DynamicRag};
  std::optional<ThresholdTriple> thresholds;
  std::size_t k_vote = 10;
  std::size_t k_tok = 10;
  bool prompt3_literal = false;
  std::size_t jobs = 1;
  PromptSet prompts = PromptSet::defaults();
  SupportLexicons lexicons = SupportLexicons::defaults();

  bool has(Mode m) const;
  /// DynamicRag needs thresholds; retrieval modes need a corpus and index.
  void validate(bool have_index) const;
};

struct SampleOutcome {
  std::string mode;
  std::string sample_id;
  std::optional<BinaryLabel> gold;
  std::optional<BinaryLabel> plain_pred;  // empty when the response was unparseable
  bool triggered = false;
  std::optional<BinaryLabel> augmented_pred;
  std::optional<BinaryLabel> final_pred;
  ConfidenceTriple confidence;
  bool unparseable = false;
  bool logprobs_missing = false;
  std::optional<ContrastivePair> evidence;
  std::optional<InferredLabel> inferred;

  nlohmann::json to_json() const;
  static SampleOutcome from_json(const nlohmann::json& j);
};

struct SampleFailure {
  std::string sample_id;
  std::string error;
};

struct Report {
  std::vector<SampleOutcome> outcomes;  // grouped by mode, sorted by sample id
  std::vector<SampleFailure> failures;
  nlohmann::json summary;
};

/// Per-mode counts derived from outcome records. `n_full` is taken from
/// FullRag records of the same samples when present.
RunCounts counts_for(const std::vector<SampleOutcome>& outcomes, Mode mode, bool* have_full);

/// Builds the summary document from outcome records alone.
nlohmann::json summarize(const std::vector<SampleOutcome>& outcomes,
                         const std::vector<SampleFailure>& failures);

/// Orchestrates plain prediction, confidence, trigger, contrastive retrieval,
/// and augmented re-prediction. At most two generation calls per sample.
class Engine {
 public:
  /// `corpus` and `index` may be null for NoRag-only runs.
  Engine(Backend& backend, RunConfig cfg, const std::vector<CorpusEntry>* corpus,
         const EvidenceIndex* index);

  Report run(const std::vector<Sample>& samples);

  /// FullRag pass over labelled samples, reduced to the search cache.
  ValidationCache build_validation_cache(const std::vector<Sample>& samples,
                                         std::vector<SampleFailure>* failures = nullptr);

 private:
  struct Trace;
  Trace process(const Sample& sample);

  Backend& backend_;
  RunConfig cfg_;
  const std::vector<CorpusEntry>* corpus_;
  const EvidenceIndex* index_;
  CorpusLookup lookup_;
  TokenClassifier classifier_;
};

void write_outcomes_jsonl(const std::vector<SampleOutcome>& outcomes, const std::string& path);
std::vector<SampleOutcome> read_outcomes_jsonl(const std::string& path);

/// thresholds.json with theta_label/theta_tok/theta_sent.
ThresholdTriple load_thresholds(const std::string& path);
/// Accepts either a path to thresholds.json or "a,b,c".
ThresholdTriple parse_thresholds_arg(const std::string& arg);

nlohmann::json thresholds_json(const SearchResult& result, const SearchConfig& cfg,
                               std::size_t n_val);

void write_json(const nlohmann::json& j, const std::string& path);

}  // namespace exdr
