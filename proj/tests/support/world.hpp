#pragma once

#include <optional>
#include <string>
#include <vector>

#include "exdr/backends.hpp"
#include "exdr/confidence.hpp"
#include "exdr/core.hpp"
#include "exdr/prompts.hpp"

namespace exdr::testing {

/// Scripted behaviour of one sample.
struct ScriptedSample {
  std::string id;
  std::string text;
  BinaryLabel gold = BinaryLabel::Real;
  std::optional<BinaryLabel> plain_pred;  // nullopt = unparseable answer
  double p_pred = 0.9;   // probability of the predicted verdict word
  double p_other = 0.05; // probability of the opposite verdict word
  int n_support = 10;    // of k_tok candidates, how many support the prediction
  double token_prob = 0.9;  // every explanation token gets this probability
  BinaryLabel aug_pred = BinaryLabel::Real;
  std::string explanation = "Reuters coverage matches the Paris photo.";
};

struct WorldOptions {
  std::size_t k_tok = 10;
  std::size_t k_vote = 10;
  std::size_t dim = 8;
  bool prompt3_literal = false;
  PromptSet prompts = PromptSet::defaults();
};

struct World {
  std::vector<CorpusEntry> corpus;
  std::vector<Sample> samples;
  FixtureStore store;
};

/// Deterministic pseudo-random vector derived from a string.
EmbeddingVector hashed_vector(std::string_view key, std::size_t dim);

/// Twelve-entry corpus, two per fine label.
std::vector<CorpusEntry> default_corpus();

/// Generation tokens for "The pair is <label> because <explanation>" with the
/// requested candidate structure at the verdict position.
GenerationResult scripted_generation(std::optional<BinaryLabel> label,
                                     const std::string& explanation, double p_pred,
                                     double p_other, int n_support, double token_prob,
                                     std::size_t k_tok);

/// Adds sentence-embedding fixtures for the lexicon references and the two
/// out-of-lexicon candidates the scripted generations use.
void add_sentence_fixtures(FixtureStore& store, const SupportLexicons& lex);

/// Builds the corpus, samples, and every fixture a run over them needs
/// (both plain and augmented generations for every sample).
World build_world(const std::vector<ScriptedSample>& scripted, const WorldOptions& opts,
                  std::vector<CorpusEntry> corpus = default_corpus());

/// Writes corpus.jsonl, data.jsonl, fixtures.jsonl under dir.
void write_world(const World& world, const std::string& dir);

/// The 20-sample world used by the end-to-end checks. Under thresholds
/// (0.5, 0.5, 0.5) exactly five samples trigger; four of them were wrong
/// before retrieval and are fixed by it.
std::vector<ScriptedSample> twenty_sample_script();

}  // namespace exdr::testing
