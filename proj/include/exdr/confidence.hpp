#pragma once

#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "exdr/backends.hpp"
#include "exdr/core.hpp"

namespace exdr {

/// Label-level, token-level, and sentence-level confidence of one response.
struct ConfidenceTriple {
  double tau_label = 0.0;
  double tau_tok = 0.0;
  double tau_sent = 0.0;

  bool operator==(const ConfidenceTriple&) const = default;
};

/// Sentinel for responses that could not be parsed; always triggers
/// retrieval under positive thresholds.
inline constexpr ConfidenceTriple kUnparseableConfidence{0.0, 0.0, 0.0};

struct SupportLexicons {
  std::set<std::string> real_words;
  std::set<std::string> fake_words;
  std::string real_template;   // reference sentence, one "{word}" slot
  std::string fake_template;
  std::string query_template;  // query sentence, one "{word}" slot

  static SupportLexicons defaults();
  /// Keys: real_words, fake_words, real_template, fake_template,
  /// query_template. Missing keys keep their defaults.
  static SupportLexicons from_json_file(const std::string& path);

  /// Throws ConfigError unless the sets are disjoint and every template has
  /// exactly one placeholder.
  void validate() const;
};

std::string fill_template(const std::string& tmpl, std::string_view word);

/// |ln p_real - ln p_fake| / |ln p_real + ln p_fake|. Zero logprobs are
/// clamped to ln(1 - 1e-6); non-finite input throws NonFiniteInput.
double label_uncertainty(double logp_real, double logp_fake);

enum class TokenSupport { SupportsReal, SupportsFake };

inline BinaryLabel label_of(TokenSupport s) {
  return s == TokenSupport::SupportsReal ? BinaryLabel::Real : BinaryLabel::Fake;
}

/// Two-stage candidate-token classifier: exact lexicon hit, otherwise
/// mean cosine of "This post is {token}." against each reference group.
/// Reference embeddings are computed lazily once; per-token results are
/// memoized. Safe for concurrent use.
class TokenClassifier {
 public:
  TokenClassifier(SupportLexicons lex, Backend& sentence_backend);

  /// Token is normalized first; std::nullopt when it normalizes to empty.
  std::optional<TokenSupport> classify(std::string_view token);

  struct Similarities {
    double sim_real;
    double sim_fake;
  };
  /// Semantic stage only, exposed for inspection and tests.
  Similarities semantic_similarities(const std::string& normalized_token);

  const SupportLexicons& lexicons() const { return lex_; }

 private:
  void ensure_references();

  SupportLexicons lex_;
  Backend& backend_;
  std::once_flag refs_once_;
  std::vector<EmbeddingVector> real_refs_;
  std::vector<EmbeddingVector> fake_refs_;
  std::shared_mutex memo_mutex_;
  std::unordered_map<std::string, TokenSupport> memo_;
};

/// N_sup / K where K = k_tok (not the number of candidates considered).
double token_support(const ModelResponse& resp, TokenClassifier& classifier,
                     std::size_t k_tok = 10);

/// exp(mean logprob); 0 for an empty explanation.
double sentence_confidence(const std::vector<TokenLogprob>& tokens);

ConfidenceTriple confidence_of(const ModelResponse& resp, TokenClassifier& classifier,
                               std::size_t k_tok = 10);

}  // namespace exdr
