#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "exdr/error.hpp"

namespace exdr {

enum class BinaryLabel { Real, Fake };

/// Deception categories; RealNews is the only one that projects to Real.
enum class FineGrainedLabel {
  RealNews,
  ImageFabrication,
  EntityInconsistency,
  EventInconsistency,
  TimeOrSpaceInconsistency,
  IneffectiveVisualInformation,
};

inline constexpr std::size_t kNumFineLabels = 6;

inline constexpr FineGrainedLabel kAllFineLabels[kNumFineLabels] = {
    FineGrainedLabel::RealNews,
    FineGrainedLabel::ImageFabrication,
    FineGrainedLabel::EntityInconsistency,
    FineGrainedLabel::EventInconsistency,
    FineGrainedLabel::TimeOrSpaceInconsistency,
    FineGrainedLabel::IneffectiveVisualInformation,
};

std::string_view to_string(BinaryLabel label);
std::string_view to_string(FineGrainedLabel label);

/// Case-insensitive; throws Error(UnknownBinaryLabel) on anything else.
BinaryLabel parse_binary_label(std::string_view text);
/// Accepts the canonical snake_case names, case-insensitively.
FineGrainedLabel parse_fine_label(std::string_view text);

BinaryLabel binary_of(FineGrainedLabel fine);

inline BinaryLabel opposite(BinaryLabel label) {
  return label == BinaryLabel::Real ? BinaryLabel::Fake : BinaryLabel::Real;
}

/// Opaque image reference (path or URI). The engine never decodes pixels.
struct ImageRef {
  std::string uri;

  bool operator==(const ImageRef&) const = default;
};

struct Sample {
  std::string id;
  ImageRef image;
  std::string text;
  std::optional<BinaryLabel> gold_binary;
  std::optional<FineGrainedLabel> gold_fine;
};

struct CorpusEntry {
  std::string id;
  ImageRef image;
  std::string text;
  std::string explanation;
  FineGrainedLabel fine_label;

  BinaryLabel binary_label() const { return binary_of(fine_label); }
};

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;

  bool operator==(const TokenLogprob&) const = default;
};

/// One generated token with its alternatives at that position.
struct GeneratedToken {
  std::string token;
  double logprob = 0.0;
  std::vector<TokenLogprob> top;
};

struct LabelLogprobs {
  double logp_real = 0.0;
  double logp_fake = 0.0;
};

struct ModelResponse {
  BinaryLabel predicted = BinaryLabel::Real;
  std::string explanation;
  std::vector<TokenLogprob> explanation_token_logprobs;
  std::size_t classification_position = 0;
  std::vector<TokenLogprob> top_candidates;  // descending by logprob
  LabelLogprobs label_logprobs;
};

/// Floor probability for label words absent from the candidate list.
inline constexpr double kProbFloor = 1e-6;

/// Parses "The pair is {real|fake} because ..." and aligns it with the
/// token stream. With an empty token stream only predicted/explanation are
/// filled in. Throws Error(UnparseableResponse) when the verdict is absent.
ModelResponse parse_response(std::string_view raw_text,
                             const std::vector<GeneratedToken>& tokens,
                             std::size_t top_k = 10);

/// Inverse of the verdict/explanation part of parse_response.
std::string serialize_response(BinaryLabel predicted,
                               std::string_view explanation);

/// Label logprobs from the first candidates normalizing to "real"/"fake";
/// missing words get ln(kProbFloor), zero logprobs are clamped to
/// ln(1 - kProbFloor).
LabelLogprobs extract_label_logprobs(const std::vector<TokenLogprob>& top);

/// Lowercases and strips sub-word markers, whitespace, and punctuation.
std::string normalize_token(std::string_view token);

std::vector<CorpusEntry> load_corpus(const std::string& path);
std::vector<Sample> load_dataset(const std::string& path);

/// Line-oriented variants used by the file loaders.
std::vector<CorpusEntry> parse_corpus_jsonl(std::string_view content);
std::vector<Sample> parse_dataset_jsonl(std::string_view content);

}  // namespace exdr
