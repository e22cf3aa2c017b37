#pragma once

#include <array>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "exdr/index.hpp"
#include "exdr/prompts.hpp"

namespace exdr {

struct InferredLabel {
  FineGrainedLabel label = FineGrainedLabel::RealNews;
  std::array<int, kNumFineLabels> votes{};        // indexed by enum value
  std::array<double, kNumFineLabels> sim_sums{};  // summed similarity per label
  int k_used = 0;
};

/// Cosine top-k over explanation vectors, then majority vote. Ties go to
/// the larger summed similarity, then to the earlier label in enum order.
InferredLabel infer_fine_label(const EmbeddingVector& expl_vec,
                               const std::vector<ExplanationRecord>& expl_index, std::size_t k);

struct ContrastivePair {
  std::string positive;
  std::string negative;
  double pos_score = 0.0;
  double neg_score = 0.0;
  /// Set when no record carried the inferred fine label and the positive
  /// was taken from records sharing its binary projection instead.
  bool positive_fallback = false;
};

/// Positive: best dot product among records with the inferred fine label.
/// Negative: best among records whose binary label differs from
/// `predicted`, excluding the positive.
ContrastivePair retrieve_contrastive(const EmbeddingVector& fused_query,
                                     FineGrainedLabel inferred, BinaryLabel predicted,
                                     const std::vector<IndexRecord>& index);

using CorpusLookup = std::function<const CorpusEntry*(const std::string&)>;

/// Lookup over a corpus vector (kept alive by the caller).
CorpusLookup make_corpus_lookup(const std::vector<CorpusEntry>& corpus);

/// Few-shot request [positive; negative; query]. Each example's verdict word
/// comes from its own label unless `literal_wording` forces real/fake.
GenerationRequest assemble_augmented_prompt(const PromptSet& prompts, const Sample& sample,
                                            const ContrastivePair& pair,
                                            const CorpusLookup& corpus, std::size_t k_tok,
                                            bool literal_wording = false);

}  // namespace exdr
