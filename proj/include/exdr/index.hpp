#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "exdr/backends.hpp"
#include "exdr/core.hpp"
#include "exdr/embedding.hpp"

namespace exdr {

/// Entity-enriched fused vector of one corpus entry (unit L2 norm).
struct IndexRecord {
  std::string corpus_id;
  EmbeddingVector fused;
  FineGrainedLabel fine_label = FineGrainedLabel::RealNews;
  BinaryLabel binary_label = BinaryLabel::Real;

  bool operator==(const IndexRecord&) const = default;
};

/// Unit-norm embedding of a corpus explanation, for label inference.
struct ExplanationRecord {
  std::string corpus_id;
  EmbeddingVector expl_vec;
  FineGrainedLabel fine_label = FineGrainedLabel::RealNews;

  bool operator==(const ExplanationRecord&) const = default;
};

struct EvidenceIndex {
  std::size_t dim = 0;
  std::vector<IndexRecord> records;            // sorted by corpus_id
  std::vector<ExplanationRecord> explanations;  // sorted by corpus_id

  bool operator==(const EvidenceIndex&) const = default;
};

/// Mean of the three vectors, L2-normalized.
EmbeddingVector fuse_features(const EmbeddingVector& image, const EmbeddingVector& text,
                              const EmbeddingVector& entities);

/// Surfaces joined by ", " in the given order.
std::string entity_string(const std::vector<EntitySpan>& entities);

/// Image/text/entity vectors of one item. Entities come from `explanation`;
/// when none are found the claim text stands in for the entity string.
EmbeddingVector fused_vector_for(Backend& backend, const ImageRef& image,
                                 const std::string& text, const std::string& explanation);

/// Builds both record lists. `jobs` bounds concurrent backend calls.
EvidenceIndex build_index(const std::vector<CorpusEntry>& corpus, Backend& backend,
                          std::size_t jobs = 1);

using RecordFilter = std::function<bool(const IndexRecord&)>;

struct ScoredId {
  std::string corpus_id;
  double score = 0.0;

  bool operator==(const ScoredId&) const = default;
};

/// Exact top-k by dot product over records passing `filter`; ties by
/// corpus_id ascending. Throws EmptyPool when nothing passes.
std::vector<ScoredId> query_topk(const std::vector<IndexRecord>& index,
                                 const EmbeddingVector& query, std::size_t k,
                                 const RecordFilter& filter = {});

/// Text format: one JSON header line then one JSON record per line.
void save_index(const EvidenceIndex& index, const std::string& path);
std::string serialize_index(const EvidenceIndex& index);
/// Verifies unit norms (1e-6) and declared counts.
EvidenceIndex load_index(const std::string& path);
EvidenceIndex parse_index(std::string_view content);

inline constexpr double kUnitNormTolerance = 1e-6;

}  // namespace exdr
