#include "exdr/retriever.hpp"

#include <algorithm>
#include <memory>

namespace exdr {

InferredLabel infer_fine_label(const EmbeddingVector& expl_vec,
                               const std::vector<ExplanationRecord>& expl_index, std::size_t k) {
  if (expl_index.empty()) throw Error(ErrorCode::EmptyIndex, "explanation index is empty");
  if (k == 0) throw Error(ErrorCode::ConfigError, "k must be >= 1");

  struct Hit {
    double sim;
    const ExplanationRecord* rec;
  };
  std::vector<Hit> hits;
  hits.reserve(expl_index.size());
  for (const auto& r : expl_index) hits.push_back({dot(expl_vec.view(), r.expl_vec.view()), &r});
  const std::size_t keep = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(),
                    [](const Hit& a, const Hit& b) {
                      if (a.sim != b.sim) return a.sim > b.sim;
                      return a.rec->corpus_id < b.rec->corpus_id;
                    });

  InferredLabel out;
  out.k_used = static_cast<int>(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    const auto idx = static_cast<std::size_t>(hits[i].rec->fine_label);
    ++out.votes[idx];
    out.sim_sums[idx] += hits[i].sim;
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumFineLabels; ++c) {
    if (out.votes[c] > out.votes[best] ||
        (out.votes[c] == out.votes[best] && out.sim_sums[c] > out.sim_sums[best])) {
      best = c;
    }
  }
  out.label = kAllFineLabels[best];
  return out;
}

ContrastivePair retrieve_contrastive(const EmbeddingVector& fused_query,
                                     FineGrainedLabel inferred, BinaryLabel predicted,
                                     const std::vector<IndexRecord>& index) {
  ContrastivePair pair;
  ScoredId pos;
  try {
    pos = query_topk(index, fused_query, 1,
                     [&](const IndexRecord& r) { return r.fine_label == inferred; })
              .front();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyPool) throw;
    const BinaryLabel want = binary_of(inferred);
    try {
      pos = query_topk(index, fused_query, 1,
                       [&](const IndexRecord& r) { return r.binary_label == want; })
                .front();
    } catch (const Error& e2) {
      if (e2.code() != ErrorCode::EmptyPool) throw;
      throw Error(ErrorCode::NoPositivePool,
                  "no record labelled " + std::string(to_string(inferred)) + " or " +
                      std::string(to_string(want)));
    }
    pair.positive_fallback = true;
  }

  ScoredId neg;
  try {
    neg = query_topk(index, fused_query, 1,
                     [&](const IndexRecord& r) {
                       return r.binary_label != predicted && r.corpus_id != pos.corpus_id;
                     })
              .front();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyPool) throw;
    throw Error(ErrorCode::NoNegativePool,
                "corpus has no usable record with binary label other than " +
                    std::string(to_string(predicted)));
  }
  pair.positive = pos.corpus_id;
  pair.pos_score = pos.score;
  pair.negative = neg.corpus_id;
  pair.neg_score = neg.score;
  return pair;
}

CorpusLookup make_corpus_lookup(const std::vector<CorpusEntry>& corpus) {
  auto map = std::make_shared<std::unordered_map<std::string, const CorpusEntry*>>();
  for (const auto& e : corpus) map->emplace(e.id, &e);
  return [map](const std::string& id) -> const CorpusEntry* {
    auto it = map->find(id);
    return it == map->end() ? nullptr : it->second;
  };
}

GenerationRequest assemble_augmented_prompt(const PromptSet& prompts, const Sample& sample,
                                            const ContrastivePair& pair,
                                            const CorpusLookup& corpus, std::size_t k_tok,
                                            bool literal_wording) {
  const CorpusEntry* pos = corpus(pair.positive);
  const CorpusEntry* neg = corpus(pair.negative);
  if (pos == nullptr) throw Error(ErrorCode::MissingCorpusEntry, pair.positive);
  if (neg == nullptr) throw Error(ErrorCode::MissingCorpusEntry, pair.negative);

  const BinaryLabel pos_word = literal_wording ? BinaryLabel::Real : pos->binary_label();
  const BinaryLabel neg_word = literal_wording ? BinaryLabel::Fake : neg->binary_label();

  GenerationRequest req;
  req.system_prompt = prompts.augmented_system;
  req.turns = {
      {Role::User, "the first image <image> and the text " + pos->text + ".", pos->image},
      {Role::Assistant, serialize_response(pos_word, pos->explanation), std::nullopt},
      {Role::User, "the second image <image> and the text " + neg->text + ".", neg->image},
      {Role::Assistant, serialize_response(neg_word, neg->explanation), std::nullopt},
      {Role::User,
       "Now determine the following:\nthe third image <image> and the text " + sample.text + ".",
       sample.image},
  };
  req.want_top_candidates = k_tok;
  req.want_logprobs = true;
  return req;
}

}  // namespace exdr
