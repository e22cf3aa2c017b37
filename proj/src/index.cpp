#include "exdr/index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "exdr/parallel.hpp"

namespace exdr {

using nlohmann::json;

namespace {

constexpr int kIndexVersion = 1;
constexpr const char* kIndexFormat = "exdr-index";

void check_unit(const EmbeddingVector& v, const std::string& id) {
  if (std::abs(l2_norm(v.view()) - 1.0) > kUnitNormTolerance) {
    throw Error(ErrorCode::MalformedRecord, "vector of '" + id + "' is not unit norm");
  }
}

}  // namespace

EmbeddingVector fuse_features(const EmbeddingVector& image, const EmbeddingVector& text,
                              const EmbeddingVector& entities) {
  if (image.dim() != text.dim() || text.dim() != entities.dim()) {
    throw Error(ErrorCode::DimMismatch, "fuse_features: " + std::to_string(image.dim()) + "/" +
                                            std::to_string(text.dim()) + "/" +
                                            std::to_string(entities.dim()));
  }
  EmbeddingVector mean(std::vector<double>(image.dim()));
  for (std::size_t i = 0; i < image.dim(); ++i) {
    mean.values[i] = (image.values[i] + text.values[i] + entities.values[i]) / 3.0;
  }
  return normalized(mean);
}

std::string entity_string(const std::vector<EntitySpan>& entities) {
  std::string out;
  for (const auto& e : entities) {
    if (!out.empty()) out += ", ";
    out += e.surface;
  }
  return out;
}

EmbeddingVector fused_vector_for(Backend& backend, const ImageRef& image,
                                 const std::string& text, const std::string& explanation) {
  const EmbeddingVector v = backend.embed_image(image);
  const EmbeddingVector t = backend.embed_text(text);
  std::string ent = entity_string(backend.extract_entities(explanation));
  if (ent.empty()) ent = text;
  const EmbeddingVector e = backend.embed_text(ent);
  return fuse_features(v, t, e);
}

EvidenceIndex build_index(const std::vector<CorpusEntry>& corpus, Backend& backend,
                          std::size_t jobs) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyIndex, "corpus is empty");
  EvidenceIndex index;
  index.records.resize(corpus.size());
  index.explanations.resize(corpus.size());
  parallel_for(corpus.size(), jobs, [&](std::size_t i) {
    const CorpusEntry& entry = corpus[i];
    try {
      index.records[i] = {entry.id,
                          fused_vector_for(backend, entry.image, entry.text, entry.explanation),
                          entry.fine_label, entry.binary_label()};
      index.explanations[i] = {entry.id, normalized(backend.embed_text(entry.explanation)),
                               entry.fine_label};
    } catch (const Error& e) {
      throw Error(e.code(), "corpus entry '" + entry.id + "': " + e.what());
    }
  });
  auto by_id = [](const auto& a, const auto& b) { return a.corpus_id < b.corpus_id; };
  std::sort(index.records.begin(), index.records.end(), by_id);
  std::sort(index.explanations.begin(), index.explanations.end(), by_id);
  index.dim = index.records.front().fused.dim();
  return index;
}

std::vector<ScoredId> query_topk(const std::vector<IndexRecord>& index,
                                 const EmbeddingVector& query, std::size_t k,
                                 const RecordFilter& filter) {
  if (k == 0) throw Error(ErrorCode::ConfigError, "k must be >= 1");
  std::vector<ScoredId> pool;
  for (const auto& r : index) {
    if (filter && !filter(r)) continue;
    pool.push_back({r.corpus_id, dot(query.view(), r.fused.view())});
  }
  if (pool.empty()) throw Error(ErrorCode::EmptyPool, "no record passes the filter");
  auto order = [](const ScoredId& a, const ScoredId& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.corpus_id < b.corpus_id;
  };
  const std::size_t keep = std::min(k, pool.size());
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(),
                    order);
  pool.resize(keep);
  return pool;
}

std::string serialize_index(const EvidenceIndex& index) {
  std::ostringstream out;
  json header = {{"format", kIndexFormat},
                 {"version", kIndexVersion},
                 {"dim", index.dim},
                 {"count", index.records.size()},
                 {"explanation_count", index.explanations.size()}};
  out << header.dump() << '\n';
  for (const auto& r : index.records) {
    json j = {{"kind", "fused"},
              {"corpus_id", r.corpus_id},
              {"fine_label", to_string(r.fine_label)},
              {"binary_label", to_string(r.binary_label)},
              {"vector", r.fused.values}};
    out << j.dump() << '\n';
  }
  for (const auto& r : index.explanations) {
    json j = {{"kind", "explanation"},
              {"corpus_id", r.corpus_id},
              {"fine_label", to_string(r.fine_label)},
              {"vector", r.expl_vec.values}};
    out << j.dump() << '\n';
  }
  return out.str();
}

void save_index(const EvidenceIndex& index, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << serialize_index(index);
}

EvidenceIndex parse_index(std::string_view content) {
  EvidenceIndex index;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t line_no = 0;
  std::size_t want_records = 0, want_expl = 0;
  try {
    if (!std::getline(in, line)) throw Error(ErrorCode::MalformedRecord, "empty index file");
    ++line_no;
    const json header = json::parse(line);
    if (header.at("format") != kIndexFormat || header.at("version") != kIndexVersion) {
      throw Error(ErrorCode::MalformedRecord, "unsupported index header");
    }
    index.dim = header.at("dim").get<std::size_t>();
    want_records = header.at("count").get<std::size_t>();
    want_expl = header.at("explanation_count").get<std::size_t>();
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const json j = json::parse(line);
      const std::string kind = j.at("kind").get<std::string>();
      const std::string id = j.at("corpus_id").get<std::string>();
      const FineGrainedLabel fine = parse_fine_label(j.at("fine_label").get<std::string>());
      EmbeddingVector v(j.at("vector").get<std::vector<double>>());
      if (v.dim() != index.dim) throw Error(ErrorCode::DimMismatch, "record '" + id + "'");
      check_unit(v, id);
      if (kind == "fused") {
        const BinaryLabel bin = parse_binary_label(j.at("binary_label").get<std::string>());
        if (bin != binary_of(fine)) {
          throw Error(ErrorCode::MalformedRecord, "label mismatch on '" + id + "'");
        }
        index.records.push_back({id, std::move(v), fine, bin});
      } else if (kind == "explanation") {
        index.explanations.push_back({id, std::move(v), fine});
      } else {
        throw Error(ErrorCode::MalformedRecord, "unknown record kind '" + kind + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord,
                "index line " + std::to_string(line_no) + ": " + e.what());
  }
  if (index.records.size() != want_records || index.explanations.size() != want_expl) {
    throw Error(ErrorCode::MalformedRecord, "index record count disagrees with header");
  }
  return index;
}

EvidenceIndex load_index(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open index " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_index(ss.str());
}

}  // namespace exdr
