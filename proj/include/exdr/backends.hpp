#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "exdr/core.hpp"
#include "exdr/embedding.hpp"

namespace exdr {

enum class Role { System, User, Assistant };

std::string_view to_string(Role role);

struct Turn {
  Role role = Role::User;
  std::string text;
  std::optional<ImageRef> image;

  bool operator==(const Turn&) const = default;
};

struct GenerationRequest {
  std::string system_prompt;
  std::vector<Turn> turns;
  std::size_t want_top_candidates = 10;
  bool want_logprobs = true;

  bool operator==(const GenerationRequest&) const = default;
};

/// Raw generation output before verdict parsing.
struct GenerationResult {
  std::string text;
  std::vector<GeneratedToken> tokens;
};

struct EntitySpan {
  std::string surface;
  std::string kind;

  bool operator==(const EntitySpan&) const = default;
};

// Wire-level JSON shapes shared by the HTTP client and the fixture store.
// Image references travel as "image"; the HTTP client adds "image_b64".
nlohmann::json generate_request_json(const GenerationRequest& req);
nlohmann::json text_request_json(std::string_view text);
nlohmann::json image_request_json(const ImageRef& image);

GenerationResult generation_result_from_json(const nlohmann::json& j);
nlohmann::json generation_result_to_json(const GenerationResult& r);
EmbeddingVector vector_from_json(const nlohmann::json& j);
std::vector<EntitySpan> entities_from_json(const nlohmann::json& j);

namespace endpoint {
inline constexpr const char* kGenerate = "/generate";
inline constexpr const char* kEmbedText = "/embed_text";
inline constexpr const char* kEmbedImage = "/embed_image";
inline constexpr const char* kEmbedSentence = "/embed_sentence";
inline constexpr const char* kNer = "/ner";
}  // namespace endpoint

/// Model access for the engine. Public calls validate and post-process;
/// implementations supply the do_* hooks. Implementations must tolerate
/// concurrent calls.
class Backend {
 public:
  virtual ~Backend() = default;

  GenerationResult generate_raw(const GenerationRequest& req);
  EmbeddingVector embed_text(std::string_view text);
  EmbeddingVector embed_image(const ImageRef& image);
  EmbeddingVector embed_sentence(std::string_view text);
  /// First-occurrence order, case-insensitive dedup by surface.
  std::vector<EntitySpan> extract_entities(std::string_view text);

  std::uint64_t generate_calls() const { return generate_calls_.load(); }

 protected:
  virtual GenerationResult do_generate(const GenerationRequest& req) = 0;
  virtual EmbeddingVector do_embed_text(std::string_view text) = 0;
  virtual EmbeddingVector do_embed_image(const ImageRef& image) = 0;
  virtual EmbeddingVector do_embed_sentence(std::string_view text) = 0;
  virtual std::vector<EntitySpan> do_extract_entities(std::string_view text) = 0;

 private:
  EmbeddingVector check(EmbeddingVector v, std::atomic<std::size_t>& dim,
                        const char* what);

  std::atomic<std::uint64_t> generate_calls_{0};
  std::atomic<std::size_t> shared_dim_{0};
  std::atomic<std::size_t> sentence_dim_{0};
};

/// Generates and parses. Throws MissingLogprobs when logprobs were asked
/// for but not returned, UnparseableResponse when the verdict is absent.
ModelResponse generate(Backend& backend, const GenerationRequest& req);

/// Record/replay store: JSONL lines of {"endpoint", "request", "response"}.
/// Lookup key is a content hash of endpoint + canonical request JSON.
class FixtureStore {
 public:
  static FixtureStore load(const std::string& path);
  void merge_file(const std::string& path);

  void add(std::string_view endpoint, const nlohmann::json& request,
           nlohmann::json response);
  const nlohmann::json* find(std::string_view endpoint,
                             const nlohmann::json& request) const;

  // Convenience writers used by tests and world builders.
  void add_generation(const GenerationRequest& req, const GenerationResult& result);
  void add_text_vector(std::string_view text, const EmbeddingVector& v);
  void add_image_vector(const ImageRef& image, const EmbeddingVector& v);
  void add_sentence_vector(std::string_view text, const EmbeddingVector& v);
  void add_entities(std::string_view text, const std::vector<EntitySpan>& entities);

  void save(const std::string& path) const;
  std::size_t size() const { return records_.size(); }

  static std::string key_of(std::string_view endpoint, const nlohmann::json& request);

 private:
  struct Record {
    std::string endpoint;
    nlohmann::json request;
    nlohmann::json response;
  };
  std::vector<Record> records_;
  std::unordered_map<std::string, std::size_t> by_key_;
};

/// Deterministic replay backend. Read-only after construction.
class FixtureBackend final : public Backend {
 public:
  explicit FixtureBackend(FixtureStore store) : store_(std::move(store)) {}

 protected:
  GenerationResult do_generate(const GenerationRequest& req) override;
  EmbeddingVector do_embed_text(std::string_view text) override;
  EmbeddingVector do_embed_image(const ImageRef& image) override;
  EmbeddingVector do_embed_sentence(std::string_view text) override;
  std::vector<EntitySpan> do_extract_entities(std::string_view text) override;

 private:
  const nlohmann::json& lookup(std::string_view endpoint,
                               const nlohmann::json& request) const;
  FixtureStore store_;
};

struct HttpBackendConfig {
  std::string base_url;  // e.g. http://127.0.0.1:8080
  int max_retries = 2;
  std::chrono::milliseconds initial_backoff{100};
  std::chrono::seconds timeout{60};
};

/// JSON-over-POST client for the sidecar wire protocol.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig cfg);
  ~HttpBackend() override;

 protected:
  GenerationResult do_generate(const GenerationRequest& req) override;
  EmbeddingVector do_embed_text(std::string_view text) override;
  EmbeddingVector do_embed_image(const ImageRef& image) override;
  EmbeddingVector do_embed_sentence(std::string_view text) override;
  std::vector<EntitySpan> do_extract_entities(std::string_view text) override;

 private:
  nlohmann::json post(const char* path, const nlohmann::json& body) const;
  HttpBackendConfig cfg_;
};

/// Builds the backend selected by name ("http" or "fixture").
std::unique_ptr<Backend> make_backend(const std::string& kind,
                                      const std::vector<std::string>& fixture_paths,
                                      const std::string& url);

}  // namespace exdr
