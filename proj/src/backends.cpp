#include "exdr/backends.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <httplib.h>

namespace exdr {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::optional<std::string> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TokenLogprob token_logprob_from_json(const json& j) {
  return {j.at("t").get<std::string>(), j.at("logprob").get<double>()};
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

json generate_request_json(const GenerationRequest& req) {
  json turns = json::array();
  for (const auto& t : req.turns) {
    json turn = {{"role", to_string(t.role)}, {"text", t.text}};
    if (t.image) turn["image"] = t.image->uri;
    turns.push_back(std::move(turn));
  }
  return {{"system", req.system_prompt},
          {"turns", std::move(turns)},
          {"top_k", req.want_top_candidates},
          {"logprobs", req.want_logprobs}};
}

json text_request_json(std::string_view text) { return {{"text", text}}; }

json image_request_json(const ImageRef& image) { return {{"image", image.uri}}; }

GenerationResult generation_result_from_json(const json& j) {
  GenerationResult r;
  try {
    r.text = j.at("text").get<std::string>();
    if (auto it = j.find("tokens"); it != j.end() && it->is_array()) {
      for (const auto& tj : *it) {
        GeneratedToken tok;
        tok.token = tj.at("t").get<std::string>();
        tok.logprob = tj.at("logprob").get<double>();
        if (auto top = tj.find("top"); top != tj.end() && top->is_array()) {
          for (const auto& c : *top) tok.top.push_back(token_logprob_from_json(c));
        }
        r.tokens.push_back(std::move(tok));
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BackendUnavailable,
                std::string("malformed /generate response: ") + e.what());
  }
  return r;
}

json generation_result_to_json(const GenerationResult& r) {
  json tokens = json::array();
  for (const auto& t : r.tokens) {
    json top = json::array();
    for (const auto& c : t.top) top.push_back({{"t", c.token}, {"logprob", c.logprob}});
    tokens.push_back({{"t", t.token}, {"logprob", t.logprob}, {"top", std::move(top)}});
  }
  return {{"text", r.text}, {"tokens", std::move(tokens)}};
}

EmbeddingVector vector_from_json(const json& j) {
  try {
    return EmbeddingVector(j.at("vector").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BackendUnavailable,
                std::string("malformed embedding response: ") + e.what());
  }
}

std::vector<EntitySpan> entities_from_json(const json& j) {
  std::vector<EntitySpan> out;
  try {
    for (const auto& e : j.at("entities")) {
      EntitySpan span;
      span.surface = e.at("surface").get<std::string>();
      if (auto k = e.find("kind"); k != e.end() && k->is_string()) {
        span.kind = k->get<std::string>();
      }
      out.push_back(std::move(span));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BackendUnavailable,
                std::string("malformed /ner response: ") + e.what());
  }
  return out;
}

// ---------------------------------------------------------------- Backend

GenerationResult Backend::generate_raw(const GenerationRequest& req) {
  if (req.turns.empty()) {
    throw Error(ErrorCode::ConfigError, "generation request without turns");
  }
  generate_calls_.fetch_add(1);
  return do_generate(req);
}

EmbeddingVector Backend::check(EmbeddingVector v, std::atomic<std::size_t>& dim,
                               const char* what) {
  if (v.dim() == 0) {
    throw Error(ErrorCode::BackendUnavailable, std::string(what) + " returned an empty vector");
  }
  if (!all_finite(v.view())) {
    throw Error(ErrorCode::NonFiniteInput, std::string(what) + " returned non-finite values");
  }
  std::size_t expected = 0;
  if (!dim.compare_exchange_strong(expected, v.dim()) && expected != v.dim()) {
    throw Error(ErrorCode::DimMismatch, std::string(what) + ": dim " +
                                            std::to_string(v.dim()) + " != session dim " +
                                            std::to_string(expected));
  }
  return v;
}

EmbeddingVector Backend::embed_text(std::string_view text) {
  if (text.empty()) throw Error(ErrorCode::ConfigError, "embed_text on empty input");
  return check(do_embed_text(text), shared_dim_, "embed_text");
}

EmbeddingVector Backend::embed_image(const ImageRef& image) {
  if (image.uri.empty()) throw Error(ErrorCode::ConfigError, "embed_image on empty reference");
  return check(do_embed_image(image), shared_dim_, "embed_image");
}

EmbeddingVector Backend::embed_sentence(std::string_view text) {
  if (text.empty()) throw Error(ErrorCode::ConfigError, "embed_sentence on empty input");
  return check(do_embed_sentence(text), sentence_dim_, "embed_sentence");
}

std::vector<EntitySpan> Backend::extract_entities(std::string_view text) {
  if (text.empty()) return {};
  std::vector<EntitySpan> out;
  std::unordered_set<std::string> seen;
  for (auto& span : do_extract_entities(text)) {
    if (span.surface.empty()) continue;
    if (seen.insert(lower(span.surface)).second) out.push_back(std::move(span));
  }
  return out;
}

ModelResponse generate(Backend& backend, const GenerationRequest& req) {
  GenerationResult raw = backend.generate_raw(req);
  if (req.want_logprobs && raw.tokens.empty()) {
    throw Error(ErrorCode::MissingLogprobs, "backend returned no token logprobs");
  }
  return parse_response(raw.text, raw.tokens, req.want_top_candidates);
}

// ----------------------------------------------------------- FixtureStore

std::string FixtureStore::key_of(std::string_view endpoint, const json& request) {
  std::string data(endpoint);
  data += '\n';
  data += request.dump();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(data)));
  return buf;
}

FixtureStore FixtureStore::load(const std::string& path) {
  FixtureStore store;
  store.merge_file(path);
  return store;
}

void FixtureStore::merge_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open fixture file " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json rec = json::parse(line);
      add(rec.at("endpoint").get<std::string>(), rec.at("request"),
          rec.at("response"));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedRecord,
                  path + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void FixtureStore::add(std::string_view endpoint, const json& request, json response) {
  const std::string key = key_of(endpoint, request);
  if (auto it = by_key_.find(key); it != by_key_.end()) {
    records_[it->second].response = std::move(response);
    return;
  }
  by_key_.emplace(key, records_.size());
  records_.push_back({std::string(endpoint), request, std::move(response)});
}

const json* FixtureStore::find(std::string_view endpoint, const json& request) const {
  auto it = by_key_.find(key_of(endpoint, request));
  return it == by_key_.end() ? nullptr : &records_[it->second].response;
}

void FixtureStore::add_generation(const GenerationRequest& req,
                                  const GenerationResult& result) {
  add(endpoint::kGenerate, generate_request_json(req), generation_result_to_json(result));
}

void FixtureStore::add_text_vector(std::string_view text, const EmbeddingVector& v) {
  add(endpoint::kEmbedText, text_request_json(text), {{"vector", v.values}});
}

void FixtureStore::add_image_vector(const ImageRef& image, const EmbeddingVector& v) {
  add(endpoint::kEmbedImage, image_request_json(image), {{"vector", v.values}});
}

void FixtureStore::add_sentence_vector(std::string_view text, const EmbeddingVector& v) {
  add(endpoint::kEmbedSentence, text_request_json(text), {{"vector", v.values}});
}

void FixtureStore::add_entities(std::string_view text,
                                const std::vector<EntitySpan>& entities) {
  json arr = json::array();
  for (const auto& e : entities) arr.push_back({{"surface", e.surface}, {"kind", e.kind}});
  add(endpoint::kNer, text_request_json(text), {{"entities", std::move(arr)}});
}

void FixtureStore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  for (const auto& r : records_) {
    json rec = {{"endpoint", r.endpoint}, {"request", r.request}, {"response", r.response}};
    out << rec.dump() << '\n';
  }
}

// --------------------------------------------------------- FixtureBackend

const json& FixtureBackend::lookup(std::string_view endpoint, const json& request) const {
  const json* hit = store_.find(endpoint, request);
  if (hit == nullptr) {
    std::string shown = request.dump();
    if (shown.size() > 120) shown = shown.substr(0, 120) + "...";
    throw Error(ErrorCode::MissingFixture,
                std::string(endpoint) + " " + FixtureStore::key_of(endpoint, request) +
                    " " + shown);
  }
  return *hit;
}

GenerationResult FixtureBackend::do_generate(const GenerationRequest& req) {
  return generation_result_from_json(lookup(endpoint::kGenerate, generate_request_json(req)));
}

EmbeddingVector FixtureBackend::do_embed_text(std::string_view text) {
  return vector_from_json(lookup(endpoint::kEmbedText, text_request_json(text)));
}

EmbeddingVector FixtureBackend::do_embed_image(const ImageRef& image) {
  return vector_from_json(lookup(endpoint::kEmbedImage, image_request_json(image)));
}

EmbeddingVector FixtureBackend::do_embed_sentence(std::string_view text) {
  return vector_from_json(lookup(endpoint::kEmbedSentence, text_request_json(text)));
}

std::vector<EntitySpan> FixtureBackend::do_extract_entities(std::string_view text) {
  return entities_from_json(lookup(endpoint::kNer, text_request_json(text)));
}

// ------------------------------------------------------------ HttpBackend

HttpBackend::HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.base_url.empty()) {
    throw Error(ErrorCode::ConfigError, "HTTP backend needs a URL (EXDR_BACKEND_URL)");
  }
}

HttpBackend::~HttpBackend() = default;

json HttpBackend::post(const char* path, const json& body) const {
  const std::string payload = body.dump();
  auto backoff = cfg_.initial_backoff;
  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client cli(cfg_.base_url);
    cli.set_connection_timeout(cfg_.timeout);
    cli.set_read_timeout(cfg_.timeout);
    cli.set_write_timeout(cfg_.timeout);
    auto res = cli.Post(path, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error(ErrorCode::BackendUnavailable,
                  std::string(path) + ": HTTP " + std::to_string(res->status) + " " + res->body);
    }
    try {
      return json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::BackendUnavailable,
                  std::string(path) + ": invalid JSON: " + e.what());
    }
  }
  throw Error(ErrorCode::BackendUnavailable,
              cfg_.base_url + path + ": " + last_error);
}

GenerationResult HttpBackend::do_generate(const GenerationRequest& req) {
  json body = generate_request_json(req);
  for (std::size_t i = 0; i < req.turns.size(); ++i) {
    if (!req.turns[i].image) continue;
    if (auto bytes = read_bytes(req.turns[i].image->uri)) {
      body["turns"][i]["image_b64"] = httplib::detail::base64_encode(*bytes);
    }
  }
  return generation_result_from_json(post(endpoint::kGenerate, body));
}

EmbeddingVector HttpBackend::do_embed_text(std::string_view text) {
  return vector_from_json(post(endpoint::kEmbedText, text_request_json(text)));
}

EmbeddingVector HttpBackend::do_embed_image(const ImageRef& image) {
  json body = image_request_json(image);
  if (auto bytes = read_bytes(image.uri)) {
    body["image_b64"] = httplib::detail::base64_encode(*bytes);
  }
  return vector_from_json(post(endpoint::kEmbedImage, body));
}

EmbeddingVector HttpBackend::do_embed_sentence(std::string_view text) {
  return vector_from_json(post(endpoint::kEmbedSentence, text_request_json(text)));
}

std::vector<EntitySpan> HttpBackend::do_extract_entities(std::string_view text) {
  return entities_from_json(post(endpoint::kNer, text_request_json(text)));
}

std::unique_ptr<Backend> make_backend(const std::string& kind,
                                      const std::vector<std::string>& fixture_paths,
                                      const std::string& url) {
  if (kind == "fixture") {
    if (fixture_paths.empty()) {
      throw Error(ErrorCode::ConfigError, "--backend fixture requires --fixtures");
    }
    FixtureStore store;
    for (const auto& p : fixture_paths) store.merge_file(p);
    return std::make_unique<FixtureBackend>(std::move(store));
  }
  if (kind == "http") {
    HttpBackendConfig cfg;
    cfg.base_url = url;
    return std::make_unique<HttpBackend>(std::move(cfg));
  }
  throw Error(ErrorCode::ConfigError, "unknown backend '" + kind + "'");
}

}  // namespace exdr
