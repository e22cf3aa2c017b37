#include "exdr/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>

#include <json.hpp>

namespace exdr {

namespace {
constexpr std::string_view kSlot = "{word}";

std::size_t count_slots(const std::string& s) {
  std::size_t n = 0;
  for (auto pos = s.find(kSlot); pos != std::string::npos; pos = s.find(kSlot, pos + 1)) ++n;
  return n;
}
}  // namespace

SupportLexicons SupportLexicons::defaults() {
  SupportLexicons lex;
  lex.real_words = {"real",       "genuine",   "authentic", "true",   "legitimate",
                    "realistic",  "legit",     "fact",      "accurate", "related",
                    "likely",     "consistent", "plausible"};
  lex.fake_words = {"fake", "missing",   "false",     "fabric",    "fict",        "un",
                    "mis",  "fraud",     "unrelated", "fictional", "inconsistent"};
  lex.real_template = "The post is {word} and factually correct.";
  lex.fake_template = "The post is {word} and contains misinformation.";
  lex.query_template = "This post is {word}.";
  return lex;
}

SupportLexicons SupportLexicons::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open lexicon file " + path);
  SupportLexicons lex = defaults();
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.contains("real_words")) lex.real_words = j["real_words"].get<std::set<std::string>>();
    if (j.contains("fake_words")) lex.fake_words = j["fake_words"].get<std::set<std::string>>();
    if (j.contains("real_template")) lex.real_template = j["real_template"].get<std::string>();
    if (j.contains("fake_template")) lex.fake_template = j["fake_template"].get<std::string>();
    if (j.contains("query_template")) lex.query_template = j["query_template"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, path + ": " + e.what());
  }
  lex.validate();
  return lex;
}

void SupportLexicons::validate() const {
  if (real_words.empty() || fake_words.empty()) {
    throw Error(ErrorCode::ConfigError, "lexicons must be non-empty");
  }
  for (const auto& w : real_words) {
    if (fake_words.count(w)) throw Error(ErrorCode::ConfigError, "word in both lexicons: " + w);
  }
  for (const auto* t : {&real_template, &fake_template, &query_template}) {
    if (count_slots(*t) != 1) {
      throw Error(ErrorCode::ConfigError, "template needs exactly one {word}: " + *t);
    }
  }
}

std::string fill_template(const std::string& tmpl, std::string_view word) {
  std::string out = tmpl;
  const auto pos = out.find(kSlot);
  if (pos != std::string::npos) out.replace(pos, kSlot.size(), word);
  return out;
}

double label_uncertainty(double logp_real, double logp_fake) {
  if (!std::isfinite(logp_real) || !std::isfinite(logp_fake)) {
    throw Error(ErrorCode::NonFiniteInput, "label logprobs must be finite");
  }
  const double ceil_lp = std::log1p(-kProbFloor);
  logp_real = std::min(logp_real, ceil_lp);
  logp_fake = std::min(logp_fake, ceil_lp);
  return std::abs((logp_real - logp_fake) / (logp_real + logp_fake));
}

// --------------------------------------------------------- TokenClassifier

TokenClassifier::TokenClassifier(SupportLexicons lex, Backend& sentence_backend)
    : lex_(std::move(lex)), backend_(sentence_backend) {
  lex_.validate();
}

void TokenClassifier::ensure_references() {
  std::call_once(refs_once_, [this] {
    std::vector<EmbeddingVector> real, fake;
    for (const auto& w : lex_.real_words) {
      real.push_back(backend_.embed_sentence(fill_template(lex_.real_template, w)));
    }
    for (const auto& w : lex_.fake_words) {
      fake.push_back(backend_.embed_sentence(fill_template(lex_.fake_template, w)));
    }
    real_refs_ = std::move(real);
    fake_refs_ = std::move(fake);
  });
}

TokenClassifier::Similarities TokenClassifier::semantic_similarities(
    const std::string& normalized_token) {
  ensure_references();
  const EmbeddingVector query =
      backend_.embed_sentence(fill_template(lex_.query_template, normalized_token));
  auto mean_cos = [&](const std::vector<EmbeddingVector>& refs) {
    double s = 0.0;
    for (const auto& r : refs) s += cosine(query.view(), r.view());
    return s / static_cast<double>(refs.size());
  };
  return {mean_cos(real_refs_), mean_cos(fake_refs_)};
}

std::optional<TokenSupport> TokenClassifier::classify(std::string_view token) {
  const std::string norm = normalize_token(token);
  if (norm.empty()) return std::nullopt;
  if (lex_.real_words.count(norm)) return TokenSupport::SupportsReal;
  if (lex_.fake_words.count(norm)) return TokenSupport::SupportsFake;
  {
    std::shared_lock lock(memo_mutex_);
    if (auto it = memo_.find(norm); it != memo_.end()) return it->second;
  }
  const auto sims = semantic_similarities(norm);
  // Ties go to Fake: lower confidence only costs an extra retrieval.
  const TokenSupport result =
      sims.sim_real > sims.sim_fake ? TokenSupport::SupportsReal : TokenSupport::SupportsFake;
  std::unique_lock lock(memo_mutex_);
  memo_.emplace(norm, result);
  return result;
}

double token_support(const ModelResponse& resp, TokenClassifier& classifier,
                     std::size_t k_tok) {
  if (k_tok == 0) throw Error(ErrorCode::ConfigError, "k_tok must be positive");
  std::size_t n_sup = 0;
  const std::size_t n = std::min(k_tok, resp.top_candidates.size());
  for (std::size_t i = 0; i < n; ++i) {
    auto s = classifier.classify(resp.top_candidates[i].token);
    if (s && label_of(*s) == resp.predicted) ++n_sup;
  }
  return static_cast<double>(n_sup) / static_cast<double>(k_tok);
}

double sentence_confidence(const std::vector<TokenLogprob>& tokens) {
  if (tokens.empty()) return 0.0;
  // Summing in sorted order makes the result independent of token order.
  std::vector<double> lps;
  lps.reserve(tokens.size());
  for (const auto& t : tokens) lps.push_back(t.logprob);
  std::sort(lps.begin(), lps.end());
  double sum = 0.0, comp = 0.0;
  for (double x : lps) {
    const double t = sum + x;
    comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  return std::exp((sum + comp) / static_cast<double>(lps.size()));
}

ConfidenceTriple confidence_of(const ModelResponse& resp, TokenClassifier& classifier,
                               std::size_t k_tok) {
  return {label_uncertainty(resp.label_logprobs.logp_real, resp.label_logprobs.logp_fake),
          token_support(resp, classifier, k_tok),
          sentence_confidence(resp.explanation_token_logprobs)};
}

}  // namespace exdr
