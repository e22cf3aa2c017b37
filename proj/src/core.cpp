#include "exdr/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace exdr {

namespace {

using nlohmann::json;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string& require_string(const json& obj, const char* field,
                                  std::size_t line_no) {
  auto it = obj.find(field);
  if (it == obj.end() || !it->is_string()) {
    throw Error(ErrorCode::MalformedRecord,
                "line " + std::to_string(line_no) + ": missing string field '" +
                    field + "'");
  }
  return it->get_ref<const std::string&>();
}

template <typename Fn>
void for_each_record(std::string_view content, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    ++line_no;
    std::string_view line = trim(content.substr(pos, end - pos));
    pos = end + 1;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::MalformedRecord,
                  "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object()) {
      throw Error(ErrorCode::MalformedRecord,
                  "line " + std::to_string(line_no) + ": not a JSON object");
    }
    fn(obj, line_no);
  }
}

// Byte-offset span of each token inside the concatenated stream.
struct Span {
  std::size_t begin;
  std::size_t end;
};

}  // namespace

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnknownFineLabel: return "UnknownFineLabel";
    case ErrorCode::UnknownBinaryLabel: return "UnknownBinaryLabel";
    case ErrorCode::UnparseableResponse: return "UnparseableResponse";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::MissingLogprobs: return "MissingLogprobs";
    case ErrorCode::MissingFixture: return "MissingFixture";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::EmptyIndex: return "EmptyIndex";
    case ErrorCode::EmptyCache: return "EmptyCache";
    case ErrorCode::NoPositivePool: return "NoPositivePool";
    case ErrorCode::NoNegativePool: return "NoNegativePool";
    case ErrorCode::MissingCorpusEntry: return "MissingCorpusEntry";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

std::string_view to_string(BinaryLabel label) {
  return label == BinaryLabel::Real ? "real" : "fake";
}

std::string_view to_string(FineGrainedLabel label) {
  switch (label) {
    case FineGrainedLabel::RealNews: return "real_news";
    case FineGrainedLabel::ImageFabrication: return "image_fabrication";
    case FineGrainedLabel::EntityInconsistency: return "entity_inconsistency";
    case FineGrainedLabel::EventInconsistency: return "event_inconsistency";
    case FineGrainedLabel::TimeOrSpaceInconsistency:
      return "time_or_space_inconsistency";
    case FineGrainedLabel::IneffectiveVisualInformation:
      return "ineffective_visual_information";
  }
  return "unknown";
}

BinaryLabel parse_binary_label(std::string_view text) {
  const std::string l = lower(text);
  if (l == "real") return BinaryLabel::Real;
  if (l == "fake") return BinaryLabel::Fake;
  throw Error(ErrorCode::UnknownBinaryLabel, std::string(text));
}

FineGrainedLabel parse_fine_label(std::string_view text) {
  const std::string l = lower(text);
  for (FineGrainedLabel f : kAllFineLabels) {
    if (l == to_string(f)) return f;
  }
  throw Error(ErrorCode::UnknownFineLabel, std::string(text));
}

BinaryLabel binary_of(FineGrainedLabel fine) {
  return fine == FineGrainedLabel::RealNews ? BinaryLabel::Real
                                            : BinaryLabel::Fake;
}

std::string normalize_token(std::string_view token) {
  std::string s(trim(token));
  static const std::string kMarkers[] = {"\xE2\x96\x81", "\xC4\xA0", "##"};
  bool stripped = true;
  while (stripped) {
    stripped = false;
    for (const auto& m : kMarkers) {
      if (s.rfind(m, 0) == 0) {
        s.erase(0, m.size());
        stripped = true;
      }
    }
  }
  std::string out;
  out.reserve(s.size());
  for (unsigned char c : s) {
    if (c < 0x80 && (std::ispunct(c) || std::isspace(c))) continue;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

LabelLogprobs extract_label_logprobs(const std::vector<TokenLogprob>& top) {
  const double floor_lp = std::log(kProbFloor);
  const double ceil_lp = std::log1p(-kProbFloor);
  std::optional<double> real, fake;
  for (const auto& cand : top) {
    const std::string norm = normalize_token(cand.token);
    if (!real && norm == "real") real = cand.logprob;
    if (!fake && norm == "fake") fake = cand.logprob;
  }
  auto clamp = [&](std::optional<double> lp) {
    if (!lp || !std::isfinite(*lp) || *lp < floor_lp) return floor_lp;
    return std::min(*lp, ceil_lp);
  };
  return {clamp(real), clamp(fake)};
}

std::string serialize_response(BinaryLabel predicted,
                               std::string_view explanation) {
  std::string out = "The pair is ";
  out += to_string(predicted);
  out += " because ";
  out += explanation;
  return out;
}

ModelResponse parse_response(std::string_view raw_text,
                             const std::vector<GeneratedToken>& tokens,
                             std::size_t top_k) {
  // Locate "the pair is <label> because" after leading whitespace.
  const std::size_t lead = raw_text.find_first_not_of(" \t\r\n\f\v");
  const std::string low = lower(raw_text);
  static constexpr std::string_view kPrefix = "the pair is ";
  static constexpr std::string_view kBecause = " because";
  if (lead == std::string_view::npos ||
      low.compare(lead, kPrefix.size(), kPrefix) != 0) {
    throw Error(ErrorCode::UnparseableResponse, std::string(raw_text.substr(0, 80)));
  }
  const std::size_t label_at = lead + kPrefix.size();
  BinaryLabel predicted;
  if (low.compare(label_at, 4, "real") == 0) {
    predicted = BinaryLabel::Real;
  } else if (low.compare(label_at, 4, "fake") == 0) {
    predicted = BinaryLabel::Fake;
  } else {
    throw Error(ErrorCode::UnparseableResponse, std::string(raw_text.substr(0, 80)));
  }
  const std::size_t because_at = label_at + 4;
  if (low.compare(because_at, kBecause.size(), kBecause) != 0) {
    throw Error(ErrorCode::UnparseableResponse, std::string(raw_text.substr(0, 80)));
  }
  const std::size_t expl_at = because_at + kBecause.size();

  ModelResponse resp;
  resp.predicted = predicted;
  resp.explanation = std::string(trim(raw_text.substr(expl_at)));
  if (tokens.empty()) return resp;

  // Align tokens to character offsets when the stream reproduces the text;
  // otherwise fall back to matching normalized token forms.
  std::vector<Span> spans;
  spans.reserve(tokens.size());
  std::string joined;
  for (const auto& t : tokens) {
    spans.push_back({joined.size(), joined.size() + t.token.size()});
    joined += t.token;
  }
  std::size_t label_tok = tokens.size();
  std::size_t first_expl_tok = tokens.size();
  if (joined.size() >= expl_at && joined.compare(0, expl_at, raw_text.substr(0, expl_at)) == 0) {
    for (std::size_t i = 0; i < spans.size(); ++i) {
      if (label_tok == tokens.size() && spans[i].end > label_at) label_tok = i;
      if (spans[i].begin >= expl_at) {
        first_expl_tok = i;
        break;
      }
    }
  } else {
    const std::string word(to_string(predicted));
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (normalize_token(tokens[i].token) == word) {
        label_tok = i;
        break;
      }
    }
    for (std::size_t i = label_tok; i < tokens.size(); ++i) {
      if (normalize_token(tokens[i].token) == "because") {
        first_expl_tok = i + 1;
        break;
      }
    }
  }
  if (label_tok == tokens.size()) {
    throw Error(ErrorCode::MissingLogprobs, "no token carries the verdict word");
  }

  resp.classification_position = label_tok;
  resp.top_candidates = tokens[label_tok].top;
  if (resp.top_candidates.empty()) {
    resp.top_candidates.push_back({tokens[label_tok].token, tokens[label_tok].logprob});
  }
  std::stable_sort(resp.top_candidates.begin(), resp.top_candidates.end(),
                   [](const TokenLogprob& a, const TokenLogprob& b) {
                     return a.logprob > b.logprob;
                   });
  if (resp.top_candidates.size() > top_k) resp.top_candidates.resize(top_k);
  resp.label_logprobs = extract_label_logprobs(resp.top_candidates);

  for (std::size_t i = first_expl_tok; i < tokens.size(); ++i) {
    resp.explanation_token_logprobs.push_back({tokens[i].token, tokens[i].logprob});
  }
  return resp;
}

std::vector<CorpusEntry> parse_corpus_jsonl(std::string_view content) {
  std::vector<CorpusEntry> out;
  std::unordered_set<std::string> seen;
  for_each_record(content, [&](const json& obj, std::size_t line_no) {
    CorpusEntry e;
    e.id = require_string(obj, "id", line_no);
    e.image.uri = require_string(obj, "image", line_no);
    e.text = require_string(obj, "text", line_no);
    e.explanation = require_string(obj, "explanation", line_no);
    if (trim(e.explanation).empty()) {
      throw Error(ErrorCode::MalformedRecord,
                  "line " + std::to_string(line_no) + ": empty explanation");
    }
    e.fine_label = parse_fine_label(require_string(obj, "fine_label", line_no));
    if (!seen.insert(e.id).second) {
      throw Error(ErrorCode::DuplicateId, e.id);
    }
    out.push_back(std::move(e));
  });
  return out;
}

std::vector<Sample> parse_dataset_jsonl(std::string_view content) {
  std::vector<Sample> out;
  std::unordered_set<std::string> seen;
  for_each_record(content, [&](const json& obj, std::size_t line_no) {
    Sample s;
    s.id = require_string(obj, "id", line_no);
    s.image.uri = require_string(obj, "image", line_no);
    s.text = require_string(obj, "text", line_no);
    if (trim(s.text).empty()) {
      throw Error(ErrorCode::MalformedRecord,
                  "line " + std::to_string(line_no) + ": empty text");
    }
    if (auto it = obj.find("gold_binary"); it != obj.end() && !it->is_null()) {
      s.gold_binary = parse_binary_label(require_string(obj, "gold_binary", line_no));
    }
    if (auto it = obj.find("gold_fine"); it != obj.end() && !it->is_null()) {
      s.gold_fine = parse_fine_label(require_string(obj, "gold_fine", line_no));
      if (!s.gold_binary) {
        s.gold_binary = binary_of(*s.gold_fine);
      } else if (*s.gold_binary != binary_of(*s.gold_fine)) {
        throw Error(ErrorCode::MalformedRecord,
                    "line " + std::to_string(line_no) +
                        ": gold_fine disagrees with gold_binary");
      }
    }
    if (!seen.insert(s.id).second) {
      throw Error(ErrorCode::DuplicateId, s.id);
    }
    out.push_back(std::move(s));
  });
  return out;
}

std::vector<CorpusEntry> load_corpus(const std::string& path) {
  return parse_corpus_jsonl(read_file(path));
}

std::vector<Sample> load_dataset(const std::string& path) {
  return parse_dataset_jsonl(read_file(path));
}

}  // namespace exdr
