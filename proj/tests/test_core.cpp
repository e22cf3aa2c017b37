#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "exdr/core.hpp"

using namespace exdr;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected exdr::Error";
  return ErrorCode::IoError;
}

std::vector<GeneratedToken> tokens_of(const std::vector<std::string>& pieces) {
  std::vector<GeneratedToken> out;
  for (const auto& p : pieces) out.push_back({p, -0.1, {}});
  return out;
}

}  // namespace

TEST(Labels, BinaryParsingIsCaseInsensitive) {
  EXPECT_EQ(parse_binary_label("REAL"), BinaryLabel::Real);
  EXPECT_EQ(parse_binary_label("Fake"), BinaryLabel::Fake);
  EXPECT_EQ(code_of([] { parse_binary_label("maybe"); }), ErrorCode::UnknownBinaryLabel);
}

TEST(Labels, FineLabelsRoundTripAndProject) {
  for (FineGrainedLabel f : kAllFineLabels) {
    EXPECT_EQ(parse_fine_label(to_string(f)), f);
    EXPECT_EQ(binary_of(f), f == FineGrainedLabel::RealNews ? BinaryLabel::Real : BinaryLabel::Fake);
  }
  EXPECT_EQ(parse_fine_label("image_fabrication"), FineGrainedLabel::ImageFabrication);
  EXPECT_EQ(binary_of(FineGrainedLabel::EntityInconsistency), BinaryLabel::Fake);
  EXPECT_EQ(binary_of(FineGrainedLabel::IneffectiveVisualInformation), BinaryLabel::Fake);
  EXPECT_EQ(code_of([] { parse_fine_label("satire"); }), ErrorCode::UnknownFineLabel);
}

TEST(Corpus, LoadsRecordsInFileOrder) {
  const auto corpus = parse_corpus_jsonl(
      R"({"id":"b2","image":"i1.jpg","text":"t1","explanation":"e1","fine_label":"real_news"}
{"id":"a1","image":"i2.jpg","text":"t2","explanation":"e2","fine_label":"image_fabrication"}

{"id":"c3","image":"i3.jpg","text":"t3","explanation":"e3","fine_label":"time_or_space_inconsistency"}
)");
  ASSERT_EQ(corpus.size(), 3u);
  EXPECT_EQ(corpus[0].id, "b2");
  EXPECT_EQ(corpus[1].id, "a1");
  EXPECT_EQ(corpus[2].id, "c3");
  EXPECT_EQ(corpus[1].fine_label, FineGrainedLabel::ImageFabrication);
  EXPECT_EQ(corpus[1].binary_label(), BinaryLabel::Fake);
}

TEST(Corpus, RejectsDuplicatesAndBadRecords) {
  const std::string dup =
      R"({"id":"a1","image":"i","text":"t","explanation":"e","fine_label":"real_news"}
{"id":"a1","image":"i","text":"t","explanation":"e","fine_label":"real_news"})";
  EXPECT_EQ(code_of([&] { parse_corpus_jsonl(dup); }), ErrorCode::DuplicateId);

  EXPECT_EQ(code_of([] {
              parse_corpus_jsonl(R"({"id":"a","image":"i","text":"t","fine_label":"real_news"})");
            }),
            ErrorCode::MalformedRecord);
  EXPECT_EQ(code_of([] {
              parse_corpus_jsonl(
                  R"({"id":"a","image":"i","text":"t","explanation":"e","fine_label":"parody"})");
            }),
            ErrorCode::UnknownFineLabel);
  EXPECT_EQ(code_of([] { parse_corpus_jsonl("{not json"); }), ErrorCode::MalformedRecord);
  try {
    parse_corpus_jsonl(
        "{\"id\":\"a\",\"image\":\"i\",\"text\":\"t\",\"explanation\":\"e\",\"fine_label\":\"real_news\"}\n"
        "[1,2]\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Dataset, GoldFineMustAgreeWithGoldBinary) {
  auto ds = parse_dataset_jsonl(
      R"({"id":"x","image":"i","text":"claim","gold_fine":"entity_inconsistency"})");
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].gold_binary, BinaryLabel::Fake);
  EXPECT_EQ(code_of([] {
              parse_dataset_jsonl(
                  R"({"id":"x","image":"i","text":"c","gold_binary":"real","gold_fine":"image_fabrication"})");
            }),
            ErrorCode::MalformedRecord);
  EXPECT_EQ(code_of([] { parse_dataset_jsonl(R"({"id":"x","image":"i","text":"  "})"); }),
            ErrorCode::MalformedRecord);
}

TEST(ParseResponse, ExtractsVerdictAndExplanation) {
  auto r = parse_response("The pair is real because dates align.", {});
  EXPECT_EQ(r.predicted, BinaryLabel::Real);
  EXPECT_EQ(r.explanation, "dates align.");

  r = parse_response("  The pair is FAKE because edited.", {});
  EXPECT_EQ(r.predicted, BinaryLabel::Fake);
  EXPECT_EQ(r.explanation, "edited.");

  EXPECT_EQ(code_of([] { parse_response("I cannot tell.", {}); }), ErrorCode::UnparseableResponse);
  EXPECT_EQ(code_of([] { parse_response("The pair is unclear because x", {}); }),
            ErrorCode::UnparseableResponse);
  EXPECT_EQ(code_of([] { parse_response("", {}); }), ErrorCode::UnparseableResponse);
}

TEST(ParseResponse, AlignsTokensByOffset) {
  auto toks = tokens_of({"The", " pair", " is", " fake", " because", " the", " logo", " is", " off."});
  toks[3].top = {{" real", std::log(0.3)}, {" fake", std::log(0.6)}, {" false", std::log(0.05)}};
  toks[5].logprob = std::log(0.5);
  std::string text;
  for (const auto& t : toks) text += t.token;

  const auto r = parse_response(text, toks, 10);
  EXPECT_EQ(r.classification_position, 3u);
  ASSERT_EQ(r.top_candidates.size(), 3u);
  EXPECT_EQ(r.top_candidates[0].token, " fake");  // re-sorted descending
  EXPECT_NEAR(r.label_logprobs.logp_fake, std::log(0.6), 1e-15);
  EXPECT_NEAR(r.label_logprobs.logp_real, std::log(0.3), 1e-15);
  ASSERT_EQ(r.explanation_token_logprobs.size(), 4u);
  EXPECT_EQ(r.explanation_token_logprobs[0].token, " the");
  EXPECT_EQ(r.explanation_token_logprobs[0].logprob, std::log(0.5));
}

TEST(ParseResponse, FallsBackToTokenMatchingWhenStreamDiffers) {
  // Sub-word markers instead of spaces: concatenation differs from the text.
  auto toks = tokens_of({"\xE2\x96\x81The", "\xE2\x96\x81pair", "\xE2\x96\x81is",
                         "\xE2\x96\x81real", "\xE2\x96\x81" "because", "\xE2\x96\x81ok"});
  const auto r = parse_response("The pair is real because ok", toks, 10);
  EXPECT_EQ(r.classification_position, 3u);
  ASSERT_EQ(r.explanation_token_logprobs.size(), 1u);
}

TEST(ParseResponse, TruncatesCandidatesToTopK) {
  auto toks = tokens_of({"The", " pair", " is", " real", " because", " x"});
  for (int i = 0; i < 15; ++i) toks[3].top.push_back({"w" + std::to_string(i), -0.1 * i});
  std::string text;
  for (const auto& t : toks) text += t.token;
  const auto r = parse_response(text, toks, 10);
  ASSERT_EQ(r.top_candidates.size(), 10u);
  for (std::size_t i = 1; i < r.top_candidates.size(); ++i) {
    EXPECT_GE(r.top_candidates[i - 1].logprob, r.top_candidates[i].logprob);
  }
}

TEST(LabelLogprobs, AbsentWordsGetFloorAndZeroIsClamped) {
  const auto lp = extract_label_logprobs({{"Real", 0.0}, {"maybe", -1.0}});
  EXPECT_DOUBLE_EQ(lp.logp_real, std::log1p(-kProbFloor));
  EXPECT_DOUBLE_EQ(lp.logp_fake, std::log(kProbFloor));
  // First match wins.
  const auto first = extract_label_logprobs({{" fake", -0.5}, {"FAKE", -0.1}});
  EXPECT_DOUBLE_EQ(first.logp_fake, -0.5);
}

TEST(NormalizeToken, StripsMarkersAndPunctuation) {
  EXPECT_EQ(normalize_token("\xE2\x96\x81Genuine"), "genuine");
  EXPECT_EQ(normalize_token("##fict"), "fict");
  EXPECT_EQ(normalize_token("\xC4\xA0" "False,"), "false");
  EXPECT_EQ(normalize_token(" ... "), "");
}

TEST(ParseResponse, SerializeRoundTripsRandomExplanations) {
  std::mt19937 rng(7);
  const std::string alphabet = "abcdefghijklmnopqrstuvwxyz ,.'ABCXYZ0123456789";
  for (int trial = 0; trial < 500; ++trial) {
    std::string expl;
    const int len = 1 + static_cast<int>(rng() % 40);
    for (int i = 0; i < len; ++i) expl.push_back(alphabet[rng() % alphabet.size()]);
    // Surrounding whitespace is not part of an explanation.
    const auto b = expl.find_first_not_of(' ');
    if (b == std::string::npos) continue;
    expl = expl.substr(b, expl.find_last_not_of(' ') - b + 1);
    for (BinaryLabel l : {BinaryLabel::Real, BinaryLabel::Fake}) {
      const auto r = parse_response(serialize_response(l, expl), {});
      ASSERT_EQ(r.predicted, l);
      ASSERT_EQ(r.explanation, expl);
    }
  }
}
