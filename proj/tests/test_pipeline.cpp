#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <mutex>

#include "exdr/pipeline.hpp"
#include "world.hpp"

using namespace exdr;

namespace {

/// Counts generation calls per sample image while delegating to fixtures.
class CountingBackend final : public Backend {
 public:
  explicit CountingBackend(FixtureStore store) : inner_(std::move(store)) {}

  std::map<std::string, int> calls() const {
    std::lock_guard lock(mu_);
    return calls_;
  }

 protected:
  GenerationResult do_generate(const GenerationRequest& req) override {
    {
      std::lock_guard lock(mu_);
      ++calls_[req.turns.back().image->uri];
    }
    return inner_.generate_raw(req);
  }
  EmbeddingVector do_embed_text(std::string_view t) override { return inner_.embed_text(t); }
  EmbeddingVector do_embed_image(const ImageRef& i) override { return inner_.embed_image(i); }
  EmbeddingVector do_embed_sentence(std::string_view t) override { return inner_.embed_sentence(t); }
  std::vector<EntitySpan> do_extract_entities(std::string_view t) override {
    return inner_.extract_entities(t);
  }

 private:
  FixtureBackend inner_;
  mutable std::mutex mu_;
  std::map<std::string, int> calls_;
};

struct Bench {
  exdr::testing::World world = exdr::testing::build_world(exdr::testing::twenty_sample_script(), {});
  FixtureBackend backend{world.store};
  EvidenceIndex index = build_index(world.corpus, backend);

  Report run(std::vector<Mode> modes, std::optional<ThresholdTriple> t, std::size_t jobs = 1) {
    RunConfig cfg;
    cfg.modes = std::move(modes);
    cfg.thresholds = t;
    cfg.jobs = jobs;
    Engine engine(backend, cfg, &world.corpus, &index);
    return engine.run(world.samples);
  }
};

const ThresholdTriple kHalf{0.5, 0.5, 0.5};

std::map<std::string, std::optional<BinaryLabel>> finals(const Report& r, const std::string& mode) {
  std::map<std::string, std::optional<BinaryLabel>> out;
  for (const auto& o : r.outcomes) {
    if (o.mode == mode) out[o.sample_id] = o.final_pred;
  }
  return out;
}

}  // namespace

TEST(Modes, ParseNames) {
  EXPECT_EQ(parse_mode("dynamic"), Mode::DynamicRag);
  EXPECT_EQ(parse_modes("no,full"), (std::vector<Mode>{Mode::NoRag, Mode::FullRag}));
  EXPECT_THROW(parse_mode("sometimes"), Error);
}

TEST(Engine, NoRagNeedsNoIndex) {
  auto w = exdr::testing::build_world(exdr::testing::twenty_sample_script(), {});
  FixtureBackend backend(w.store);
  RunConfig cfg;
  cfg.modes = {Mode::NoRag};
  Engine engine(backend, cfg, nullptr, nullptr);
  const auto r = engine.run(w.samples);
  EXPECT_DOUBLE_EQ(r.summary["acc"].get<double>(), 0.7);
  EXPECT_EQ(r.summary["ri"], "*");
  EXPECT_EQ(r.summary["n_unparseable"], 1);
  EXPECT_EQ(backend.generate_calls(), 20u);
}

TEST(Engine, TwentySampleWorld) {
  Bench b;
  const auto r = b.run({Mode::NoRag, Mode::FullRag, Mode::DynamicRag}, kHalf);
  const auto& s = r.summary;
  EXPECT_EQ(s["mode"], "dynamic");
  EXPECT_EQ(s["counts"]["n_retrieved"], 5);
  EXPECT_EQ(s["counts"]["n_no"], 14);
  EXPECT_EQ(s["counts"]["n_full"], 17);
  EXPECT_EQ(s["counts"]["n_dyn"], 18);
  EXPECT_NEAR(s["ri"].get<double>(), 0.8, 1e-15);
  EXPECT_NEAR(s["re"]["value"].get<double>(), 16.0 / 3.0, 1e-12);
  EXPECT_EQ(s["re"]["annotation"], "none");
  EXPECT_NEAR(s["acc"].get<double>(), 0.9, 1e-15);
  EXPECT_NEAR(s["f1_fake"].get<double>(), 22.0 / 24.0, 1e-12);
  EXPECT_NEAR(s["f1_macro"].get<double>(), 0.5 * (22.0 / 24.0 + 14.0 / 16.0), 1e-12);
  EXPECT_NEAR(s["modes"]["no"]["acc"].get<double>(), 0.7, 1e-15);
  EXPECT_NEAR(s["modes"]["full"]["acc"].get<double>(), 0.85, 1e-15);
  EXPECT_DOUBLE_EQ(s["trigger_ratio"].get<double>(), 0.25);

  std::vector<std::string> triggered;
  for (const auto& o : r.outcomes) {
    if (o.mode == "dynamic" && o.triggered) triggered.push_back(o.sample_id);
  }
  EXPECT_EQ(triggered, (std::vector<std::string>{"s03", "s07", "s11", "s15", "s19"}));
  EXPECT_TRUE(r.failures.empty());
}

TEST(Engine, AtMostTwoGenerationsPerSample) {
  auto w = exdr::testing::build_world(exdr::testing::twenty_sample_script(), {});
  CountingBackend backend(w.store);
  const auto index = build_index(w.corpus, backend);
  RunConfig cfg;
  cfg.thresholds = kHalf;
  cfg.jobs = 3;
  Engine engine(backend, cfg, &w.corpus, &index);
  engine.run(w.samples);
  const auto calls = backend.calls();
  ASSERT_EQ(calls.size(), 20u);
  int total = 0;
  for (const auto& [img, n] : calls) {
    EXPECT_GE(n, 1);
    EXPECT_LE(n, 2) << img;
    total += n;
  }
  EXPECT_EQ(total, 25);
}

TEST(Engine, ExtremeThresholdsReproduceFixedModes) {
  Bench b;
  const auto all = b.run({Mode::NoRag, Mode::FullRag}, std::nullopt);
  const auto high = b.run({Mode::DynamicRag}, ThresholdTriple{2.0, 2.0, 2.0});
  const auto zero = b.run({Mode::DynamicRag}, ThresholdTriple{0.0, 0.0, 0.0});
  EXPECT_EQ(finals(high, "dynamic"), finals(all, "full"));
  EXPECT_EQ(finals(zero, "dynamic"), finals(all, "no"));
  EXPECT_EQ(zero.summary["ri"], "*");
  EXPECT_EQ(high.summary["counts"]["n_retrieved"], 20);
}

TEST(Engine, ParallelRunsAreByteIdentical) {
  Bench b;
  const auto one = b.run({Mode::NoRag, Mode::FullRag, Mode::DynamicRag}, kHalf, 1);
  const auto four = b.run({Mode::NoRag, Mode::FullRag, Mode::DynamicRag}, kHalf, 4);
  EXPECT_EQ(one.summary.dump(2), four.summary.dump(2));
  ASSERT_EQ(one.outcomes.size(), four.outcomes.size());
  for (std::size_t i = 0; i < one.outcomes.size(); ++i) {
    EXPECT_EQ(one.outcomes[i].to_json().dump(), four.outcomes[i].to_json().dump());
  }
}

TEST(Engine, OutcomesRoundTripAndReportRecomputes) {
  Bench b;
  const auto r = b.run({Mode::NoRag, Mode::FullRag, Mode::DynamicRag}, kHalf);
  const auto path = (std::filesystem::temp_directory_path() / "exdr_outcomes.jsonl").string();
  write_outcomes_jsonl(r.outcomes, path);
  const auto back = read_outcomes_jsonl(path);
  ASSERT_EQ(back.size(), r.outcomes.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].to_json().dump(), r.outcomes[i].to_json().dump());
  }
  auto expected = r.summary;
  expected.erase("config");
  EXPECT_EQ(summarize(back, r.failures).dump(), expected.dump());
}

TEST(Engine, ValidationCacheFromFullPass) {
  Bench b;
  RunConfig cfg;
  Engine engine(b.backend, cfg, &b.world.corpus, &b.index);
  const auto cache = engine.build_validation_cache(b.world.samples);
  ASSERT_EQ(cache.size(), 20u);
  int plain = 0, aug = 0;
  for (const auto& rec : cache.records()) {
    plain += rec.correct_plain;
    aug += rec.correct_aug;
  }
  EXPECT_EQ(plain, 14);
  EXPECT_EQ(aug, 17);
  // Under the world's own thresholds, the cache reproduces the dynamic count.
  EXPECT_EQ(score(kHalf, cache), 18);

  auto unlabeled = b.world.samples;
  unlabeled[0].gold_binary.reset();
  try {
    engine.build_validation_cache(unlabeled);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
}

TEST(Engine, ConfigurationErrors) {
  Bench b;
  RunConfig cfg;  // dynamic without thresholds
  Engine engine(b.backend, cfg, &b.world.corpus, &b.index);
  EXPECT_THROW(engine.run(b.world.samples), Error);

  RunConfig full;
  full.modes = {Mode::FullRag};
  Engine no_index(b.backend, full, nullptr, nullptr);
  EXPECT_THROW(no_index.run(b.world.samples), Error);

  auto real_only = b.index;
  std::erase_if(real_only.records, [](const IndexRecord& r) { return r.binary_label == BinaryLabel::Fake; });
  Engine lopsided(b.backend, full, &b.world.corpus, &real_only);
  try {
    lopsided.run(b.world.samples);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoNegativePool);
  }
}

TEST(Engine, MissingFixturesFailOnlyThatSample) {
  Bench b;
  auto samples = b.world.samples;
  samples.push_back({"zz", {"img/zz.jpg"}, "never recorded", BinaryLabel::Real, std::nullopt});
  RunConfig cfg;
  cfg.thresholds = kHalf;
  Engine engine(b.backend, cfg, &b.world.corpus, &b.index);
  const auto r = engine.run(samples);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0].sample_id, "zz");
  EXPECT_EQ(r.summary["n_failed"], 1);
  EXPECT_EQ(r.summary["n_samples"], 21);
  EXPECT_EQ(r.outcomes.size(), 20u);
}

TEST(Engine, MissingLogprobsIsFatalOnlyForDynamic) {
  FixtureStore store;
  exdr::testing::add_sentence_fixtures(store, SupportLexicons::defaults());
  const Sample s{"m1", {"img/m1.jpg"}, "claim", BinaryLabel::Real, std::nullopt};
  GenerationResult bare;
  bare.text = "The pair is real because it fits.";
  store.add_generation(build_plain_request(PromptSet::defaults(), s, 10), bare);
  FixtureBackend backend(store);

  RunConfig no;
  no.modes = {Mode::NoRag};
  const auto r = Engine(backend, no, nullptr, nullptr).run({s});
  ASSERT_EQ(r.outcomes.size(), 1u);
  EXPECT_TRUE(r.outcomes[0].logprobs_missing);
  EXPECT_EQ(r.outcomes[0].final_pred, BinaryLabel::Real);

  const auto w = exdr::testing::build_world({}, {});
  FixtureBackend wb(w.store);
  const auto index = build_index(w.corpus, wb);
  RunConfig dyn;
  dyn.thresholds = kHalf;
  try {
    Engine(backend, dyn, &w.corpus, &index).run({s});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingLogprobs);
  }
}

TEST(Thresholds, ParseArgumentForms) {
  EXPECT_EQ(parse_thresholds_arg("0.1,0.2,0.3"), (ThresholdTriple{0.1, 0.2, 0.3}));
  const auto path = (std::filesystem::temp_directory_path() / "exdr_thr.json").string();
  write_json({{"theta_label", 0.4}, {"theta_tok", 0.5}, {"theta_sent", 0.6}}, path);
  EXPECT_EQ(parse_thresholds_arg(path), (ThresholdTriple{0.4, 0.5, 0.6}));
  EXPECT_THROW(parse_thresholds_arg("0.1,0.2"), Error);
}
