#include "exdr/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "exdr/parallel.hpp"

namespace exdr {

using nlohmann::json;

namespace {

constexpr Mode kModeOrder[] = {Mode::NoRag, Mode::FullRag, Mode::DynamicRag};

json label_json(const std::optional<BinaryLabel>& l) {
  return l ? json(to_string(*l)) : json(nullptr);
}

std::optional<BinaryLabel> label_from(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return parse_binary_label(it->get<std::string>());
}

bool correct(const std::optional<BinaryLabel>& pred, BinaryLabel gold) {
  return pred && *pred == gold;
}

}  // namespace

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::NoRag: return "no";
    case Mode::FullRag: return "full";
    case Mode::DynamicRag: return "dynamic";
  }
  return "no";
}

Mode parse_mode(std::string_view text) {
  for (Mode m : kModeOrder) {
    if (text == to_string(m)) return m;
  }
  throw Error(ErrorCode::ConfigError, "unknown mode '" + std::string(text) + "'");
}

std::vector<Mode> parse_modes(std::string_view text) {
  std::vector<Mode> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    const Mode m = parse_mode(text.substr(pos, end - pos));
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    pos = end + 1;
  }
  return out;
}

bool RunConfig::has(Mode m) const { return std::find(modes.begin(), modes.end(), m) != modes.end(); }

void RunConfig::validate(bool have_index) const {
  if (modes.empty()) throw Error(ErrorCode::ConfigError, "no mode selected");
  if (has(Mode::DynamicRag) && !thresholds) {
    throw Error(ErrorCode::ConfigError, "dynamic mode requires thresholds");
  }
  if ((has(Mode::DynamicRag) || has(Mode::FullRag)) && !have_index) {
    throw Error(ErrorCode::ConfigError, "retrieval modes require a corpus and an index");
  }
  if (k_vote == 0 || k_tok == 0) throw Error(ErrorCode::ConfigError, "k values must be >= 1");
}

// ------------------------------------------------------------ SampleOutcome

json SampleOutcome::to_json() const {
  json j = {{"mode", mode},
            {"sample_id", sample_id},
            {"gold", label_json(gold)},
            {"plain_pred", label_json(plain_pred)},
            {"triggered", triggered},
            {"augmented_pred", label_json(augmented_pred)},
            {"final_pred", label_json(final_pred)},
            {"confidence",
             {{"tau_label", confidence.tau_label},
              {"tau_tok", confidence.tau_tok},
              {"tau_sent", confidence.tau_sent}}},
            {"unparseable", unparseable},
            {"logprobs_missing", logprobs_missing}};
  if (inferred) {
    json votes = json::object();
    for (std::size_t c = 0; c < kNumFineLabels; ++c) {
      if (inferred->votes[c] > 0) votes[std::string(to_string(kAllFineLabels[c]))] = inferred->votes[c];
    }
    j["inferred_label"] = {{"label", to_string(inferred->label)},
                           {"votes", std::move(votes)},
                           {"k_used", inferred->k_used}};
  } else {
    j["inferred_label"] = nullptr;
  }
  if (evidence) {
    j["evidence"] = {{"positive", evidence->positive},
                     {"negative", evidence->negative},
                     {"pos_score", evidence->pos_score},
                     {"neg_score", evidence->neg_score},
                     {"positive_fallback", evidence->positive_fallback}};
  } else {
    j["evidence"] = nullptr;
  }
  return j;
}

SampleOutcome SampleOutcome::from_json(const json& j) {
  SampleOutcome o;
  try {
    o.mode = j.at("mode").get<std::string>();
    o.sample_id = j.at("sample_id").get<std::string>();
    o.gold = label_from(j, "gold");
    o.plain_pred = label_from(j, "plain_pred");
    o.triggered = j.at("triggered").get<bool>();
    o.augmented_pred = label_from(j, "augmented_pred");
    o.final_pred = label_from(j, "final_pred");
    const auto& c = j.at("confidence");
    o.confidence = {c.at("tau_label").get<double>(), c.at("tau_tok").get<double>(),
                    c.at("tau_sent").get<double>()};
    o.unparseable = j.value("unparseable", false);
    o.logprobs_missing = j.value("logprobs_missing", false);
    if (auto it = j.find("inferred_label"); it != j.end() && !it->is_null()) {
      InferredLabel inf;
      inf.label = parse_fine_label(it->at("label").get<std::string>());
      inf.k_used = it->at("k_used").get<int>();
      for (const auto& [name, count] : it->at("votes").items()) {
        inf.votes[static_cast<std::size_t>(parse_fine_label(name))] = count.get<int>();
      }
      o.inferred = inf;
    }
    if (auto it = j.find("evidence"); it != j.end() && !it->is_null()) {
      ContrastivePair p;
      p.positive = it->at("positive").get<std::string>();
      p.negative = it->at("negative").get<std::string>();
      p.pos_score = it->at("pos_score").get<double>();
      p.neg_score = it->at("neg_score").get<double>();
      p.positive_fallback = it->value("positive_fallback", false);
      o.evidence = p;
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("outcome record: ") + e.what());
  }
  return o;
}

// ---------------------------------------------------------------- summary

RunCounts counts_for(const std::vector<SampleOutcome>& outcomes, Mode mode, bool* have_full) {
  const std::string name(to_string(mode));
  std::map<std::string, bool> full_correct;
  for (const auto& o : outcomes) {
    if (o.mode == to_string(Mode::FullRag) && o.gold) {
      full_correct[o.sample_id] = correct(o.final_pred, *o.gold);
    }
  }
  RunCounts c;
  bool full_ok = true;
  for (const auto& o : outcomes) {
    if (o.mode != name || !o.gold) continue;
    ++c.n_total;
    const bool plain_ok = correct(o.plain_pred, *o.gold);
    c.n_no += plain_ok;
    c.n_dyn += correct(o.final_pred, *o.gold);
    if (o.triggered) {
      ++c.n_retrieved;
      c.n_err_classified += !plain_ok;
    }
    if (auto it = full_correct.find(o.sample_id); it != full_correct.end()) {
      c.n_full += it->second;
    } else {
      full_ok = false;
    }
  }
  if (have_full) *have_full = full_ok && c.n_total > 0;
  return c;
}

json summarize(const std::vector<SampleOutcome>& outcomes,
               const std::vector<SampleFailure>& failures) {
  json modes = json::object();
  std::optional<Mode> primary;
  std::map<std::string, bool> sample_ids;
  for (const auto& o : outcomes) sample_ids[o.sample_id] = true;

  for (Mode m : kModeOrder) {
    const std::string name(to_string(m));
    std::vector<BinaryLabel> preds, golds;
    int unparseable = 0, fallbacks = 0, records = 0;
    for (const auto& o : outcomes) {
      if (o.mode != name) continue;
      ++records;
      unparseable += o.unparseable;
      fallbacks += o.evidence && o.evidence->positive_fallback;
      if (!o.gold) continue;
      golds.push_back(*o.gold);
      // A missing verdict counts as an error.
      preds.push_back(o.final_pred ? *o.final_pred : opposite(*o.gold));
    }
    if (records == 0) continue;
    primary = m;
    bool have_full = false;
    const RunCounts counts = counts_for(outcomes, m, &have_full);
    json mj = metrics_json(preds, golds, counts, have_full);
    mj["counts"] = {{"n_total", counts.n_total},
                    {"n_retrieved", counts.n_retrieved},
                    {"n_err_classified", counts.n_err_classified},
                    {"n_dyn", counts.n_dyn},
                    {"n_full", have_full ? json(counts.n_full) : json(nullptr)},
                    {"n_no", counts.n_no}};
    mj["n_records"] = records;
    mj["n_unparseable"] = unparseable;
    mj["n_positive_fallbacks"] = fallbacks;
    modes[name] = std::move(mj);
  }

  json summary = json::object();
  if (primary) {
    const std::string name(to_string(*primary));
    summary = modes[name];
    summary["mode"] = name;
  }
  summary["modes"] = std::move(modes);
  json fails = json::array();
  for (const auto& f : failures) fails.push_back({{"sample_id", f.sample_id}, {"error", f.error}});
  summary["n_samples"] = sample_ids.size() + failures.size();
  summary["n_failed"] = failures.size();
  summary["failures"] = std::move(fails);
  return summary;
}

// ------------------------------------------------------------------ Engine

struct Engine::Trace {
  std::optional<BinaryLabel> plain_pred;
  bool unparseable = false;
  bool logprobs_missing = false;
  ConfidenceTriple confidence;
  bool augmented = false;
  std::optional<BinaryLabel> aug_pred;
  ContrastivePair pair;
  InferredLabel inferred;
};

Engine::Engine(Backend& backend, RunConfig cfg, const std::vector<CorpusEntry>* corpus,
               const EvidenceIndex* index)
    : backend_(backend),
      cfg_(std::move(cfg)),
      corpus_(corpus),
      index_(index),
      classifier_(cfg_.lexicons, backend) {
  if (corpus_ != nullptr) lookup_ = make_corpus_lookup(*corpus_);
}

Engine::Trace Engine::process(const Sample& sample) {
  Trace tr;
  const GenerationRequest plain_req = build_plain_request(cfg_.prompts, sample, cfg_.k_tok);
  const GenerationResult raw = backend_.generate_raw(plain_req);

  std::string explanation;
  try {
    if (raw.tokens.empty()) throw Error(ErrorCode::MissingLogprobs, "no token logprobs");
    const ModelResponse resp = parse_response(raw.text, raw.tokens, cfg_.k_tok);
    tr.plain_pred = resp.predicted;
    explanation = resp.explanation;
    tr.confidence = confidence_of(resp, classifier_, cfg_.k_tok);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::UnparseableResponse) {
      tr.unparseable = true;
      tr.confidence = kUnparseableConfidence;
    } else if (e.code() == ErrorCode::MissingLogprobs) {
      if (cfg_.has(Mode::DynamicRag)) {
        throw Error(ErrorCode::MissingLogprobs,
                    "sample '" + sample.id + "': the trigger needs token logprobs");
      }
      tr.logprobs_missing = true;
      tr.confidence = kUnparseableConfidence;
      try {
        const ModelResponse resp = parse_response(raw.text, {});
        tr.plain_pred = resp.predicted;
        explanation = resp.explanation;
      } catch (const Error& e2) {
        if (e2.code() != ErrorCode::UnparseableResponse) throw;
        tr.unparseable = true;
      }
    } else {
      throw;
    }
  }

  const bool need_aug = cfg_.has(Mode::FullRag) ||
                        (cfg_.has(Mode::DynamicRag) && should_trigger(tr.confidence, *cfg_.thresholds));
  if (!need_aug) return tr;

  // Query side: the model's own explanation, or the claim text when none.
  const std::string& expl_text = explanation.empty() ? sample.text : explanation;
  const EmbeddingVector expl_vec = normalized(backend_.embed_text(expl_text));
  tr.inferred = infer_fine_label(expl_vec, index_->explanations, cfg_.k_vote);
  const EmbeddingVector fused = fused_vector_for(backend_, sample.image, sample.text, explanation);
  const BinaryLabel side = tr.plain_pred ? *tr.plain_pred : binary_of(tr.inferred.label);
  tr.pair = retrieve_contrastive(fused, tr.inferred.label, side, index_->records);

  const GenerationRequest aug_req = assemble_augmented_prompt(
      cfg_.prompts, sample, tr.pair, lookup_, cfg_.k_tok, cfg_.prompt3_literal);
  const GenerationResult aug_raw = backend_.generate_raw(aug_req);
  tr.augmented = true;
  try {
    tr.aug_pred = parse_response(aug_raw.text, {}).predicted;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::UnparseableResponse) throw;
  }
  return tr;
}

Report Engine::run(const std::vector<Sample>& samples) {
  cfg_.validate(index_ != nullptr && corpus_ != nullptr);
  if (cfg_.has(Mode::FullRag) || cfg_.has(Mode::DynamicRag)) {
    const auto& recs = index_->records;
    const bool has_real = std::any_of(recs.begin(), recs.end(),
                                      [](const IndexRecord& r) { return r.binary_label == BinaryLabel::Real; });
    const bool has_fake = std::any_of(recs.begin(), recs.end(),
                                      [](const IndexRecord& r) { return r.binary_label == BinaryLabel::Fake; });
    if (!has_real || !has_fake) {
      throw Error(ErrorCode::NoNegativePool, "index must contain both real and fake records");
    }
  }

  std::vector<std::optional<Trace>> traces(samples.size());
  std::vector<std::optional<SampleFailure>> failed(samples.size());
  parallel_for(samples.size(), cfg_.jobs, [&](std::size_t i) {
    try {
      traces[i] = process(samples[i]);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ConfigError || e.code() == ErrorCode::MissingLogprobs) throw;
      failed[i] = SampleFailure{samples[i].id, e.what()};
    }
  });

  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return samples[a].id < samples[b].id; });

  Report report;
  for (Mode m : kModeOrder) {
    if (!cfg_.has(m)) continue;
    for (std::size_t i : order) {
      if (!traces[i]) continue;
      const Trace& tr = *traces[i];
      SampleOutcome o;
      o.mode = std::string(to_string(m));
      o.sample_id = samples[i].id;
      o.gold = samples[i].gold_binary;
      o.plain_pred = tr.plain_pred;
      o.confidence = tr.confidence;
      o.unparseable = tr.unparseable;
      o.logprobs_missing = tr.logprobs_missing;
      o.triggered = m == Mode::FullRag ||
                    (m == Mode::DynamicRag && should_trigger(tr.confidence, *cfg_.thresholds));
      if (o.triggered) {
        o.augmented_pred = tr.aug_pred;
        o.evidence = tr.pair;
        o.inferred = tr.inferred;
        o.final_pred = tr.aug_pred;
      } else {
        o.final_pred = tr.plain_pred;
      }
      report.outcomes.push_back(std::move(o));
    }
  }
  for (std::size_t i : order) {
    if (failed[i]) report.failures.push_back(*failed[i]);
  }

  report.summary = summarize(report.outcomes, report.failures);
  report.summary["config"] = {
      {"k_vote", cfg_.k_vote},
      {"k_tok", cfg_.k_tok},
      {"prompt3_wording", cfg_.prompt3_literal ? "literal" : "derived"},
      {"thresholds", cfg_.thresholds ? json{{"theta_label", cfg_.thresholds->theta_label},
                                            {"theta_tok", cfg_.thresholds->theta_tok},
                                            {"theta_sent", cfg_.thresholds->theta_sent}}
                                     : json(nullptr)}};
  return report;
}

ValidationCache Engine::build_validation_cache(const std::vector<Sample>& samples,
                                               std::vector<SampleFailure>* failures) {
  for (const auto& s : samples) {
    if (!s.gold_binary) {
      throw Error(ErrorCode::ConfigError, "validation sample '" + s.id + "' has no gold label");
    }
  }
  RunConfig full = cfg_;
  full.modes = {Mode::FullRag};
  Engine engine(backend_, full, corpus_, index_);
  const Report report = engine.run(samples);
  if (failures) *failures = report.failures;
  std::vector<ValidationRecord> records;
  for (const auto& o : report.outcomes) {
    records.push_back({o.sample_id, o.confidence, correct(o.plain_pred, *o.gold),
                       correct(o.augmented_pred, *o.gold)});
  }
  return ValidationCache(std::move(records));
}

// -------------------------------------------------------------------- I/O

void write_outcomes_jsonl(const std::vector<SampleOutcome>& outcomes, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  for (const auto& o : outcomes) out << o.to_json().dump() << '\n';
}

std::vector<SampleOutcome> read_outcomes_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::vector<SampleOutcome> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(SampleOutcome::from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::MalformedRecord, path + ": " + e.what());
    }
  }
  return out;
}

ThresholdTriple load_thresholds(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open thresholds file " + path);
  try {
    const json j = json::parse(in);
    return {j.at("theta_label").get<double>(), j.at("theta_tok").get<double>(),
            j.at("theta_sent").get<double>()};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, path + ": " + e.what());
  }
}

ThresholdTriple parse_thresholds_arg(const std::string& arg) {
  if (std::count(arg.begin(), arg.end(), ',') == 2) {
    std::istringstream ss(arg);
    std::array<double, 3> v{};
    char comma = 0;
    if (ss >> v[0] >> comma >> v[1] >> comma >> v[2] && ss.eof()) {
      return ThresholdTriple::from_array(v);
    }
  }
  return load_thresholds(arg);
}

json thresholds_json(const SearchResult& result, const SearchConfig& cfg, std::size_t n_val) {
  return {{"theta_label", result.best.thresholds.theta_label},
          {"theta_tok", result.best.thresholds.theta_tok},
          {"theta_sent", result.best.thresholds.theta_sent},
          {"val_score", result.best.score},
          {"val_triggers", result.best.triggers},
          {"n_val", n_val},
          {"n_iter", cfg.n_iter},
          {"top_k_centers", cfg.top_k_centers},
          {"delta_fraction", cfg.delta_fraction},
          {"local_radius", cfg.local_radius},
          {"seed", cfg.rng_seed}};
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace exdr
