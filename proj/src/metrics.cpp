#include "exdr/metrics.hpp"

#include <cmath>
#include <limits>

namespace exdr {

void RunCounts::validate() const {
  const bool ok = 0 <= n_err_classified && n_err_classified <= n_retrieved &&
                  n_retrieved <= n_total && 0 <= n_dyn && n_dyn <= n_total && 0 <= n_full &&
                  n_full <= n_total && 0 <= n_no && n_no <= n_total;
  if (!ok) throw Error(ErrorCode::ConfigError, "inconsistent run counts");
}

std::optional<double> retrieval_identification(const RunCounts& counts) {
  counts.validate();
  if (counts.n_retrieved == 0) return std::nullopt;
  return static_cast<double>(counts.n_err_classified) / counts.n_retrieved;
}

std::string_view to_string(ReAnnotation a) {
  switch (a) {
    case ReAnnotation::None: return "none";
    case ReAnnotation::Plus: return "+";
    case ReAnnotation::Minus: return "-";
    case ReAnnotation::Undefined: return "n/a";
  }
  return "n/a";
}

std::optional<RetrievalEfficiency> retrieval_efficiency(const RunCounts& c) {
  c.validate();
  if (c.n_retrieved == 0) return std::nullopt;
  if (c.n_full == c.n_no) {
    return RetrievalEfficiency{std::numeric_limits<double>::quiet_NaN(), ReAnnotation::Undefined};
  }
  RetrievalEfficiency re;
  re.value = (static_cast<double>(c.n_dyn - c.n_no) / (c.n_full - c.n_no)) *
             (static_cast<double>(c.n_total) / c.n_retrieved);
  const bool degraded = c.n_dyn < c.n_no || c.n_full < c.n_no;
  if (degraded && c.n_dyn > c.n_full) {
    re.annotation = ReAnnotation::Plus;
  } else if (degraded && c.n_dyn < c.n_full) {
    re.annotation = ReAnnotation::Minus;
  }
  return re;
}

namespace {

void check_lengths(const std::vector<BinaryLabel>& preds, const std::vector<BinaryLabel>& golds) {
  if (preds.size() != golds.size()) {
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(preds.size()) + " vs " + std::to_string(golds.size()));
  }
  if (preds.empty()) throw Error(ErrorCode::Empty, "no predictions");
}

double class_f1(const std::vector<BinaryLabel>& preds, const std::vector<BinaryLabel>& golds,
                BinaryLabel positive) {
  int tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] == positive;
    const bool g = golds[i] == positive;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  const int denom = 2 * tp + fp + fn;
  return denom == 0 ? 1.0 : static_cast<double>(2 * tp) / denom;
}

}  // namespace

double accuracy(const std::vector<BinaryLabel>& preds, const std::vector<BinaryLabel>& golds) {
  check_lengths(preds, golds);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == golds[i];
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

double f1(const std::vector<BinaryLabel>& preds, const std::vector<BinaryLabel>& golds,
          F1Mode mode) {
  check_lengths(preds, golds);
  const double fake = class_f1(preds, golds, BinaryLabel::Fake);
  if (mode == F1Mode::FakePositive) return fake;
  return 0.5 * (fake + class_f1(preds, golds, BinaryLabel::Real));
}

nlohmann::json metrics_json(const std::vector<BinaryLabel>& preds,
                            const std::vector<BinaryLabel>& golds, const RunCounts& counts,
                            bool have_full) {
  nlohmann::json j;
  if (!preds.empty()) {
    j["acc"] = accuracy(preds, golds);
    j["f1_macro"] = f1(preds, golds, F1Mode::Macro);
    j["f1_fake"] = f1(preds, golds, F1Mode::FakePositive);
  } else {
    j["acc"] = nullptr;
    j["f1_macro"] = nullptr;
    j["f1_fake"] = nullptr;
  }
  const auto ri = retrieval_identification(counts);
  j["ri"] = ri ? nlohmann::json(*ri) : nlohmann::json("*");
  const auto re = have_full ? retrieval_efficiency(counts) : std::nullopt;
  if (re && re->annotation != ReAnnotation::Undefined) {
    j["re"] = {{"value", re->value}, {"annotation", to_string(re->annotation)}};
  } else {
    j["re"] = {{"value", nullptr}, {"annotation", "n/a"}};
  }
  j["trigger_ratio"] = counts.n_total > 0
                           ? static_cast<double>(counts.n_retrieved) / counts.n_total
                           : 0.0;
  return j;
}

}  // namespace exdr
