#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "exdr/core.hpp"

namespace exdr {

struct RunCounts {
  int n_total = 0;
  int n_retrieved = 0;
  int n_err_classified = 0;  // triggered samples that were wrong before retrieval
  int n_dyn = 0;
  int n_full = 0;
  int n_no = 0;

  void validate() const;
};

/// Fraction of triggered samples that were misclassified before retrieval;
/// std::nullopt when nothing was triggered (reported as "*").
std::optional<double> retrieval_identification(const RunCounts& counts);

enum class ReAnnotation { None, Plus, Minus, Undefined };

std::string_view to_string(ReAnnotation a);

struct RetrievalEfficiency {
  double value = 0.0;  // NaN when annotation is Undefined
  ReAnnotation annotation = ReAnnotation::None;
};

/// ((n_dyn - n_no) / (n_full - n_no)) * (n_total / n_retrieved), with the
/// +/- marker when dynamic or full retrieval falls below no retrieval.
/// std::nullopt when nothing was triggered.
std::optional<RetrievalEfficiency> retrieval_efficiency(const RunCounts& counts);

double accuracy(const std::vector<BinaryLabel>& preds, const std::vector<BinaryLabel>& golds);

enum class F1Mode { FakePositive, Macro };

/// F1 with an empty confusion row/column (no positives predicted or
/// present) scored as 1.0 for that class.
double f1(const std::vector<BinaryLabel>& preds, const std::vector<BinaryLabel>& golds,
          F1Mode mode = F1Mode::Macro);

/// Report fragment: acc, f1_macro, f1_fake, ri, re, trigger_ratio.
nlohmann::json metrics_json(const std::vector<BinaryLabel>& preds,
                            const std::vector<BinaryLabel>& golds, const RunCounts& counts,
                            bool have_full);

}  // namespace exdr
