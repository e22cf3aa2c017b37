#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "exdr/confidence.hpp"

namespace exdr {

struct ThresholdTriple {
  double theta_label = 0.0;
  double theta_tok = 0.0;
  double theta_sent = 0.0;

  std::array<double, 3> as_array() const { return {theta_label, theta_tok, theta_sent}; }
  static ThresholdTriple from_array(const std::array<double, 3>& a) {
    return {a[0], a[1], a[2]};
  }
  bool operator==(const ThresholdTriple&) const = default;
};

/// Retrieval fires only when all three scores are strictly below threshold.
inline bool should_trigger(const ConfidenceTriple& c, const ThresholdTriple& t) {
  return c.tau_label < t.theta_label && c.tau_tok < t.theta_tok && c.tau_sent < t.theta_sent;
}

struct ValidationRecord {
  std::string sample_id;
  ConfidenceTriple confidence;
  bool correct_plain = false;
  bool correct_aug = false;
};

/// Per-sample outcomes of both prediction routes, computed once so that
/// scoring a threshold triple is pure arithmetic.
class ValidationCache {
 public:
  explicit ValidationCache(std::vector<ValidationRecord> records);

  const std::vector<ValidationRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  /// Per-dimension [min, max] of observed scores.
  std::array<double, 3> lower() const { return lo_; }
  std::array<double, 3> upper() const { return hi_; }

 private:
  std::vector<ValidationRecord> records_;
  std::array<double, 3> lo_{};
  std::array<double, 3> hi_{};
};

/// Number of correct final predictions under thresholds t.
int score(const ThresholdTriple& t, const ValidationCache& cache);
int trigger_count(const ThresholdTriple& t, const ValidationCache& cache);

struct SearchConfig {
  int n_iter = 100;
  int top_k_centers = 5;
  double delta_fraction = 0.02;  // local step as a fraction of each range
  int local_radius = 2;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct Candidate {
  ThresholdTriple thresholds;
  int score = 0;
  int triggers = 0;
};

/// Strict "better than" used for arg-max: higher score, then fewer
/// triggers, then lexicographically smaller triple.
bool better(const Candidate& a, const Candidate& b);

struct SearchResult {
  Candidate best;
  Candidate best_global;            // best of the Monte Carlo stage alone
  std::vector<Candidate> centers;   // refinement centers, best first
  std::size_t evaluated = 0;
};

/// Monte Carlo exploration over the empirical score box followed by a
/// local grid around the best centers. Deterministic for a given seed.
SearchResult hybrid_search(const ValidationCache& cache, const SearchConfig& cfg);

}  // namespace exdr
