#include "exdr/trigger.hpp"

#include <algorithm>
#include <random>

namespace exdr {

namespace {

std::array<double, 3> scores_of(const ConfidenceTriple& c) {
  return {c.tau_label, c.tau_tok, c.tau_sent};
}

// Portable uniform [0, 1): the standard distributions are not specified
// bit-for-bit across library implementations.
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Candidate evaluate(const ThresholdTriple& t, const ValidationCache& cache) {
  Candidate c{t, 0, 0};
  for (const auto& r : cache.records()) {
    const bool fire = should_trigger(r.confidence, t);
    c.triggers += fire ? 1 : 0;
    c.score += (fire ? r.correct_aug : r.correct_plain) ? 1 : 0;
  }
  return c;
}

}  // namespace

ValidationCache::ValidationCache(std::vector<ValidationRecord> records)
    : records_(std::move(records)) {
  if (records_.empty()) throw Error(ErrorCode::EmptyCache, "validation cache is empty");
  lo_ = hi_ = scores_of(records_.front().confidence);
  for (const auto& r : records_) {
    const auto s = scores_of(r.confidence);
    for (int d = 0; d < 3; ++d) {
      lo_[d] = std::min(lo_[d], s[d]);
      hi_[d] = std::max(hi_[d], s[d]);
    }
  }
}

int score(const ThresholdTriple& t, const ValidationCache& cache) {
  return evaluate(t, cache).score;
}

int trigger_count(const ThresholdTriple& t, const ValidationCache& cache) {
  return evaluate(t, cache).triggers;
}

void SearchConfig::validate() const {
  if (top_k_centers < 1 || n_iter < top_k_centers) {
    throw Error(ErrorCode::ConfigError, "need n_iter >= top_k_centers >= 1");
  }
  if (!(delta_fraction > 0.0)) throw Error(ErrorCode::ConfigError, "delta must be positive");
  if (local_radius < 0) throw Error(ErrorCode::ConfigError, "local_radius must be >= 0");
}

bool better(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.triggers != b.triggers) return a.triggers < b.triggers;
  return a.thresholds.as_array() < b.thresholds.as_array();
}

SearchResult hybrid_search(const ValidationCache& cache, const SearchConfig& cfg) {
  cfg.validate();
  const auto lo = cache.lower();
  const auto hi = cache.upper();

  std::mt19937_64 rng(cfg.rng_seed);
  std::vector<Candidate> global;
  global.reserve(static_cast<std::size_t>(cfg.n_iter));
  for (int j = 0; j < cfg.n_iter; ++j) {
    std::array<double, 3> t{};
    for (int d = 0; d < 3; ++d) t[d] = lo[d] + unit_uniform(rng) * (hi[d] - lo[d]);
    global.push_back(evaluate(ThresholdTriple::from_array(t), cache));
  }

  SearchResult result;
  result.evaluated = global.size();
  std::sort(global.begin(), global.end(), better);
  result.best_global = global.front();
  result.best = global.front();

  // Distinct centers only; duplicates would repeat the same local grid.
  for (const auto& c : global) {
    if (static_cast<int>(result.centers.size()) == cfg.top_k_centers) break;
    const bool dup = std::any_of(result.centers.begin(), result.centers.end(),
                                 [&](const Candidate& o) { return o.thresholds == c.thresholds; });
    if (!dup) result.centers.push_back(c);
  }

  std::array<double, 3> step{};
  for (int d = 0; d < 3; ++d) step[d] = cfg.delta_fraction * (hi[d] - lo[d]);

  const int r = cfg.local_radius;
  for (const auto& center : result.centers) {
    const auto base = center.thresholds.as_array();
    for (int i = -r; i <= r; ++i) {
      for (int j = -r; j <= r; ++j) {
        for (int k = -r; k <= r; ++k) {
          const std::array<int, 3> off{i, j, k};
          std::array<double, 3> t{};
          for (int d = 0; d < 3; ++d) {
            t[d] = std::clamp(base[d] + off[d] * step[d], lo[d], hi[d]);
          }
          const Candidate cand = evaluate(ThresholdTriple::from_array(t), cache);
          ++result.evaluated;
          if (better(cand, result.best)) result.best = cand;
        }
      }
    }
  }
  return result;
}

}  // namespace exdr
