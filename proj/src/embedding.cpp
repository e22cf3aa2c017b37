#include "exdr/embedding.hpp"

#include <cmath>

#include "exdr/error.hpp"

namespace exdr {

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimMismatch, std::to_string(a.size()) + " vs " +
                                            std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

bool all_finite(std::span<const double> a) {
  for (double x : a) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

EmbeddingVector normalized(const EmbeddingVector& v) {
  const double n = l2_norm(v.view());
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::ZeroVector, "cannot normalize a zero-norm vector");
  }
  EmbeddingVector out(v.values);
  for (double& x : out.values) x /= n;
  return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

}  // namespace exdr
