#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace exdr {

/// Dense vector in a backend's embedding space.
struct EmbeddingVector {
  std::vector<double> values;

  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> v) : values(std::move(v)) {}
  EmbeddingVector(std::initializer_list<double> v) : values(v) {}

  std::size_t dim() const { return values.size(); }
  std::span<const double> view() const { return values; }

  bool operator==(const EmbeddingVector&) const = default;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
bool all_finite(std::span<const double> a);

/// Unit-L2 copy; throws Error(ZeroVector) when the norm is zero.
EmbeddingVector normalized(const EmbeddingVector& v);

/// Cosine similarity; zero-norm inputs yield 0.
double cosine(std::span<const double> a, std::span<const double> b);

}  // namespace exdr
