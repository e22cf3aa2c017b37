#pragma once

#include <string>

#include "exdr/backends.hpp"
#include "exdr/core.hpp"

namespace exdr {

/// System prompts for plain and retrieval-augmented detection.
struct PromptSet {
  std::string plain_system;
  std::string augmented_system;

  static PromptSet defaults();
  /// Reads plain_system.txt and augmented_system.txt from `dir`; a missing
  /// file keeps the default.
  static PromptSet from_dir(const std::string& dir);
};

/// Single-turn detection request without evidence.
GenerationRequest build_plain_request(const PromptSet& prompts, const Sample& sample,
                                      std::size_t k_tok);

}  // namespace exdr
