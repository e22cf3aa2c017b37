#include "exdr/prompts.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace exdr {

namespace {

constexpr const char* kPlainSystem =
    "You are a knowledgeable and analytical fact-checking assistant. Your task is to "
    "determine whether a social text-image pair is fake.\n\n"
    "Your response should be either `The pair is fake because {explanation of your "
    "reasoning}.` if the text and image present false, misleading, or manipulated content, "
    "or `The pair is real because {explanation of your reasoning}.` if the text and image "
    "are consistent and factually aligned.\n\n"
    "Your explanation must be concise and clear, highlighting linguistic, visual, or "
    "contextual cues that support your conclusion.";

constexpr const char* kAugmentedSystem =
    "You are a knowledgeable and analytical fact-checking assistant. Your task is to "
    "determine whether a social text-image pair is fake.\n\n"
    "Your response should be either `The pair is fake because {explanation of your "
    "reasoning}.` if the text and image present false, misleading, or manipulated content, "
    "or `The pair is real because {explanation of your reasoning}.` if the text and image "
    "are consistent and factually aligned.\n\n"
    "Your explanation should be concise and clear, highlighting any linguistic, visual, or "
    "contextual cues that support your conclusion.\n\n"
    "Refer to these examples:";

std::string read_or(const std::filesystem::path& p, const std::string& fallback) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return fallback;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

PromptSet PromptSet::defaults() { return {kPlainSystem, kAugmentedSystem}; }

PromptSet PromptSet::from_dir(const std::string& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::ConfigError, "prompt directory not found: " + dir);
  }
  const PromptSet d = defaults();
  const std::filesystem::path root(dir);
  return {read_or(root / "plain_system.txt", d.plain_system),
          read_or(root / "augmented_system.txt", d.augmented_system)};
}

GenerationRequest build_plain_request(const PromptSet& prompts, const Sample& sample,
                                      std::size_t k_tok) {
  GenerationRequest req;
  req.system_prompt = prompts.plain_system;
  req.turns.push_back({Role::User, "the image <image> and the text " + sample.text + ".",
                       sample.image});
  req.want_top_candidates = k_tok;
  req.want_logprobs = true;
  return req;
}

}  // namespace exdr
