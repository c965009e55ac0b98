#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "corpus/corpus.hpp"

namespace eemp {

/// Toy corpus of single-exchange dialogues in two sub-languages:
///   copy    - the speaker says a word over a-h and the listener repeats it;
///   reverse - the speaker says a word over 0-7 and the listener reverses it;
///   noise   - a prompt answered with an unrelated word. Prompts use the copy
///             alphabet by default, so noise contradicts the copy task.
enum class SynthKind { copy, reverse, noise };

struct SyntheticConfig {
  std::size_t copy = 500;
  std::size_t reverse = 500;
  std::size_t noise = 0;
  int min_len = 3;
  int max_len = 6;
  std::uint64_t seed = 1;
  std::string id_prefix = "syn";
  std::string noise_alphabet = "abcdefgh";
};

inline constexpr std::string_view kCopyAlphabet = "abcdefgh";
inline constexpr std::string_view kReverseAlphabet = "01234567";
inline constexpr std::string_view kDisjointNoiseAlphabet = "ABCDEFGH";

/// Dialogues in a seeded random order with ids <prefix>-00001, ...
std::vector<Dialogue> make_synthetic_corpus(const SyntheticConfig& config);

/// Recovers the sub-language from the dialogue's content.
SynthKind classify_synthetic(const Dialogue& dialogue);

/// Scripted judge reply: copy -> S 8 / R 2, reverse -> S 8 / R 8,
/// noise -> S 2 / R 8. With T = 5 these land in the sensibility,
/// rationality and discard subsets respectively.
std::string synthetic_judge_reply(const Dialogue& dialogue);

}  // namespace eemp
