#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "corpus/corpus.hpp"

namespace eemp {

// Byte-level vocabulary: ids 0..255 are raw bytes, followed by specials.
inline constexpr int kPadToken = 256;
inline constexpr int kBosToken = 257;
inline constexpr int kEosToken = 258;
inline constexpr int kSpeakerToken = 259;
inline constexpr int kListenerToken = 260;
inline constexpr int kByteVocabSize = 261;

constexpr bool is_special_token(int id) { return id >= 256; }

std::vector<int> tokenize(std::string_view text);

/// Special tokens are dropped.
std::string detokenize(std::span<const int> tokens);

struct RenderOptions {
  bool include_emotion = false;
  std::string emotion;
};

/// BOS, then SPK/LST-prefixed turns, then a trailing LST that prompts the
/// listener response. With include_emotion the label is placed after BOS.
std::vector<int> render_context(std::span<const Turn> context, const RenderOptions& options = {});

}  // namespace eemp
