#include "tinyformer/tokenizer.hpp"

namespace eemp {

std::vector<int> tokenize(std::string_view text) {
  std::vector<int> out;
  out.reserve(text.size());
  for (unsigned char c : text) out.push_back(static_cast<int>(c));
  return out;
}

std::string detokenize(std::span<const int> tokens) {
  std::string out;
  out.reserve(tokens.size());
  for (int t : tokens) {
    if (t >= 0 && t < 256) out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
  }
  return out;
}

std::vector<int> render_context(std::span<const Turn> context, const RenderOptions& options) {
  std::vector<int> out{kBosToken};
  if (options.include_emotion) {
    auto label = tokenize(options.emotion);
    out.insert(out.end(), label.begin(), label.end());
  }
  for (const auto& turn : context) {
    out.push_back(turn.role == Role::speaker ? kSpeakerToken : kListenerToken);
    auto text = tokenize(turn.text);
    out.insert(out.end(), text.begin(), text.end());
  }
  out.push_back(kListenerToken);
  return out;
}

}  // namespace eemp
