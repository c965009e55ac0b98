#include "pipeline/synthetic.hpp"

#include <fmt/format.h>

#include <algorithm>

#include "common/error.hpp"
#include "common/rng.hpp"

namespace eemp {
namespace {

std::string random_word(Rng& rng, std::string_view alphabet, int min_len, int max_len) {
  const auto len = min_len + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_len - min_len + 1)));
  std::string w;
  for (int i = 0; i < len; ++i) w.push_back(alphabet[rng.below(alphabet.size())]);
  return w;
}

bool over(std::string_view word, std::string_view alphabet) {
  return !word.empty() && std::all_of(word.begin(), word.end(), [&](char c) {
    return alphabet.find(c) != std::string_view::npos;
  });
}

}  // namespace

std::vector<Dialogue> make_synthetic_corpus(const SyntheticConfig& config) {
  if (config.noise_alphabet.empty()) throw config_error("synthetic noise alphabet is empty");
  if (config.min_len < 1 || config.max_len < config.min_len) {
    throw config_error("synthetic word lengths must satisfy 1 <= min_len <= max_len");
  }
  Rng rng(config.seed);
  std::vector<SynthKind> kinds;
  kinds.insert(kinds.end(), config.copy, SynthKind::copy);
  kinds.insert(kinds.end(), config.reverse, SynthKind::reverse);
  kinds.insert(kinds.end(), config.noise, SynthKind::noise);
  shuffle_in_place(kinds, rng);

  std::vector<Dialogue> out;
  out.reserve(kinds.size());
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    Dialogue d;
    d.id = fmt::format("{}-{:05d}", config.id_prefix, i + 1);
    std::string prompt, reply;
    switch (kinds[i]) {
      case SynthKind::copy:
        prompt = random_word(rng, kCopyAlphabet, config.min_len, config.max_len);
        reply = prompt;
        break;
      case SynthKind::reverse:
        prompt = random_word(rng, kReverseAlphabet, config.min_len, config.max_len);
        reply.assign(prompt.rbegin(), prompt.rend());
        break;
      case SynthKind::noise:
        prompt = random_word(rng, config.noise_alphabet, config.min_len, config.max_len);
        do {
          reply = random_word(rng, config.noise_alphabet, config.min_len, config.max_len);
        } while (reply == prompt);
        break;
    }
    d.turns = {{Role::speaker, prompt}, {Role::listener, reply}};
    out.push_back(std::move(d));
  }
  return out;
}

SynthKind classify_synthetic(const Dialogue& dialogue) {
  if (dialogue.turns.size() < 2) return SynthKind::noise;
  const std::string& prompt = dialogue.turns[0].text;
  const std::string& reply = dialogue.turns[1].text;
  if (over(prompt, kCopyAlphabet) && reply == prompt) return SynthKind::copy;
  if (over(prompt, kReverseAlphabet) && std::equal(prompt.rbegin(), prompt.rend(), reply.begin(), reply.end())) {
    return SynthKind::reverse;
  }
  return SynthKind::noise;
}

std::string synthetic_judge_reply(const Dialogue& dialogue) {
  switch (classify_synthetic(dialogue)) {
    case SynthKind::copy: return "Sensibility: 8\nRationality: 2";
    case SynthKind::reverse: return "Sensibility: 8\nRationality: 8";
    case SynthKind::noise: return "Sensibility: 2\nRationality: 8";
  }
  return {};
}

}  // namespace eemp
