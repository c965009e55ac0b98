#include "scorer/scorer.hpp"

namespace eemp {

const std::string_view kDefaultScoringTemplate =
    R"(You are evaluating one conversation between a Speaker and a Listener.

Rate the conversation on two scales from 0 to 10:
- Sensibility: how much the conversation expresses and responds to feelings, emotions and empathy.
- Rationality: how much the conversation relies on logic, facts, analysis and problem solving.

Conversation:
{conversation}

Answer with exactly two lines and nothing else:
Sensibility: <integer 0-10>
Rationality: <integer 0-10>
)";

std::string render_conversation(std::span<const Turn> turns) {
  std::string out;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (i > 0) out += '\n';
    out += turns[i].role == Role::speaker ? "Speaker: " : "Listener: ";
    out += turns[i].text;
  }
  return out;
}

std::string render_prompt(std::string_view tmpl, const Dialogue& dialogue) {
  auto pos = tmpl.find(kConversationPlaceholder);
  if (pos == std::string_view::npos) {
    throw config_error("prompt template lacks the {conversation} placeholder");
  }
  const std::string conversation = render_conversation(dialogue.turns);
  std::string out;
  std::size_t start = 0;
  while (pos != std::string_view::npos) {
    out.append(tmpl.substr(start, pos - start));
    out += conversation;
    start = pos + kConversationPlaceholder.size();
    pos = tmpl.find(kConversationPlaceholder, start);
  }
  out.append(tmpl.substr(start));
  return out;
}

}  // namespace eemp
