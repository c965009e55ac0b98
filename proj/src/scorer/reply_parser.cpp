#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <optional>
#include <regex>

#include "scorer/scorer.hpp"

namespace eemp {
namespace {

constexpr std::size_t kMaxKeyDistance = 2;

struct Alias {
  std::string_view spelling;
  std::string_view canonical;
};

// Misspellings observed in judge replies.
constexpr std::array kAliases{
    Alias{"rationalality", "rationality"},
};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::optional<std::string_view> canonical_key(std::string_view raw_key) {
  const std::string key = lower(raw_key);
  for (const auto& a : kAliases) {
    if (key == a.spelling) return a.canonical;
  }
  const std::size_t ds = edit_distance(key, "sensibility");
  const std::size_t dr = edit_distance(key, "rationality");
  if (std::min(ds, dr) > kMaxKeyDistance || ds == dr) return std::nullopt;
  return ds < dr ? std::string_view("sensibility") : std::string_view("rationality");
}

int to_score(double v) {
  const double rounded = std::round(v);  // half away from zero
  return static_cast<int>(std::clamp(rounded, 0.0, 10.0));
}

}  // namespace

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

ParsedScores parse_scorer_reply(std::string_view raw) {
  // key, optional "score", markdown emphasis, separator, number
  static const std::regex kPair(
      R"(([A-Za-z]+)(?:\s+score)?\s*\**\s*[:=]\s*\**\s*(-?[0-9]+(?:\.[0-9]+)?))",
      std::regex::icase);

  std::optional<int> sensibility, rationality;
  const std::string text(raw);
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kPair); it != std::sregex_iterator();
       ++it) {
    auto key = canonical_key((*it)[1].str());
    if (!key) continue;
    const int value = to_score(std::stod((*it)[2].str()));
    if (*key == "sensibility" && !sensibility) sensibility = value;
    if (*key == "rationality" && !rationality) rationality = value;
  }
  if (!sensibility || !rationality) {
    std::string missing = !sensibility && !rationality ? "sensibility and rationality"
                          : !sensibility               ? "sensibility"
                                                       : "rationality";
    throw UnparseableReply("unparseable scorer reply: missing " + missing);
  }
  return {*sensibility, *rationality};
}

}  // namespace eemp
