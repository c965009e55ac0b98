#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "common/json_lines.hpp"

namespace eemp {

/// Lowercases ASCII, splits on whitespace, and emits every ASCII punctuation
/// character as its own token. All metrics share this tokenizer.
std::vector<std::string> metric_tokenize(std::string_view text);

struct EvalPair {
  std::string id;
  std::string hypothesis;
  std::string reference;
};

/// Cumulative corpus BLEU-n with uniform weights, clipped counts pooled over
/// the corpus, brevity penalty, no smoothing. Scaled to 0..100.
double corpus_bleu(std::span<const EvalPair> pairs, int n);

/// Mean per-pair n-gram F1, scaled to 0..100.
double rouge_n(std::span<const EvalPair> pairs, int n);

/// Corpus-pooled unique n-grams / total n-grams, scaled to 0..100. Throws
/// when the hypotheses hold no n-gram of that order.
double distinct_n(std::span<const std::string> hypotheses, int n);

struct EvalRun {
  std::vector<EvalPair> pairs;
  std::map<std::string, double> results;  // B-1..B-4, R-1, R-2, Dist-1, Dist-2 (rounded to 2 decimals)
  std::vector<std::string> notes;          // metrics left out because they are undefined

  std::string table() const;
  json to_json() const;
};

EvalRun evaluate_pairs(std::vector<EvalPair> pairs);

/// Loads hypothesis/reference pairs. Accepted layouts:
///  - one JSON-lines file with {id, hypothesis, reference} (reference_path empty);
///  - two JSON-lines files with {id, hypothesis} and {id, reference}, matched by id;
///  - two plain-text files aligned by line.
/// Mismatched ids or line counts raise a data error listing the offenders.
std::vector<EvalPair> load_eval_pairs(const std::filesystem::path& hypothesis_path,
                                      const std::filesystem::path& reference_path);

EvalRun evaluate_run(const std::filesystem::path& hypothesis_path, const std::filesystem::path& reference_path);

}  // namespace eemp
