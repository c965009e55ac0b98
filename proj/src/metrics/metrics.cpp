#include "metrics/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include "common/error.hpp"

namespace eemp {
namespace {

using Ngram = std::vector<std::string>;
using NgramCounts = std::map<Ngram, std::size_t>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, int n) {
  NgramCounts counts;
  const auto len = static_cast<std::size_t>(n);
  if (tokens.size() < len) return counts;
  for (std::size_t i = 0; i + len <= tokens.size(); ++i) {
    ++counts[Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                   tokens.begin() + static_cast<std::ptrdiff_t>(i + len))];
  }
  return counts;
}

std::size_t clipped_overlap(const NgramCounts& hyp, const NgramCounts& ref) {
  std::size_t overlap = 0;
  for (const auto& [gram, c] : hyp) {
    if (auto it = ref.find(gram); it != ref.end()) overlap += std::min(c, it->second);
  }
  return overlap;
}

void check_order(int n, int max_n, const char* metric) {
  if (n < 1 || n > max_n) {
    throw config_error(fmt::format("{} order must be in 1..{}", metric, max_n));
  }
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

bool looks_like_json_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    auto pos = line.find_first_not_of(" \t\r");
    if (pos == std::string::npos) continue;
    return line[pos] == '{';
  }
  return false;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::string id_of(const json& obj) {
  const auto& id = obj.at("id");
  return id.is_string() ? id.get<std::string>() : id.dump();
}

}  // namespace

std::vector<std::string> metric_tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c < 128 && std::ispunct(c)) {
      flush();
      tokens.emplace_back(1, ch);
    } else {
      cur.push_back(static_cast<char>(c < 128 ? std::tolower(c) : c));
    }
  }
  flush();
  return tokens;
}

double corpus_bleu(std::span<const EvalPair> pairs, int n) {
  check_order(n, 4, "BLEU");
  if (pairs.empty()) throw data_error("corpus_bleu: empty corpus");
  std::vector<std::size_t> matched(static_cast<std::size_t>(n), 0), total(static_cast<std::size_t>(n), 0);
  std::size_t hyp_len = 0, ref_len = 0;
  for (const auto& p : pairs) {
    const auto hyp = metric_tokenize(p.hypothesis);
    const auto ref = metric_tokenize(p.reference);
    hyp_len += hyp.size();
    ref_len += ref.size();
    for (int k = 1; k <= n; ++k) {
      const auto hc = count_ngrams(hyp, k);
      matched[k - 1] += clipped_overlap(hc, count_ngrams(ref, k));
      total[k - 1] += hyp.size() >= static_cast<std::size_t>(k) ? hyp.size() - k + 1 : 0;
    }
  }
  double log_sum = 0.0;
  for (int k = 0; k < n; ++k) {
    if (matched[k] == 0 || total[k] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched[k]) / static_cast<double>(total[k]));
  }
  const double bp = hyp_len < ref_len
                        ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len))
                        : 1.0;
  return 100.0 * bp * std::exp(log_sum / n);
}

double rouge_n(std::span<const EvalPair> pairs, int n) {
  check_order(n, 2, "ROUGE");
  if (pairs.empty()) throw data_error("rouge_n: empty corpus");
  double sum = 0.0;
  for (const auto& p : pairs) {
    const auto hc = count_ngrams(metric_tokenize(p.hypothesis), n);
    const auto rc = count_ngrams(metric_tokenize(p.reference), n);
    std::size_t hyp_total = 0, ref_total = 0;
    for (const auto& [g, c] : hc) hyp_total += c;
    for (const auto& [g, c] : rc) ref_total += c;
    if (hyp_total == 0 || ref_total == 0) continue;
    const auto overlap = static_cast<double>(clipped_overlap(hc, rc));
    if (overlap == 0.0) continue;
    const double precision = overlap / static_cast<double>(hyp_total);
    const double recall = overlap / static_cast<double>(ref_total);
    sum += 2.0 * precision * recall / (precision + recall);
  }
  return 100.0 * sum / static_cast<double>(pairs.size());
}

double distinct_n(std::span<const std::string> hypotheses, int n) {
  check_order(n, 2, "Distinct");
  std::set<Ngram> unique;
  std::size_t total = 0;
  for (const auto& h : hypotheses) {
    for (const auto& [gram, c] : count_ngrams(metric_tokenize(h), n)) {
      unique.insert(gram);
      total += c;
    }
  }
  if (total == 0) throw data_error("distinct_n: hypotheses contain no n-grams");
  return 100.0 * static_cast<double>(unique.size()) / static_cast<double>(total);
}

EvalRun evaluate_pairs(std::vector<EvalPair> pairs) {
  EvalRun run;
  run.pairs = std::move(pairs);
  for (int n = 1; n <= 4; ++n) run.results["B-" + std::to_string(n)] = round2(corpus_bleu(run.pairs, n));
  for (int n = 1; n <= 2; ++n) run.results["R-" + std::to_string(n)] = round2(rouge_n(run.pairs, n));
  std::vector<std::string> hyps;
  hyps.reserve(run.pairs.size());
  for (const auto& p : run.pairs) hyps.push_back(p.hypothesis);
  for (int n = 1; n <= 2; ++n) {
    try {
      run.results["Dist-" + std::to_string(n)] = round2(distinct_n(hyps, n));
    } catch (const Error&) {
      run.notes.push_back(fmt::format("Dist-{} undefined: hypotheses contain no {}-grams", n, n));
    }
  }
  return run;
}

std::string EvalRun::table() const {
  static const std::vector<std::string> kOrder{"B-1", "B-2", "B-3", "B-4", "R-1", "R-2", "Dist-1", "Dist-2"};
  std::string head, body;
  for (const auto& k : kOrder) {
    auto it = results.find(k);
    head += fmt::format("{:>8}", k);
    body += it == results.end() ? fmt::format("{:>8}", "n/a") : fmt::format("{:>8.2f}", it->second);
  }
  std::string out = fmt::format("pairs: {}\n{}\n{}\n", pairs.size(), head, body);
  for (const auto& n : notes) out += "note: " + n + "\n";
  return out;
}

json EvalRun::to_json() const {
  json r = json::object();
  for (const auto& [k, v] : results) r[k] = v;
  return {{"pairs", pairs.size()}, {"metrics", r}, {"notes", notes}};
}

std::vector<EvalPair> load_eval_pairs(const std::filesystem::path& hyp_path, const std::filesystem::path& ref_path) {
  std::vector<EvalPair> pairs;
  if (ref_path.empty()) {
    for_each_json_line(hyp_path, [&](const json& obj, std::size_t) {
      pairs.push_back({id_of(obj), obj.at("hypothesis").get<std::string>(), obj.at("reference").get<std::string>()});
    });
    return pairs;
  }

  if (looks_like_json_lines(hyp_path)) {
    std::map<std::string, std::string> refs;
    for_each_json_line(ref_path, [&](const json& obj, std::size_t) {
      refs[id_of(obj)] = obj.at("reference").get<std::string>();
    });
    std::set<std::string> seen;
    std::vector<std::string> missing;
    for_each_json_line(hyp_path, [&](const json& obj, std::size_t) {
      auto id = id_of(obj);
      auto it = refs.find(id);
      if (it == refs.end()) {
        missing.push_back(id);
        return;
      }
      seen.insert(id);
      pairs.push_back({id, obj.at("hypothesis").get<std::string>(), it->second});
    });
    for (const auto& [id, ref] : refs) {
      if (!seen.count(id)) missing.push_back(id);
    }
    if (!missing.empty()) {
      std::string msg = "id mismatch between hypothesis and reference files:";
      for (const auto& id : missing) msg += " " + id;
      throw data_error(msg);
    }
    return pairs;
  }

  const auto hyps = read_lines(hyp_path);
  const auto refs = read_lines(ref_path);
  if (hyps.size() != refs.size()) {
    throw data_error(fmt::format("line count mismatch: {} hypotheses vs {} references", hyps.size(), refs.size()));
  }
  for (std::size_t i = 0; i < hyps.size(); ++i) pairs.push_back({std::to_string(i + 1), hyps[i], refs[i]});
  return pairs;
}

EvalRun evaluate_run(const std::filesystem::path& hyp_path, const std::filesystem::path& ref_path) {
  return evaluate_pairs(load_eval_pairs(hyp_path, ref_path));
}

}  // namespace eemp
