#include "selection/selection.hpp"

#include <fmt/format.h>

namespace eemp {

std::string_view subset_name(Subset s) {
  switch (s) {
    case Subset::sensibility: return "sensibility";
    case Subset::discard: return "discard";
    case Subset::rationality: return "rationality";
  }
  return "?";
}

Subset parse_subset(std::string_view name) {
  if (name == "sensibility") return Subset::sensibility;
  if (name == "discard" || name == "neutral") return Subset::discard;
  if (name == "rationality") return Subset::rationality;
  throw config_error("unknown subset '" + std::string(name) +
                     "' (expected sensibility, rationality or discard)");
}

InstanceCounts count_instances(std::span<const Dialogue> dialogues) {
  InstanceCounts counts;
  for (const auto& d : dialogues) counts[d.id] = listener_turn_count(d);
  return counts;
}

const std::vector<std::string>& Partition::ids(Subset s) const {
  switch (s) {
    case Subset::sensibility: return sensibility_ids;
    case Subset::discard: return discard_ids;
    case Subset::rationality: break;
  }
  return rationality_ids;
}

json Partition::manifest() const {
  json subsets = json::object();
  for (Subset s : {Subset::sensibility, Subset::discard, Subset::rationality}) {
    const auto& st = stat(s);
    subsets[std::string(subset_name(s))] = {
        {"dialogues", st.dialogues}, {"instances", st.instances}, {"percent", st.percent}};
  }
  return {{"threshold", threshold},
          {"total_instances", total_instances},
          {"subsets", subsets},
          {"assumptions",
           {"ties with the threshold belong to the rationality subset",
            "the neutral subset used for router training is the discard subset",
            "percentages are over expanded instances"}}};
}

Partition partition(std::span<const ScoreRecord> records, const SelectionConfig& config,
                    const InstanceCounts* counts) {
  if (config.threshold < 0 || config.threshold > 10) {
    throw config_error("threshold must be in 0..10");
  }
  Partition p;
  p.threshold = config.threshold;
  for (const auto& r : records) {
    const Subset s = classify(r.sensibility, r.rationality, config.threshold);
    std::size_t n = 1;
    if (counts) {
      if (auto it = counts->find(r.dialogue_id); it != counts->end()) n = it->second;
    }
    auto& st = p.stats[static_cast<int>(s)];
    ++st.dialogues;
    st.instances += n;
    p.total_instances += n;
    switch (s) {
      case Subset::sensibility: p.sensibility_ids.push_back(r.dialogue_id); break;
      case Subset::discard: p.discard_ids.push_back(r.dialogue_id); break;
      case Subset::rationality: p.rationality_ids.push_back(r.dialogue_id); break;
    }
  }
  for (auto& st : p.stats) {
    st.percent = p.total_instances == 0
                     ? 0.0
                     : 100.0 * static_cast<double>(st.instances) / static_cast<double>(p.total_instances);
  }
  return p;
}

std::size_t Histogram2D::total() const {
  std::size_t n = 0;
  for (const auto& row : counts)
    for (auto c : row) n += c;
  return n;
}

std::string Histogram2D::to_csv() const {
  std::string out;
  for (const auto& row : counts) {
    for (std::size_t s = 0; s < row.size(); ++s) {
      if (s > 0) out += ',';
      out += std::to_string(row[s]);
    }
    out += '\n';
  }
  return out;
}

std::string Histogram2D::to_text() const {
  std::string out = "rationality \\ sensibility\n     ";
  for (int s = 0; s <= 10; ++s) out += fmt::format("{:>7}", s);
  out += '\n';
  for (int r = 0; r <= 10; ++r) {
    out += fmt::format("{:>5}", r);
    for (int s = 0; s <= 10; ++s) out += fmt::format("{:>7}", counts[r][s]);
    out += '\n';
  }
  return out;
}

Histogram2D histogram2d(std::span<const ScoreRecord> records) {
  Histogram2D h;
  for (const auto& r : records) ++h.counts[r.rationality][r.sensibility];
  return h;
}

SelectionReport selection_report(std::span<const ScoreRecord> records, std::span<const int> thresholds,
                                 const InstanceCounts* counts) {
  SelectionReport report;
  const auto hist = histogram2d(records);
  report.histogram_csv = hist.to_csv();
  report.summary = {{"records", records.size()}, {"thresholds", json::array()}};

  std::string& t = report.text;
  t += fmt::format("{:<10} {:>22} {:>22} {:>22}\n", "threshold", "sensibility", "rationality",
                   "discard");
  for (int threshold : thresholds) {
    const auto p = partition(records, SelectionConfig{threshold}, counts);
    auto cell = [&](Subset s) {
      const auto& st = p.stat(s);
      return fmt::format("{} ({:.1f}%)", st.instances, st.percent);
    };
    t += fmt::format("{:<10} {:>22} {:>22} {:>22}\n", threshold, cell(Subset::sensibility),
                     cell(Subset::rationality), cell(Subset::discard));
    report.summary["thresholds"].push_back(p.manifest());
  }
  report.summary["total_instances"] =
      thresholds.empty() ? 0 : report.summary["thresholds"][0]["total_instances"].get<std::size_t>();
  t += '\n';
  t += hist.to_text();
  return report;
}

}  // namespace eemp
