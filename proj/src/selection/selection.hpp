#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "common/json_lines.hpp"
#include "scorer/scorer.hpp"

namespace eemp {

struct SelectionConfig {
  int threshold = 5;
};

enum class Subset { sensibility = 0, discard = 1, rationality = 2 };

std::string_view subset_name(Subset s);
Subset parse_subset(std::string_view name);

/// Membership rule with strict inequalities; ties with the threshold fall
/// through to the rationality subset.
constexpr Subset classify(int sensibility, int rationality, int threshold) {
  if (rationality < threshold && sensibility > threshold) return Subset::sensibility;
  if (rationality > threshold && sensibility < threshold) return Subset::discard;
  return Subset::rationality;
}

struct SubsetStats {
  std::size_t dialogues = 0;
  std::size_t instances = 0;
  double percent = 0.0;  // of all instances
};

/// Dialogue id -> number of expanded instances. Ids absent from the map
/// count as one instance each.
using InstanceCounts = std::map<std::string, std::size_t>;

InstanceCounts count_instances(std::span<const Dialogue> dialogues);

struct Partition {
  int threshold = 0;
  std::vector<std::string> sensibility_ids;
  std::vector<std::string> discard_ids;
  std::vector<std::string> rationality_ids;
  std::array<SubsetStats, 3> stats{};
  std::size_t total_instances = 0;

  const std::vector<std::string>& ids(Subset s) const;
  const SubsetStats& stat(Subset s) const { return stats[static_cast<int>(s)]; }
  json manifest() const;
};

Partition partition(std::span<const ScoreRecord> records, const SelectionConfig& config,
                    const InstanceCounts* counts = nullptr);

/// counts[rationality][sensibility].
struct Histogram2D {
  std::array<std::array<std::size_t, 11>, 11> counts{};

  std::size_t total() const;
  std::string to_csv() const;
  std::string to_text() const;
};

Histogram2D histogram2d(std::span<const ScoreRecord> records);

struct SelectionReport {
  std::string text;
  json summary;
  std::string histogram_csv;
};

SelectionReport selection_report(std::span<const ScoreRecord> records, std::span<const int> thresholds,
                                 const InstanceCounts* counts = nullptr);

}  // namespace eemp
