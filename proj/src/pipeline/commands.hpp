#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "moe/moe.hpp"
#include "pipeline/config.hpp"
#include "tinyformer/params.hpp"
#include "tinyformer/tokenizer.hpp"
#include "tinyformer/training.hpp"

namespace eemp {

/// Subcommand names. The abtest group is exposed as abtest-build,
/// abtest-serve and abtest-report.
const std::vector<std::string>& command_names();

using ProgressFn = std::function<void(const std::string&)>;

/// Runs one subcommand under the workspace lock and returns its report text.
/// Failures are thrown as Error with the matching ErrorKind.
std::string run_command(const std::string& name, const PipelineConfig& config, const ProgressFn& progress = {});

/// A dense or MoE checkpoint behind one interface.
struct AnyModel {
  std::optional<Parameters> dense;
  std::optional<MoEModel> moe;

  const ModelConfig& config() const;
  std::string generate(std::span<const Turn> context, int max_tokens, const RenderOptions& render = {}) const;
  double mean_nll(std::span<const Example> examples) const;
};

/// Reads the header to pick the dense or MoE loader.
AnyModel load_any_model(const std::filesystem::path& path);

ModelConfig model_config_from(const PipelineConfig& config);
TrainConfig train_config_from(const PipelineConfig& config);

/// Checkpoint name (resolved under checkpoints_dir) or explicit path.
std::filesystem::path resolve_checkpoint(const PipelineConfig& config, const std::string& name_or_path);

/// Stable instance id: <dialogue id>#<number of context turns>.
std::string instance_id(const Instance& instance);

}  // namespace eemp
