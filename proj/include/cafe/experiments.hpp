#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cafe/common.hpp"
#include "cafe/config.hpp"

#include <json.hpp>

namespace cafe {

enum class ExperimentKind { RecallSweep, DriftRecall, TrainCompare, TheoryGrid, Throughput };
ExperimentKind experiment_kind_from(const std::string& name);

// An experiment is an ordered sequence of work units. Units append CSV rows;
// stateless experiments derive every unit from (config, unit index) alone,
// stateful ones carry state across units and serialize it into checkpoints.
class Experiment {
 public:
  virtual ~Experiment() = default;
  virtual std::string csv_header() const = 0;
  virtual std::uint64_t unit_count() const = 0;
  virtual void run_unit(std::uint64_t i, std::string& csv) = 0;
  virtual bool stateless() const { return true; }
  virtual void save_state(ByteWriter&) const {}
  virtual void restore_state(ByteReader&) {}
  virtual nlohmann::ordered_json summarize(const std::string& csv) const = 0;
};

std::unique_ptr<Experiment> make_experiment(const KvConfig& cfg);

struct CheckpointData {
  std::string config_text;
  std::uint64_t units_done = 0;
  std::string csv;
  std::vector<std::uint8_t> state;
};

void write_checkpoint_file(const std::string& path, const CheckpointData& data);
CheckpointData read_checkpoint_file(const std::string& path);

struct EngineOptions {
  std::string checkpoint_path;         // empty = no checkpoints written
  std::uint64_t checkpoint_every = 0;  // units between checkpoints, 0 = never
  std::uint64_t stop_after = 0;        // stop (with checkpoint) after N units, 0 = run all
  unsigned threads = 1;                // unit-level parallelism for stateless experiments
};

// Returns true when the experiment ran to completion (outputs written under
// output_dir), false when it stopped early at a checkpoint.
bool run_config(const KvConfig& cfg, const EngineOptions& opts);
bool resume_checkpoint(const std::string& checkpoint_path, const EngineOptions& opts,
                       const std::optional<std::string>& verify_config_path = std::nullopt);

// Deterministic float formatting used for all CSV output.
std::string fmt_double(double v);

}  // namespace cafe
