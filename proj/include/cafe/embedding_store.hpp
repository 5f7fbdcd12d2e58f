#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "cafe/common.hpp"
#include "cafe/sketch.hpp"

namespace cafe {

// Memory is accounted in the 4-byte-scalar model: one embedding scalar and
// one sketch slot attribute each cost kScalarBytes. A slot has 3 attributes
// and the sketch keeps 4 slots per hot row, so sketch : hot-table bytes are
// 12 : d per hot feature.
inline constexpr std::uint64_t kScalarBytes = 4;
inline constexpr std::uint64_t kSlotAttributes = 3;
inline constexpr std::uint64_t kSlotsPerHotRow = 4;

struct BudgetPlan {
  std::uint64_t feature_universe = 0;  // n
  std::uint32_t dim = 0;               // d
  std::uint64_t total_budget = 0;      // M, bytes
  double hot_percentage = 0.7;
  std::uint32_t level_count = 2;       // L
  std::vector<double> level_split;

  std::uint64_t hot_rows = 0;          // k
  std::uint64_t sketch_slots = 0;      // 4k
  std::vector<std::uint64_t> shared_rows;

  std::uint64_t sketch_bytes() const { return sketch_slots * kSlotAttributes * kScalarBytes; }
  std::uint64_t hot_table_bytes() const { return hot_rows * dim * kScalarBytes; }
  std::uint64_t shared_bytes() const;
  std::uint64_t allocated_bytes() const {
    return sketch_bytes() + hot_table_bytes() + shared_bytes();
  }
  std::uint64_t uncompressed_bytes() const { return feature_universe * dim * kScalarBytes; }
  double compression_ratio() const {
    return static_cast<double>(uncompressed_bytes()) / static_cast<double>(allocated_bytes());
  }
};

// Largest k such that sketch + hot table fit in hot_percentage * M; the rest
// of the budget is split across the shared tables. shared_min_rows > 0 allows
// degenerate plans (e.g. leave-one-out) by clamping each level to that floor.
BudgetPlan plan_budget(std::uint64_t n, std::uint32_t d, std::uint64_t budget_bytes,
                       double hot_percentage, std::uint32_t level_count,
                       std::span<const double> level_split,
                       std::uint64_t shared_min_rows = 0);

// Plan with no sketch and no unique table: the whole budget is one shared
// table (the hash-embedding baseline).
BudgetPlan hash_only_plan(std::uint64_t n, std::uint32_t d, std::uint64_t budget_bytes);

// One row per feature, addressed by feature id. Used for uncompressed runs
// and shadow runs.
BudgetPlan uncompressed_plan(std::uint64_t n, std::uint32_t d);

struct EmbeddingRef {
  struct RowRef {
    std::int32_t table;  // -1 = unique table, otherwise shared level
    std::uint64_t index;
  };
  std::array<RowRef, 2> rows{};
  std::uint32_t count = 0;
};

enum class MigrationDirection { Promote, Demote };

struct MigrationEvent {
  FeatureId feature = kEmptyFeature;
  MigrationDirection direction = MigrationDirection::Promote;
  std::int64_t unique_row = kNoHandle;
};

// Unique (hot) table plus L leveled shared hash tables behind one resolve
// surface. Hot features address the unique table through their sketch
// handle; medium features pool one row from each of the first two levels;
// cold features read level 0 only. The level-0 row of a feature is the same
// whether it is medium or cold.
class EmbeddingStore {
 public:
  EmbeddingStore(BudgetPlan plan, std::uint64_t init_seed, bool identity_level0 = false);

  EmbeddingRef resolve(FeatureId feature, FeatureClass cls,
                       std::int64_t handle = kNoHandle) const;
  std::vector<double> pooled(const EmbeddingRef& ref) const;

  std::span<double> row(std::int32_t table, std::uint64_t index);
  std::span<const double> row(std::int32_t table, std::uint64_t index) const;

  MigrationEvent promote(HotSketch& sketch, FeatureId feature);
  MigrationEvent demote(HotSketch& sketch, FeatureId feature);
  // Returns the unique row of a hot feature that lost its slot by eviction.
  void release_row(std::int64_t handle);

  std::uint64_t free_rows() const { return free_list_.size(); }
  std::uint64_t live_handles() const { return plan_.hot_rows - free_list_.size(); }
  const BudgetPlan& plan() const { return plan_; }
  std::uint32_t dim() const { return plan_.dim; }

  std::vector<std::uint8_t> serialize() const;
  static EmbeddingStore deserialize(std::span<const std::uint8_t> state);

 private:
  std::uint64_t shared_index(FeatureId feature, std::uint32_t level) const;

  BudgetPlan plan_;
  std::uint64_t init_seed_ = 0;
  bool identity_level0_ = false;
  std::vector<double> unique_table_;               // hot_rows x dim
  std::vector<std::vector<double>> shared_tables_; // per level, rows x dim
  std::vector<std::uint64_t> free_list_;           // unique rows, used as a stack
};

}  // namespace cafe
