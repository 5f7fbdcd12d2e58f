#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cafe/common.hpp"

namespace cafe {

struct SketchConfig {
  std::uint32_t bucket_count = 1;      // w
  std::uint32_t slots_per_bucket = 4;  // c
  double hot_threshold = 0.0;
  double medium_threshold = 0.0;
  double decay_coefficient = 1.0;      // in (0, 1]
  std::uint64_t decay_interval = 1ULL << 62;  // events between decay passes
  std::uint64_t hash_seed = 0;

  void validate() const;
  std::uint64_t total_slots() const {
    return std::uint64_t{bucket_count} * slots_per_bucket;
  }
};

struct Slot {
  FeatureId feature = kEmptyFeature;
  double score = 0.0;
  std::int64_t handle = kNoHandle;

  bool empty() const { return feature == kEmptyFeature; }
};

enum class SlotAction { Matched, FilledEmpty, Evicted };

struct InsertResult {
  SlotAction action = SlotAction::Matched;
  FeatureId victim = kEmptyFeature;       // only for Evicted
  std::int64_t victim_handle = kNoHandle; // unique row orphaned by eviction
  bool decay_fired = false;
  std::uint32_t decay_demotions = 0;
};

enum class FeatureClass { Hot, Medium, Cold };

struct QueryResult {
  FeatureClass cls = FeatureClass::Cold;
  double score = 0.0;
  std::int64_t handle = kNoHandle;
  bool tracked = false;
};

// Bucketized single-pass top-k score sketch. Each feature hashes to one
// bucket of c slots; insertion follows SpaceSaving min-replacement within
// the bucket. Slots carry the unique-table row handle of hot features.
//
// Single writer, concurrent readers. Mutating calls must be serialized by
// the caller; query() is const and never mutates.
class HotSketch {
 public:
  explicit HotSketch(SketchConfig cfg);

  InsertResult insert(FeatureId feature, double score_delta);
  QueryResult query(FeatureId feature) const;

  // Multiplies every live score by the decay coefficient. Returns the number
  // of slots that newly fell below the hot threshold while holding a handle;
  // the embedding store performs the actual demotion.
  std::uint32_t decay();

  void set_handle(FeatureId feature, std::int64_t handle);
  void clear_handle(FeatureId feature);

  std::vector<std::uint8_t> snapshot() const;
  static HotSketch restore(std::span<const std::uint8_t> state);

  const SketchConfig& config() const { return cfg_; }
  std::span<const Slot> slots() const { return slots_; }
  std::uint64_t events_since_decay() const { return events_since_decay_; }

  // k highest-score tracked features, ties broken by ascending feature id.
  std::vector<std::pair<FeatureId, double>> top(std::size_t k) const;
  double total_score() const;
  std::size_t tracked_count() const;

 private:
  std::size_t bucket_of(FeatureId f) const {
    return static_cast<std::size_t>(hash_feature(f, cfg_.hash_seed) % cfg_.bucket_count);
  }
  Slot* find(FeatureId f);
  const Slot* find(FeatureId f) const;

  SketchConfig cfg_;
  std::vector<Slot> slots_;  // bucket-major, w*c entries
  std::uint64_t events_since_decay_ = 0;
};

}  // namespace cafe
