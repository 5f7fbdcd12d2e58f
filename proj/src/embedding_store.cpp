#include "cafe/embedding_store.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace cafe {

std::uint64_t BudgetPlan::shared_bytes() const {
  std::uint64_t rows = 0;
  for (std::uint64_t r : shared_rows) rows += r;
  return rows * dim * kScalarBytes;
}

BudgetPlan plan_budget(std::uint64_t n, std::uint32_t d, std::uint64_t budget_bytes,
                       double hot_percentage, std::uint32_t level_count,
                       std::span<const double> level_split,
                       std::uint64_t shared_min_rows) {
  if (n < 1 || d < 1) throw ConfigError("plan_budget: n and d must be >= 1");
  if (!(hot_percentage > 0.0 && hot_percentage <= 1.0))
    throw ConfigError("plan_budget: hot_percentage must be in (0, 1]");
  if (level_count < 1) throw ConfigError("plan_budget: level_count must be >= 1");
  if (level_split.size() != level_count)
    throw ConfigError("plan_budget: level_split size must equal level_count");
  double split_sum = std::accumulate(level_split.begin(), level_split.end(), 0.0);
  if (std::abs(split_sum - 1.0) > 1e-9)
    throw ConfigError("plan_budget: level_split must sum to 1");

  BudgetPlan p;
  p.feature_universe = n;
  p.dim = d;
  p.total_budget = budget_bytes;
  p.hot_percentage = hot_percentage;
  p.level_count = level_count;
  p.level_split.assign(level_split.begin(), level_split.end());

  // Bytes per hot feature: 4 slots of 3 attributes plus one d-dim row.
  const std::uint64_t per_hot = (kSlotsPerHotRow * kSlotAttributes + d) * kScalarBytes;
  const auto hot_budget = static_cast<std::uint64_t>(hot_percentage * static_cast<double>(budget_bytes));
  p.hot_rows = hot_budget / per_hot;
  if (p.hot_rows < 1) throw BudgetTooSmall("plan_budget: budget too small for one hot row");
  p.sketch_slots = kSlotsPerHotRow * p.hot_rows;

  const std::uint64_t used_hot = p.sketch_bytes() + p.hot_table_bytes();
  const std::uint64_t remaining = budget_bytes - used_hot;
  const std::uint64_t row_bytes = std::uint64_t{d} * kScalarBytes;
  p.shared_rows.resize(level_count);
  for (std::uint32_t l = 0; l < level_count; ++l) {
    auto level_bytes = static_cast<std::uint64_t>(p.level_split[l] * static_cast<double>(remaining));
    std::uint64_t rows = level_bytes / row_bytes;
    if (rows < 1) {
      if (shared_min_rows < 1)
        throw BudgetTooSmall("plan_budget: no budget left for shared level " + std::to_string(l));
      rows = shared_min_rows;
    }
    p.shared_rows[l] = rows;
  }
  return p;
}

BudgetPlan hash_only_plan(std::uint64_t n, std::uint32_t d, std::uint64_t budget_bytes) {
  if (n < 1 || d < 1) throw ConfigError("hash_only_plan: n and d must be >= 1");
  BudgetPlan p;
  p.feature_universe = n;
  p.dim = d;
  p.total_budget = budget_bytes;
  p.hot_percentage = 0.0;
  p.level_count = 1;
  p.level_split = {1.0};
  std::uint64_t rows = budget_bytes / (std::uint64_t{d} * kScalarBytes);
  if (rows < 1) throw BudgetTooSmall("hash_only_plan: budget too small for one row");
  p.shared_rows = {rows};
  return p;
}

BudgetPlan uncompressed_plan(std::uint64_t n, std::uint32_t d) {
  BudgetPlan p;
  p.feature_universe = n;
  p.dim = d;
  p.total_budget = n * std::uint64_t{d} * kScalarBytes;
  p.hot_percentage = 0.0;
  p.level_count = 1;
  p.level_split = {1.0};
  p.shared_rows = {n};
  return p;
}

EmbeddingStore::EmbeddingStore(BudgetPlan plan, std::uint64_t init_seed, bool identity_level0)
    : plan_(std::move(plan)), init_seed_(init_seed), identity_level0_(identity_level0) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(plan_.dim));
  auto fill = [&](std::vector<double>& table, std::uint64_t rows, std::uint64_t salt) {
    table.resize(rows * plan_.dim);
    std::mt19937_64 rng(mix64(init_seed_ ^ salt));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : table) v = dist(rng);
  };
  fill(unique_table_, plan_.hot_rows, 0x75ULL);
  shared_tables_.resize(plan_.level_count);
  for (std::uint32_t l = 0; l < plan_.level_count; ++l)
    fill(shared_tables_[l], plan_.shared_rows[l], 0x100ULL + l);
  free_list_.resize(plan_.hot_rows);
  // Stack layout so row 0 is allocated first.
  for (std::uint64_t i = 0; i < plan_.hot_rows; ++i)
    free_list_[i] = plan_.hot_rows - 1 - i;
}

std::uint64_t EmbeddingStore::shared_index(FeatureId feature, std::uint32_t level) const {
  const std::uint64_t rows = plan_.shared_rows[level];
  if (level == 0 && identity_level0_) return feature % rows;
  return hash_feature(feature, mix64(init_seed_ ^ (0x517A0000ULL + level))) % rows;
}

EmbeddingRef EmbeddingStore::resolve(FeatureId feature, FeatureClass cls,
                                     std::int64_t handle) const {
  EmbeddingRef ref;
  switch (cls) {
    case FeatureClass::Hot:
      if (handle == kNoHandle) throw HandleMissing("resolve: hot feature without handle");
      ref.rows[ref.count++] = {-1, static_cast<std::uint64_t>(handle)};
      break;
    case FeatureClass::Medium:
      ref.rows[ref.count++] = {0, shared_index(feature, 0)};
      if (plan_.level_count > 1) ref.rows[ref.count++] = {1, shared_index(feature, 1)};
      break;
    case FeatureClass::Cold:
      ref.rows[ref.count++] = {0, shared_index(feature, 0)};
      break;
  }
  return ref;
}

std::vector<double> EmbeddingStore::pooled(const EmbeddingRef& ref) const {
  std::vector<double> out(plan_.dim, 0.0);
  for (std::uint32_t i = 0; i < ref.count; ++i) {
    auto r = row(ref.rows[i].table, ref.rows[i].index);
    for (std::uint32_t j = 0; j < plan_.dim; ++j) out[j] += r[j];
  }
  return out;
}

std::span<double> EmbeddingStore::row(std::int32_t table, std::uint64_t index) {
  std::vector<double>& t = table < 0 ? unique_table_ : shared_tables_.at(table);
  std::uint64_t rows = table < 0 ? plan_.hot_rows : plan_.shared_rows.at(table);
  if (index >= rows) throw DomainError("row index out of bounds");
  return {t.data() + index * plan_.dim, plan_.dim};
}

std::span<const double> EmbeddingStore::row(std::int32_t table, std::uint64_t index) const {
  return const_cast<EmbeddingStore*>(this)->row(table, index);
}

MigrationEvent EmbeddingStore::promote(HotSketch& sketch, FeatureId feature) {
  QueryResult q = sketch.query(feature);
  if (!q.tracked) throw FeatureNotTracked("promote: feature not tracked");
  if (q.cls != FeatureClass::Hot) throw DomainError("promote: feature not hot");
  if (q.handle != kNoHandle) throw DomainError("promote: feature already has a handle");
  if (free_list_.empty()) throw NoFreeRow("promote: unique table full");

  // Initialize from the current shared representation so the resolved vector
  // is unchanged across the migration.
  std::vector<double> init = pooled(resolve(feature, FeatureClass::Medium));
  std::uint64_t r = free_list_.back();
  free_list_.pop_back();
  auto dst = row(-1, r);
  for (std::uint32_t j = 0; j < plan_.dim; ++j) dst[j] = init[j];
  sketch.set_handle(feature, static_cast<std::int64_t>(r));
  return {feature, MigrationDirection::Promote, static_cast<std::int64_t>(r)};
}

MigrationEvent EmbeddingStore::demote(HotSketch& sketch, FeatureId feature) {
  QueryResult q = sketch.query(feature);
  if (!q.tracked || q.handle == kNoHandle)
    throw HandleMissing("demote: feature holds no handle");
  sketch.clear_handle(feature);
  free_list_.push_back(static_cast<std::uint64_t>(q.handle));
  return {feature, MigrationDirection::Demote, q.handle};
}

void EmbeddingStore::release_row(std::int64_t handle) {
  if (handle < 0 || static_cast<std::uint64_t>(handle) >= plan_.hot_rows)
    throw DomainError("release_row: handle out of range");
  free_list_.push_back(static_cast<std::uint64_t>(handle));
}

std::vector<std::uint8_t> EmbeddingStore::serialize() const {
  ByteWriter w;
  w.magic("ETB1");
  w.u64(plan_.feature_universe);
  w.u32(plan_.dim);
  w.u64(plan_.total_budget);
  w.f64(plan_.hot_percentage);
  w.u32(plan_.level_count);
  for (double s : plan_.level_split) w.f64(s);
  w.u64(plan_.hot_rows);
  w.u64(plan_.sketch_slots);
  for (std::uint64_t r : plan_.shared_rows) w.u64(r);
  w.u64(init_seed_);
  w.u8(identity_level0_ ? 1 : 0);
  for (double v : unique_table_) w.f64(v);
  for (const auto& t : shared_tables_)
    for (double v : t) w.f64(v);
  w.u64(free_list_.size());
  for (std::uint64_t r : free_list_) w.u64(r);
  return w.take();
}

EmbeddingStore EmbeddingStore::deserialize(std::span<const std::uint8_t> state) {
  ByteReader r(state);
  r.expect_magic("ETB1");
  BudgetPlan p;
  p.feature_universe = r.u64();
  p.dim = r.u32();
  p.total_budget = r.u64();
  p.hot_percentage = r.f64();
  p.level_count = r.u32();
  p.level_split.resize(p.level_count);
  for (double& s : p.level_split) s = r.f64();
  p.hot_rows = r.u64();
  p.sketch_slots = r.u64();
  p.shared_rows.resize(p.level_count);
  for (std::uint64_t& q : p.shared_rows) q = r.u64();
  std::uint64_t seed = r.u64();
  bool identity = r.u8() != 0;
  EmbeddingStore store(p, seed, identity);
  for (double& v : store.unique_table_) v = r.f64();
  for (auto& t : store.shared_tables_)
    for (double& v : t) v = r.f64();
  store.free_list_.resize(r.u64());
  for (std::uint64_t& q : store.free_list_) q = r.u64();
  if (!r.exhausted()) throw CorruptState("store state: trailing bytes");
  return store;
}

}  // namespace cafe
