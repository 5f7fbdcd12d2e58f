#include "cafe/sketch.hpp"

#include <algorithm>
#include <cmath>

namespace cafe {

void SketchConfig::validate() const {
  if (bucket_count < 1) throw ConfigError("sketch: bucket_count must be >= 1");
  if (slots_per_bucket < 1) throw ConfigError("sketch: slots_per_bucket must be >= 1");
  if (!(hot_threshold >= 0.0)) throw ConfigError("sketch: hot_threshold must be >= 0");
  if (!(medium_threshold >= 0.0)) throw ConfigError("sketch: medium_threshold must be >= 0");
  if (medium_threshold > hot_threshold)
    throw ConfigError("sketch: medium_threshold must be <= hot_threshold");
  if (!(decay_coefficient > 0.0 && decay_coefficient <= 1.0))
    throw ConfigError("sketch: decay_coefficient must be in (0, 1]");
  if (decay_interval < 1) throw ConfigError("sketch: decay_interval must be >= 1");
}

HotSketch::HotSketch(SketchConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  slots_.resize(cfg_.total_slots());
}

Slot* HotSketch::find(FeatureId f) {
  Slot* base = slots_.data() + bucket_of(f) * cfg_.slots_per_bucket;
  for (std::uint32_t i = 0; i < cfg_.slots_per_bucket; ++i) {
    if (base[i].feature == f) return base + i;
  }
  return nullptr;
}

const Slot* HotSketch::find(FeatureId f) const {
  return const_cast<HotSketch*>(this)->find(f);
}

InsertResult HotSketch::insert(FeatureId feature, double score_delta) {
  if (feature == kEmptyFeature) throw DomainError("insert: reserved feature id");
  if (!(score_delta >= 0.0) || !std::isfinite(score_delta))
    throw DomainError("insert: score_delta must be finite and >= 0");

  InsertResult res;
  Slot* base = slots_.data() + bucket_of(feature) * cfg_.slots_per_bucket;
  Slot* match = nullptr;
  Slot* empty = nullptr;
  Slot* min_slot = base;
  for (std::uint32_t i = 0; i < cfg_.slots_per_bucket; ++i) {
    Slot& s = base[i];
    if (s.feature == feature) {
      match = &s;
      break;
    }
    if (!empty && s.empty()) empty = &s;
    if (s.score < min_slot->score) min_slot = &s;  // ties keep lowest index
  }

  if (match) {
    match->score += score_delta;
    res.action = SlotAction::Matched;
  } else if (empty) {
    *empty = Slot{feature, score_delta, kNoHandle};
    res.action = SlotAction::FilledEmpty;
  } else {
    res.action = SlotAction::Evicted;
    res.victim = min_slot->feature;
    res.victim_handle = min_slot->handle;
    *min_slot = Slot{feature, min_slot->score + score_delta, kNoHandle};
  }

  if (++events_since_decay_ >= cfg_.decay_interval) {
    res.decay_fired = true;
    res.decay_demotions = decay();
  }
  return res;
}

QueryResult HotSketch::query(FeatureId feature) const {
  QueryResult q;
  const Slot* s = find(feature);
  if (!s) return q;  // Cold, score 0
  q.tracked = true;
  q.score = s->score;
  q.handle = s->handle;
  if (s->score >= cfg_.hot_threshold)
    q.cls = FeatureClass::Hot;
  else if (s->score >= cfg_.medium_threshold)
    q.cls = FeatureClass::Medium;
  else
    q.cls = FeatureClass::Cold;
  return q;
}

std::uint32_t HotSketch::decay() {
  std::uint32_t demotions = 0;
  for (Slot& s : slots_) {
    if (s.empty()) continue;
    bool was_hot = s.score >= cfg_.hot_threshold;
    s.score *= cfg_.decay_coefficient;
    if (was_hot && s.handle != kNoHandle && s.score < cfg_.hot_threshold) ++demotions;
  }
  events_since_decay_ = 0;
  return demotions;
}

void HotSketch::set_handle(FeatureId feature, std::int64_t handle) {
  Slot* s = find(feature);
  if (!s) throw FeatureNotTracked("set_handle: feature not tracked");
  s->handle = handle;
}

void HotSketch::clear_handle(FeatureId feature) {
  Slot* s = find(feature);
  if (!s) throw FeatureNotTracked("clear_handle: feature not tracked");
  s->handle = kNoHandle;
}

std::vector<std::uint8_t> HotSketch::snapshot() const {
  ByteWriter w;
  w.magic("HSK1");
  w.u32(cfg_.bucket_count);
  w.u32(cfg_.slots_per_bucket);
  w.f64(cfg_.hot_threshold);
  w.f64(cfg_.medium_threshold);
  w.f64(cfg_.decay_coefficient);
  w.u64(cfg_.decay_interval);
  w.u64(cfg_.hash_seed);
  w.u64(events_since_decay_);
  for (const Slot& s : slots_) {
    w.u64(s.feature);
    w.f64(s.score);
    w.i64(s.handle);
  }
  return w.take();
}

HotSketch HotSketch::restore(std::span<const std::uint8_t> state) {
  ByteReader r(state);
  r.expect_magic("HSK1");
  SketchConfig cfg;
  cfg.bucket_count = r.u32();
  cfg.slots_per_bucket = r.u32();
  cfg.hot_threshold = r.f64();
  cfg.medium_threshold = r.f64();
  cfg.decay_coefficient = r.f64();
  cfg.decay_interval = r.u64();
  cfg.hash_seed = r.u64();
  HotSketch sk(cfg);
  sk.events_since_decay_ = r.u64();
  for (Slot& s : sk.slots_) {
    s.feature = r.u64();
    s.score = r.f64();
    s.handle = r.i64();
  }
  if (!r.exhausted()) throw CorruptState("sketch state: trailing bytes");
  return sk;
}

std::vector<std::pair<FeatureId, double>> HotSketch::top(std::size_t k) const {
  std::vector<std::pair<FeatureId, double>> all;
  all.reserve(slots_.size());
  for (const Slot& s : slots_) {
    if (!s.empty()) all.emplace_back(s.feature, s.score);
  }
  auto cmp = [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  };
  if (all.size() > k) {
    std::partial_sort(all.begin(), all.begin() + k, all.end(), cmp);
    all.resize(k);
  } else {
    std::sort(all.begin(), all.end(), cmp);
  }
  return all;
}

double HotSketch::total_score() const {
  double sum = 0.0;
  for (const Slot& s : slots_) sum += s.score;
  return sum;
}

std::size_t HotSketch::tracked_count() const {
  std::size_t n = 0;
  for (const Slot& s : slots_)
    if (!s.empty()) ++n;
  return n;
}

}  // namespace cafe
