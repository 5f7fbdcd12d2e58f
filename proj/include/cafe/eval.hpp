#pragma once

#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cafe/sketch.hpp"
#include "cafe/workload.hpp"

namespace cafe {

// Exact per-feature score accumulator; the ground truth for recall.
class ExactTopK {
 public:
  void add(FeatureId f, double delta) { scores_[f] += delta; }
  void clear() { scores_.clear(); }
  std::size_t distinct() const { return scores_.size(); }
  double score(FeatureId f) const {
    auto it = scores_.find(f);
    return it == scores_.end() ? 0.0 : it->second;
  }
  // Ties broken by ascending feature id, matching HotSketch::top.
  std::vector<std::pair<FeatureId, double>> top(std::size_t k) const;
  const std::unordered_map<FeatureId, double>& scores() const { return scores_; }

 private:
  std::unordered_map<FeatureId, double> scores_;
};

// |top-k(sketch) ∩ top-k(oracle)| / k.
double recall_at_k(const HotSketch& sketch, const ExactTopK& oracle, std::size_t k);

// Textbook SpaceSaving over a flat array summary: min-score replacement with
// score inheritance, minimum ties broken by lowest entry index.
class SpaceSaving {
 public:
  explicit SpaceSaving(std::size_t capacity);
  void insert(FeatureId f, double delta);
  const std::vector<std::pair<FeatureId, double>>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  std::vector<std::pair<FeatureId, double>> entries_;
};

// Closed-form retention lower bound 1 - (1-gamma)/((c-1)*gamma*w), clamped
// to [0, 1]. Degenerate at c < 2.
double retention_bound(double gamma, std::uint32_t w, std::uint32_t c);

// Numerical supremum over eta > 0 of 3^-eta * (1 - eta/((c-1)*gamma*(eta*w)^z)),
// clamped to [0, 1]. Requires z > 1.
double zipf_retention_bound(double gamma, double z, std::uint32_t w, std::uint32_t c);

struct OptimalC {
  double exact = 0.0;  // 1 + 1/(z-1)
  long rounded = 0;
};
OptimalC optimal_c(double z);

// Monte-Carlo check of the closed-form retention bound: one planted feature
// carries a gamma fraction of the score mass, the rest is spread uniformly.
struct RetentionResult {
  double empirical = 0.0;
  double bound = 0.0;
  double std_error = 0.0;  // binomial standard error of the empirical rate
  std::uint32_t trials = 0;
};
RetentionResult retention_monte_carlo(double gamma, std::uint32_t w, std::uint32_t c,
                                      std::uint32_t trials, std::uint64_t universe,
                                      std::uint64_t events_per_trial, std::uint64_t seed);

// Per-window recall of the sketch's top-k against the window-local exact
// top-k and against the cumulative exact top-k.
struct WindowRecall {
  std::uint64_t window = 0;
  double local_recall = 0.0;
  double cumulative_recall = 0.0;
  bool warm_up = false;
};
std::vector<WindowRecall> sliding_window_recall(ZipfStream stream, HotSketch sketch,
                                                std::uint64_t window_events, std::size_t k);

struct ThroughputResult {
  std::uint32_t c = 0;
  std::uint32_t w = 0;
  std::uint64_t ops = 0;
  double insert_mops = 0.0;
  double query_mops = 0.0;
};
ThroughputResult throughput_bench(std::uint32_t w, std::uint32_t c, std::uint64_t ops,
                                  std::uint64_t seed);

}  // namespace cafe
