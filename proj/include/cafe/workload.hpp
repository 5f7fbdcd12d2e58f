#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cafe/common.hpp"

namespace cafe {

struct DriftSpec {
  std::uint64_t window_events = 0;     // events per drift window
  double permutation_fraction = 0.0;   // p in [0, 1]
};

struct ZipfStreamSpec {
  std::uint64_t universe = 0;  // n
  double exponent = 1.0;       // z >= 0; rank probability ~ rank^-z
  std::uint64_t event_count = 0;
  std::uint64_t seed = 0;
  std::optional<DriftSpec> drift;
  // Planted logistic label model: P(y=1) = sigmoid(w_f + noise).
  double weight_scale = 1.5;
  double label_noise = 0.5;

  void validate() const;
};

struct StreamEvent {
  FeatureId feature = 0;
  int label = 0;
};

// Deterministic Zipf-distributed event stream. Rank i (1-based) is drawn
// with probability proportional to i^-z and mapped to a feature id through a
// seeded permutation; drift re-randomizes a p-fraction of that mapping at
// window boundaries. Labels come from a planted per-feature logistic model.
class ZipfStream {
 public:
  explicit ZipfStream(ZipfStreamSpec spec);

  bool next(StreamEvent& ev);
  std::vector<StreamEvent> generate_all();

  std::uint64_t emitted() const { return emitted_; }
  const ZipfStreamSpec& spec() const { return spec_; }
  const std::vector<std::uint32_t>& rank_to_feature() const { return rank_to_feature_; }

  // Hidden per-feature logit, stable across the whole stream.
  static double planted_weight(FeatureId f, std::uint64_t seed, double scale);

  std::vector<std::uint8_t> serialize() const;
  static ZipfStream deserialize(std::span<const std::uint8_t> state);

 private:
  void apply_drift();

  ZipfStreamSpec spec_;
  std::vector<double> cdf_;                 // cumulative rank probabilities
  std::vector<std::uint32_t> rank_to_feature_;
  std::vector<std::uint32_t> scratch_idx_;  // persistent index pool for drift
  std::mt19937_64 rng_;
  std::uint64_t emitted_ = 0;
};

// Headerless CSV, one `feature_id,label` record per line.
std::vector<StreamEvent> ingest_trace(const std::string& path);
void export_trace(const std::vector<StreamEvent>& events, const std::string& path);

}  // namespace cafe
