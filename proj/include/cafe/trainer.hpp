#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cafe/embedding_store.hpp"
#include "cafe/sketch.hpp"
#include "cafe/workload.hpp"

namespace cafe {

enum class TrainMode { Cafe, HashOnly, Uncompressed };

struct TrainConfig {
  TrainMode mode = TrainMode::Cafe;
  double learning_rate = 0.05;
  std::uint32_t batch_size = 32;
  std::uint64_t steps = 1000;
  std::uint32_t maintenance_interval = 100;  // steps between migration passes
  std::uint64_t predictor_seed = 1;
  bool trace_deviation = false;   // run an uncompressed shadow alongside
  bool verify_promotions = false; // check resolve equality across promotions

  void validate() const;
};

struct StepMetrics {
  std::uint64_t step = 0;
  double loss = 0.0;
  std::uint64_t hot_hits = 0;
  std::uint64_t medium_hits = 0;
  std::uint64_t cold_hits = 0;
  std::uint64_t migrations = 0;
  double epsilon = 0.0;  // per-step gradient deviation vs the shadow run
};

struct DeviationTrace {
  std::vector<double> epsilon;
  double mean_eps2() const;
};

struct Predictor {
  std::vector<double> weights;
  double bias = 0.0;

  static Predictor init(std::uint32_t dim, std::uint64_t seed);
};

// Numerically stable logistic loss and its exact gradients, shared by the
// training loop and the finite-difference checks.
double logistic_loss(std::span<const double> w, double b, std::span<const double> e, int y);
// Returns dloss/dlogit; grad_w = gz * e, grad_e = gz * w, grad_b = gz.
double logistic_grad_logit(std::span<const double> w, double b, std::span<const double> e, int y);

// One training run: stream -> sketch classification -> embedding resolve ->
// logistic forward/backward -> SGD updates -> importance insertion, with a
// periodic migration/decay maintenance pass. Events in a batch are processed
// in order, so runs are deterministic under fixed seeds.
class TrainRun {
 public:
  TrainRun(TrainConfig cfg, ZipfStream stream, EmbeddingStore store,
           std::optional<HotSketch> sketch);

  StepMetrics step();
  std::vector<StepMetrics> run_to(std::uint64_t target_step);
  std::vector<StepMetrics> run_all() { return run_to(cfg_.steps); }

  std::uint64_t completed_steps() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  const EmbeddingStore& store() const { return store_; }
  const HotSketch& sketch() const { return *sketch_; }
  const Predictor& predictor() const { return predictor_; }
  const DeviationTrace& deviation() const { return deviation_; }

  std::uint64_t promotions_checked() const { return promotions_checked_; }
  std::uint64_t promotions_smooth() const { return promotions_smooth_; }
  std::uint64_t total_promotions() const { return total_promotions_; }

  std::vector<std::uint8_t> serialize() const;
  static TrainRun deserialize(std::span<const std::uint8_t> state);

 private:
  void maintenance(StepMetrics& m);

  TrainConfig cfg_;
  ZipfStream stream_;
  EmbeddingStore store_;
  std::optional<HotSketch> sketch_;
  Predictor predictor_;
  std::uint64_t step_ = 0;
  DeviationTrace deviation_;

  // Uncompressed shadow; rows are seeded from the main run's first resolve of
  // each feature so the deviation is well-defined. The shadow shares the main
  // predictor and differs only in its embedding rows, so ε isolates the effect
  // of embedding compression: a feature whose row tracks the shadow exactly
  // contributes zero.
  std::optional<EmbeddingStore> shadow_store_;
  std::vector<std::uint8_t> shadow_init_;

  std::uint64_t promotions_checked_ = 0;
  std::uint64_t promotions_smooth_ = 0;
  std::uint64_t total_promotions_ = 0;
};

// Convenience wrapper matching the common "run everything" call.
struct TrainResult {
  std::vector<StepMetrics> metrics;
  DeviationTrace deviation;
};
TrainResult train(TrainConfig cfg, ZipfStream stream, EmbeddingStore store,
                  std::optional<HotSketch> sketch);

}  // namespace cafe
