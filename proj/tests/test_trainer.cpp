#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "cafe/trainer.hpp"

using namespace cafe;

namespace {

ZipfStreamSpec stream_spec(std::uint64_t n, double z, std::uint64_t events,
                           std::uint64_t seed = 1) {
  ZipfStreamSpec s;
  s.universe = n;
  s.exponent = z;
  s.event_count = events;
  s.seed = seed;
  return s;
}

EmbeddingStore uncompressed_store(std::uint64_t n, std::uint32_t d, std::uint64_t seed = 1) {
  return EmbeddingStore(uncompressed_plan(n, d), seed, /*identity_level0=*/true);
}

TrainConfig base_config(TrainMode mode, std::uint64_t steps) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.learning_rate = 0.1;
  cfg.batch_size = 32;
  cfg.steps = steps;
  cfg.maintenance_interval = 20;
  cfg.predictor_seed = 4;
  return cfg;
}

SketchConfig trainer_sketch(const BudgetPlan& plan) {
  SketchConfig scfg;
  scfg.slots_per_bucket = 4;
  scfg.bucket_count = static_cast<std::uint32_t>(plan.sketch_slots / 4);
  scfg.hot_threshold = 0.5;
  scfg.medium_threshold = 0.05;
  scfg.decay_coefficient = 0.98;
  scfg.decay_interval = 32 * 20;
  scfg.hash_seed = 2;
  return scfg;
}

}  // namespace

TEST_CASE("gradients match central finite differences") {
  std::mt19937_64 rng(15);
  const std::uint32_t d = 8;
  const double h = 1e-6;
  for (int inst = 0; inst < 50; ++inst) {
    std::vector<double> w(d), e(d);
    for (auto& x : w) x = (hash_unit(rng()) - 0.5) * 2.0;
    for (auto& x : e) x = (hash_unit(rng()) - 0.5) * 2.0;
    double b = (hash_unit(rng()) - 0.5);
    int y = rng() % 2;

    double gz = logistic_grad_logit(w, b, e, y);
    // embedding gradient: gz * w; predictor gradient: gz * e; bias: gz
    for (std::uint32_t j = 0; j < d; ++j) {
      auto ep = e, em = e;
      ep[j] += h;
      em[j] -= h;
      double fd = (logistic_loss(w, b, ep, y) - logistic_loss(w, b, em, y)) / (2 * h);
      CHECK(gz * w[j] == doctest::Approx(fd).epsilon(1e-5));
      auto wp = w, wm = w;
      wp[j] += h;
      wm[j] -= h;
      fd = (logistic_loss(wp, b, e, y) - logistic_loss(wm, b, e, y)) / (2 * h);
      CHECK(gz * e[j] == doctest::Approx(fd).epsilon(1e-5));
    }
    double fd = (logistic_loss(w, b + h, e, y) - logistic_loss(w, b - h, e, y)) / (2 * h);
    CHECK(gz == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("uncompressed training halves the loss on planted data") {
  const std::uint64_t n = 500, steps = 2000;
  auto cfg = base_config(TrainMode::Uncompressed, steps);
  // Noise-free labels with strong planted weights keep the achievable loss
  // floor well under half the untrained loss.
  auto sspec = stream_spec(n, 1.0, steps * cfg.batch_size);
  sspec.weight_scale = 3.0;
  sspec.label_noise = 0.0;
  TrainRun run(cfg, ZipfStream(sspec), uncompressed_store(n, 8), std::nullopt);
  auto metrics = run.run_all();
  double initial = 0, final = 0;
  for (int i = 0; i < 5; ++i) initial += metrics[i].loss / 5;
  for (std::size_t i = metrics.size() - 200; i < metrics.size(); ++i)
    final += metrics[i].loss / 200;
  CHECK(final < initial * 0.5);
}

TEST_CASE("hash table with one row per feature equals uncompressed training") {
  const std::uint64_t n = 300, steps = 200;
  auto cfg_u = base_config(TrainMode::Uncompressed, steps);
  auto cfg_h = base_config(TrainMode::HashOnly, steps);
  TrainRun u(cfg_u, ZipfStream(stream_spec(n, 1.1, steps * cfg_u.batch_size)),
             uncompressed_store(n, 8), std::nullopt);
  TrainRun h(cfg_h, ZipfStream(stream_spec(n, 1.1, steps * cfg_h.batch_size)),
             uncompressed_store(n, 8), std::nullopt);
  auto mu = u.run_all();
  auto mh = h.run_all();
  for (std::size_t i = 0; i < mu.size(); ++i)
    CHECK(std::abs(mu[i].loss - mh[i].loss) < 1e-9);
}

TEST_CASE("shadow deviation of a run against itself is zero") {
  const std::uint64_t n = 300, steps = 100;
  auto cfg = base_config(TrainMode::Uncompressed, steps);
  cfg.trace_deviation = true;
  TrainRun run(cfg, ZipfStream(stream_spec(n, 1.1, steps * cfg.batch_size)),
               uncompressed_store(n, 8), std::nullopt);
  for (const auto& m : run.run_all()) CHECK(m.epsilon == 0.0);
  CHECK(run.deviation().mean_eps2() == 0.0);
}

TEST_CASE("cafe cold start performs promotions at the first maintenance pass") {
  const std::uint64_t n = 5000;
  const std::uint32_t d = 8;
  const double split[2] = {0.5, 0.5};
  auto plan = plan_budget(n, d, n * d * kScalarBytes / 20, 0.7, 2, split);
  auto cfg = base_config(TrainMode::Cafe, 20);
  cfg.verify_promotions = true;
  TrainRun run(cfg, ZipfStream(stream_spec(n, 1.2, 20 * cfg.batch_size)),
               EmbeddingStore(plan, 1), HotSketch(trainer_sketch(plan)));
  run.run_all();
  CHECK(run.total_promotions() >= 1);
  CHECK(run.promotions_checked() == run.promotions_smooth());
}

TEST_CASE("hit counts sum to the batch size") {
  const std::uint64_t n = 2000;
  const std::uint32_t d = 8;
  const double split[2] = {0.5, 0.5};
  auto plan = plan_budget(n, d, n * d * kScalarBytes / 10, 0.7, 2, split);
  auto cfg = base_config(TrainMode::Cafe, 100);
  TrainRun run(cfg, ZipfStream(stream_spec(n, 1.2, 100 * cfg.batch_size)),
               EmbeddingStore(plan, 1), HotSketch(trainer_sketch(plan)));
  for (const auto& m : run.run_all())
    CHECK(m.hot_hits + m.medium_hits + m.cold_hits == cfg.batch_size);
}

TEST_CASE("train run serialization resumes bit-identically") {
  const std::uint64_t n = 2000, steps = 120;
  const std::uint32_t d = 8;
  const double split[2] = {0.5, 0.5};
  auto plan = plan_budget(n, d, n * d * kScalarBytes / 10, 0.7, 2, split);
  auto cfg = base_config(TrainMode::Cafe, steps);
  cfg.trace_deviation = true;

  auto make = [&] {
    return TrainRun(cfg, ZipfStream(stream_spec(n, 1.2, steps * cfg.batch_size)),
                    EmbeddingStore(plan, 1), HotSketch(trainer_sketch(plan)));
  };
  TrainRun full = make();
  auto full_metrics = full.run_all();

  TrainRun part = make();
  part.run_to(60);
  TrainRun resumed = TrainRun::deserialize(part.serialize());
  auto tail = resumed.run_to(steps);
  REQUIRE(tail.size() == steps - 60);
  for (std::size_t i = 0; i < tail.size(); ++i) {
    const auto& a = tail[i];
    const auto& b = full_metrics[60 + i];
    CHECK(a.loss == b.loss);
    CHECK(a.epsilon == b.epsilon);
    CHECK(a.migrations == b.migrations);
  }
  CHECK(resumed.serialize() == full.serialize());
}

TEST_CASE("mode/sketch mismatches are rejected") {
  const std::uint64_t n = 100;
  auto cfg = base_config(TrainMode::Cafe, 10);
  CHECK_THROWS_AS(TrainRun(cfg, ZipfStream(stream_spec(n, 1.0, 320)),
                           uncompressed_store(n, 8), std::nullopt),
                  ConfigMismatch);
}
