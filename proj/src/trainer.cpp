#include "cafe/trainer.hpp"

#include <cmath>
#include <random>

#include "cafe/importance.hpp"

namespace cafe {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (maintenance_interval < 1) throw ConfigError("train: maintenance_interval must be >= 1");
}

double DeviationTrace::mean_eps2() const {
  if (epsilon.empty()) return 0.0;
  double sum = 0.0;
  for (double e : epsilon) sum += e * e;
  return sum / static_cast<double>(epsilon.size());
}

Predictor Predictor::init(std::uint32_t dim, std::uint64_t seed) {
  Predictor p;
  p.weights.resize(dim);
  std::mt19937_64 rng(mix64(seed ^ 0x9DULL));
  std::normal_distribution<double> dist(0.0, 0.1);
  for (double& w : p.weights) w = dist(rng);
  p.bias = 0.0;
  return p;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// log(1 + exp(z)) - y*z without overflow.
double loss_from_logit(double z, int y) {
  double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  return softplus - y * z;
}

}  // namespace

double logistic_loss(std::span<const double> w, double b, std::span<const double> e, int y) {
  return loss_from_logit(dot(w, e) + b, y);
}

double logistic_grad_logit(std::span<const double> w, double b, std::span<const double> e,
                           int y) {
  double z = dot(w, e) + b;
  double p = 1.0 / (1.0 + std::exp(-z));
  return p - y;
}

TrainRun::TrainRun(TrainConfig cfg, ZipfStream stream, EmbeddingStore store,
                   std::optional<HotSketch> sketch)
    : cfg_(cfg),
      stream_(std::move(stream)),
      store_(std::move(store)),
      sketch_(std::move(sketch)),
      predictor_(Predictor::init(store_.dim(), cfg.predictor_seed)) {
  cfg_.validate();
  if (cfg_.mode == TrainMode::Cafe && !sketch_)
    throw ConfigMismatch("train: CAFE mode requires a sketch");
  if (cfg_.mode != TrainMode::Cafe && sketch_)
    throw ConfigMismatch("train: sketch given but mode does not use one");
  if (cfg_.trace_deviation) {
    shadow_store_.emplace(uncompressed_plan(stream_.spec().universe, store_.dim()),
                          /*init_seed=*/0, /*identity_level0=*/true);
    shadow_init_.assign(stream_.spec().universe, 0);
  }
}

StepMetrics TrainRun::step() {
  StepMetrics m;
  m.step = step_ + 1;
  const std::uint32_t d = store_.dim();
  const double lr = cfg_.learning_rate;
  double loss_sum = 0.0;
  double eps2 = 0.0;
  std::vector<double> grad_e(d), shadow_grad_e(d);
  StreamEvent ev;

  for (std::uint32_t b = 0; b < cfg_.batch_size; ++b) {
    if (!stream_.next(ev)) throw Error("train: stream exhausted");

    FeatureClass cls = FeatureClass::Cold;
    std::int64_t handle = kNoHandle;
    if (cfg_.mode == TrainMode::Cafe) {
      QueryResult q = sketch_->query(ev.feature);
      handle = q.handle;
      // Hot by score but not yet promoted resolves through the shared path.
      cls = (q.cls == FeatureClass::Hot && handle == kNoHandle) ? FeatureClass::Medium : q.cls;
    }
    EmbeddingRef ref = store_.resolve(ev.feature, cls, handle);
    if (cls == FeatureClass::Hot)
      ++m.hot_hits;
    else if (cls == FeatureClass::Medium)
      ++m.medium_hits;
    else
      ++m.cold_hits;

    std::vector<double> e = store_.pooled(ref);
    double z = dot(predictor_.weights, e) + predictor_.bias;
    double p = 1.0 / (1.0 + std::exp(-z));
    loss_sum += loss_from_logit(z, ev.label);
    double gz = p - ev.label;
    for (std::uint32_t j = 0; j < d; ++j) grad_e[j] = gz * predictor_.weights[j];

    if (shadow_store_) {
      // Same predictor, uncompressed rows: ε isolates the embedding error.
      auto srow = shadow_store_->row(0, ev.feature);
      if (!shadow_init_[ev.feature]) {
        for (std::uint32_t j = 0; j < d; ++j) srow[j] = e[j];
        shadow_init_[ev.feature] = 1;
      }
      double zs = dot(predictor_.weights, srow) + predictor_.bias;
      double ps = 1.0 / (1.0 + std::exp(-zs));
      double gzs = ps - ev.label;
      for (std::uint32_t j = 0; j < d; ++j) {
        shadow_grad_e[j] = gzs * predictor_.weights[j];
        double diff = grad_e[j] - shadow_grad_e[j];
        eps2 += diff * diff;
      }
      for (std::uint32_t j = 0; j < d; ++j) srow[j] -= lr * shadow_grad_e[j];
    }

    // Sum pooling scatters the full embedding gradient to every row.
    for (std::uint32_t i = 0; i < ref.count; ++i) {
      auto r = store_.row(ref.rows[i].table, ref.rows[i].index);
      for (std::uint32_t j = 0; j < d; ++j) r[j] -= lr * grad_e[j];
    }
    for (std::uint32_t j = 0; j < d; ++j) predictor_.weights[j] -= lr * gz * e[j];
    predictor_.bias -= lr * gz;

    if (cfg_.mode == TrainMode::Cafe) {
      double delta = score_from_gradient(grad_e);
      InsertResult ir = sketch_->insert(ev.feature, delta);
      if (ir.action == SlotAction::Evicted && ir.victim_handle != kNoHandle) {
        store_.release_row(ir.victim_handle);
        ++m.migrations;
      }
    }
  }

  m.loss = loss_sum / cfg_.batch_size;
  m.epsilon = std::sqrt(eps2);
  if (cfg_.trace_deviation) deviation_.epsilon.push_back(m.epsilon);

  ++step_;
  if (cfg_.mode == TrainMode::Cafe && step_ % cfg_.maintenance_interval == 0) maintenance(m);
  return m;
}

void TrainRun::maintenance(StepMetrics& m) {
  // Demote first so freed rows are available for this pass's promotions.
  const SketchConfig& scfg = sketch_->config();
  std::vector<FeatureId> to_demote, to_promote;
  for (const Slot& s : sketch_->slots()) {
    if (s.empty()) continue;
    if (s.handle != kNoHandle && s.score < scfg.hot_threshold)
      to_demote.push_back(s.feature);
    else if (s.handle == kNoHandle && s.score >= scfg.hot_threshold)
      to_promote.push_back(s.feature);
  }
  for (FeatureId f : to_demote) {
    store_.demote(*sketch_, f);
    ++m.migrations;
  }
  for (FeatureId f : to_promote) {
    if (store_.free_rows() == 0) break;  // defer to a later pass
    if (cfg_.verify_promotions) {
      std::vector<double> before = store_.pooled(store_.resolve(f, FeatureClass::Medium));
      MigrationEvent mv = store_.promote(*sketch_, f);
      std::vector<double> after = store_.pooled(store_.resolve(f, FeatureClass::Hot, mv.unique_row));
      ++promotions_checked_;
      if (before == after) ++promotions_smooth_;
    } else {
      store_.promote(*sketch_, f);
    }
    ++total_promotions_;
    ++m.migrations;
  }
  if (store_.plan().allocated_bytes() > store_.plan().total_budget)
    throw Error("train: memory budget exceeded");
}

std::vector<StepMetrics> TrainRun::run_to(std::uint64_t target_step) {
  std::vector<StepMetrics> out;
  while (step_ < target_step) out.push_back(step());
  return out;
}

std::vector<std::uint8_t> TrainRun::serialize() const {
  ByteWriter w;
  w.magic("TRN1");
  w.u8(static_cast<std::uint8_t>(cfg_.mode));
  w.f64(cfg_.learning_rate);
  w.u32(cfg_.batch_size);
  w.u64(cfg_.steps);
  w.u32(cfg_.maintenance_interval);
  w.u64(cfg_.predictor_seed);
  w.u8(cfg_.trace_deviation ? 1 : 0);
  w.u8(cfg_.verify_promotions ? 1 : 0);
  auto ss = stream_.serialize();
  w.bytes({ss.data(), ss.size()});
  auto st = store_.serialize();
  w.bytes({st.data(), st.size()});
  w.u8(sketch_ ? 1 : 0);
  if (sketch_) {
    auto sk = sketch_->snapshot();
    w.bytes({sk.data(), sk.size()});
  }
  for (double v : predictor_.weights) w.f64(v);
  w.f64(predictor_.bias);
  w.u64(step_);
  w.u64(deviation_.epsilon.size());
  for (double v : deviation_.epsilon) w.f64(v);
  if (cfg_.trace_deviation) {
    auto sh = shadow_store_->serialize();
    w.bytes({sh.data(), sh.size()});
    w.bytes({shadow_init_.data(), shadow_init_.size()});
  }
  w.u64(promotions_checked_);
  w.u64(promotions_smooth_);
  w.u64(total_promotions_);
  return w.take();
}

TrainRun TrainRun::deserialize(std::span<const std::uint8_t> state) {
  ByteReader r(state);
  r.expect_magic("TRN1");
  TrainConfig cfg;
  cfg.mode = static_cast<TrainMode>(r.u8());
  cfg.learning_rate = r.f64();
  cfg.batch_size = r.u32();
  cfg.steps = r.u64();
  cfg.maintenance_interval = r.u32();
  cfg.predictor_seed = r.u64();
  cfg.trace_deviation = r.u8() != 0;
  cfg.verify_promotions = r.u8() != 0;
  auto stream_bytes = r.bytes();
  ZipfStream stream = ZipfStream::deserialize(stream_bytes);
  auto store_bytes = r.bytes();
  EmbeddingStore store = EmbeddingStore::deserialize(store_bytes);
  std::optional<HotSketch> sketch;
  if (r.u8()) {
    auto sk = r.bytes();
    sketch = HotSketch::restore(sk);
  }
  TrainRun run(cfg, std::move(stream), std::move(store), std::move(sketch));
  for (double& v : run.predictor_.weights) v = r.f64();
  run.predictor_.bias = r.f64();
  run.step_ = r.u64();
  run.deviation_.epsilon.resize(r.u64());
  for (double& v : run.deviation_.epsilon) v = r.f64();
  if (cfg.trace_deviation) {
    auto sh = r.bytes();
    run.shadow_store_ = EmbeddingStore::deserialize(sh);
    run.shadow_init_ = r.bytes();
  }
  run.promotions_checked_ = r.u64();
  run.promotions_smooth_ = r.u64();
  run.total_promotions_ = r.u64();
  if (!r.exhausted()) throw CorruptState("train state: trailing bytes");
  return run;
}

TrainResult train(TrainConfig cfg, ZipfStream stream, EmbeddingStore store,
                  std::optional<HotSketch> sketch) {
  TrainRun run(std::move(cfg), std::move(stream), std::move(store), std::move(sketch));
  TrainResult res;
  res.metrics = run.run_all();
  res.deviation = run.deviation();
  return res;
}

}  // namespace cafe
