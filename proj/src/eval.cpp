#include "cafe/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

namespace cafe {

namespace {

using Entry = std::pair<FeatureId, double>;

bool score_order(const Entry& a, const Entry& b) {
  if (a.second != b.second) return a.second > b.second;
  return a.first < b.first;
}

}  // namespace

std::vector<Entry> ExactTopK::top(std::size_t k) const {
  std::vector<Entry> all(scores_.begin(), scores_.end());
  if (all.size() > k) {
    std::partial_sort(all.begin(), all.begin() + k, all.end(), score_order);
    all.resize(k);
  } else {
    std::sort(all.begin(), all.end(), score_order);
  }
  return all;
}

double recall_at_k(const HotSketch& sketch, const ExactTopK& oracle, std::size_t k) {
  if (k == 0) return 1.0;
  auto truth = oracle.top(k);
  auto tracked = sketch.top(k);
  std::vector<FeatureId> a, b;
  for (const auto& [f, s] : truth) a.push_back(f);
  for (const auto& [f, s] : tracked) b.push_back(f);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<FeatureId> both;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
  return static_cast<double>(both.size()) / static_cast<double>(k);
}

SpaceSaving::SpaceSaving(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ < 1) throw ConfigError("SpaceSaving: capacity must be >= 1");
  entries_.reserve(capacity_);
}

void SpaceSaving::insert(FeatureId f, double delta) {
  for (auto& [feat, score] : entries_) {
    if (feat == f) {
      score += delta;
      return;
    }
  }
  if (entries_.size() < capacity_) {
    entries_.emplace_back(f, delta);
    return;
  }
  std::size_t min_i = 0;
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    if (entries_[i].second < entries_[min_i].second) min_i = i;
  }
  entries_[min_i] = {f, entries_[min_i].second + delta};
}

double retention_bound(double gamma, std::uint32_t w, std::uint32_t c) {
  if (c < 2) throw DomainError("retention_bound: c must be >= 2");
  if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("retention_bound: gamma must be in (0,1)");
  if (w < 1) throw DomainError("retention_bound: w must be >= 1");
  double bound = 1.0 - (1.0 - gamma) / ((c - 1) * gamma * w);
  return std::clamp(bound, 0.0, 1.0);
}

namespace {

double zipf_retention_objective(double eta, double gamma, double z, double w, double c) {
  // 3^-eta * (1 - eta / ((c-1) * gamma * (eta w)^z))
  return std::exp(-eta * std::log(3.0)) *
         (1.0 - eta / ((c - 1.0) * gamma * std::pow(eta * w, z)));
}

}  // namespace

double zipf_retention_bound(double gamma, double z, std::uint32_t w, std::uint32_t c) {
  if (!(z > 1.0)) throw DomainError("zipf_retention_bound: z must be > 1");
  if (c < 2) throw DomainError("zipf_retention_bound: c must be >= 2");
  if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("zipf_retention_bound: gamma must be in (0,1)");
  if (w < 1) throw DomainError("zipf_retention_bound: w must be >= 1");

  // Log-spaced grid scan, then golden-section refinement around the best point.
  constexpr int kGrid = 600;
  const double lo = 1e-4, hi = 100.0;
  const double step = std::log(hi / lo) / (kGrid - 1);
  double best = -1e300;
  int best_i = 0;
  for (int i = 0; i < kGrid; ++i) {
    double eta = lo * std::exp(step * i);
    double v = zipf_retention_objective(eta, gamma, z, w, c);
    if (v > best) {
      best = v;
      best_i = i;
    }
  }
  double a = lo * std::exp(step * std::max(0, best_i - 1));
  double b = lo * std::exp(step * std::min(kGrid - 1, best_i + 1));
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = zipf_retention_objective(x1, gamma, z, w, c);
  double f2 = zipf_retention_objective(x2, gamma, z, w, c);
  while (b - a > 1e-12 * (1.0 + b)) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = zipf_retention_objective(x2, gamma, z, w, c);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = zipf_retention_objective(x1, gamma, z, w, c);
    }
  }
  best = std::max(best, std::max(f1, f2));
  return std::clamp(best, 0.0, 1.0);
}

OptimalC optimal_c(double z) {
  if (!(z > 1.0)) throw DomainError("optimal_c: z must be > 1");
  OptimalC res;
  res.exact = 1.0 + 1.0 / (z - 1.0);
  res.rounded = std::lround(res.exact);
  return res;
}

RetentionResult retention_monte_carlo(double gamma, std::uint32_t w, std::uint32_t c,
                                      std::uint32_t trials, std::uint64_t universe,
                                      std::uint64_t events_per_trial, std::uint64_t seed) {
  if (universe < 2) throw DomainError("retention_monte_carlo: universe must be >= 2");
  RetentionResult res;
  res.trials = trials;
  res.bound = retention_bound(gamma, w, c);
  if (trials == 0) return res;

  const FeatureId planted = 0;
  std::uint32_t held = 0;
  std::vector<FeatureId> events(events_per_trial);
  for (std::uint32_t t = 0; t < trials; ++t) {
    std::mt19937_64 rng(mix64(seed + t));
    auto planted_count =
        static_cast<std::uint64_t>(std::llround(gamma * static_cast<double>(events_per_trial)));
    for (std::uint64_t i = 0; i < events_per_trial; ++i) {
      events[i] = i < planted_count ? planted : 1 + rng() % (universe - 1);
    }
    for (std::uint64_t i = events_per_trial; i > 1; --i)
      std::swap(events[i - 1], events[rng() % i]);

    SketchConfig cfg;
    cfg.bucket_count = w;
    cfg.slots_per_bucket = c;
    cfg.hash_seed = rng();
    HotSketch sketch(cfg);
    for (FeatureId f : events) sketch.insert(f, 1.0);
    if (sketch.query(planted).tracked) ++held;
  }
  res.empirical = static_cast<double>(held) / trials;
  res.std_error = std::sqrt(res.empirical * (1.0 - res.empirical) / trials);
  return res;
}

std::vector<WindowRecall> sliding_window_recall(ZipfStream stream, HotSketch sketch,
                                                std::uint64_t window_events, std::size_t k) {
  if (window_events < 1) throw ConfigError("sliding_window_recall: window must be >= 1");
  std::vector<WindowRecall> out;
  ExactTopK local, cumulative;
  std::uint64_t in_window = 0;
  StreamEvent ev;
  auto close_window = [&]() {
    WindowRecall wr;
    wr.window = out.size();
    wr.local_recall = recall_at_k(sketch, local, k);
    wr.cumulative_recall = recall_at_k(sketch, cumulative, k);
    wr.warm_up = out.empty();
    out.push_back(wr);
    local.clear();
    in_window = 0;
  };
  while (stream.next(ev)) {
    sketch.insert(ev.feature, 1.0);
    local.add(ev.feature, 1.0);
    cumulative.add(ev.feature, 1.0);
    if (++in_window == window_events) close_window();
  }
  if (in_window > 0) close_window();
  return out;
}

ThroughputResult throughput_bench(std::uint32_t w, std::uint32_t c, std::uint64_t ops,
                                  std::uint64_t seed) {
  ThroughputResult res;
  res.c = c;
  res.w = w;
  res.ops = ops;
  if (ops == 0) throw ConfigError("throughput_bench: ops must be >= 1");

  ZipfStreamSpec spec;
  spec.universe = std::max<std::uint64_t>(std::uint64_t{w} * c * 4, 1024);
  spec.exponent = 1.1;
  spec.event_count = ops;
  spec.seed = seed;
  spec.label_noise = 0.0;
  std::vector<StreamEvent> events = ZipfStream(spec).generate_all();

  SketchConfig cfg;
  cfg.bucket_count = w;
  cfg.slots_per_bucket = c;
  cfg.hash_seed = seed;
  HotSketch sketch(cfg);
  for (const auto& ev : events) sketch.insert(ev.feature, 1.0);  // warm up

  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  for (const auto& ev : events) sketch.insert(ev.feature, 1.0);
  auto t1 = clock::now();
  volatile double sink = 0.0;
  for (const auto& ev : events) sink = sink + sketch.query(ev.feature).score;
  auto t2 = clock::now();

  auto us = [](auto a, auto b) {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(b - a).count() / 1e3;
  };
  res.insert_mops = static_cast<double>(ops) / us(t0, t1);
  res.query_mops = static_cast<double>(ops) / us(t1, t2);
  return res;
}

}  // namespace cafe
