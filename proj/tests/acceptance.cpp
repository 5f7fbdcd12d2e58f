// Release acceptance gate. Runs the ten release criteria end to end and
// prints exactly one PASS/FAIL line per criterion. Exit status is the number
// of failed gating criteria (criterion 10 is a non-gating report).
//
// Experiment-driven criteria run the shipped presets from configs/ verbatim,
// redirecting outputs into a scratch directory via CAFE_OUTPUT_DIR.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "cafe/embedding_store.hpp"
#include "cafe/eval.hpp"
#include "cafe/experiments.hpp"
#include "cafe/sketch.hpp"
#include "cafe/trainer.hpp"
#include "cafe/workload.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace cafe;

#ifndef CAFE_CONFIG_DIR
#error "CAFE_CONFIG_DIR must point at the preset config directory"
#endif

namespace {

int g_failures = 0;

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void report(int criterion, bool ok, const std::string& detail, bool gating = true) {
  std::printf("[criterion %d] %s (%s)\n", criterion,
              ok ? "PASS" : (gating ? "FAIL" : "FAIL, non-gating"), detail.c_str());
  std::fflush(stdout);
  if (!ok && gating) ++g_failures;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("acceptance: cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt_secs(double s) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1fs", s);
  return buf;
}

fs::path scratch_root() {
  static fs::path root = [] {
    fs::path p = fs::temp_directory_path() /
                 ("cafe_acceptance_" + std::to_string(static_cast<unsigned>(::getpid())));
    fs::create_directories(p);
    return p;
  }();
  return root;
}

fs::path preset_path(const std::string& name) {
  return fs::path(CAFE_CONFIG_DIR) / (name + ".ini");
}

// Runs a preset start to finish with outputs under the scratch directory;
// returns the parsed summary.json.
json run_preset(const std::string& name) {
  fs::path out = scratch_root() / name;
  ::setenv("CAFE_OUTPUT_DIR", out.c_str(), 1);
  run_config(KvConfig::parse_file(preset_path(name).string()), EngineOptions{});
  ::unsetenv("CAFE_OUTPUT_DIR");
  return json::parse(slurp(out / "summary.json"));
}

// ---------------------------------------------------------------------------
// Criterion 1: insertion semantics against exact oracles (< 10 s).

bool exact_counts_match(std::uint32_t w, std::uint32_t c, std::uint64_t distinct,
                        std::uint64_t rng_seed, std::uint64_t hash_seed, std::string& why) {
  std::mt19937_64 rng(rng_seed);
  std::map<FeatureId, double> exact;
  SketchConfig cfg;
  cfg.bucket_count = w;
  cfg.slots_per_bucket = c;
  cfg.hash_seed = hash_seed;
  HotSketch sketch(cfg);
  for (int i = 0; i < 1000000; ++i) {
    FeatureId f = rng() % distinct;
    sketch.insert(f, 1.0);
    exact[f] += 1.0;
  }
  for (const auto& [f, count] : exact) {
    QueryResult q = sketch.query(f);
    if (!q.tracked || q.score != count) {
      why = "feature " + std::to_string(f) + " score mismatch at w=" + std::to_string(w);
      return false;
    }
  }
  return true;
}

void criterion1() {
  Timer t;
  std::string why;
  bool ok = exact_counts_match(32, 32, 256, 5, 77, why) &&  // multi-bucket, w*c >= distinct
            exact_counts_match(1, 512, 512, 6, 1, why);     // single bucket at capacity

  if (ok) {
    // Single-bucket sketch must track the identical (feature, score) multiset
    // as the classic min-replacement summary on a skewed stream.
    ZipfStreamSpec spec;
    spec.universe = 100000;
    spec.exponent = 1.1;
    spec.event_count = 1000000;
    spec.seed = 11;
    SketchConfig cfg;
    cfg.bucket_count = 1;
    cfg.slots_per_bucket = 64;
    cfg.hash_seed = 3;
    HotSketch sketch(cfg);
    SpaceSaving reference(64);
    ZipfStream stream(spec);
    StreamEvent ev;
    while (stream.next(ev)) {
      sketch.insert(ev.feature, 1.0);
      reference.insert(ev.feature, 1.0);
    }
    std::map<FeatureId, double> a, b;
    for (const Slot& s : sketch.slots())
      if (s.feature != kEmptyFeature) a[s.feature] = s.score;
    for (const auto& [f, s] : reference.entries()) b[f] = s;
    if (a != b) {
      ok = false;
      why = "single-bucket sketch diverged from reference summary";
    }
  }
  double secs = t.seconds();
  ok = ok && secs < 10.0;
  report(1, ok, ok ? "exact counts and min-replacement equivalence, " + fmt_secs(secs)
                   : why + ", " + fmt_secs(secs));
}

// ---------------------------------------------------------------------------
// Criterion 2: retention bound Monte-Carlo grid (< 2 min).

void criterion2() {
  Timer t;
  bool ok = true;
  std::string why;
  double worst_margin = 1.0;
  for (double gamma : {0.1, 0.3, 0.5})
    for (std::uint32_t c : {2u, 4u, 8u})
      for (std::uint32_t w : {10u, 100u}) {
        RetentionResult r = retention_monte_carlo(gamma, w, c, 1000, 64, 2000, 42);
        double margin = r.empirical - (r.bound - 3.0 * r.std_error);
        worst_margin = std::min(worst_margin, margin);
        if (margin < 0.0 && ok) {
          ok = false;
          char buf[128];
          std::snprintf(buf, sizeof(buf), "gamma=%.1f c=%u w=%u empirical %.4f < bound-3se %.4f",
                        gamma, c, w, r.empirical, r.bound - 3.0 * r.std_error);
          why = buf;
        }
      }
  double secs = t.seconds();
  ok = ok && secs < 120.0;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "18 cells x 1000 trials, worst margin %.4f, %s", worst_margin,
                fmt_secs(secs).c_str());
  report(2, ok, ok ? buf : why + ", " + fmt_secs(secs));
}

// ---------------------------------------------------------------------------
// Criterion 3: retention-bound numerics (< 1 min).

void criterion3() {
  Timer t;
  json s = run_preset("theory_fig8_grid");
  bool mono = s.at("monotone_gamma").get<bool>() && s.at("monotone_z").get<bool>() &&
              s.at("monotone_w").get<bool>() && s.at("monotone_c").get<bool>();
  std::uint64_t c105 = s.at("optimal_c_z1.05").get<std::uint64_t>();
  std::uint64_t c110 = s.at("optimal_c_z1.1").get<std::uint64_t>();
  double secs = t.seconds();
  bool ok = mono && c105 == 21 && c110 == 11 && secs < 60.0;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "monotone=%d optimal_c(1.05)=%llu optimal_c(1.1)=%llu, %s", mono,
                static_cast<unsigned long long>(c105), static_cast<unsigned long long>(c110),
                fmt_secs(secs).c_str());
  report(3, ok, buf);
}

// ---------------------------------------------------------------------------
// Criterion 4: matched-memory recall ordering across slots-per-bucket (< 5 min).

void criterion4() {
  Timer t;
  json s = run_preset("fig12a_recall_vs_c");
  double frac = s.at("mid_c_ordering_fraction").get<double>();
  double secs = t.seconds();
  bool ok = frac >= 0.8 && secs < 300.0;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "mid-c ordering on %.0f%% of %llu memory points, %s",
                frac * 100.0, s.at("points").get<unsigned long long>(), fmt_secs(secs).c_str());
  report(4, ok, buf);
}

// ---------------------------------------------------------------------------
// Criterion 5: drift recall above 0.90 in every post-warm-up window (< 5 min).

void criterion5() {
  Timer t;
  json s = run_preset("fig17cd_drift_recall");
  double local = s.at("min_local_recall").get<double>();
  double cum = s.at("min_cumulative_recall").get<double>();
  double secs = t.seconds();
  bool ok = local > 0.90 && cum > 0.90 && secs < 300.0;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "min local %.3f, min cumulative %.3f over %llu windows, %s",
                local, cum, s.at("post_warmup_windows").get<unsigned long long>(),
                fmt_secs(secs).c_str());
  report(5, ok, buf);
}

// ---------------------------------------------------------------------------
// Criteria 6 and 7: paired training comparison and promotion invariants.

void criteria6_and_7() {
  Timer t;
  json s = run_preset("train_compare");
  std::uint64_t loss_wins = s.at("cafe_loss_wins").get<std::uint64_t>();
  std::uint64_t eps_wins = s.at("cafe_eps2_wins").get<std::uint64_t>();
  std::uint64_t seeds = s.at("seeds").get<std::uint64_t>();
  double secs = t.seconds();
  bool ok6 = loss_wins >= 4 && eps_wins >= 4 && seeds == 5 && secs < 600.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "last-quartile loss wins %llu/%llu, mean eps^2 wins %llu/%llu, %s",
                static_cast<unsigned long long>(loss_wins),
                static_cast<unsigned long long>(seeds),
                static_cast<unsigned long long>(eps_wins),
                static_cast<unsigned long long>(seeds), fmt_secs(secs).c_str());
  report(6, ok6, buf);

  // Criterion 7a: every verified promotion in the paired runs resolved to the
  // identical vector before and after migration.
  std::uint64_t total = s.at("promotions_total").get<std::uint64_t>();
  std::uint64_t checked = s.at("promotions_checked").get<std::uint64_t>();
  std::uint64_t smooth = s.at("promotions_smooth").get<std::uint64_t>();
  bool ok7 = total > 0 && checked == total && smooth == total;
  std::string why7;

  // Criterion 7b: the level-0 row of a feature is invariant across the
  // medium and cold classifications, including through promote/demote cycles.
  BudgetPlan plan = plan_budget(20000, 8, 200000, 0.5, 2, std::vector<double>{0.5, 0.5});
  EmbeddingStore store(plan, 99);
  SketchConfig scfg;
  scfg.bucket_count = 64;
  scfg.slots_per_bucket = 4;
  scfg.hot_threshold = 10.0;
  scfg.medium_threshold = 1.0;
  scfg.hash_seed = 13;
  HotSketch sketch(scfg);
  std::uint64_t stable = 0;
  for (FeatureId f = 0; f < 10000; ++f) {
    auto medium = store.resolve(f, FeatureClass::Medium);
    auto cold = store.resolve(f, FeatureClass::Cold);
    bool same = medium.count == 2 && cold.count == 1 &&
                medium.rows[0].table == cold.rows[0].table &&
                medium.rows[0].index == cold.rows[0].index;
    if (f < 32) {  // run a full promote/demote round trip on a sample
      sketch.insert(f, 20.0);
      store.promote(sketch, f);
      store.demote(sketch, f);
      auto after = store.resolve(f, FeatureClass::Cold);
      same = same && after.rows[0].index == cold.rows[0].index &&
             after.rows[0].table == cold.rows[0].table;
    }
    if (same) ++stable;
  }
  if (stable != 10000) {
    ok7 = false;
    why7 = "level-0 row moved for " + std::to_string(10000 - stable) + " features";
  } else if (!ok7) {
    char b[96];
    std::snprintf(b, sizeof(b), "promotions smooth %llu/%llu",
                  static_cast<unsigned long long>(smooth),
                  static_cast<unsigned long long>(total));
    why7 = b;
  }
  char buf7[160];
  std::snprintf(buf7, sizeof(buf7),
                "%llu/%llu promotions smooth, level-0 row stable for 10000/10000 features",
                static_cast<unsigned long long>(smooth), static_cast<unsigned long long>(total));
  report(7, ok7, ok7 ? buf7 : why7);
}

// ---------------------------------------------------------------------------
// Criterion 8: interrupted-and-resumed runs replay bit-identically.

// The throughput preset's timing columns are wall-clock; only its
// deterministic columns (c, w, ops) participate in the comparison.
std::string normalize_metrics(const std::string& name, const std::string& csv) {
  if (name != "throughput") return csv;
  std::istringstream in(csv);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    int commas = 0;
    std::size_t cut = line.size();
    for (std::size_t i = 0; i < line.size(); ++i)
      if (line[i] == ',' && ++commas == 3) {
        cut = i;
        break;
      }
    out << line.substr(0, cut) << "\n";
  }
  return out.str();
}

void criterion8() {
  Timer t;
  bool ok = true;
  std::string why;
  const std::vector<std::string> presets = {"theory_fig8_grid", "fig12a_recall_vs_c",
                                            "fig17cd_drift_recall", "train_compare",
                                            "throughput"};
  for (const std::string& name : presets) {
    fs::path out = scratch_root() / name;  // full-run outputs from earlier criteria
    if (!fs::exists(out / "metrics.csv")) {
      run_preset(name);  // throughput has no earlier full run
    }
    std::string full = slurp(out / "metrics.csv");

    KvConfig cfg = KvConfig::parse_file(preset_path(name).string());
    std::uint64_t units = make_experiment(cfg)->unit_count();
    fs::path ckpt = scratch_root() / (name + ".ckpt");
    EngineOptions stop_opts;
    stop_opts.checkpoint_path = ckpt.string();
    stop_opts.stop_after = std::max<std::uint64_t>(1, units / 2);
    ::setenv("CAFE_OUTPUT_DIR", out.c_str(), 1);
    bool complete = run_config(cfg, stop_opts);
    bool resumed = complete ? false : resume_checkpoint(ckpt.string(), EngineOptions{});
    ::unsetenv("CAFE_OUTPUT_DIR");
    if (complete || !resumed) {
      ok = false;
      why = name + ": interrupted run did not stop/resume as expected";
      break;
    }
    std::string replayed = slurp(out / "metrics.csv");
    if (normalize_metrics(name, full) != normalize_metrics(name, replayed)) {
      ok = false;
      why = name + ": resumed metrics differ from uninterrupted run";
      break;
    }
  }
  double secs = t.seconds();
  report(8, ok, ok ? "5/5 presets replay bit-identically after stop+resume, " + fmt_secs(secs)
                   : why + ", " + fmt_secs(secs));
}

// ---------------------------------------------------------------------------
// Criterion 9: gradients match central finite differences within 1e-5 relative.

void criterion9() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double worst = 0.0;
  const double h = 1e-6;
  for (int instance = 0; instance < 50; ++instance) {
    std::uint32_t d = 2 + static_cast<std::uint32_t>(rng() % 7);
    std::vector<double> w(d), e(d);
    for (double& v : w) v = gauss(rng);
    for (double& v : e) v = gauss(rng);
    double b = gauss(rng);
    int y = static_cast<int>(rng() % 2);

    double gz = logistic_grad_logit(w, b, e, y);
    auto check = [&](double analytic, double* param) {
      double saved = *param;
      *param = saved + h;
      double up = logistic_loss(w, b, e, y);
      *param = saved - h;
      double down = logistic_loss(w, b, e, y);
      *param = saved;
      double fd = (up - down) / (2.0 * h);
      double rel = std::abs(analytic - fd) / std::max(1e-8, std::abs(fd));
      worst = std::max(worst, rel);
    };
    for (std::uint32_t i = 0; i < d; ++i) {
      check(gz * e[i], &w[i]);  // predictor gradient
      check(gz * w[i], &e[i]);  // embedding gradient
    }
    check(gz, &b);
  }
  bool ok = worst <= 1e-5;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "50 instances, worst relative error %.2e", worst);
  report(9, ok, buf);
}

// ---------------------------------------------------------------------------
// Criterion 10 (non-gating): throughput decreases from c=4 to c=32.

void criterion10() {
  Timer t;
  json s = run_preset("throughput");
  bool insert_ok = s.at("insert_faster_c4_than_c32").get<bool>();
  bool query_ok = s.at("query_faster_c4_than_c32").get<bool>();
  double secs = t.seconds();
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "insert c4>=c32: %s, query c4>=c32: %s (wall-clock report), %s",
                insert_ok ? "yes" : "no", query_ok ? "yes" : "no", fmt_secs(secs).c_str());
  report(10, insert_ok && query_ok, buf, /*gating=*/false);
}

}  // namespace

int main() {
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criteria6_and_7();
  criterion8();
  criterion9();
  criterion10();
  std::error_code ec;
  fs::remove_all(scratch_root(), ec);
  if (g_failures == 0) std::printf("acceptance: all gating criteria passed\n");
  return g_failures;
}
