#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cafe/config.hpp"
#include "cafe/experiments.hpp"

namespace {

unsigned env_threads(unsigned cli_value) {
  if (const char* env = std::getenv("CAFE_THREADS")) {
    unsigned v = static_cast<unsigned>(std::strtoul(env, nullptr, 10));
    if (v >= 1) return v;
  }
  return cli_value;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += items[i];
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memory-bounded streaming embedding compression experiments"};
  app.require_subcommand(1);
  unsigned threads = 1;
  app.add_option("--threads", threads, "unit-level parallelism for stateless experiments");

  // run <config>
  std::string config_path, checkpoint_path;
  std::uint64_t checkpoint_every = 0, stop_after = 0;
  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", config_path, "experiment config file")->required();
  run->add_option("--checkpoint", checkpoint_path, "checkpoint file path");
  run->add_option("--checkpoint-every", checkpoint_every, "units between checkpoints");
  run->add_option("--stop-after", stop_after,
                  "stop after N units, writing a checkpoint (for resume testing)");

  // resume <checkpoint>
  std::string resume_path, resume_config;
  auto* resume = app.add_subcommand("resume", "resume an experiment from a checkpoint");
  resume->add_option("checkpoint", resume_path, "checkpoint file")->required();
  resume->add_option("--config", resume_config, "config file to verify against the checkpoint");

  // bench throughput
  auto* bench = app.add_subcommand("bench", "micro-benchmarks");
  std::vector<std::string> bench_c{"4", "8", "16", "32"}, bench_w{"4096"};
  std::uint64_t bench_ops = 2000000, bench_seed = 1;
  std::string bench_out = "out/throughput";
  auto* bench_tp = bench->add_subcommand("throughput", "sketch insert/query throughput");
  bench_tp->add_option("--c", bench_c, "slots-per-bucket values")->delimiter(',');
  bench_tp->add_option("--w", bench_w, "bucket counts")->delimiter(',');
  bench_tp->add_option("--ops", bench_ops, "operations per measurement");
  bench_tp->add_option("--seed", bench_seed, "stream seed");
  bench_tp->add_option("--out", bench_out, "output directory");

  // theory grid
  auto* theory = app.add_subcommand("theory", "retention-bound numerics");
  std::vector<std::string> th_gamma{"0.001", "0.002", "0.005", "0.01", "0.02", "0.05", "0.1"};
  std::vector<std::string> th_z{"1.05", "1.1", "1.2", "1.5", "2"};
  std::vector<std::string> th_w{"10000"}, th_c{"4"};
  std::string th_out = "out/theory_grid";
  auto* th_grid = theory->add_subcommand("grid", "bound values over a (gamma, z, w, c) grid");
  th_grid->add_option("--gamma", th_gamma, "hot score fractions")->delimiter(',');
  th_grid->add_option("--z", th_z, "Zipf exponents (> 1)")->delimiter(',');
  th_grid->add_option("--w", th_w, "bucket counts")->delimiter(',');
  th_grid->add_option("--c", th_c, "slots per bucket")->delimiter(',');
  th_grid->add_option("--out", th_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    cafe::EngineOptions opts;
    opts.threads = env_threads(threads);
    if (*run) {
      opts.checkpoint_path = checkpoint_path;
      opts.checkpoint_every = checkpoint_every;
      opts.stop_after = stop_after;
      bool complete = cafe::run_config(cafe::KvConfig::parse_file(config_path), opts);
      if (!complete) {
        std::cout << "stopped at checkpoint: " << checkpoint_path << "\n";
        return 3;
      }
    } else if (*resume) {
      std::optional<std::string> verify;
      if (!resume_config.empty()) verify = resume_config;
      cafe::resume_checkpoint(resume_path, opts, verify);
    } else if (*bench_tp) {
      cafe::KvConfig cfg;
      cfg.set("experiment", "throughput");
      cfg.set("output_dir", bench_out);
      cfg.set("throughput.cs", join(bench_c));
      cfg.set("throughput.ws", join(bench_w));
      cfg.set("throughput.ops", std::to_string(bench_ops));
      cfg.set("throughput.seed", std::to_string(bench_seed));
      cafe::run_config(cfg, opts);
    } else if (*th_grid) {
      cafe::KvConfig cfg;
      cfg.set("experiment", "theory_grid");
      cfg.set("output_dir", th_out);
      cfg.set("theory.gammas", join(th_gamma));
      cfg.set("theory.zs", join(th_z));
      cfg.set("theory.ws", join(th_w));
      cfg.set("theory.cs", join(th_c));
      cafe::run_config(cfg, opts);
    }
  } catch (const cafe::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
