#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mixreg/checkpoint.hpp"
#include "mixreg/errors.hpp"
#include "mixreg/experiment.hpp"
#include "mixreg/report.hpp"
#include "mixreg/theory.hpp"

using namespace mixreg;

namespace {

ExperimentConfig config_from(const std::string& path) {
  ExperimentConfig cfg = load_config(path);
  apply_env_overrides(cfg);
  cfg.validate();
  return cfg;
}

int run_verify(std::uint64_t seed, std::size_t instances) {
  bool ok = true;
  for (const CheckResult& c : verify_theory(seed, instances)) {
    std::printf("%s %s  %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
    ok = ok && c.passed;
  }
  return ok ? 0 : 1;
}

int run_regress(std::uint64_t seed, const std::string& out, bool sgd) {
  RegressionDemoOptions opts;
  opts.run_sgd = sgd;
  opts.sgd.seed = seed;
  const RegressionDemo demo = ls_regression_demo(seed, {0.0, 0.3, 0.6, 0.9}, opts);
  if (out.empty()) {
    write_regression_csv(demo, std::cout);
  } else {
    std::ofstream f(out);
    if (!f) throw IoError("cannot write " + out);
    write_regression_csv(demo, f);
  }
  return 0;
}

int run_pretrain(const std::string& config_path, const std::string& out) {
  const ExperimentConfig cfg = config_from(config_path);
  const ExperimentData data = load_experiment_data(cfg);
  const PretrainResult res = pretrain(cfg, data.source);
  for (std::size_t k = 0; k < res.grid_accuracies.size(); ++k) {
    std::printf("epochs=%zu source_val_acc=%s\n", cfg.pretrain_epoch_grid[k],
                format_double(res.grid_accuracies[k]).c_str());
  }
  save_checkpoint(res.checkpoint, out);
  std::printf("saved %s (source_val_acc=%s)\n", out.c_str(),
              format_double(res.checkpoint.source_val_accuracy).c_str());
  return 0;
}

int run_finetune(const std::string& config_path, const std::string& ckpt_path, const std::string& policy,
                 std::size_t restart, const std::string& out) {
  const ExperimentConfig cfg = config_from(config_path);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const ExperimentData data = load_experiment_data(cfg);
  const FinetuneResult res = finetune(cfg, ckpt, data.target, parse_policy_cell(policy), restart);
  const RunRecord& r = res.record;
  std::printf("policy: %s\n", r.policy.c_str());
  for (std::size_t e = 0; e < r.epochs.size(); ++e) {
    std::printf("epoch %zu train_loss=%s val_acc=%s\n", e + 1, format_double(r.epochs[e].train_loss).c_str(),
                format_double(r.epochs[e].val_accuracy).c_str());
  }
  std::fputs(runs_csv({r}, true).c_str(), stdout);
  if (!out.empty()) save_checkpoint(Checkpoint{ckpt.spec, res.w_ft, r.dev_score, ckpt.source_validation}, out);
  return 0;
}

int run_sweep(const std::string& config_path, const std::string& out, std::size_t workers) {
  ExperimentConfig cfg = config_from(config_path);
  if (workers > 0) cfg.workers = workers;
  const SweepResult res = sweep(cfg);
  write_report(res, out, cfg.record_timing);
  std::size_t failed = 0;
  for (const RunRecord& r : res.records) {
    if (r.failed) {
      ++failed;
      std::fprintf(stderr, "run %s p=%s seed=%llu failed: %s\n", technique_name(r.technique),
                   format_double(r.p).c_str(), static_cast<unsigned long long>(r.seed), r.error.c_str());
    }
  }
  std::fputs(summary_csv(res.summary).c_str(), stdout);
  std::printf("%zu runs (%zu failed) written to %s\n", res.records.size(), failed, out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic parameter-mixing regularization toolkit"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  std::size_t instances = 100;
  auto* verify = app.add_subcommand("verify", "Run the exact-oracle theory checks");
  verify->add_option("--seed", seed, "Random seed");
  verify->add_option("--instances", instances, "Random quadratics per check");

  std::string out;
  bool no_sgd = false;
  auto* regress = app.add_subcommand("regress", "Least-squares mixout demo as CSV");
  regress->add_option("--seed", seed, "Random seed");
  regress->add_option("--out", out, "CSV path (stdout if omitted)");
  regress->add_flag("--no-sgd", no_sgd, "Skip the SGD cross-check");

  std::string config;
  auto* pre = app.add_subcommand("pretrain", "Pretrain on the source task and save a checkpoint");
  pre->add_option("--config", config, "Experiment config")->required();
  pre->add_option("--out", out, "Checkpoint path")->required();

  std::string ckpt, policy;
  std::size_t restart = 0;
  auto* fine = app.add_subcommand("finetune", "Finetune one cell from a checkpoint");
  fine->add_option("--config", config, "Experiment config")->required();
  fine->add_option("--ckpt", ckpt, "Pretrained checkpoint")->required();
  fine->add_option("--policy", policy, "Cell such as mixout:0.7 or dropout:0.1")->required();
  fine->add_option("--restart", restart, "Restart id (seed = base seed + restart)");
  fine->add_option("--out", out, "Save the finetuned parameters as a checkpoint");

  std::size_t workers = 0;
  auto* sw = app.add_subcommand("sweep", "Run every (technique, p, restart) cell");
  sw->add_option("--config", config, "Experiment config")->required();
  sw->add_option("--out", out, "Output directory")->required();
  sw->add_option("--workers", workers, "Worker threads (overrides the config)");

  std::string dir;
  auto* rep = app.add_subcommand("report", "Recompute summary.csv from runs.csv");
  rep->add_option("dir", dir, "Sweep output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*verify) return run_verify(seed, instances);
    if (*regress) return run_regress(seed, out, !no_sgd);
    if (*pre) return run_pretrain(config, out);
    if (*fine) return run_finetune(config, ckpt, policy, restart, out);
    if (*sw) return run_sweep(config, out, workers);
    if (*rep) {
      std::fputs(report(dir).c_str(), stdout);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
