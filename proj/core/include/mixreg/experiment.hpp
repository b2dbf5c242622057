#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mixreg/checkpoint.hpp"
#include "mixreg/dataset.hpp"
#include "mixreg/mix.hpp"
#include "mixreg/net.hpp"
#include "mixreg/optim.hpp"

namespace mixreg {

enum class DataSource { synthetic, idx };

/// Regularizer family swept during finetuning.
enum class Technique { mixout, dropout };

/// Treatment of a freshly initialized output layer.
enum class HeadPolicy {
  none,         // not masked
  dropout,      // masked toward the origin
  init_anchor,  // masked toward its own initialization snapshot
};

struct ExperimentConfig {
  DataSource source = DataSource::synthetic;
  SynthParams synth;
  std::string source_images, source_labels;
  std::string target_images, target_labels;
  std::size_t target_subsample = 0;  // examples per class kept from the target train split, 0 = all

  NetworkSpec network = NetworkSpec::mlp(24, {96, 48}, 10, true);

  TrainConfig pretrain;
  std::vector<std::size_t> pretrain_epoch_grid;
  double pretrain_dropout = 0.1;
  double pretrain_decay = 0.01;

  TrainConfig finetune;
  bool reinit_head = false;
  HeadPolicy head_policy = HeadPolicy::none;
  bool trace_deviation = false;

  std::vector<Technique> techniques = {Technique::mixout, Technique::dropout};
  std::vector<double> p_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::size_t restarts = 5;
  std::uint64_t base_seed = 1;
  std::size_t workers = 1;
  bool record_timing = false;
  double degenerate_margin = 0.02;
  std::string checkpoint_path;  // reuse this checkpoint instead of pretraining
  std::string output_path;

  ExperimentConfig();
  void validate() const;
};

/// Parse the sectioned key = value format. Unknown sections or keys are errors.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);

/// Apply MIXREG_SEED from the environment, if set.
void apply_env_overrides(ExperimentConfig& config);

const char* technique_name(Technique t);
Technique parse_technique(const std::string& name);

/// A finetuning cell such as "mixout:0.7" or "dropout:0.1".
struct PolicyCell {
  Technique technique = Technique::mixout;
  double p = 0.0;
};
PolicyCell parse_policy_cell(const std::string& text);

/// Source and target datasets described by the config.
struct ExperimentData {
  Dataset source;
  Dataset target;
};
ExperimentData load_experiment_data(const ExperimentConfig& config);

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<double> grid_accuracies;  // final source validation accuracy per epoch-grid entry
};

/// Pretraining recipe: dropout on hidden-layer outputs plus weight decay to
/// the origin; keeps the epoch-grid run with the best validation accuracy.
PretrainResult pretrain(const ExperimentConfig& config, const Dataset& source);

struct EpochStats {
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct RunRecord {
  std::size_t restart = 0;
  std::uint64_t seed = 0;
  Technique technique = Technique::mixout;
  double p = 0.0;
  std::string policy;
  double dev_score = 0.0;       // target validation accuracy
  double deviation_sq = 0.0;    // ||w_ft - w_pre||^2
  double source_accuracy = 0.0;
  double secs_per_step = 0.0;
  std::vector<EpochStats> epochs;
  std::vector<double> deviation_trace;  // ||w_t - w_0|| per step when traced
  bool failed = false;
  std::string error;
};

struct FinetuneResult {
  RunRecord record;
  ParamVector w_ft;
};

/// The regularizer used for one finetuning cell. `w_start` is the parameter
/// vector finetuning starts from (its output layer may be freshly drawn).
MixPolicy make_finetune_policy(const ExperimentConfig& config, const Checkpoint& ckpt, const ParamVector& w_start,
                               Technique technique, double p);

/// One finetuning run from the checkpoint with seed base_seed + restart.
FinetuneResult finetune(const ExperimentConfig& config, const Checkpoint& ckpt, const Dataset& target,
                        PolicyCell cell, std::size_t restart);

struct SummaryRow {
  Technique technique = Technique::mixout;
  double p = 0.0;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  double max = 0.0;
  std::size_t degenerate_count = 0;
  std::size_t runs = 0;
};

struct SweepResult {
  std::vector<RunRecord> records;  // ordered by (technique, p, restart)
  std::vector<SummaryRow> summary;
  double chance_threshold = 0.0;
  double pretrain_accuracy = 0.0;
};

/// Every (technique, p, restart) run, executed on `config.workers` threads.
/// The result does not depend on the worker count or scheduling.
SweepResult sweep(const ExperimentConfig& config, const Checkpoint& ckpt, const Dataset& target);
SweepResult sweep(const ExperimentConfig& config);

/// Majority-class accuracy plus the degenerate margin.
double chance_threshold(const ExperimentConfig& config, const Dataset& target);

/// Aggregate per (technique, p) in first-appearance order.
std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records, double chance_threshold);

/// Generic minibatch trainer shared by pretraining and finetuning.
struct TrainingOutcome {
  std::vector<EpochStats> epochs;
  std::vector<double> deviation_trace;
  std::size_t steps = 0;
  double seconds = 0.0;
};

TrainingOutcome train_model(const NetworkSpec& spec, ParamVector& w, const MixPolicy& policy,
                            const LabeledData& train, const LabeledData* validation, const TrainConfig& config,
                            std::uint64_t seed, const ParamVector* reference = nullptr);

}  // namespace mixreg
