#include "mixreg/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "mixreg/errors.hpp"
#include "mixreg/random.hpp"

namespace mixreg {

ExperimentConfig::ExperimentConfig() {
  pretrain.base_lr = 1e-3;
  pretrain.epochs = 10;
  pretrain.batch_size = 32;
  pretrain_epoch_grid = {10};
  finetune.base_lr = 1.5e-3;
  finetune.epochs = 15;
  finetune.batch_size = 32;
}

void ExperimentConfig::validate() const {
  network.validate();
  if (network.head != HeadKind::softmax_xent) throw ConfigError("experiments need a softmax classifier head");
  pretrain.validate();
  finetune.validate();
  if (pretrain_epoch_grid.empty()) throw ConfigError("pretrain epoch grid is empty");
  for (std::size_t e : pretrain_epoch_grid) {
    if (e == 0) throw ConfigError("pretrain epoch grid entries must be >= 1");
  }
  if (!(pretrain_dropout >= 0.0 && pretrain_dropout < 1.0)) throw ConfigError("pretrain dropout must lie in [0, 1)");
  if (!(pretrain_decay >= 0.0)) throw ConfigError("pretrain decay must be >= 0");
  if (restarts == 0) throw ConfigError("restart count must be >= 1");
  if (workers == 0) throw ConfigError("worker count must be >= 1");
  if (techniques.empty()) throw ConfigError("no techniques to sweep");
  if (p_grid.empty()) throw ConfigError("p grid is empty");
  for (double p : p_grid) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("p grid values must lie in [0, 1)");
  }
  if (source == DataSource::idx && (source_images.empty() || source_labels.empty() || target_images.empty() ||
                                    target_labels.empty())) {
    throw ConfigError("idx data source needs source/target image and label paths");
  }
  if (source == DataSource::synthetic && (synth.dim != network.input_dim || synth.num_classes != network.output_dim)) {
    throw ConfigError("synthetic data shape does not match the network input/output size");
  }
}

// ---------------------------------------------------------------------------
// Config file

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct KeyContext {
  std::string section;
  std::string key;
  std::string where() const { return "[" + section + "] " + key; }
};

double to_double(const std::string& v, const KeyContext& ctx) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(ctx.where() + ": expected a number, got '" + v + "'");
  }
}

std::uint64_t to_uint(const std::string& v, const KeyContext& ctx) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const unsigned long long x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(ctx.where() + ": expected a nonnegative integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& v, const KeyContext& ctx) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(ctx.where() + ": expected true/false, got '" + v + "'");
}

void apply_train_key(TrainConfig& tc, const std::string& key, const std::string& v, const KeyContext& ctx) {
  if (key == "lr") tc.base_lr = to_double(v, ctx);
  else if (key == "beta1") tc.beta1 = to_double(v, ctx);
  else if (key == "beta2") tc.beta2 = to_double(v, ctx);
  else if (key == "adam_eps") tc.adam_eps = to_double(v, ctx);
  else if (key == "warmup_fraction") tc.warmup_fraction = to_double(v, ctx);
  else if (key == "batch_size") tc.batch_size = to_uint(v, ctx);
  else throw ConfigError("unknown key " + ctx.where());
}

}  // namespace

ExperimentConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }

  ExperimentConfig cfg;
  std::vector<std::size_t> widths;
  bool widths_set = false;
  bool layer_norm = true;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("key '" + section + "' outside of a section");
    }
    for (const auto& [key, node] : body) {
      const std::string v = trim(node.data());
      const KeyContext ctx{section, key};
      if (section == "data") {
        if (key == "source") {
          if (v == "synthetic") cfg.source = DataSource::synthetic;
          else if (v == "idx") cfg.source = DataSource::idx;
          else throw ConfigError(ctx.where() + ": expected synthetic or idx");
        } else if (key == "classes") cfg.synth.num_classes = to_uint(v, ctx);
        else if (key == "dim") cfg.synth.dim = to_uint(v, ctx);
        else if (key == "source_per_class") cfg.synth.source_per_class = to_uint(v, ctx);
        else if (key == "target_per_class") cfg.synth.target_per_class = to_uint(v, ctx);
        else if (key == "target_val_per_class") cfg.synth.target_val_per_class = to_uint(v, ctx);
        else if (key == "shift") cfg.synth.shift = to_double(v, ctx);
        else if (key == "source_noise") cfg.synth.source_noise = to_double(v, ctx);
        else if (key == "target_noise") cfg.synth.target_noise = to_double(v, ctx);
        else if (key == "val_fraction") cfg.synth.val_fraction = to_double(v, ctx);
        else if (key == "source_images") cfg.source_images = v;
        else if (key == "source_labels") cfg.source_labels = v;
        else if (key == "target_images") cfg.target_images = v;
        else if (key == "target_labels") cfg.target_labels = v;
        else if (key == "target_subsample") cfg.target_subsample = to_uint(v, ctx);
        else throw ConfigError("unknown key " + ctx.where());
      } else if (section == "network") {
        if (key == "input_dim") cfg.network.input_dim = to_uint(v, ctx);
        else if (key == "hidden") {
          widths.clear();
          for (const auto& item : split_list(v)) widths.push_back(to_uint(item, ctx));
          widths_set = true;
        } else if (key == "classes") cfg.network.output_dim = to_uint(v, ctx);
        else if (key == "layer_norm") layer_norm = to_bool(v, ctx);
        else throw ConfigError("unknown key " + ctx.where());
      } else if (section == "pretrain") {
        if (key == "epochs") {
          cfg.pretrain_epoch_grid.clear();
          for (const auto& item : split_list(v)) cfg.pretrain_epoch_grid.push_back(to_uint(item, ctx));
        } else if (key == "dropout") cfg.pretrain_dropout = to_double(v, ctx);
        else if (key == "weight_decay") cfg.pretrain_decay = to_double(v, ctx);
        else apply_train_key(cfg.pretrain, key, v, ctx);
      } else if (section == "finetune") {
        if (key == "epochs") cfg.finetune.epochs = to_uint(v, ctx);
        else if (key == "reinit_head") cfg.reinit_head = to_bool(v, ctx);
        else if (key == "head_policy") {
          if (v == "none") cfg.head_policy = HeadPolicy::none;
          else if (v == "dropout") cfg.head_policy = HeadPolicy::dropout;
          else if (v == "init_anchor") cfg.head_policy = HeadPolicy::init_anchor;
          else throw ConfigError(ctx.where() + ": expected none, dropout or init_anchor");
        } else if (key == "trace_deviation") cfg.trace_deviation = to_bool(v, ctx);
        else apply_train_key(cfg.finetune, key, v, ctx);
      } else if (section == "sweep") {
        if (key == "techniques") {
          cfg.techniques.clear();
          for (const auto& item : split_list(v)) cfg.techniques.push_back(parse_technique(item));
        } else if (key == "p_grid") {
          cfg.p_grid.clear();
          for (const auto& item : split_list(v)) cfg.p_grid.push_back(to_double(item, ctx));
        } else if (key == "restarts") cfg.restarts = to_uint(v, ctx);
        else if (key == "seed") cfg.base_seed = to_uint(v, ctx);
        else if (key == "workers") cfg.workers = to_uint(v, ctx);
        else if (key == "record_timing") cfg.record_timing = to_bool(v, ctx);
        else if (key == "degenerate_margin") cfg.degenerate_margin = to_double(v, ctx);
        else if (key == "checkpoint") cfg.checkpoint_path = v;
        else if (key == "out") cfg.output_path = v;
        else throw ConfigError("unknown key " + ctx.where());
      } else {
        throw ConfigError("unknown section [" + section + "]");
      }
    }
  }
  if (widths_set) {
    cfg.network.hidden.clear();
    for (std::size_t w : widths) cfg.network.hidden.push_back(HiddenLayer{w, Activation::relu, layer_norm});
  } else {
    for (auto& h : cfg.network.hidden) h.layer_norm = layer_norm;
  }
  if (cfg.source == DataSource::synthetic) {
    // The synthetic data fixes the input and output widths unless overridden.
    if (!tree.get_child_optional("network.input_dim")) cfg.network.input_dim = cfg.synth.dim;
    if (!tree.get_child_optional("network.classes")) cfg.network.output_dim = cfg.synth.num_classes;
  }
  cfg.pretrain.epochs = *std::max_element(cfg.pretrain_epoch_grid.begin(), cfg.pretrain_epoch_grid.end());
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  return parse_config(in);
}

void apply_env_overrides(ExperimentConfig& config) {
  if (const char* env = std::getenv("MIXREG_SEED")) {
    config.base_seed = to_uint(env, KeyContext{"env", "MIXREG_SEED"});
  }
}

const char* technique_name(Technique t) { return t == Technique::mixout ? "mixout" : "dropout"; }

Technique parse_technique(const std::string& name) {
  if (name == "mixout") return Technique::mixout;
  if (name == "dropout") return Technique::dropout;
  throw ConfigError("unknown technique '" + name + "'");
}

PolicyCell parse_policy_cell(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("policy cell must look like technique:p, got '" + text + "'");
  PolicyCell cell;
  cell.technique = parse_technique(text.substr(0, colon));
  cell.p = to_double(text.substr(colon + 1), KeyContext{"cli", "policy"});
  if (!(cell.p >= 0.0 && cell.p < 1.0)) throw ConfigError("policy p must lie in [0, 1)");
  return cell;
}

// ---------------------------------------------------------------------------
// Data

ExperimentData load_experiment_data(const ExperimentConfig& config) {
  ExperimentData data;
  if (config.source == DataSource::synthetic) {
    SynthPair pair = synth_digits(config.synth, config.base_seed);
    data.source = std::move(pair.source);
    data.target = std::move(pair.target);
  } else {
    data.source = split_dataset(load_idx(config.source_images, config.source_labels), 0.9, config.base_seed, "source");
    data.target = split_dataset(load_idx(config.target_images, config.target_labels), 0.9, config.base_seed, "target");
  }
  if (config.target_subsample > 0) {
    data.target.train = subsample_per_class(data.target.train, config.target_subsample, config.base_seed);
  }
  return data;
}

// ---------------------------------------------------------------------------
// Training

TrainingOutcome train_model(const NetworkSpec& spec, ParamVector& w, const MixPolicy& policy,
                            const LabeledData& train, const LabeledData* validation, const TrainConfig& config,
                            std::uint64_t seed, const ParamVector* reference) {
  config.validate();
  policy.validate(w.layout());
  const std::size_t n = train.size();
  if (n == 0) throw ConfigError("empty training set");
  const std::size_t per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total = per_epoch * config.epochs;

  TrainingOutcome outcome;
  AdamState state = AdamState::zeros(w.size());
  std::vector<std::size_t> order(n);
  const auto start = std::chrono::steady_clock::now();
  std::size_t step = 0;
  Batch batch;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto shuffle_engine = make_engine(StreamKey{mix64(seed ^ 0xda7a), epoch});
    std::shuffle(order.begin(), order.end(), shuffle_engine);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
      const std::size_t lo = b * config.batch_size;
      const std::size_t hi = std::min(n, lo + config.batch_size);
      batch.inputs.resize(static_cast<Eigen::Index>(hi - lo), train.inputs.cols());
      batch.labels.resize(hi - lo);
      for (std::size_t k = lo; k < hi; ++k) {
        batch.inputs.row(static_cast<Eigen::Index>(k - lo)) = train.inputs.row(static_cast<Eigen::Index>(order[k]));
        batch.labels[k - lo] = train.labels[order[k]];
      }
      const double lr = lr_at(config, static_cast<double>(step), total);
      const StepMetrics m = train_step(spec, w, policy, batch, state, config, lr, StreamKey{seed, step}, reference);
      loss_sum += m.loss;
      if (reference) outcome.deviation_trace.push_back(m.distance_to_reference);
    }
    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(per_epoch);
    if (validation) stats.val_accuracy = accuracy(spec, w, validation->inputs, validation->labels);
    outcome.epochs.push_back(stats);
  }
  outcome.steps = step;
  outcome.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return outcome;
}

PretrainResult pretrain(const ExperimentConfig& config, const Dataset& source) {
  config.validate();
  const auto layout = config.network.make_layout();
  PretrainResult result;
  double best = -1.0;
  for (std::size_t k = 0; k < config.pretrain_epoch_grid.size(); ++k) {
    const std::uint64_t seed = mix64(config.base_seed ^ 0x9e7a1) + k;
    ParamVector w = init_params(config.network, seed);
    MixPolicy policy = MixPolicy::dropout(layout, config.pretrain_dropout);
    policy.excluded_layers = {0};  // input neurons are never dropped
    if (config.pretrain_decay > 0.0) policy.decay = DecayTerm{ParamVector(layout), config.pretrain_decay};
    TrainConfig tc = config.pretrain;
    tc.epochs = config.pretrain_epoch_grid[k];
    train_model(config.network, w, policy, source.train, nullptr, tc, seed);
    const double acc = accuracy(config.network, w, source.validation.inputs, source.validation.labels);
    result.grid_accuracies.push_back(acc);
    if (acc > best) {
      best = acc;
      result.checkpoint.spec = config.network;
      result.checkpoint.params = w;
      result.checkpoint.source_val_accuracy = acc;
    }
  }
  result.checkpoint.source_validation = source.validation;
  return result;
}

MixPolicy make_finetune_policy(const ExperimentConfig& config, const Checkpoint& ckpt, const ParamVector& w_start,
                               Technique technique, double p) {
  const auto& layout = ckpt.params.layout_ptr();
  const std::size_t head = config.network.output_layer();
  const std::size_t head_ids[] = {head};
  MixPolicy policy = technique == Technique::mixout
                         ? MixPolicy::mixout(ckpt.params, p, AnchorKind::pretrained_snapshot)
                         : MixPolicy::dropout(layout, p);
  policy.excluded_layers = {0};
  if (config.reinit_head) {
    switch (config.head_policy) {
      case HeadPolicy::none:
        policy.excluded_layers.insert(head);
        break;
      case HeadPolicy::dropout:
        policy.anchor = splice_layers(policy.anchor, ParamVector(layout), head_ids);
        break;
      case HeadPolicy::init_anchor:
        policy.anchor = splice_layers(policy.anchor, w_start, head_ids);
        break;
    }
  }
  return policy;
}

FinetuneResult finetune(const ExperimentConfig& config, const Checkpoint& ckpt, const Dataset& target,
                        PolicyCell cell, std::size_t restart) {
  if (!(ckpt.spec == config.network)) throw ConfigError("checkpoint network does not match the config network");
  FinetuneResult result;
  RunRecord& rec = result.record;
  rec.restart = restart;
  rec.seed = config.base_seed + restart;
  rec.technique = cell.technique;
  rec.p = cell.p;

  ParamVector w = ckpt.params;
  if (config.reinit_head) reinit_layer(config.network, w, config.network.output_layer(), mix64(rec.seed ^ 0x4ead));
  const ParamVector w_start = w;
  const MixPolicy policy = make_finetune_policy(config, ckpt, w_start, cell.technique, cell.p);
  rec.policy = policy.describe();

  const TrainingOutcome outcome =
      train_model(config.network, w, policy, target.train, &target.validation, config.finetune, rec.seed,
                  config.trace_deviation ? &w_start : nullptr);
  rec.epochs = outcome.epochs;
  rec.deviation_trace = outcome.deviation_trace;
  rec.secs_per_step = outcome.steps ? outcome.seconds / static_cast<double>(outcome.steps) : 0.0;
  rec.dev_score = rec.epochs.back().val_accuracy;
  rec.deviation_sq = deviation_norm_sq(w, ckpt.params);
  rec.source_accuracy = ckpt.source_validation.size()
                            ? accuracy(config.network, w, ckpt.source_validation.inputs, ckpt.source_validation.labels)
                            : 0.0;
  result.w_ft = std::move(w);
  return result;
}

// ---------------------------------------------------------------------------
// Sweeps

double chance_threshold(const ExperimentConfig& config, const Dataset& target) {
  return majority_fraction(target.validation.labels, target.num_classes) + config.degenerate_margin;
}

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records, double threshold) {
  std::vector<SummaryRow> rows;
  std::vector<std::vector<double>> scores;
  for (const RunRecord& r : records) {
    auto it = std::find_if(rows.begin(), rows.end(),
                           [&](const SummaryRow& s) { return s.technique == r.technique && s.p == r.p; });
    std::size_t idx;
    if (it == rows.end()) {
      rows.push_back(SummaryRow{r.technique, r.p});
      scores.emplace_back();
      idx = rows.size() - 1;
    } else {
      idx = static_cast<std::size_t>(it - rows.begin());
    }
    SummaryRow& row = rows[idx];
    ++row.runs;
    if (r.failed || !std::isfinite(r.dev_score)) {
      ++row.degenerate_count;
      continue;
    }
    if (r.dev_score <= threshold) ++row.degenerate_count;
    scores[idx].push_back(r.dev_score);
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& s = scores[k];
    SummaryRow& row = rows[k];
    if (s.empty()) {
      row.mean = row.std = row.max = std::nan("");
      continue;
    }
    double sum = 0.0;
    for (double x : s) sum += x;
    row.mean = sum / static_cast<double>(s.size());
    double sq = 0.0;
    for (double x : s) sq += (x - row.mean) * (x - row.mean);
    row.std = std::sqrt(sq / static_cast<double>(s.size()));
    row.max = *std::max_element(s.begin(), s.end());
  }
  return rows;
}

SweepResult sweep(const ExperimentConfig& config, const Checkpoint& ckpt, const Dataset& target) {
  config.validate();
  struct Job {
    PolicyCell cell;
    std::size_t restart;
  };
  std::vector<Job> jobs;
  for (Technique t : config.techniques)
    for (double p : config.p_grid)
      for (std::size_t r = 0; r < config.restarts; ++r) jobs.push_back(Job{PolicyCell{t, p}, r});

  SweepResult result;
  result.records.resize(jobs.size());
  result.pretrain_accuracy = ckpt.source_val_accuracy;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      const Job& job = jobs[k];
      try {
        result.records[k] = finetune(config, ckpt, target, job.cell, job.restart).record;
      } catch (const std::exception& e) {
        RunRecord& rec = result.records[k];
        rec = RunRecord{};
        rec.restart = job.restart;
        rec.seed = config.base_seed + job.restart;
        rec.technique = job.cell.technique;
        rec.p = job.cell.p;
        rec.failed = true;
        rec.error = e.what();
        rec.dev_score = rec.deviation_sq = rec.source_accuracy = std::nan("");
      }
    }
  };
  const std::size_t n_workers = std::min(config.workers, std::max<std::size_t>(jobs.size(), 1));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
  }
  result.chance_threshold = chance_threshold(config, target);
  result.summary = summarize(result.records, result.chance_threshold);
  return result;
}

SweepResult sweep(const ExperimentConfig& config) {
  const ExperimentData data = load_experiment_data(config);
  const Checkpoint ckpt =
      config.checkpoint_path.empty() ? pretrain(config, data.source).checkpoint : load_checkpoint(config.checkpoint_path);
  return sweep(config, ckpt, data.target);
}

}  // namespace mixreg
