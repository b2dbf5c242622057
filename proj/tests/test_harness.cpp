#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mixreg/checkpoint.hpp"
#include "mixreg/errors.hpp"
#include "mixreg/experiment.hpp"
#include "mixreg/report.hpp"

using namespace mixreg;
namespace fs = std::filesystem;

namespace {

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

std::vector<unsigned char> idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                                      const std::vector<unsigned char>& pixels) {
  std::vector<unsigned char> out;
  put_be32(out, 0x803);
  put_be32(out, n);
  put_be32(out, rows);
  put_be32(out, cols);
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

std::vector<unsigned char> idx_labels(const std::vector<unsigned char>& labels) {
  std::vector<unsigned char> out;
  put_be32(out, 0x801);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

const char* kTinyConfig = R"(
[data]
source = synthetic
classes = 4
dim = 12
source_per_class = 60
target_per_class = 15
target_val_per_class = 15
shift = 0.4

[network]
hidden = 16

[pretrain]
epochs = 2, 4
lr = 3e-3

[finetune]
epochs = 2
lr = 1e-3
batch_size = 16

[sweep]
techniques = mixout, dropout
p_grid = 0.2, 0.6
restarts = 2
seed = 5
)";

ExperimentConfig tiny_config() {
  std::istringstream in(kTinyConfig);
  return parse_config(in);
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mixreg_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("IDX parsing scales, standardizes and validates") {
  const auto zeros = parse_idx(idx_images(3, 2, 2, std::vector<unsigned char>(12, 0)), idx_labels({0, 1, 2}));
  CHECK(zeros.size() == 3);
  CHECK(zeros.inputs.cols() == 4);
  CHECK(zeros.inputs.cwiseAbs().maxCoeff() == 0.0);
  CHECK(zeros.num_classes == 10);

  std::vector<unsigned char> px = {0, 255, 0, 255, 255, 0, 255, 0};
  const auto d = parse_idx(idx_images(2, 2, 2, px), idx_labels({3, 7}));
  CHECK(std::abs(d.inputs.mean()) < 1e-15);
  CHECK(d.inputs.squaredNorm() / 8.0 == doctest::Approx(1.0));
  CHECK(d.labels[1] == 7);

  auto truncated = idx_images(3, 2, 2, std::vector<unsigned char>(10, 0));
  try {
    parse_idx(truncated, idx_labels({0, 1, 2}));
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("28") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_idx(idx_images(3, 2, 2, std::vector<unsigned char>(12, 0)), idx_labels({0, 1})),
                  ConsistencyError);
  auto bad_magic = idx_labels({0});
  bad_magic[3] = 0x02;
  CHECK_THROWS_AS(parse_idx(idx_images(1, 1, 1, {0}), bad_magic), FormatError);
}

TEST_CASE("IDX files load from disk") {
  const fs::path dir = scratch_dir("idx");
  const auto img = idx_images(2, 1, 3, {1, 2, 3, 4, 5, 6});
  const auto lab = idx_labels({1, 0});
  std::ofstream(dir / "img", std::ios::binary).write(reinterpret_cast<const char*>(img.data()), img.size());
  std::ofstream(dir / "lab", std::ios::binary).write(reinterpret_cast<const char*>(lab.data()), lab.size());
  const LabeledData d = load_idx((dir / "img").string(), (dir / "lab").string());
  CHECK(d.size() == 2);
  CHECK_THROWS_AS(load_idx((dir / "missing").string(), (dir / "lab").string()), IoError);
}

TEST_CASE("synthetic digits are deterministic and shift-controlled") {
  SynthParams p;
  p.num_classes = 3;
  p.dim = 8;
  p.source_per_class = 20;
  p.target_per_class = 5;
  p.target_val_per_class = 5;
  const SynthPair a = synth_digits(p, 7);
  const SynthPair b = synth_digits(p, 7);
  CHECK(a.source.train.inputs == b.source.train.inputs);
  CHECK(a.target.validation.labels == b.target.validation.labels);
  CHECK(a.target.train.size() == 15);
  CHECK(a.target.validation.size() == 15);
  CHECK(a.source.train.size() + a.source.validation.size() == 60);
  CHECK(a.source_prototypes != a.target_prototypes);

  p.shift = 0.0;
  const SynthPair same = synth_digits(p, 7);
  CHECK(same.source_prototypes == same.target_prototypes);
  CHECK(synth_digits(p, 8).source_prototypes != same.source_prototypes);
}

TEST_CASE("splits and per-class subsampling") {
  SynthParams p;
  p.num_classes = 4;
  p.dim = 4;
  p.source_per_class = 25;
  const SynthPair pair = synth_digits(p, 1);
  CHECK(pair.source.train.size() == 90);
  CHECK(pair.source.validation.size() == 10);
  const LabeledData sub = subsample_per_class(pair.source.train, 3, 2);
  CHECK(sub.size() == 12);
  std::vector<int> count(4, 0);
  for (int y : sub.labels) ++count[static_cast<std::size_t>(y)];
  for (int c : count) CHECK(c == 3);
  CHECK_THROWS_AS(split_dataset(sub, 1.0, 1), ConfigError);
  const std::vector<int> labels = {0, 0, 1, 2};
  CHECK(majority_fraction(labels, 3) == 0.5);
}

TEST_CASE("checkpoints round-trip and detect corruption") {
  const ExperimentConfig cfg = tiny_config();
  Checkpoint ck;
  ck.spec = cfg.network;
  ck.params = init_params(cfg.network, 3);
  ck.source_val_accuracy = 0.875;
  ck.source_validation = synth_digits(cfg.synth, 1).source.validation;
  auto bytes = encode_checkpoint(ck);
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back.spec == ck.spec);
  CHECK(deviation_norm_sq(back.params, ck.params) == 0.0);
  CHECK(back.source_val_accuracy == 0.875);
  CHECK(back.source_validation.inputs == ck.source_validation.inputs);
  CHECK(back.source_validation.labels == ck.source_validation.labels);

  auto flipped = bytes;
  flipped[40] ^= 1;
  CHECK_THROWS_AS(decode_checkpoint(flipped), FormatError);
  auto cut = bytes;
  cut.resize(cut.size() / 2);
  CHECK_THROWS_AS(decode_checkpoint(cut), FormatError);

  const fs::path dir = scratch_dir("ckpt");
  save_checkpoint(ck, (dir / "a.ckpt").string());
  CHECK(load_checkpoint((dir / "a.ckpt").string()).params.size() == ck.params.size());
}

TEST_CASE("config parsing") {
  const ExperimentConfig cfg = tiny_config();
  CHECK(cfg.network.input_dim == 12);
  CHECK(cfg.network.output_dim == 4);
  CHECK(cfg.network.hidden.size() == 1);
  CHECK(cfg.pretrain_epoch_grid == std::vector<std::size_t>{2, 4});
  CHECK(cfg.p_grid == std::vector<double>{0.2, 0.6});
  CHECK(cfg.base_seed == 5);
  CHECK(cfg.finetune.batch_size == 16);

  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
  };
  CHECK_THROWS_AS(parse("[sweep]\nrestart = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse("[bogus]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[sweep]\nrestarts = three\n"), ConfigError);
  CHECK_THROWS_AS(parse("[sweep]\nrestarts = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse("[sweep]\np_grid = 0.5, 1.0\n"), ConfigError);
  CHECK_THROWS_AS(parse("[finetune]\nhead_policy = maybe\n"), ConfigError);
  CHECK(parse("").restarts == 5);

  ExperimentConfig env = cfg;
  setenv("MIXREG_SEED", "1234", 1);
  apply_env_overrides(env);
  unsetenv("MIXREG_SEED");
  CHECK(env.base_seed == 1234);
}

TEST_CASE("policy cells") {
  const PolicyCell c = parse_policy_cell("mixout:0.7");
  CHECK(c.technique == Technique::mixout);
  CHECK(c.p == 0.7);
  CHECK(parse_policy_cell("dropout:0").technique == Technique::dropout);
  CHECK_THROWS_AS(parse_policy_cell("mixout"), ConfigError);
  CHECK_THROWS_AS(parse_policy_cell("l2:0.1"), ConfigError);
  CHECK_THROWS_AS(parse_policy_cell("mixout:1"), ConfigError);
}

TEST_CASE("summaries") {
  std::vector<RunRecord> recs(4);
  for (std::size_t i = 0; i < 4; ++i) {
    recs[i].technique = i < 3 ? Technique::mixout : Technique::dropout;
    recs[i].p = 0.5;
  }
  recs[0].dev_score = 0.9;
  recs[1].dev_score = 0.7;
  recs[2].dev_score = 0.2;
  recs[3].dev_score = 0.6;
  const auto rows = summarize(recs, 0.3);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].mean == doctest::Approx(0.6));
  CHECK(rows[0].max == 0.9);
  CHECK(rows[0].std == doctest::Approx(std::sqrt((0.09 + 0.01 + 0.16) / 3.0)));
  CHECK(rows[0].degenerate_count == 1);
  CHECK(rows[1].mean == 0.6);
  CHECK(rows[1].max == 0.6);
  CHECK(rows[1].std == 0.0);
  CHECK(rows[1].runs == 1);

  recs[3].failed = true;
  recs[3].dev_score = std::nan("");
  const auto failed = summarize(recs, 0.3);
  CHECK(failed[1].degenerate_count == 1);
  CHECK(std::isnan(failed[1].mean));
}

TEST_CASE("CSV formatting round-trips") {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, 123456.789, 0.0, -2.5}) CHECK(parse_double(format_double(x)) == x);
  CHECK(std::isnan(parse_double(format_double(std::nan("")))));
  CHECK_THROWS_AS(parse_double("1.5x"), FormatError);

  const fs::path dir = scratch_dir("empty");
  SweepResult empty;
  write_report(empty, dir.string());
  CHECK(slurp(dir / "runs.csv") == std::string(kRunsHeader) + "\n");
  CHECK(slurp(dir / "summary.csv") == std::string(kSummaryHeader) + "\n");
  CHECK(report(dir.string()) == std::string(kSummaryHeader) + "\n");
}

TEST_CASE("pretrain, finetune and sweep on a tiny problem") {
  ExperimentConfig cfg = tiny_config();
  const ExperimentData data = load_experiment_data(cfg);
  const PretrainResult pre = pretrain(cfg, data.source);
  CHECK(pre.grid_accuracies.size() == 2);
  const Checkpoint& ck = pre.checkpoint;
  CHECK(ck.source_val_accuracy ==
        accuracy(cfg.network, ck.params, ck.source_validation.inputs, ck.source_validation.labels));
  CHECK(ck.source_val_accuracy == *std::max_element(pre.grid_accuracies.begin(), pre.grid_accuracies.end()));

  SUBCASE("unregularised finetuning moves the weights") {
    const FinetuneResult r = finetune(cfg, ck, data.target, PolicyCell{Technique::dropout, 0.0}, 0);
    CHECK(r.record.deviation_sq > 0.0);
    CHECK(r.record.deviation_sq == deviation_norm_sq(r.w_ft, ck.params));
    CHECK(r.record.epochs.size() == 2);
    CHECK(r.record.seed == 5);
    CHECK(r.record.dev_score >= 0.0);
    CHECK(r.record.dev_score <= 1.0);
  }

  SUBCASE("mismatched checkpoints are rejected") {
    ExperimentConfig other = cfg;
    other.network = NetworkSpec::mlp(12, {8}, 4);
    CHECK_THROWS_AS(finetune(other, ck, data.target, PolicyCell{}, 0), ConfigError);
  }

  SUBCASE("head policies") {
    cfg.reinit_head = true;
    const std::size_t head = cfg.network.output_layer();
    ParamVector w0 = ck.params;
    reinit_layer(cfg.network, w0, head, 17);
    cfg.head_policy = HeadPolicy::none;
    CHECK(make_finetune_policy(cfg, ck, w0, Technique::mixout, 0.5).excluded_layers.count(head) == 1);
    cfg.head_policy = HeadPolicy::init_anchor;
    const MixPolicy init = make_finetune_policy(cfg, ck, w0, Technique::mixout, 0.5);
    const LayerDesc& d = w0.layout().layer(head);
    CHECK(init.anchor[d.weight_offset] == w0[d.weight_offset]);
    CHECK(init.anchor[0] == ck.params[0]);
    cfg.head_policy = HeadPolicy::dropout;
    CHECK(make_finetune_policy(cfg, ck, w0, Technique::mixout, 0.5).anchor[d.weight_offset] == 0.0);
    const FinetuneResult r = finetune(cfg, ck, data.target, PolicyCell{Technique::mixout, 0.5}, 1);
    CHECK(std::isfinite(r.record.dev_score));
  }

  SUBCASE("deviation traces") {
    cfg.trace_deviation = true;
    const FinetuneResult r = finetune(cfg, ck, data.target, PolicyCell{Technique::mixout, 0.3}, 0);
    const std::size_t steps = 2 * ((data.target.train.size() + 15) / 16);
    CHECK(r.record.deviation_trace.size() == steps);
    CHECK(r.record.deviation_trace.back() >= 0.0);
  }

  SUBCASE("sweeps are independent of worker count and reproducible from CSV") {
    cfg.workers = 1;
    const SweepResult a = sweep(cfg, ck, data.target);
    cfg.workers = 3;
    const SweepResult b = sweep(cfg, ck, data.target);
    REQUIRE(a.records.size() == 8);
    CHECK(runs_csv(a.records, false) == runs_csv(b.records, false));
    CHECK(summary_csv(a.summary) == summary_csv(b.summary));
    CHECK(a.records[0].technique == Technique::mixout);
    CHECK(a.records[0].p == 0.2);
    CHECK(a.records[1].seed == 6);
    CHECK(a.records[7].technique == Technique::dropout);

    const fs::path dir = scratch_dir("sweep");
    write_report(a, dir.string());
    const auto parsed = read_runs_csv((dir / "runs.csv").string());
    REQUIRE(parsed.size() == a.records.size());
    for (std::size_t i = 0; i < parsed.size(); ++i) {
      CHECK(parsed[i].dev_score == a.records[i].dev_score);
      CHECK(parsed[i].deviation_sq == a.records[i].deviation_sq);
      CHECK(parsed[i].source_accuracy == a.records[i].source_accuracy);
      CHECK(parsed[i].seed == a.records[i].seed);
    }
    const std::string written = slurp(dir / "summary.csv");
    CHECK(report(dir.string()) == written);
    CHECK(slurp(dir / "curves.csv").find("technique,p,seed,epoch,train_loss,val_accuracy\n") == 0);
  }
}

TEST_CASE("command line tool") {
  const fs::path dir = scratch_dir("cli");
  {
    std::ofstream(dir / "tiny.ini") << kTinyConfig;
  }
  const std::string cli = MIXREG_CLI;
  const std::string cfg = (dir / "tiny.ini").string();
  const std::string ckpt = (dir / "pre.ckpt").string();
  const std::string quiet = " > " + (dir / "log.txt").string() + " 2>&1";
  CHECK(std::system((cli + " pretrain --config " + cfg + " --out " + ckpt + quiet).c_str()) == 0);
  CHECK(fs::exists(ckpt));
  CHECK(std::system((cli + " finetune --config " + cfg + " --ckpt " + ckpt + " --policy mixout:0.5" + quiet).c_str()) ==
        0);
  CHECK(std::system((cli + " finetune --config " + cfg + " --ckpt " + ckpt + " --policy bad:0.5" + quiet).c_str()) !=
        0);
  CHECK(std::system((cli + " report " + (dir / "nothing").string() + quiet).c_str()) != 0);
  CHECK(std::system((cli + " verify --instances 20" + quiet).c_str()) == 0);
}
