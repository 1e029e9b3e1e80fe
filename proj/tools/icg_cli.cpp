// icg: command-line front end for data synthesis, training, evaluation,
// prediction, cost profiling and the prompted baseline.
//
// Exit codes: 0 success, 1 usage, 2 data, 3 runtime.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "icg/baseline.hpp"
#include "icg/data.hpp"
#include "icg/metrics.hpp"
#include "icg/profiling.hpp"
#include "icg/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kRuntime = 3 };

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Every setting a command can take, filled from defaults, then the --config
// file, then explicit flags.
struct RunSettings {
  std::string data;
  std::string lexicon;
  std::string out;
  std::string checkpoint;
  std::string resume;
  std::string task = "placement";
  std::string preset = "default";
  std::string split = "all";
  std::string averaging = "macro";
  std::string record;
  std::string emotion;
  std::uint64_t seed = 0;
  std::size_t records = 100;
  std::uint32_t depth = 0;
  std::uint32_t sa = 0;
  std::uint32_t latents = 0;
  std::uint32_t latent_dim = 0;
  std::uint32_t source_dim = 0;
  std::size_t iterations = 100;
  std::size_t warmup = 10;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double lr = 1e-4;
  double pos_weight = 1.0;
  std::string endpoint;
  std::string model;
  std::string api_key_env;
  std::size_t concurrency = 1;
  std::size_t max_retries = 3;
};

struct Binding {
  std::string key;
  CLI::Option* option;
  std::function<void(const json&)> assign;
};

class Command {
 public:
  Command(CLI::App& app, const std::string& name, const std::string& help)
      : sub_(app.add_subcommand(name, help)) {
    sub_->add_option("--config", config_path_, "JSON file of settings; flags take precedence")
        ->check(CLI::ExistingFile);
  }

  template <typename T>
  Command& opt(const std::string& key, T& target, const std::string& help) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    CLI::Option* o = sub_->add_option(flag, target, help);
    bindings_.push_back({key, o, [&target](const json& j) { target = j.get<T>(); }});
    return *this;
  }

  CLI::App* app() const { return sub_; }

  // Applies config-file values for every key whose flag was not given.
  void merge_config() const {
    if (config_path_.empty()) return;
    std::ifstream in(config_path_);
    json file;
    try {
      file = json::parse(in);
    } catch (const json::exception& e) {
      throw UsageError("--config: " + std::string(e.what()));
    }
    if (!file.is_object()) throw UsageError("--config: expected a JSON object");
    for (const auto& [key, value] : file.items()) {
      const auto it = std::find_if(bindings_.begin(), bindings_.end(),
                                   [&](const Binding& b) { return b.key == key; });
      if (it == bindings_.end()) throw UsageError("--config: unknown key '" + key + "'");
      if (it->option->count() > 0) continue;
      try {
        it->assign(value);
      } catch (const json::exception&) {
        throw UsageError("--config: bad value for '" + key + "'");
      }
    }
  }

 private:
  CLI::App* sub_;
  std::string config_path_;
  std::vector<Binding> bindings_;
};

// ---------------------------------------------------------------- settings

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw UsageError(flag + " is required");
}

icg::Task task_of(const RunSettings& s) {
  try {
    return icg::parse_task(s.task);
  } catch (const icg::ConfigError& e) {
    throw UsageError("--task: " + std::string(e.what()));
  }
}

icg::ModelConfig model_config(const RunSettings& s) {
  icg::ModelConfig c;
  if (s.preset == "tiny") {
    c = icg::tiny_config();
  } else if (s.preset != "default") {
    throw UsageError("--preset: expected default or tiny, got '" + s.preset + "'");
  }
  c.task = task_of(s);
  if (s.depth != 0) c.depth = s.depth;
  if (s.sa != 0) c.sa_blocks = s.sa;
  if (s.latents != 0) c.num_latents = s.latents;
  if (s.latent_dim != 0) c.latent_dim = s.latent_dim;
  if (s.source_dim != 0) c.source_dim = s.source_dim;
  c.validate();
  return c;
}

icg::TrainConfig train_config(const RunSettings& s) {
  icg::TrainConfig tc;
  tc.epochs = s.epochs;
  tc.batch_size = s.batch_size;
  tc.lr = s.lr;
  tc.seed = s.seed;
  tc.pos_weight = s.pos_weight;
  tc.validate();
  return tc;
}

json to_json(const icg::ModelConfig& c) {
  return {{"task", icg::task_name(c.task)},
          {"depth", c.depth},
          {"sa_blocks", c.sa_blocks},
          {"num_latents", c.num_latents},
          {"latent_dim", c.latent_dim},
          {"cross_heads", c.cross_heads},
          {"sa_heads", c.sa_heads},
          {"ffn_mult", c.ffn_mult},
          {"fourier_bands", c.fourier_bands},
          {"max_freq", c.max_freq},
          {"source_dim", c.source_dim},
          {"sentence_dim", c.sentence_dim},
          {"word_dim", c.word_dim}};
}

json to_json(const icg::TrainConfig& tc) {
  return {{"lr", tc.lr},       {"beta1", tc.beta1},           {"beta2", tc.beta2},
          {"eps", tc.eps},     {"batch_size", tc.batch_size}, {"epochs", tc.epochs},
          {"seed", tc.seed},   {"pos_weight", tc.pos_weight}};
}

fs::path output_dir(const RunSettings& s) {
  require(s.out, "--out");
  const fs::path dir(s.out);
  fs::create_directories(dir);
  return dir;
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << text;
}

std::vector<icg::UtteranceRecord> select_split(std::vector<icg::UtteranceRecord> records,
                                               const RunSettings& s) {
  if (s.split == "all") return records;
  if (s.split != "train" && s.split != "test") {
    throw UsageError("--split: expected all, train or test, got '" + s.split + "'");
  }
  icg::Split split = icg::split_80_20(records, s.seed);
  return s.split == "train" ? std::move(split.train) : std::move(split.test);
}

std::vector<icg::WordSample> load_samples(const RunSettings& s) {
  require(s.data, "--data");
  require(s.lexicon, "--lexicon");
  const auto records = select_split(icg::load_dataset(s.data), s);
  return icg::expand_records(records, icg::load_lexicon(s.lexicon));
}

// ---------------------------------------------------------------- commands

int cmd_synth_data(const RunSettings& s) {
  if (s.records == 0) throw UsageError("--records must be positive");
  const fs::path dir = output_dir(s);
  const auto ds = icg::synthetic_provider({.seed = s.seed, .num_records = s.records});
  icg::save_dataset(ds.records, dir / "dataset.jsonl");
  icg::save_lexicon(ds.lexicon, dir / "lexicon.json");
  std::cout << "wrote " << ds.records.size() << " records to " << (dir / "dataset.jsonl").string()
            << '\n';
  return kOk;
}

int cmd_train(const RunSettings& s) {
  const icg::ModelConfig cfg = model_config(s);
  const icg::TrainConfig tc = train_config(s);
  require(s.data, "--data");
  require(s.lexicon, "--lexicon");
  const fs::path dir = output_dir(s);

  const auto lexicon = icg::load_lexicon(s.lexicon);
  const icg::Split split = icg::split_80_20(icg::load_dataset(s.data), s.seed);
  const auto train_samples = icg::expand_records(split.train, lexicon);
  const auto test_samples = icg::expand_records(split.test, lexicon);

  std::optional<icg::Checkpoint> start;
  if (!s.resume.empty()) start = icg::load_checkpoint(s.resume);

  write_json({{"command", "train"},
              {"data", s.data},
              {"lexicon", s.lexicon},
              {"resume", s.resume.empty() ? json(nullptr) : json(s.resume)},
              {"model", to_json(cfg)},
              {"train", to_json(tc)},
              {"train_records", split.train.size()},
              {"test_records", split.test.size()}},
             dir / "effective_config.json");

  const icg::TrainResult r =
      icg::train(cfg, train_samples, test_samples, tc, start ? &*start : nullptr);
  icg::save_checkpoint(r.best, dir / "best.icgw");
  icg::save_checkpoint(r.last, dir / "last.icgw");
  icg::write_history_csv(r.history, dir / "history.csv");
  std::cout << "trained " << r.history.size() << " epochs, " << r.last.step_count
            << " steps; checkpoints in " << dir.string() << '\n';
  return kOk;
}

json evaluate(const icg::Checkpoint& ckpt, std::span<const icg::WordSample> samples,
              icg::Averaging averaging) {
  if (samples.empty()) throw icg::ValidationError("evaluation set has no samples");
  const icg::ModelConfig& cfg = ckpt.config;
  json result = {{"task", icg::task_name(cfg.task)}, {"samples", samples.size()}};
  if (cfg.task == icg::Task::placement) {
    std::vector<int> preds, labels;
    for (const auto& x : samples) {
      const auto p = icg::forward(ckpt.params, cfg, *x.sentence_embedding, x.fused_embedding);
      preds.push_back(icg::decide_placement(p.value));
      labels.push_back(x.label);
    }
    result["classification"] = icg::to_json(icg::classification_report(preds, labels, averaging));
  } else {
    std::vector<double> preds, targets;
    for (const auto& x : samples) {
      preds.push_back(
          icg::forward(ckpt.params, cfg, *x.sentence_embedding, x.fused_embedding).value);
      targets.push_back(x.intensity);
    }
    result["regression"] = icg::to_json(icg::regression_report(preds, targets));
  }
  result["loss"] = icg::evaluate_loss(ckpt.params, cfg, samples);
  return result;
}

int cmd_eval(const RunSettings& s, bool task_given) {
  require(s.checkpoint, "--checkpoint");
  const icg::Checkpoint ckpt = icg::load_checkpoint(s.checkpoint);
  if (task_given && task_of(s) != ckpt.config.task) {
    throw UsageError("--task " + s.task + " does not match checkpoint task " +
                     std::string(icg::task_name(ckpt.config.task)));
  }
  const auto averaging = icg::parse_averaging(s.averaging);
  const json result = evaluate(ckpt, load_samples(s), averaging);
  emit(result.dump(2) + "\n", s.out);
  return kOk;
}

int cmd_predict(const RunSettings& s, const std::vector<std::string>& checkpoints) {
  if (checkpoints.empty()) throw UsageError("--checkpoint is required");
  require(s.data, "--data");
  require(s.lexicon, "--lexicon");
  require(s.record, "--record");
  std::optional<icg::Checkpoint> placement, intensity;
  for (const auto& path : checkpoints) {
    icg::Checkpoint c = icg::load_checkpoint(path);
    auto& slot = c.config.task == icg::Task::placement ? placement : intensity;
    if (slot) throw UsageError("two checkpoints for task " + std::string(icg::task_name(c.config.task)));
    slot = std::move(c);
  }

  const auto records = icg::load_dataset(s.data);
  const auto it = std::find_if(records.begin(), records.end(),
                               [&](const icg::UtteranceRecord& r) { return r.id == s.record; });
  if (it == records.end()) throw icg::ValidationError("record '" + s.record + "' not in dataset");
  icg::UtteranceRecord record = *it;
  if (!s.emotion.empty()) {
    const auto e = icg::parse_emotion(s.emotion);
    if (!e) throw UsageError("--emotion: unknown label '" + s.emotion + "'");
    record.emotion = *e;
  }

  json words = json::array();
  for (const auto& x : icg::expand_record(record, icg::load_lexicon(s.lexicon))) {
    json w = {{"word_index", x.word_index},
              {"word", record.words[x.word_index].text},
              {"placement_prob", nullptr},
              {"placement", nullptr},
              {"intensity", nullptr}};
    if (placement) {
      const double p =
          icg::forward(placement->params, placement->config, *x.sentence_embedding, x.fused_embedding)
              .value;
      w["placement_prob"] = p;
      w["placement"] = icg::decide_placement(p);
    }
    if (intensity) {
      w["intensity"] =
          icg::forward(intensity->params, intensity->config, *x.sentence_embedding, x.fused_embedding)
              .value;
    }
    words.push_back(std::move(w));
  }
  emit(words.dump(2) + "\n", s.out);
  return kOk;
}

std::vector<icg::ModelConfig> sweep(const RunSettings& s, bool depth_given, bool sa_given) {
  if (depth_given && s.depth == 0) throw UsageError("--depth must be at least 1");
  if (sa_given && s.sa == 0) throw UsageError("--sa must be at least 1");
  RunSettings base = s;
  base.depth = 0;
  base.sa = 0;
  const icg::ModelConfig defaults = model_config(base);
  std::vector<icg::ModelConfig> out;
  for (const auto& ref : icg::kReferenceCosts) {
    if (depth_given && ref.depth != s.depth) continue;
    if (sa_given && ref.sa_blocks != s.sa) continue;
    icg::ModelConfig c = defaults;
    c.depth = ref.depth;
    c.sa_blocks = ref.sa_blocks;
    out.push_back(c);
  }
  if (out.empty()) {
    icg::ModelConfig c = defaults;
    c.depth = depth_given ? s.depth : defaults.depth;
    c.sa_blocks = sa_given ? s.sa : defaults.sa_blocks;
    c.validate();
    out.push_back(c);
  }
  return out;
}

std::string csv_number(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

int cmd_flops(const RunSettings& s, bool depth_given, bool sa_given) {
  std::ostringstream csv;
  csv << "depth,sa,gflops,median_ms,p95_ms,cv\n";
  for (const auto& c : sweep(s, depth_given, sa_given)) {
    csv << c.depth << ',' << c.sa_blocks << ',' << csv_number(icg::count_flops(c).gflops())
        << ",,,\n";
  }
  emit(csv.str(), s.out);
  return kOk;
}

int cmd_bench(const RunSettings& s, bool depth_given, bool sa_given) {
  std::vector<icg::ModelConfig> configs;
  std::optional<icg::Checkpoint> ckpt;
  if (!s.checkpoint.empty()) {
    ckpt = icg::load_checkpoint(s.checkpoint);
    configs.push_back(ckpt->config);
  } else {
    configs = sweep(s, depth_given, sa_given);
  }
  std::mt19937_64 rng(s.seed);
  std::normal_distribution<double> normal;
  std::vector<double> sentence(icg::kSentenceDim), word(icg::kWordDim);
  for (double& v : sentence) v = normal(rng);
  for (double& v : word) v = normal(rng);

  std::ostringstream csv;
  csv << "depth,sa,gflops,median_ms,p95_ms,cv\n";
  for (const auto& c : configs) {
    const icg::ModelParams params = ckpt ? ckpt->params : icg::init_params(c, s.seed);
    const auto r = icg::bench_latency(params, c, sentence, word, s.iterations, s.warmup);
    csv << c.depth << ',' << c.sa_blocks << ',' << csv_number(icg::count_flops(c).gflops()) << ','
        << csv_number(r.median_ms) << ',' << csv_number(r.p95_ms) << ',' << csv_number(r.cv)
        << '\n';
  }
  emit(csv.str(), s.out);
  return kOk;
}

int cmd_baseline(const RunSettings& s) {
  require(s.data, "--data");
  const fs::path dir = output_dir(s);
  icg::BaselineConfig cfg;
  if (!s.endpoint.empty()) cfg.endpoint = s.endpoint;
  if (!s.model.empty()) cfg.model = s.model;
  if (!s.api_key_env.empty()) cfg.api_key_env = s.api_key_env;
  cfg.concurrency = s.concurrency;
  cfg.max_retries = s.max_retries;
  try {
    cfg.validate();
  } catch (const icg::ConfigError& e) {
    throw UsageError(e.what());
  }
  const auto records = select_split(icg::load_dataset(s.data), s);
  icg::HttpChatTransport transport(cfg);
  const auto ev = icg::evaluate_baseline(records, cfg, transport, icg::parse_averaging(s.averaging));
  icg::write_baseline_archive(ev, dir / "baseline_responses.jsonl");
  json report = {{"prompt_version", icg::kPromptVersion},
                 {"model", cfg.model},
                 {"succeeded", ev.succeeded},
                 {"failed", ev.failed},
                 {"classification", nullptr},
                 {"regression", nullptr}};
  if (ev.classification) report["classification"] = icg::to_json(*ev.classification);
  if (ev.regression) report["regression"] = icg::to_json(*ev.regression);
  write_json(report, dir / "baseline_metrics.json");
  std::cout << report.dump(2) << '\n';
  return kOk;
}

int report(ExitCode code, const std::string& what) {
  std::cerr << "icg: " << what << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iconic gesture placement and intensity engine"};
  app.require_subcommand(1);
  RunSettings s;
  std::vector<std::string> predict_checkpoints;

  Command synth(app, "synth-data", "Write a synthetic dataset and lexicon");
  synth.opt("seed", s.seed, "Generator seed").opt("records", s.records, "Number of records");
  synth.opt("out", s.out, "Output directory");

  auto add_model = [&s](Command& c) {
    c.opt("task", s.task, "placement or intensity")
        .opt("preset", s.preset, "default or tiny")
        .opt("depth", s.depth, "Cross-attention layers")
        .opt("sa", s.sa, "Self-attention blocks per layer")
        .opt("latents", s.latents, "Number of latent vectors")
        .opt("latent_dim", s.latent_dim, "Latent width")
        .opt("source_dim", s.source_dim, "Projected token width");
  };

  Command train(app, "train", "Train one task head on an 80/20 split");
  add_model(train);
  train.opt("data", s.data, "Dataset JSONL")
      .opt("lexicon", s.lexicon, "Emotion lexicon JSON")
      .opt("seed", s.seed, "Split, init and shuffle seed")
      .opt("out", s.out, "Output directory")
      .opt("epochs", s.epochs, "Training epochs")
      .opt("lr", s.lr, "Adam learning rate")
      .opt("batch_size", s.batch_size, "Samples per optimizer step")
      .opt("pos_weight", s.pos_weight, "Positive-class weight for placement")
      .opt("resume", s.resume, "Checkpoint to continue from");

  Command eval(app, "eval", "Score a checkpoint on a dataset");
  eval.opt("checkpoint", s.checkpoint, "Checkpoint file")
      .opt("data", s.data, "Dataset JSONL")
      .opt("lexicon", s.lexicon, "Emotion lexicon JSON")
      .opt("task", s.task, "Expected checkpoint task")
      .opt("split", s.split, "all, train or test")
      .opt("seed", s.seed, "Split seed")
      .opt("averaging", s.averaging, "macro or weighted")
      .opt("out", s.out, "Write metrics JSON here instead of stdout");

  Command predict(app, "predict", "Per-word placement and intensity for one record");
  predict.app()
      ->add_option("--checkpoint", predict_checkpoints, "Placement and/or intensity checkpoint")
      ->expected(1, 2);
  predict.opt("data", s.data, "Dataset JSONL")
      .opt("lexicon", s.lexicon, "Emotion lexicon JSON")
      .opt("record", s.record, "Record id")
      .opt("emotion", s.emotion, "Override the record's emotion")
      .opt("out", s.out, "Write JSON here instead of stdout");

  Command flops(app, "flops", "Analytic GFLOPs for the depth/sa sweep");
  add_model(flops);
  flops.opt("out", s.out, "Write CSV here instead of stdout");

  Command bench(app, "bench", "Single-thread latency for the depth/sa sweep");
  add_model(bench);
  bench.opt("checkpoint", s.checkpoint, "Benchmark this checkpoint only")
      .opt("iterations", s.iterations, "Timed iterations")
      .opt("warmup", s.warmup, "Untimed warmup iterations")
      .opt("seed", s.seed, "Input and init seed")
      .opt("out", s.out, "Write CSV here instead of stdout");

  Command baseline(app, "baseline", "Score a chat-completion model on a dataset");
  baseline.opt("data", s.data, "Dataset JSONL")
      .opt("split", s.split, "all, train or test")
      .opt("seed", s.seed, "Split seed")
      .opt("averaging", s.averaging, "macro or weighted")
      .opt("endpoint", s.endpoint, "Chat completions URL")
      .opt("model", s.model, "Model name")
      .opt("api_key_env", s.api_key_env, "Environment variable holding the API key")
      .opt("concurrency", s.concurrency, "Parallel requests")
      .opt("max_retries", s.max_retries, "Retries per record")
      .opt("out", s.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  auto given = [](CLI::App* sub, const char* flag) { return sub->count(flag) > 0; };

  try {
    for (Command* c : {&synth, &train, &eval, &predict, &flops, &bench, &baseline}) {
      if (c->app()->parsed()) c->merge_config();
    }
    if (synth.app()->parsed()) return cmd_synth_data(s);
    if (train.app()->parsed()) return cmd_train(s);
    if (eval.app()->parsed()) return cmd_eval(s, given(eval.app(), "--task"));
    if (predict.app()->parsed()) return cmd_predict(s, predict_checkpoints);
    if (flops.app()->parsed()) {
      return cmd_flops(s, given(flops.app(), "--depth"), given(flops.app(), "--sa"));
    }
    if (bench.app()->parsed()) {
      return cmd_bench(s, given(bench.app(), "--depth"), given(bench.app(), "--sa"));
    }
    if (baseline.app()->parsed()) return cmd_baseline(s);
  } catch (const UsageError& e) {
    return report(kUsage, e.what());
  } catch (const icg::ConfigError& e) {
    return report(kUsage, e.what());
  } catch (const icg::DatasetError& e) {
    return report(kData, e.what());
  } catch (const icg::CheckpointError& e) {
    return report(kData, e.what());
  } catch (const icg::ValidationError& e) {
    return report(kData, e.what());
  } catch (const std::exception& e) {
    return report(kRuntime, e.what());
  }
  return kUsage;
}
