// lprnn: train, evaluate, sweep and account for quantized LSTM language models.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lprnn/lprnn.hpp"

namespace {

using namespace lprnn;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("failed writing '" + path + "'");
}

std::vector<std::size_t> parse_select(const std::string& text) {
  if (text.empty() || text == "auto") return {};
  std::vector<std::size_t> out;
  for (const auto& item : IniDocument::split_list(text)) {
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size() || v == 0) {
      throw ConfigError("--select: bad layer index '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

struct TrainArgs {
  std::string config;
  std::string out = "model.lprnn";
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = load_run_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  const Corpora corpora = load_corpora(cfg);
  const LmDims dims = configured_dims(cfg, corpora.vocab.size());
  std::printf("model: V=%zu E=%zu H=%zu weight_bits=%d activation_bits=%d seed=%llu\n", dims.vocab,
              dims.embed, dims.hidden, cfg.model.quant.weight_bits, cfg.model.quant.activation_bits,
              static_cast<unsigned long long>(cfg.seed));
  const RunOutcome run = run_experiment(cfg, corpora, dims, cfg.model.quant, cfg.seed,
                                        [](const EpochLog& e) {
                                          std::printf("epoch %zu train_nll %.6f lr %.6g", e.epoch,
                                                      e.train_nll, e.learning_rate);
                                          if (e.valid) std::printf(" valid_ppw %.6f", e.valid->ppw);
                                          std::printf("\n");
                                          std::fflush(stdout);
                                        });
  save_checkpoint(run.model, corpora.vocab, a.out);
  if (run.valid) std::printf("valid ppw %.6f mean_nll %.6f tokens %zu\n", run.valid->ppw,
                             run.valid->mean_nll, run.valid->tokens);
  std::printf("checkpoint written to %s\n", a.out.c_str());
  return exit_code::kOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string corpus;
  std::string config;
  std::string out;
  std::size_t window = 128;
  bool json = false;
};

int cmd_eval(const EvalArgs& a) {
  std::string corpus = a.corpus;
  std::size_t window = a.window;
  if (!a.config.empty()) {
    const RunConfig cfg = load_run_config(a.config);
    if (corpus.empty()) corpus = cfg.data.valid;
    window = cfg.schedule.eval_window;
  }
  if (corpus.empty()) throw ConfigError("eval: no corpus given (--corpus or data.valid in --config)");
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const TokenStream stream = ck.vocab.encode(read_text_file(corpus));
  const EvalReport r = evaluate_ppw(ck.model, stream, window);

  nlohmann::ordered_json j;
  j["ppw"] = r.ppw;
  j["mean_nll"] = r.mean_nll;
  j["tokens"] = r.tokens;
  if (a.json) {
    std::printf("%s\n", j.dump().c_str());
  } else {
    std::printf("ppw %.6f mean_nll %.6f tokens %zu\n", r.ppw, r.mean_nll, r.tokens);
  }
  if (!a.out.empty()) write_text(a.out, j.dump(2) + "\n");
  return exit_code::kOk;
}

struct SweepArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<int> weight_bits, activation_bits;
  std::vector<std::size_t> neurons;
};

int cmd_sweep(const SweepArgs& a) {
  RunConfig cfg = load_run_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (!a.weight_bits.empty()) cfg.sweep.weight_bits = a.weight_bits;
  if (!a.activation_bits.empty()) cfg.sweep.activation_bits = a.activation_bits;
  if (!a.neurons.empty()) cfg.sweep.neurons = a.neurons;
  const auto cells = sweep_grid(cfg.sweep);
  const Corpora corpora = load_corpora(cfg);
  if (corpora.valid.empty()) throw ConfigError("sweep: data.valid is required");
  const std::size_t threads = sweep_threads_from_env();
  const std::string csv = format_sweep_csv(run_sweep(cfg, corpora, cells, threads));
  if (a.out.empty()) {
    std::fwrite(csv.data(), 1, csv.size(), stdout);
  } else {
    write_text(a.out, csv);
    std::printf("%zu rows written to %s\n", cells.size(), a.out.c_str());
  }
  return exit_code::kOk;
}

struct WhatIfArgs {
  std::string config;
  std::string out;
  std::vector<std::string> weight_bits, activation_bits;
  std::optional<double> factor, budget;
  std::optional<std::string> select;
  std::optional<std::size_t> batch, timesteps;
  bool no_widen = false;
  int precision = 4;
};

int cmd_whatif(const WhatIfArgs& a) {
  const ArchConfig arch = load_arch_config(a.config);
  WhatIfOptions opt;
  for (const auto& s : a.weight_bits) opt.bits.weight.push_back(parse_bits_rule(s));
  for (const auto& s : a.activation_bits) opt.bits.activation.push_back(parse_bits_rule(s));
  opt.widen = arch.widen;
  if (a.factor) opt.widen.factor = *a.factor;
  if (a.budget) opt.widen.budget = *a.budget;
  if (a.select) opt.widen.select = parse_select(*a.select);
  if (a.no_widen) opt.widen.factor = 1.0;
  if (!(opt.widen.factor >= 1.0)) throw ConfigError("--factor must be >= 1");
  opt.batch = a.batch.value_or(arch.batch);
  opt.timesteps = a.timesteps.value_or(arch.timesteps);
  const std::string report = render_whatif(run_whatif(arch.spec, opt), a.precision);
  std::fwrite(report.data(), 1, report.size(), stdout);
  if (!a.out.empty()) write_text(a.out, report);
  return exit_code::kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantized LSTM language models: train, eval, sweep, whatif"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  train->add_option("--config", train_args.config, "run config (.ini)")->required();
  train->add_option("--out", train_args.out, "checkpoint path")->capture_default_str();
  train->add_option("--seed", train_args.seed, "override train.seed");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (perplexity per word)");
  eval->add_option("--checkpoint", eval_args.checkpoint, "checkpoint path")->required();
  eval->add_option("--corpus", eval_args.corpus, "text to score");
  eval->add_option("--config", eval_args.config, "run config supplying data.valid and eval_window");
  eval->add_option("--out", eval_args.out, "also write the report as JSON");
  eval->add_option("--window", eval_args.window, "evaluation window")->capture_default_str();
  eval->add_flag("--json", eval_args.json, "print JSON instead of text");

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "train/evaluate a bit-width x neuron grid, emit CSV");
  sweep->add_option("--config", sweep_args.config, "run config (.ini)")->required();
  sweep->add_option("--out", sweep_args.out, "CSV path (default: stdout)");
  sweep->add_option("--seed", sweep_args.seed, "override the base seed");
  sweep->add_option("--weight-bits", sweep_args.weight_bits, "e.g. 32,4,2")->delimiter(',');
  sweep->add_option("--activation-bits", sweep_args.activation_bits, "e.g. 32,4,2")->delimiter(',');
  sweep->add_option("--neurons", sweep_args.neurons, "e.g. 64,96")->delimiter(',');

  WhatIfArgs whatif_args;
  auto* whatif = app.add_subcommand("whatif", "size/memory/compute report for an architecture");
  whatif->add_option("--config", whatif_args.config, "architecture config (.ini)")->required();
  whatif->add_option("--out", whatif_args.out, "also write the report to a file");
  std::optional<std::uint64_t> whatif_seed;
  whatif->add_option("--seed", whatif_seed, "accepted for uniformity; accounting is deterministic");
  whatif->add_option("--weight-bits", whatif_args.weight_bits,
                     "selector=bits, selector in all|fc|lstm|embedding|output|<index>");
  whatif->add_option("--activation-bits", whatif_args.activation_bits, "selector=bits");
  whatif->add_option("--factor", whatif_args.factor, "widening factor");
  whatif->add_option("--budget", whatif_args.budget, "allowed size increase for auto selection");
  whatif->add_option("--select", whatif_args.select, "layer list, e.g. 1,2,5, or auto");
  whatif->add_flag("--no-widen", whatif_args.no_widen, "report bit assignment only");
  whatif->add_option("--batch", whatif_args.batch, "batch size for memory accounting");
  whatif->add_option("--timesteps", whatif_args.timesteps, "timesteps for memory accounting");
  whatif->add_option("--precision", whatif_args.precision, "decimals in percentages")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code::kConfig;
  }

  try {
    if (*train) return cmd_train(train_args);
    if (*eval) return cmd_eval(eval_args);
    if (*sweep) return cmd_sweep(sweep_args);
    if (*whatif) return cmd_whatif(whatif_args);
  } catch (const CorruptCheckpoint& e) {
    std::fprintf(stderr, "corrupt checkpoint: %s\n", e.what());
    return exit_code::kCorruptCheckpoint;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "diverged: %s\n", e.what());
    return exit_code::kDivergence;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return exit_code::kData;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return exit_code::kConfig;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return exit_code::kConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return exit_code::kOk;
}
