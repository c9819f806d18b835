#pragma once

// Bit-width x neuron-count grid sweeps. Cells are independent: each derives
// its own seed from (base seed, k_w, k_a, H), so the output does not depend
// on how many worker threads run them or in which order they finish.

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "lprnn/experiment.hpp"

namespace lprnn {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t cell_seed(std::uint64_t base, int weight_bits, int activation_bits,
                               std::size_t neurons) {
  std::uint64_t h = splitmix64(base);
  h = splitmix64(h ^ static_cast<std::uint64_t>(weight_bits));
  h = splitmix64(h ^ static_cast<std::uint64_t>(activation_bits));
  return splitmix64(h ^ static_cast<std::uint64_t>(neurons));
}

struct SweepCell {
  int weight_bits = kFullPrecisionBits;
  int activation_bits = kFullPrecisionBits;
  std::size_t neurons = 0;
};

/// Grid order: weight bits outermost, then activation bits, then neurons,
/// each in the order given.
inline std::vector<SweepCell> sweep_grid(const SweepConfig& s) {
  if (s.weight_bits.empty() || s.activation_bits.empty() || s.neurons.empty()) {
    throw ConfigError("sweep: weight_bits, activation_bits and neurons must be non-empty");
  }
  std::vector<SweepCell> cells;
  for (int kw : s.weight_bits) {
    for (int ka : s.activation_bits) {
      for (std::size_t h : s.neurons) {
        if (!is_allowed_bits(kw)) {
          throw ConfigError("sweep.weight_bits: invalid bit-width " + std::to_string(kw));
        }
        if (!is_allowed_bits(ka)) {
          throw ConfigError("sweep.activation_bits: invalid bit-width " + std::to_string(ka));
        }
        if (h == 0) throw ConfigError("sweep.neurons: entries must be >= 1");
        cells.push_back({kw, ka, h});
      }
    }
  }
  return cells;
}

struct SweepRow {
  SweepCell cell;
  std::uint64_t seed = 0;
  double ppw = std::numeric_limits<double>::quiet_NaN();
  double mean_nll = std::numeric_limits<double>::quiet_NaN();
  double size_ratio = 0.0;
  double memory_ratio = 0.0;
  std::string status = "ok";
};

inline SweepRow run_sweep_cell(const RunConfig& cfg, const Corpora& corpora, const SweepCell& cell) {
  SweepRow row;
  row.cell = cell;
  row.seed = cell_seed(cfg.seed, cell.weight_bits, cell.activation_bits, cell.neurons);
  const QuantSpec quant{cell.weight_bits, cell.activation_bits};
  const LmDims dims{corpora.vocab.size(), cfg.model.embed, cell.neurons};
  const ModelSpec spec = lm_model_spec(dims.vocab, dims.embed, dims.hidden, quant, cfg.model.quantize_io);
  row.size_ratio = model_size(spec).ratio.value();
  row.memory_ratio = runtime_memory(spec, cfg.schedule.batch, cfg.schedule.seqlen).ratio.value();
  try {
    const RunOutcome run = run_experiment(cfg, corpora, dims, quant, row.seed);
    if (!run.valid) throw DataError("sweep: no validation corpus configured");
    row.ppw = run.valid->ppw;
    row.mean_nll = run.valid->mean_nll;
  } catch (const DivergenceError&) {
    row.status = "diverged";
  } catch (const ConfigError&) {
    row.status = "config_error";
  } catch (const DataError&) {
    row.status = "data_error";
  } catch (const std::exception&) {
    row.status = "error";
  }
  return row;
}

/// Worker count from LPRNN_THREADS, defaulting to the processor count.
inline std::size_t sweep_threads_from_env() {
  if (const char* env = std::getenv("LPRNN_THREADS"); env && *env) {
    char* end = nullptr;
    const unsigned long long n = std::strtoull(env, &end, 10);
    if (*end != '\0' || n == 0) {
      throw ConfigError(std::string("LPRNN_THREADS must be a positive integer, got '") + env + "'");
    }
    return static_cast<std::size_t>(n);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc ? hc : 1;
}

/// Runs every cell on up to `threads` workers; rows come back in grid order.
inline std::vector<SweepRow> run_sweep(const RunConfig& cfg, const Corpora& corpora,
                                       const std::vector<SweepCell>& cells, std::size_t threads) {
  std::vector<SweepRow> rows(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      rows[i] = run_sweep_cell(cfg, corpora, cells[i]);
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, cells.size()));
  if (n == 1) {
    worker();
    return rows;
  }
  std::vector<std::thread> pool;
  pool.reserve(n);
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return rows;
}

inline constexpr const char* kSweepCsvHeader =
    "weight_bits,activation_bits,neurons,ppw,mean_nll,size_ratio,memory_ratio,seed,status";

inline std::string format_g6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string format_sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = std::string(kSweepCsvHeader) + "\n";
  for (const SweepRow& r : rows) {
    out += std::to_string(r.cell.weight_bits) + "," + std::to_string(r.cell.activation_bits) + "," +
           std::to_string(r.cell.neurons) + "," + format_g6(r.ppw) + "," + format_g6(r.mean_nll) +
           "," + format_g6(r.size_ratio) + "," + format_g6(r.memory_ratio) + "," +
           std::to_string(r.seed) + "," + r.status + "\n";
  }
  return out;
}

}  // namespace lprnn
