#pragma once

// What-if accounting: re-assign bit-widths on an architecture, optionally
// widen some layers, and report size, memory and compute against the
// un-widened assignment.

#include <charconv>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lprnn/accounting.hpp"
#include "lprnn/config.hpp"
#include "lprnn/model_spec.hpp"
#include "lprnn/widening.hpp"

namespace lprnn {

/// One "selector=bits" rule. Selectors: all, fc, lstm (uni- and
/// bidirectional), embedding, output, or a 1-based layer index.
struct BitsRule {
  std::string selector;
  int bits = kFullPrecisionBits;
};

inline BitsRule parse_bits_rule(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("bit assignment '" + std::string(text) + "' must look like selector=bits");
  }
  BitsRule r{std::string(text.substr(0, eq)), 0};
  const std::string_view num = text.substr(eq + 1);
  auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), r.bits);
  if (ec != std::errc() || p != num.data() + num.size() || !is_allowed_bits(r.bits)) {
    throw ConfigError("bit assignment '" + std::string(text) + "': invalid bit-width");
  }
  return r;
}

inline bool rule_matches(const BitsRule& r, const LayerSpec& l) {
  if (r.selector == "all") return true;
  if (r.selector == "fc") return l.kind == LayerKind::kFullyConnected;
  if (r.selector == "lstm") return is_recurrent(l.kind);
  if (r.selector == "embedding") return l.kind == LayerKind::kEmbedding;
  if (r.selector == "output") return l.kind == LayerKind::kOutput;
  std::size_t idx = 0;
  auto [p, ec] = std::from_chars(r.selector.data(), r.selector.data() + r.selector.size(), idx);
  if (ec == std::errc() && p == r.selector.data() + r.selector.size()) return idx == l.index;
  throw ConfigError("unknown layer selector '" + r.selector + "'");
}

struct BitsAssignment {
  std::vector<BitsRule> weight;      // applied in order; later rules win
  std::vector<BitsRule> activation;
};

inline ModelSpec assign_bits(ModelSpec spec, const BitsAssignment& a) {
  for (LayerSpec& l : spec.layers) {
    for (const BitsRule& r : a.weight) {
      if (rule_matches(r, l)) l.weight_bits = r.bits;
    }
    for (const BitsRule& r : a.activation) {
      if (rule_matches(r, l)) l.activation_bits = r.bits;
    }
  }
  spec.validate();
  return spec;
}

struct WhatIfOptions {
  BitsAssignment bits;
  WidenConfig widen;  // factor 1 = no widening
  std::size_t batch = 1;
  std::size_t timesteps = 1;
};

struct WhatIfResult {
  ModelSpec assigned;  // architecture after bit assignment
  ModelSpec widened;   // assigned + widening plan
  WidenPlan plan;
  bool auto_selected = false;
  double budget = 0.0;
  std::size_t batch = 1;
  std::size_t timesteps = 1;
  CompareReport report;
};

inline WhatIfResult run_whatif(const ModelSpec& arch, const WhatIfOptions& opt) {
  WhatIfResult r;
  r.assigned = assign_bits(arch, opt.bits);
  r.batch = opt.batch;
  r.timesteps = opt.timesteps;
  r.budget = opt.widen.budget;
  if (opt.widen.factor > 1.0) {
    if (opt.widen.select.empty()) {
      r.plan = select_layers(r.assigned, opt.widen.budget, opt.widen.factor);
      r.auto_selected = true;
    } else {
      r.plan = manual_plan(r.assigned, opt.widen.select, opt.widen.factor);
    }
  }
  r.widened = apply_widening(r.assigned, r.plan);
  r.report = compare(r.assigned, r.widened, opt.batch, opt.timesteps);
  return r;
}

namespace detail {

inline std::string fixed(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

inline std::string signed_fixed(double v, int precision) {
  return (v >= 0 ? "+" : "") + fixed(v, precision);
}

inline std::string pad(std::string s, std::size_t w, bool left = false) {
  if (s.size() >= w) return s;
  return left ? s + std::string(w - s.size(), ' ') : std::string(w - s.size(), ' ') + s;
}

}  // namespace detail

inline std::string render_whatif(const WhatIfResult& r, int precision = 4) {
  using detail::pad;
  std::ostringstream os;
  os << "architecture: " << r.widened.name << " (" << r.widened.layers.size()
     << " layers, batch " << r.batch << ", timesteps " << r.timesteps << ")\n";
  if (r.plan.empty()) {
    os << "widening: none";
    if (r.plan.no_candidates) os << " (no fully-connected layer qualifies)";
    os << "\n";
  } else {
    os << "widening: factor " << r.plan.factor << " on layers ";
    for (std::size_t i = 0; i < r.plan.selected.size(); ++i) {
      os << (i ? "," : "") << r.plan.selected[i];
    }
    if (r.plan.bypassed_selection) {
      os << " (single hidden layer, widened directly)";
    } else if (r.auto_selected) {
      os << " (auto, budget " << detail::fixed(100.0 * r.budget, 2) << "%)";
    } else {
      os << " (manual)";
    }
    os << "\n";
  }
  os << "\n";

  const auto& sz = r.report.variant_size.layers;
  const auto& mem = r.report.variant_memory.layers;
  const auto& cmp = r.report.variant_compute.layers;
  os << pad("idx", 4) << "  " << pad("name", 12, true) << pad("kind", 20, true) << pad("in", 8)
     << pad("out", 8) << pad("params", 13) << pad("w", 4) << pad("a", 4) << pad("size_bits", 15)
     << pad("mem_bits", 13) << pad("macs", 13) << "\n";
  for (std::size_t i = 0; i < r.widened.layers.size(); ++i) {
    const LayerSpec& l = r.widened.layers[i];
    os << pad(std::to_string(l.index) + (r.plan.contains(l.index) ? "*" : ""), 4) << "  "
       << pad(l.name, 12, true) << pad(std::string(to_string(l.kind)), 20, true)
       << pad(std::to_string(l.in_dim), 8) << pad(std::to_string(l.out_dim), 8)
       << pad(std::to_string(sz[i].params.total()), 13) << pad(std::to_string(l.weight_bits), 4)
       << pad(std::to_string(l.activation_bits), 4) << pad(std::to_string(sz[i].bits), 15)
       << pad(std::to_string(mem[i].bits), 13) << pad(std::to_string(cmp[i].macs), 13) << "\n";
  }
  if (!r.plan.empty()) os << "(* = widened)\n";
  os << "\n";

  auto line = [&](const char* what, const Delta& d, const char* unit, const Ratio* base_ratio,
                  const Ratio* var_ratio) {
    os << what << ": " << d.baseline << " -> " << d.variant << " " << unit << "; delta "
       << detail::signed_fixed(d.relative_pct, precision) << "% relative, "
       << detail::signed_fixed(d.points_pct, precision) << " points of the all-32-bit figure";
    if (base_ratio && var_ratio) {
      os << "; ratio to all-32-bit " << detail::fixed(100.0 * base_ratio->value(), precision)
         << "% -> " << detail::fixed(100.0 * var_ratio->value(), precision) << "%";
    }
    os << "\n";
  };
  line("model size", r.report.size, "bits", &r.report.baseline_size.ratio, &r.report.variant_size.ratio);
  line("runtime memory", r.report.memory, "bits", &r.report.baseline_memory.ratio,
       &r.report.variant_memory.ratio);
  line("compute", r.report.compute, "MACs/step", nullptr, nullptr);

  bool recurrent_reduced = false;
  for (const LayerSpec& l : r.widened.layers) {
    recurrent_reduced = recurrent_reduced || (is_recurrent(l.kind) && l.activation_bits < kFullPrecisionBits);
  }
  if (recurrent_reduced) {
    os << "note: the reference figure for 8-bit recurrent activations with everything else at 32 bits "
          "is 78.6% of the original memory; layer dimensions here are a reconstruction, so the "
          "ratio above is an estimate under that assumption.\n";
  }
  return os.str();
}

}  // namespace lprnn
