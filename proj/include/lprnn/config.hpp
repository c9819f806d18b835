#pragma once

// INI-style run and architecture configs.
//
// Every file starts with a version marker:
//
//   [lprnn]
//   version = 1
//
// Run configs add [model], [train], [data], [widen] and [sweep]. Architecture
// configs (for what-if accounting) add [arch], [widen] and one [layer.N]
// section per layer. Unknown sections and keys are rejected; errors name the
// offending field and, where possible, its line.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lprnn/corpus.hpp"
#include "lprnn/errors.hpp"
#include "lprnn/model_spec.hpp"
#include "lprnn/quantization.hpp"
#include "lprnn/training.hpp"

namespace lprnn {

inline constexpr int kConfigVersion = 1;

/// Parsed INI text with per-key line numbers for diagnostics.
class IniDocument {
 public:
  using Section = std::map<std::string, std::string>;

  static IniDocument parse(const std::string& text, std::string source = "<config>") {
    IniDocument doc;
    doc.source_ = std::move(source);
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
      boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(doc.source_ + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    for (const auto& [name, child] : tree) {
      if (child.empty() && !child.data().empty()) {
        throw ConfigError(doc.source_ + ": key '" + name + "' outside any section");
      }
      Section& s = doc.sections_[name];
      for (const auto& [key, value] : child) s[key] = value.data();
    }
    doc.index_lines(text);
    return doc;
  }

  static IniDocument parse_file(const std::string& path) {
    std::string text;
    try {
      text = read_text_file(path);
    } catch (const DataError& e) {
      throw ConfigError(std::string("config file: ") + e.what());
    }
    return parse(text, path);
  }

  const std::string& source() const noexcept { return source_; }
  bool has_section(const std::string& s) const { return sections_.count(s) > 0; }
  const std::map<std::string, Section>& sections() const noexcept { return sections_; }

  std::optional<std::string> get(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return std::nullopt;
    auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    return k->second;
  }

  [[noreturn]] void fail(const std::string& section, const std::string& key,
                         const std::string& message) const {
    std::string where = source_;
    auto it = lines_.find(section + "\n" + key);
    if (it != lines_.end()) where += ":" + std::to_string(it->second);
    throw ConfigError(where + ": " + section + "." + key + ": " + message);
  }

  void require_keys_known(const std::string& section, const std::set<std::string>& known) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return;
    for (const auto& [key, value] : s->second) {
      if (!known.count(key)) fail(section, key, "unknown key");
    }
  }

  // Typed accessors: return `fallback` when the key is absent.

  std::string str(const std::string& section, const std::string& key, std::string fallback) const {
    return get(section, key).value_or(std::move(fallback));
  }

  template <typename Int>
  Int integer(const std::string& section, const std::string& key, Int fallback) const {
    auto v = get(section, key);
    if (!v) return fallback;
    return parse_integer<Int>(section, key, *v);
  }

  double real(const std::string& section, const std::string& key, double fallback) const {
    auto v = get(section, key);
    if (!v) return fallback;
    return parse_real(section, key, *v);
  }

  bool boolean(const std::string& section, const std::string& key, bool fallback) const {
    auto v = get(section, key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    fail(section, key, "expected true/false, got '" + *v + "'");
  }

  int bits(const std::string& section, const std::string& key, int fallback) const {
    const int b = integer<int>(section, key, fallback);
    if (!is_allowed_bits(b)) {
      fail(section, key, std::to_string(b) + " is not an allowed bit-width (1, 2, 4, 8, 16, 32)");
    }
    return b;
  }

  template <typename Int>
  std::vector<Int> integer_list(const std::string& section, const std::string& key,
                                std::vector<Int> fallback) const {
    auto v = get(section, key);
    if (!v) return fallback;
    std::vector<Int> out;
    for (const auto& item : split_list(*v)) out.push_back(parse_integer<Int>(section, key, item));
    if (out.empty()) fail(section, key, "list must not be empty");
    return out;
  }

  std::vector<int> bits_list(const std::string& section, const std::string& key,
                             std::vector<int> fallback) const {
    auto out = integer_list<int>(section, key, std::move(fallback));
    for (int b : out) {
      if (!is_allowed_bits(b)) {
        fail(section, key, std::to_string(b) + " is not an allowed bit-width (1, 2, 4, 8, 16, 32)");
      }
    }
    return out;
  }

  static std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
      std::size_t comma = s.find(',', pos);
      if (comma == std::string_view::npos) comma = s.size();
      std::string_view item = s.substr(pos, comma - pos);
      while (!item.empty() && std::isspace(static_cast<unsigned char>(item.front()))) item.remove_prefix(1);
      while (!item.empty() && std::isspace(static_cast<unsigned char>(item.back()))) item.remove_suffix(1);
      if (!item.empty()) out.emplace_back(item);
      pos = comma + 1;
    }
    return out;
  }

  template <typename Int>
  Int parse_integer(const std::string& section, const std::string& key, std::string_view text) const {
    Int v{};
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size()) {
      fail(section, key, "expected an integer, got '" + std::string(text) + "'");
    }
    return v;
  }

  double parse_real(const std::string& section, const std::string& key, std::string_view text) const {
    double v = 0.0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size() || !std::isfinite(v)) {
      fail(section, key, "expected a finite number, got '" + std::string(text) + "'");
    }
    return v;
  }

 private:
  // Records "section\nkey" -> 1-based line for every key line in the text.
  void index_lines(const std::string& text) {
    std::istringstream in(text);
    std::string line, section;
    int n = 0;
    while (std::getline(in, line)) {
      ++n;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == ';' || line[first] == '#') continue;
      if (line[first] == '[') {
        const auto close = line.find(']', first);
        section = line.substr(first + 1, close - first - 1);
        continue;
      }
      auto eq = line.find('=', first);
      if (eq == std::string::npos) continue;
      std::string key = line.substr(first, eq - first);
      while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
      lines_.emplace(section + "\n" + key, n);
    }
  }

  std::string source_;
  std::map<std::string, Section> sections_;
  std::map<std::string, int> lines_;
};

namespace detail {

inline void check_version(const IniDocument& doc) {
  auto v = doc.get("lprnn", "version");
  if (!v) throw ConfigError(doc.source() + ": missing [lprnn] version");
  const int version = doc.parse_integer<int>("lprnn", "version", *v);
  if (version != kConfigVersion) {
    doc.fail("lprnn", "version", "unsupported config version " + std::to_string(version));
  }
  doc.require_keys_known("lprnn", {"version"});
}

inline void check_sections(const IniDocument& doc, const std::set<std::string>& known,
                           std::string_view prefix = {}) {
  for (const auto& [name, keys] : doc.sections()) {
    if (known.count(name)) continue;
    if (!prefix.empty() && std::string_view(name).starts_with(prefix)) continue;
    throw ConfigError(doc.source() + ": unknown section [" + name + "]");
  }
}

inline std::string resolve_path(const std::string& base_file, const std::string& p) {
  if (p.empty()) return p;
  std::filesystem::path path(p);
  if (path.is_absolute()) return p;
  return (std::filesystem::path(base_file).parent_path() / path).lexically_normal().string();
}

}  // namespace detail

struct ModelConfig {
  VocabMode vocab_mode = VocabMode::kWord;
  std::size_t max_vocab = 10000;
  std::size_t embed = 32;
  std::size_t hidden = 64;
  QuantSpec quant;
  bool quantize_io = true;
};

struct DataConfig {
  std::string train;
  std::string valid;
};

struct WidenConfig {
  double factor = 1.0;  // 1 disables widening
  double budget = 0.02;
  std::vector<std::size_t> select;  // explicit layer indices; empty = automatic
};

struct SweepConfig {
  std::vector<int> weight_bits{kFullPrecisionBits};
  std::vector<int> activation_bits{kFullPrecisionBits};
  std::vector<std::size_t> neurons;  // empty = model.hidden
};

struct RunConfig {
  ModelConfig model;
  TrainSchedule schedule;
  std::uint64_t seed = 1;
  DataConfig data;
  WidenConfig widen;
  SweepConfig sweep;
};

inline WidenConfig parse_widen_section(const IniDocument& doc, WidenConfig w = {}) {
  doc.require_keys_known("widen", {"factor", "budget", "select"});
  w.factor = doc.real("widen", "factor", w.factor);
  if (!(w.factor >= 1.0)) doc.fail("widen", "factor", "must be >= 1");
  w.budget = doc.real("widen", "budget", w.budget);
  if (!(w.budget >= 0.0)) doc.fail("widen", "budget", "must be >= 0");
  if (auto sel = doc.get("widen", "select"); sel && *sel != "auto") {
    w.select = doc.integer_list<std::size_t>("widen", "select", {});
  }
  return w;
}

inline RunConfig parse_run_config(const IniDocument& doc) {
  detail::check_version(doc);
  detail::check_sections(doc, {"lprnn", "model", "train", "data", "widen", "sweep"});
  RunConfig c;

  doc.require_keys_known("model", {"vocab_mode", "max_vocab", "embed", "hidden", "weight_bits",
                                   "activation_bits", "quantize_io"});
  if (auto mode = doc.get("model", "vocab_mode")) {
    try {
      c.model.vocab_mode = parse_vocab_mode(*mode);
    } catch (const std::exception& e) {
      doc.fail("model", "vocab_mode", e.what());
    }
  }
  c.model.max_vocab = doc.integer<std::size_t>("model", "max_vocab", c.model.max_vocab);
  c.model.embed = doc.integer<std::size_t>("model", "embed", c.model.embed);
  if (c.model.embed == 0) doc.fail("model", "embed", "must be >= 1");
  c.model.hidden = doc.integer<std::size_t>("model", "hidden", c.model.hidden);
  if (c.model.hidden == 0) doc.fail("model", "hidden", "must be >= 1");
  c.model.quant.weight_bits = doc.bits("model", "weight_bits", kFullPrecisionBits);
  c.model.quant.activation_bits = doc.bits("model", "activation_bits", kFullPrecisionBits);
  c.model.quantize_io = doc.boolean("model", "quantize_io", c.model.quantize_io);

  doc.require_keys_known("train", {"lr", "clip", "epochs", "batch", "seqlen", "lr_decay",
                                   "patience", "eval_window", "seed"});
  TrainSchedule& s = c.schedule;
  s.learning_rate = doc.real("train", "lr", s.learning_rate);
  if (!(s.learning_rate >= 0.0)) doc.fail("train", "lr", "must be >= 0");
  s.clip_norm = doc.real("train", "clip", s.clip_norm);
  s.epochs = doc.integer<std::size_t>("train", "epochs", s.epochs);
  s.batch = doc.integer<std::size_t>("train", "batch", s.batch);
  if (s.batch == 0) doc.fail("train", "batch", "must be >= 1");
  s.seqlen = doc.integer<std::size_t>("train", "seqlen", s.seqlen);
  if (s.seqlen == 0) doc.fail("train", "seqlen", "must be >= 1");
  s.lr_decay = doc.real("train", "lr_decay", s.lr_decay);
  if (!(s.lr_decay > 0.0 && s.lr_decay <= 1.0)) doc.fail("train", "lr_decay", "must be in (0, 1]");
  s.patience = doc.integer<std::size_t>("train", "patience", s.patience);
  s.eval_window = doc.integer<std::size_t>("train", "eval_window", s.eval_window);
  if (s.eval_window == 0) doc.fail("train", "eval_window", "must be >= 1");
  c.seed = doc.integer<std::uint64_t>("train", "seed", c.seed);

  doc.require_keys_known("data", {"train", "valid"});
  c.data.train = detail::resolve_path(doc.source(), doc.str("data", "train", ""));
  c.data.valid = detail::resolve_path(doc.source(), doc.str("data", "valid", ""));

  c.widen = parse_widen_section(doc);

  doc.require_keys_known("sweep", {"weight_bits", "activation_bits", "neurons"});
  c.sweep.weight_bits = doc.bits_list("sweep", "weight_bits", {c.model.quant.weight_bits});
  c.sweep.activation_bits = doc.bits_list("sweep", "activation_bits", {c.model.quant.activation_bits});
  c.sweep.neurons = doc.integer_list<std::size_t>("sweep", "neurons", {c.model.hidden});
  for (std::size_t h : c.sweep.neurons) {
    if (h == 0) doc.fail("sweep", "neurons", "entries must be >= 1");
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  return parse_run_config(IniDocument::parse_file(path));
}

struct ArchConfig {
  ModelSpec spec;
  std::size_t batch = 1;
  std::size_t timesteps = 1;
  WidenConfig widen;
};

/// Layers come from [layer.N] sections, N = 1..L contiguous. Each layer needs
/// kind and out; in is required for the first layer only (later layers may
/// state it, and it must then match the upstream width).
inline ArchConfig parse_arch_config(const IniDocument& doc) {
  detail::check_version(doc);
  detail::check_sections(doc, {"lprnn", "arch", "widen"}, "layer.");
  ArchConfig a;
  doc.require_keys_known("arch", {"name", "batch", "timesteps"});
  a.spec.name = doc.str("arch", "name", "model");
  a.batch = doc.integer<std::size_t>("arch", "batch", a.batch);
  if (a.batch == 0) doc.fail("arch", "batch", "must be >= 1");
  a.timesteps = doc.integer<std::size_t>("arch", "timesteps", a.timesteps);
  if (a.timesteps == 0) doc.fail("arch", "timesteps", "must be >= 1");
  WidenConfig defaults;
  defaults.factor = 1.25;
  a.widen = parse_widen_section(doc, defaults);

  std::map<std::size_t, std::string> layer_sections;
  for (const auto& [name, keys] : doc.sections()) {
    if (!std::string_view(name).starts_with("layer.")) continue;
    const std::string num = name.substr(6);
    std::size_t idx = 0;
    auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), idx);
    if (ec != std::errc() || p != num.data() + num.size() || idx == 0) {
      throw ConfigError(doc.source() + ": bad layer section [" + name + "]");
    }
    layer_sections[idx] = name;
  }
  if (layer_sections.empty()) throw ConfigError(doc.source() + ": no [layer.N] sections");
  if (layer_sections.rbegin()->first != layer_sections.size()) {
    throw ConfigError(doc.source() + ": layer sections must be numbered 1.." +
                      std::to_string(layer_sections.size()) + " without gaps");
  }

  for (const auto& [idx, sec] : layer_sections) {
    doc.require_keys_known(sec, {"name", "kind", "in", "out", "weight_bits", "activation_bits",
                                 "bias_bits"});
    LayerSpec l;
    l.index = idx;
    l.name = doc.str(sec, "name", "layer" + std::to_string(idx));
    auto kind = doc.get(sec, "kind");
    if (!kind) throw ConfigError(doc.source() + ": [" + sec + "] missing kind");
    try {
      l.kind = parse_layer_kind(*kind);
    } catch (const ConfigError& e) {
      doc.fail(sec, "kind", e.what());
    }
    if (!doc.get(sec, "out")) throw ConfigError(doc.source() + ": [" + sec + "] missing out");
    l.out_dim = doc.integer<std::size_t>(sec, "out", 0);
    if (l.out_dim == 0) doc.fail(sec, "out", "must be >= 1");
    if (idx == 1) {
      if (!doc.get(sec, "in")) throw ConfigError(doc.source() + ": [" + sec + "] missing in");
      l.in_dim = doc.integer<std::size_t>(sec, "in", 0);
    } else {
      const std::size_t upstream = a.spec.layers.back().downstream_width();
      l.in_dim = doc.integer<std::size_t>(sec, "in", upstream);
      if (l.in_dim != upstream) {
        doc.fail(sec, "in", std::to_string(l.in_dim) + " does not match upstream width " +
                                std::to_string(upstream));
      }
    }
    l.weight_bits = doc.bits(sec, "weight_bits", kFullPrecisionBits);
    l.activation_bits = doc.bits(sec, "activation_bits", kFullPrecisionBits);
    if (doc.get(sec, "bias_bits")) l.bias_bits = doc.bits(sec, "bias_bits", kFullPrecisionBits);
    a.spec.layers.push_back(std::move(l));
  }
  a.spec.validate();
  return a;
}

inline ArchConfig load_arch_config(const std::string& path) {
  return parse_arch_config(IniDocument::parse_file(path));
}

}  // namespace lprnn
