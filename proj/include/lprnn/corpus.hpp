#pragma once

// Vocabulary construction and contiguous language-model batching for
// word-level (PTB-format) and character-level text.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lprnn/errors.hpp"

namespace lprnn {

enum class VocabMode { kWord, kChar };

inline const char* to_string(VocabMode m) { return m == VocabMode::kWord ? "word" : "char"; }

inline VocabMode parse_vocab_mode(std::string_view s) {
  if (s == "word") return VocabMode::kWord;
  if (s == "char") return VocabMode::kChar;
  throw ConfigError("vocab mode must be 'word' or 'char', got '" + std::string(s) + "'");
}

inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kEosToken = "<eos>";

using TokenStream = std::vector<int>;

namespace detail {
template <typename Fn>
void for_each_word_token(std::string_view text, Fn&& fn) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    const bool last = nl == std::string_view::npos;
    if (last) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      std::size_t j = i;
      while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
      if (j > i) fn(line.substr(i, j - i));
      i = j;
    }
    // A file that ends with '\n' has no extra empty line after it.
    if (!(last && line.empty())) fn(kEosToken);
    pos = nl + 1;
  }
}
}  // namespace detail

class Vocab {
 public:
  Vocab() = default;

  /// Ids are assigned by descending frequency, ties broken by byte-wise
  /// lexicographic order. Word mode always contains <unk> and <eos>, and is
  /// truncated to `max_size` with the dropped tokens mapping to <unk>.
  /// Character mode has one id per distinct byte and ignores `max_size`.
  static Vocab build(std::string_view text, VocabMode mode, std::size_t max_size = 10000) {
    std::map<std::string, std::size_t> counts;
    if (mode == VocabMode::kChar) {
      for (char ch : text) ++counts[std::string(1, ch)];
    } else {
      detail::for_each_word_token(text, [&](std::string_view tok) { ++counts[std::string(tok)]; });
    }
    if (counts.empty()) throw DataError("build_vocab: empty input text");

    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    Vocab v;
    v.mode_ = mode;
    if (mode == VocabMode::kChar) {
      for (auto& [tok, n] : ranked) v.add(tok);
      return v;
    }

    if (max_size < 2) throw ConfigError("max_vocab must be at least 2 in word mode");
    counts.try_emplace(std::string(kUnkToken), 0);
    counts.try_emplace(std::string(kEosToken), 0);
    const std::size_t unk_count = counts[std::string(kUnkToken)];

    // Keep the top max_size-1 regular tokens (<eos> is always kept), then slot
    // <unk> in at its own rank.
    std::vector<std::pair<std::string, std::size_t>> kept;
    bool have_eos = false;
    for (auto& entry : ranked) {
      if (entry.first == kUnkToken) continue;
      if (kept.size() + 1 >= max_size) break;
      have_eos = have_eos || entry.first == kEosToken;
      kept.push_back(entry);
    }
    if (!have_eos) {
      if (kept.size() + 1 >= max_size) kept.pop_back();
      kept.emplace_back(std::string(kEosToken), counts[std::string(kEosToken)]);
    }
    kept.emplace_back(std::string(kUnkToken), unk_count);
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    for (auto& [tok, n] : kept) v.add(tok);
    v.unk_id_ = v.id(kUnkToken);
    v.eos_id_ = v.id(kEosToken);
    return v;
  }

  /// Rebuilds a vocabulary from a stored id -> token list.
  static Vocab from_tokens(VocabMode mode, std::vector<std::string> tokens) {
    Vocab v;
    v.mode_ = mode;
    for (auto& t : tokens) {
      if (v.index_.count(t)) throw DataError("vocabulary has duplicate token '" + t + "'");
      v.add(t);
    }
    if (mode == VocabMode::kWord) {
      if (!v.index_.count(std::string(kUnkToken)) || !v.index_.count(std::string(kEosToken))) {
        throw DataError("word vocabulary is missing <unk> or <eos>");
      }
      v.unk_id_ = v.id(kUnkToken);
      v.eos_id_ = v.id(kEosToken);
    }
    return v;
  }

  VocabMode mode() const noexcept { return mode_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  int unk_id() const noexcept { return unk_id_; }
  int eos_id() const noexcept { return eos_id_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  int id(std::string_view tok) const {
    auto it = index_.find(std::string(tok));
    if (it != index_.end()) return it->second;
    if (unk_id_ >= 0) return unk_id_;
    throw DataError("token '" + std::string(tok) + "' is not in the character vocabulary");
  }

  TokenStream encode(std::string_view text) const {
    TokenStream out;
    if (mode_ == VocabMode::kChar) {
      out.reserve(text.size());
      for (char ch : text) out.push_back(id(std::string_view(&ch, 1)));
    } else {
      detail::for_each_word_token(text, [&](std::string_view tok) { out.push_back(id(tok)); });
    }
    return out;
  }

  /// Inverse of encode, up to <unk> substitution and (word mode) whitespace
  /// normalisation: words joined by single spaces, <eos> rendered as '\n'.
  std::string decode(const TokenStream& ids) const {
    std::string out;
    if (mode_ == VocabMode::kChar) {
      for (int i : ids) out += token(i);
      return out;
    }
    bool line_start = true;
    for (int i : ids) {
      if (i == eos_id_) {
        out += '\n';
        line_start = true;
        continue;
      }
      if (!line_start) out += ' ';
      out += token(i);
      line_start = false;
    }
    return out;
  }

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.mode_ == b.mode_ && a.tokens_ == b.tokens_;
  }

 private:
  void add(const std::string& tok) {
    index_.emplace(tok, static_cast<int>(tokens_.size()));
    tokens_.push_back(tok);
  }

  VocabMode mode_ = VocabMode::kWord;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int unk_id_ = -1;
  int eos_id_ = -1;
};

inline Vocab build_vocab(std::string_view text, VocabMode mode, std::size_t max_size = 10000) {
  return Vocab::build(text, mode, max_size);
}

/// Token ids laid out batch-major: ids[b * steps + t].
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::vector<int> ids;

  int at(std::size_t b, std::size_t t) const { return ids[b * steps + t]; }
};

struct LmWindow {
  TokenBatch inputs;
  TokenBatch targets;
};

/// Contiguous LM batching: the stream is cut into `batch` equal lanes (the
/// remainder is dropped) and each lane is walked in windows of `seqlen`
/// tokens; targets are the inputs shifted by one position.
class Batches {
 public:
  Batches(const TokenStream& stream, std::size_t batch, std::size_t seqlen)
      : stream_(stream), batch_(batch), seqlen_(seqlen) {
    if (batch == 0 || seqlen == 0) throw ConfigError("batchify: batch and seqlen must be >= 1");
    lane_len_ = stream.size() / batch;
    if (stream.size() <= batch * seqlen || lane_len_ < seqlen + 1) {
      throw DataError("batchify: stream of " + std::to_string(stream.size()) +
                      " tokens too short for batch " + std::to_string(batch) + " x seqlen " +
                      std::to_string(seqlen));
    }
    windows_ = (lane_len_ - 1) / seqlen;
  }

  std::size_t size() const noexcept { return windows_; }
  std::size_t batch() const noexcept { return batch_; }
  std::size_t seqlen() const noexcept { return seqlen_; }
  std::size_t lane_length() const noexcept { return lane_len_; }

  LmWindow operator[](std::size_t w) const {
    LmWindow out{{batch_, seqlen_, std::vector<int>(batch_ * seqlen_)},
                 {batch_, seqlen_, std::vector<int>(batch_ * seqlen_)}};
    const auto& s = stream_;
    for (std::size_t b = 0; b < batch_; ++b) {
      const std::size_t base = b * lane_len_ + w * seqlen_;
      for (std::size_t t = 0; t < seqlen_; ++t) {
        out.inputs.ids[b * seqlen_ + t] = s[base + t];
        out.targets.ids[b * seqlen_ + t] = s[base + t + 1];
      }
    }
    return out;
  }

  class iterator {
   public:
    using value_type = LmWindow;
    using difference_type = std::ptrdiff_t;
    iterator(const Batches* owner, std::size_t i) : owner_(owner), i_(i) {}
    LmWindow operator*() const { return (*owner_)[i_]; }
    iterator& operator++() {
      ++i_;
      return *this;
    }
    bool operator==(const iterator& o) const { return i_ == o.i_; }

   private:
    const Batches* owner_;
    std::size_t i_;
  };
  iterator begin() const { return {this, 0}; }
  iterator end() const { return {this, windows_}; }

 private:
  TokenStream stream_;
  std::size_t batch_;
  std::size_t seqlen_;
  std::size_t lane_len_ = 0;
  std::size_t windows_ = 0;
};

inline Batches batchify(const TokenStream& stream, std::size_t batch, std::size_t seqlen) {
  return Batches(stream, batch, seqlen);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace lprnn
