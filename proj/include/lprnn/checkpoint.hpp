#pragma once

// Binary checkpoint for the LSTM language model.
//
//   "LPRNN1"            6-byte magic
//   u16 version         = 1
//   u32 header_len, header bytes, u32 crc32(header)
//     header: u32 V, u32 E, u32 H, u8 weight_bits, u8 activation_bits,
//             u8 quantize_io, u8 vocab_mode (0 word, 1 char),
//             u32 n_tokens, n_tokens x (u32 len, bytes)
//   u32 tensor_count
//   tensor_count x record:
//     u16 name_len, name, u8 encoding (0 raw f32, 1 packed codes), u8 bits,
//     u32 rows, u32 cols, f64 scale, f64 offset,
//     u64 payload_len, payload, u32 crc32(record from name through payload)
//
// Integers are little-endian. Quantized matrices are stored as packed codes
// (see packed.hpp); biases and 32-bit matrices as raw binary32.

#include <zlib.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lprnn/corpus.hpp"
#include "lprnn/errors.hpp"
#include "lprnn/lstm_lm.hpp"
#include "lprnn/packed.hpp"

namespace lprnn {

inline constexpr std::array<char, 6> kCheckpointMagic = {'L', 'P', 'R', 'N', 'N', '1'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

namespace detail {

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t at = 0;
  while (at < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - at, 1u << 30));
    crc = ::crc32(crc, bytes.data() + at, n);
    at += n;
  }
  return static_cast<std::uint32_t>(crc);
}

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put_le(v, 2); }
  void u32(std::uint32_t v) { put_le(v, 4); }
  void u64(std::uint64_t v) { put_le(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void str16(std::string_view s) {
    u16(static_cast<std::uint16_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void str32(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get_le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t u64() { return get_le(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::span<const std::uint8_t> bytes(std::uint64_t n) {
    need(n);
    auto out = b_.subspan(at_, static_cast<std::size_t>(n));
    at_ += static_cast<std::size_t>(n);
    return out;
  }
  std::string str16() {
    auto s = bytes(u16());
    return {s.begin(), s.end()};
  }
  std::string str32() {
    auto s = bytes(u32());
    return {s.begin(), s.end()};
  }
  std::size_t remaining() const { return b_.size() - at_; }
  std::size_t offset() const { return at_; }
  std::span<const std::uint8_t> since(std::size_t start) const { return b_.subspan(start, at_ - start); }

 private:
  void need(std::uint64_t n) const {
    if (n > remaining()) {
      throw CorruptCheckpoint("checkpoint truncated: need " + std::to_string(n) +
                              " bytes at offset " + std::to_string(at_) + ", have " +
                              std::to_string(remaining()));
    }
  }
  std::uint64_t get_le(int n) {
    need(static_cast<std::uint64_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[at_ + i]) << (8 * i);
    at_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> b_;
  std::size_t at_ = 0;
};

enum class TensorEncoding : std::uint8_t { kRaw = 0, kPacked = 1 };

}  // namespace detail

struct TensorRecordInfo {
  std::string name;
  int bits = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::uint64_t payload_bytes = 0;
};

struct Checkpoint {
  LmModel<float> model;
  Vocab vocab;
  std::vector<TensorRecordInfo> records;

  std::uint64_t payload_bytes() const {
    std::uint64_t n = 0;
    for (const auto& r : records) n += r.payload_bytes;
    return n;
  }
};

namespace detail {

inline void write_tensor(ByteWriter& w, std::string_view name, const PackedTensor& p) {
  const std::size_t start = w.buffer().size();
  w.str16(name);
  w.u8(static_cast<std::uint8_t>(p.raw() ? TensorEncoding::kRaw : TensorEncoding::kPacked));
  w.u8(static_cast<std::uint8_t>(p.bits));
  w.u32(static_cast<std::uint32_t>(p.rows));
  w.u32(static_cast<std::uint32_t>(p.cols));
  w.f64(p.scale);
  w.f64(p.offset);
  w.u64(p.bytes.size());
  w.bytes(p.bytes);
  w.u32(crc32_of(std::span<const std::uint8_t>(w.buffer()).subspan(start)));
}

/// Grid values of a matrix at `bits` (identity at 32 or for frozen models).
inline Tensor<float> storage_values(const Tensor<float>& w, int bits, bool frozen) {
  if (frozen || bits == kFullPrecisionBits) return w;
  return quantize_weights(w, bits).values;
}

inline Tensor<float> row_vector(const std::vector<float>& v) { return Tensor<float>(1, v.size(), v); }

}  // namespace detail

/// Serialises a model and its vocabulary. Quantized matrices are stored as
/// their packed grid codes, so the restored model is frozen at those values.
inline std::vector<std::uint8_t> encode_checkpoint(const LmModel<float>& model, const Vocab& vocab) {
  model.validate();
  const LmDims d = model.dims();
  if (vocab.size() != d.vocab) throw ConfigError("checkpoint: vocabulary size != model V");

  detail::ByteWriter header;
  header.u32(static_cast<std::uint32_t>(d.vocab));
  header.u32(static_cast<std::uint32_t>(d.embed));
  header.u32(static_cast<std::uint32_t>(d.hidden));
  header.u8(static_cast<std::uint8_t>(model.quant.weight_bits));
  header.u8(static_cast<std::uint8_t>(model.quant.activation_bits));
  header.u8(model.quantize_io ? 1 : 0);
  header.u8(vocab.mode() == VocabMode::kWord ? 0 : 1);
  header.u32(static_cast<std::uint32_t>(vocab.size()));
  for (const auto& tok : vocab.tokens()) header.str32(tok);

  detail::ByteWriter w;
  for (char c : kCheckpointMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(header.buffer().size()));
  w.bytes(header.buffer());
  w.u32(detail::crc32_of(header.buffer()));

  const int lstm_bits = model.stored_lstm_bits();
  const int io_bits = model.stored_io_bits();
  w.u32(5);
  detail::write_tensor(w, "embedding",
                       pack(detail::storage_values(model.embedding, io_bits, model.frozen), io_bits));
  detail::write_tensor(
      w, "lstm.weight",
      pack(detail::storage_values(model.lstm.weight, lstm_bits, model.frozen), lstm_bits));
  detail::write_tensor(w, "lstm.bias", pack(detail::row_vector(model.lstm.bias), kFullPrecisionBits));
  detail::write_tensor(
      w, "projection",
      pack(detail::storage_values(model.projection, io_bits, model.frozen), io_bits));
  detail::write_tensor(w, "projection.bias",
                       pack(detail::row_vector(model.projection_bias), kFullPrecisionBits));
  return std::move(w.buffer());
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  for (char c : kCheckpointMagic) {
    if (r.u8() != static_cast<std::uint8_t>(c)) throw CorruptCheckpoint("bad checkpoint magic");
  }
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    throw CorruptCheckpoint("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t header_len = r.u32();
  const auto header_bytes = r.bytes(header_len);
  if (r.u32() != detail::crc32_of(header_bytes)) throw CorruptCheckpoint("header CRC mismatch");

  detail::ByteReader h(header_bytes);
  LmDims d;
  d.vocab = h.u32();
  d.embed = h.u32();
  d.hidden = h.u32();
  QuantSpec quant{h.u8(), h.u8()};
  const bool quantize_io = h.u8() != 0;
  const std::uint8_t mode = h.u8();
  if (mode > 1) throw CorruptCheckpoint("bad vocabulary mode");
  std::vector<std::string> tokens(h.u32());
  for (auto& t : tokens) t = h.str32();
  if (h.remaining() != 0) throw CorruptCheckpoint("trailing bytes in header");
  if (!is_allowed_bits(quant.weight_bits) || !is_allowed_bits(quant.activation_bits)) {
    throw CorruptCheckpoint("bad bit-widths in header");
  }

  Checkpoint ck;
  try {
    ck.vocab = Vocab::from_tokens(mode == 0 ? VocabMode::kWord : VocabMode::kChar, std::move(tokens));
  } catch (const DataError& e) {
    throw CorruptCheckpoint(std::string("bad vocabulary: ") + e.what());
  }

  const std::uint32_t count = r.u32();
  std::vector<std::pair<std::string, PackedTensor>> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t start = r.offset();
    std::string name = r.str16();
    const auto enc = r.u8();
    PackedTensor p;
    p.bits = r.u8();
    p.rows = r.u32();
    p.cols = r.u32();
    p.scale = r.f64();
    p.offset = r.f64();
    const std::uint64_t len = r.u64();
    auto payload = r.bytes(len);
    const std::uint32_t record_crc = detail::crc32_of(r.since(start));
    if (r.u32() != record_crc) {
      throw CorruptCheckpoint("record CRC mismatch in tensor '" + name + "'");
    }
    if (!is_allowed_bits(p.bits) ||
        (enc == static_cast<std::uint8_t>(detail::TensorEncoding::kRaw)) != p.raw() || enc > 1) {
      throw CorruptCheckpoint("tensor '" + name + "': inconsistent encoding/bit-width");
    }
    if (len != p.expected_bytes()) {
      throw CorruptCheckpoint("tensor '" + name + "': payload length " + std::to_string(len) +
                              " != expected " + std::to_string(p.expected_bytes()));
    }
    p.bytes.assign(payload.begin(), payload.end());
    try {
      p.validate();
    } catch (const QuantizationError& e) {
      throw CorruptCheckpoint("tensor '" + name + "': " + e.what());
    }
    ck.records.push_back({name, p.bits, p.rows, p.cols, len});
    tensors.emplace_back(std::move(name), std::move(p));
  }
  if (r.remaining() != 0) throw CorruptCheckpoint("trailing bytes after last tensor");

  auto take = [&](std::string_view name, std::size_t rows, std::size_t cols, int bits) {
    for (auto& [n, p] : tensors) {
      if (n != name) continue;
      if (p.rows != rows || p.cols != cols || p.bits != bits) {
        throw CorruptCheckpoint("tensor '" + n + "' has unexpected shape or bit-width");
      }
      return unpack<float>(p);
    }
    throw CorruptCheckpoint("missing tensor '" + std::string(name) + "'");
  };

  LmModel<float>& m = ck.model;
  m.quant = quant;
  m.quantize_io = quantize_io;
  const int io_bits = m.stored_io_bits();
  const int lstm_bits = m.stored_lstm_bits();
  m.embedding = take("embedding", d.vocab, d.embed, io_bits);
  m.lstm.input_dim = d.embed;
  m.lstm.hidden = d.hidden;
  m.lstm.weight = take("lstm.weight", d.embed + d.hidden, 4 * d.hidden, lstm_bits);
  m.lstm.bias = take("lstm.bias", 1, 4 * d.hidden, kFullPrecisionBits).storage();
  m.projection = take("projection", d.hidden, d.vocab, io_bits);
  m.projection_bias = take("projection.bias", 1, d.vocab, kFullPrecisionBits).storage();
  m.frozen = lstm_bits != kFullPrecisionBits || io_bits != kFullPrecisionBits;
  if (tensors.size() != 5) throw CorruptCheckpoint("unexpected tensor count");
  if (ck.vocab.size() != d.vocab) throw CorruptCheckpoint("vocabulary size != V");
  try {
    m.validate();
  } catch (const std::exception& e) {
    throw CorruptCheckpoint(std::string("inconsistent model: ") + e.what());
  }
  return ck;
}

inline void save_checkpoint(const LmModel<float>& model, const Vocab& vocab, const std::string& path) {
  const auto bytes = encode_checkpoint(model, vocab);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace lprnn
