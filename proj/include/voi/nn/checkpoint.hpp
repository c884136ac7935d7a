#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <utility>

#include "voi/nn/tensor.hpp"

namespace voi::nn {

// Checkpoint layout (see docs/formats.md):
//   "#voi-ckpt v1\n"
//   zero or more "meta <key> <value>\n"
//   "params <count>\n"
//   per parameter: "param <name> <trainable 0|1> <rank> <d0> ... \n" followed by
//   numel * 4 bytes of IEEE-754 binary32 little-endian values and a single "\n".

using Meta = std::vector<std::pair<std::string, std::string>>;

inline void append_f32_le(std::string& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

inline float read_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= std::uint32_t(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

template <typename T>
std::string checkpoint_bytes(const ParameterStore<T>& store, const Meta& meta = {}) {
  std::string out = "#voi-ckpt v1\n";
  for (const auto& [k, v] : meta) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos)
      throw Error("checkpoint meta keys must be single tokens and values single lines");
    out += "meta " + k + " " + v + "\n";
  }
  out += "params " + std::to_string(store.size()) + "\n";
  for (const auto& e : store.entries()) {
    out += "param " + e.name + " " + (e.trainable ? "1" : "0") + " " + std::to_string(e.value.rank());
    for (auto d : e.value.shape) out += " " + std::to_string(d);
    out += "\n";
    for (auto v : e.value.data) append_f32_le(out, static_cast<float>(v));
    out += "\n";
  }
  return out;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParameterStore<T>& store, const Meta& meta = {}) {
  write_file(path, checkpoint_bytes(store, meta));
}

template <typename T>
struct Checkpoint {
  Meta meta;
  ParameterStore<T> store;

  std::string meta_value(const std::string& key) const {
    for (const auto& [k, v] : meta)
      if (k == key) return v;
    throw Error("checkpoint has no meta entry '" + key + "'");
  }
};

template <typename T>
Checkpoint<T> parse_checkpoint(std::string_view bytes) {
  Checkpoint<T> ck;
  std::size_t pos = 0, line_no = 0;
  auto next_line = [&]() -> std::string {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) throw ParseError(line_no + 1, "truncated checkpoint");
    std::string l(bytes.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    return l;
  };
  if (next_line() != "#voi-ckpt v1") throw ParseError(1, "missing '#voi-ckpt v1' header");
  std::string l = next_line();
  while (l.rfind("meta ", 0) == 0) {
    const auto sp = l.find(' ', 5);
    if (sp == std::string::npos) ck.meta.emplace_back(l.substr(5), "");
    else ck.meta.emplace_back(l.substr(5, sp - 5), l.substr(sp + 1));
    l = next_line();
  }
  auto head = split_ws(l);
  if (head.size() != 2 || head[0] != "params") throw ParseError(line_no, "expected 'params <count>'");
  const auto count = parse_int(head[1], line_no);
  for (long long p = 0; p < count; ++p) {
    const auto tok = split_ws(next_line());
    if (tok.size() < 4 || tok[0] != "param") throw ParseError(line_no, "expected a param record");
    const auto rank = parse_int(tok[3], line_no);
    if (rank < 0 || tok.size() != std::size_t(4 + rank)) throw ParseError(line_no, "bad param rank");
    Shape shape;
    for (long long r = 0; r < rank; ++r) {
      const auto d = parse_int(tok[std::size_t(4 + r)], line_no);
      if (d <= 0) throw ParseError(line_no, "non-positive dimension");
      shape.push_back(std::size_t(d));
    }
    const std::size_t n = numel(shape);
    if (pos + 4 * n + 1 > bytes.size()) throw ParseError(line_no, "truncated parameter data");
    Tensor<T> value(shape);
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    for (std::size_t k = 0; k < n; ++k) value[k] = static_cast<T>(read_f32_le(raw + 4 * k));
    pos += 4 * n;
    if (bytes[pos] != '\n') throw ParseError(line_no, "missing record terminator");
    ++pos;
    ck.store.add(tok[1], std::move(value), tok[2] == "1");
  }
  return ck;
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint<T>(read_file(path));
}

/// Copies checkpoint values into an existing store with identical names and shapes.
template <typename T>
void restore_into(ParameterStore<T>& dst, const ParameterStore<T>& src) {
  if (dst.size() != src.size()) throw Error("checkpoint parameter count does not match the model");
  for (const auto& e : src.entries()) dst.assign(e.name, e.value);
}

}  // namespace voi::nn
