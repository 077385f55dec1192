// Copyright (C) 2026 The sdt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary container for model parameters.
//
//   "SDTC" | u32 version | u32 n + kind | u32 n + config JSON | u32 tensor count
//   per tensor: u32 n + name | u32 rows | u32 cols | rows*cols f32
//
// Integers and floats are little-endian, matching the FTSQ feature files.

#pragma once

#include "sdt/distill.hpp"
#include "sdt/seqcore.hpp"
#include "sdt/tasmodel.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <string>

namespace sdt {

namespace detail {

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void put_str(std::string& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : b_(bytes) {}
  std::uint32_t u32() {
    need(4, "integer");
    const auto v = get_u32(reinterpret_cast<const unsigned char*>(b_.data()) + pos_);
    pos_ += 4;
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n, "string");
    std::string s(b_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }
  void need(std::size_t n, const char* what) const {
    if (b_.size() - pos_ < n) throw FormatError(std::string("truncated checkpoint ") + what, b_.size());
  }

 private:
  std::string_view b_;
  std::size_t pos_ = 0;
};

template <typename T>
std::string encode_params(std::string_view kind, const nlohmann::json& config, const ParamSet<T>& params) {
  std::string out = "SDTC";
  put_u32(out, kCheckpointVersion);
  put_str(out, kind);
  put_str(out, config.dump());
  put_u32(out, static_cast<std::uint32_t>(params.slots().size()));
  for (const auto& s : params.slots()) {
    put_str(out, s.name);
    put_u32(out, static_cast<std::uint32_t>(s.rows));
    put_u32(out, static_cast<std::uint32_t>(s.cols));
    for (std::size_t i = 0; i < s.size(); ++i)
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(params.values()[s.offset + i])));
  }
  return out;
}

/// Parses the header and returns (kind, config); the reader stops at the tensor table.
inline std::pair<std::string, nlohmann::json> decode_header(Reader& r, std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "SDTC") throw FormatError("bad checkpoint magic", 0);
  r.need(4, "magic");
  r.u32();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  std::string kind = r.str();
  const std::size_t at = r.pos();
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::parse_error&) {
    throw FormatError("checkpoint config is not valid JSON", at);
  }
  return {std::move(kind), std::move(cfg)};
}

template <typename T>
void decode_tensors(Reader& r, ParamSet<T>& params) {
  const std::uint32_t count = r.u32();
  if (count != params.slots().size())
    throw FormatError("checkpoint tensor count " + std::to_string(count) + " does not match architecture", r.pos());
  for (const auto& s : params.slots()) {
    const std::size_t at = r.pos();
    const std::string name = r.str();
    const std::uint32_t rows = r.u32(), cols = r.u32();
    if (name != s.name || rows != s.rows || cols != s.cols)
      throw FormatError("checkpoint tensor '" + name + "' does not match expected '" + s.name + "'", at);
    r.need(4ULL * rows * cols, "tensor payload");
    for (std::size_t i = 0; i < s.size(); ++i) params.values()[s.offset + i] = static_cast<T>(r.f32());
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint", r.pos());
}

}  // namespace detail

template <typename T>
std::string encode_checkpoint(const TcnModel<T>& model) {
  return detail::encode_params("tcn", nlohmann::json(model.config()), model.params());
}

template <typename T>
std::string encode_checkpoint(const ResidualAdapter<T>& adapter) {
  return detail::encode_params("adapter", nlohmann::json(adapter.config()), adapter.params());
}

template <typename T>
TcnModel<T> decode_tcn_checkpoint(std::string_view bytes) {
  detail::Reader r(bytes);
  auto [kind, cfg] = detail::decode_header(r, bytes);
  if (kind != "tcn") throw FormatError("checkpoint holds '" + kind + "', expected 'tcn'", 8);
  TcnModel<T> model = TcnModel<T>::zeros(cfg.get<TcnConfig>());
  detail::decode_tensors(r, model.params());
  return model;
}

template <typename T>
ResidualAdapter<T> decode_adapter_checkpoint(std::string_view bytes) {
  detail::Reader r(bytes);
  auto [kind, cfg] = detail::decode_header(r, bytes);
  if (kind != "adapter") throw FormatError("checkpoint holds '" + kind + "', expected 'adapter'", 8);
  ResidualAdapter<T> adapter = ResidualAdapter<T>::zeros(cfg.get<AdapterConfig>());
  detail::decode_tensors(r, adapter.params());
  return adapter;
}

template <typename Model>
void save_checkpoint(const Model& m, const std::filesystem::path& path) {
  detail::write_file(path, encode_checkpoint(m));
}

template <typename T>
TcnModel<T> load_tcn_checkpoint(const std::filesystem::path& path) {
  return decode_tcn_checkpoint<T>(detail::read_file(path));
}

template <typename T>
ResidualAdapter<T> load_adapter_checkpoint(const std::filesystem::path& path) {
  return decode_adapter_checkpoint<T>(detail::read_file(path));
}

}  // namespace sdt
