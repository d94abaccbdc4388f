#pragma once

// QTB tensor files:
//   "QTB1" | u32 LE header length | UTF-8 JSON header | planes q0,q1,q2,q3
// The header is {"dtype":"f64","shape":[...],"order":"row-major",
// "planes":["q0","q1","q2","q3"]} and each plane is product(shape)
// little-endian IEEE-754 doubles.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsa/qtensor.hpp"

namespace qsa {

class QtbError : public std::runtime_error {
 public:
  explicit QtbError(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr char kQtbMagic[4] = {'Q', 'T', 'B', '1'};

namespace detail {

inline void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

inline void put_f64_le(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
}

inline std::uint32_t get_u32_le(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= std::uint32_t(p[b]) << (8 * b);
  return v;
}

inline double get_f64_le(const std::uint8_t* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= std::uint64_t(p[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline std::string qtb_header(const Shape& shape) {
  nlohmann::ordered_json h;
  h["dtype"] = "f64";
  h["shape"] = shape;
  h["order"] = "row-major";
  h["planes"] = {"q0", "q1", "q2", "q3"};
  return h.dump();
}

inline std::vector<std::uint8_t> qtb_encode(const QTensor& t) {
  const std::string header = qtb_header(t.shape());
  std::vector<std::uint8_t> out;
  out.reserve(8 + header.size() + 32 * t.size());
  out.insert(out.end(), std::begin(kQtbMagic), std::end(kQtbMagic));
  detail::put_u32_le(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  for (int c = 0; c < 4; ++c) {
    for (double v : t.plane(c)) detail::put_f64_le(out, v);
  }
  return out;
}

inline QTensor qtb_decode(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kQtbMagic, 4) != 0) throw QtbError("not a QTB1 file");
  const std::uint32_t hlen = detail::get_u32_le(bytes.data() + 4);
  if (bytes.size() < 8 + std::size_t(hlen)) throw QtbError("truncated QTB header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + hlen);
  } catch (const nlohmann::json::exception& e) {
    throw QtbError(std::string("bad QTB header: ") + e.what());
  }
  if (h.value("dtype", "") != "f64") throw QtbError("unsupported QTB dtype");
  if (h.value("order", "") != "row-major") throw QtbError("unsupported QTB order");
  if (h.value("planes", nlohmann::json::array()) != nlohmann::json{"q0", "q1", "q2", "q3"}) {
    throw QtbError("unexpected QTB plane list");
  }
  if (!h.contains("shape") || !h["shape"].is_array()) throw QtbError("QTB header lacks shape");
  Shape shape;
  for (const auto& d : h["shape"]) {
    if (!d.is_number_unsigned() && !(d.is_number_integer() && d.get<long long>() >= 0)) {
      throw QtbError("QTB shape entries must be nonnegative integers");
    }
    shape.push_back(d.get<std::size_t>());
  }
  const std::size_t n = shape_size(shape);
  const std::size_t body = 8 + std::size_t(hlen);
  if (bytes.size() != body + 32 * n) throw QtbError("QTB payload size does not match shape");
  std::array<std::vector<double>, 4> planes;
  for (int c = 0; c < 4; ++c) {
    planes[c].resize(n);
    const std::uint8_t* p = bytes.data() + body + 8 * n * std::size_t(c);
    for (std::size_t i = 0; i < n; ++i) planes[c][i] = detail::get_f64_le(p + 8 * i);
  }
  return QTensor(std::move(shape), std::move(planes));
}

inline void write_qtb(const std::string& path, const QTensor& t) {
  const auto bytes = qtb_encode(t);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw QtbError("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw QtbError("write failed: " + path);
}

inline QTensor read_qtb(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw QtbError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return qtb_decode(bytes);
}

/// JSON sidecar describing a serialized layer weight ("<stem>.json" next to "<stem>.qtb").
struct LayerSidecar {
  std::string kind;  // "qlinear" | "qconv2d"
  std::vector<std::size_t> dims;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["kind"] = kind;
    j["dims"] = dims;
    return j;
  }
};

inline void write_layer(const std::string& stem, const LayerSidecar& meta, const QTensor& weight) {
  write_qtb(stem + ".qtb", weight);
  std::ofstream f(stem + ".json", std::ios::trunc);
  if (!f) throw QtbError("cannot open " + stem + ".json");
  f << meta.to_json().dump(2) << '\n';
}

inline std::pair<LayerSidecar, QTensor> read_layer(const std::string& stem) {
  std::ifstream f(stem + ".json");
  if (!f) throw QtbError("cannot open " + stem + ".json");
  const auto j = nlohmann::json::parse(f);
  LayerSidecar meta{j.at("kind").get<std::string>(), j.at("dims").get<std::vector<std::size_t>>()};
  QTensor w = read_qtb(stem + ".qtb");
  if (w.shape() != meta.dims) throw QtbError("layer sidecar dims disagree with weight shape");
  return {std::move(meta), std::move(w)};
}

}  // namespace qsa
