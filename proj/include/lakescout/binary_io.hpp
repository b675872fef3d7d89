#pragma once

#include "autodiff.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "text.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

namespace lakescout::binio {

// Container layout, all integers little-endian:
//   8-byte magic "LKSCOUT1", u64 manifest length, manifest JSON, data block.
// The manifest carries "kind", "version", a "blocks" directory of
// {name, dtype: "f32"|"i32", rows, cols, offset} (offset in bytes into the data block) and
// "checksum", the FNV-1a hash of the data block as 16 hex digits.

inline constexpr char kMagic[8] = {'L', 'K', 'S', 'C', 'O', 'U', 'T', '1'};

struct Block {
  std::string name;
  bool is_float = true;
  Eigen::Index rows = 0, cols = 0;
  std::vector<float> f32;         // row-major
  std::vector<std::int32_t> i32;  // row-major
};

inline Block float_block(std::string name, const Matrix& m) {
  Block b{std::move(name), true, m.rows(), m.cols(), {}, {}};
  b.f32.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) b.f32.push_back(static_cast<float>(m(i, j)));
  }
  return b;
}

inline Block int_block(std::string name, std::vector<std::int32_t> values) {
  Block b{std::move(name), false, static_cast<Eigen::Index>(values.size()), 1, {}, std::move(values)};
  return b;
}

inline Matrix to_matrix(const Block& b) {
  if (!b.is_float) throw ValidationError("block '" + b.name + "' is not a float block");
  Matrix m(b.rows, b.cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < b.rows; ++i) {
    for (Eigen::Index j = 0; j < b.cols; ++j) m(i, j) = static_cast<double>(b.f32[k++]);
  }
  return m;
}

inline void put_u32(std::string& out, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string& out, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_le(const std::string& in, std::size_t pos, int bytes) {
  std::uint64_t x = 0;
  for (int i = 0; i < bytes; ++i) x |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return x;
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string encode(nlohmann::ordered_json manifest, const std::vector<Block>& blocks) {
  std::string data;
  nlohmann::ordered_json dir = nlohmann::ordered_json::array();
  for (const auto& b : blocks) {
    dir.push_back({{"name", b.name},
                   {"dtype", b.is_float ? "f32" : "i32"},
                   {"rows", b.rows},
                   {"cols", b.cols},
                   {"offset", data.size()}});
    if (b.is_float) {
      for (float f : b.f32) put_u32(data, std::bit_cast<std::uint32_t>(f));
    } else {
      for (std::int32_t v : b.i32) put_u32(data, static_cast<std::uint32_t>(v));
    }
  }
  manifest["blocks"] = dir;
  manifest["checksum"] = hex64(fnv1a64(data));
  const std::string m = manifest.dump();
  std::string out(kMagic, sizeof kMagic);
  put_u64(out, m.size());
  out += m;
  out += data;
  return out;
}

struct Decoded {
  nlohmann::json manifest;
  std::vector<Block> blocks;

  const Block& block(const std::string& name) const {
    for (const auto& b : blocks) {
      if (b.name == name) return b;
    }
    throw ValidationError("missing block '" + name + "'");
  }
};

// Checks magic, kind, version, sizes and checksum before returning anything.
inline Decoded decode(const std::string& bytes, const std::string& kind, int version, const std::string& source) {
  auto fail = [&](const std::string& why) { return ValidationError(source + ": " + why); };
  if (bytes.size() < 16 || bytes.compare(0, 8, std::string(kMagic, 8)) != 0) throw fail("not a lakescout binary file");
  const std::uint64_t mlen = get_le(bytes, 8, 8);
  if (mlen > bytes.size() - 16) throw fail("truncated manifest");
  Decoded d;
  try {
    d.manifest = nlohmann::json::parse(bytes.substr(16, mlen));
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("bad manifest: ") + e.what());
  }
  if (d.manifest.value("kind", "") != kind) throw fail("expected a " + kind + " file");
  if (d.manifest.value("version", -1) != version) {
    throw fail("unsupported " + kind + " version " + d.manifest.value("version", nlohmann::json(-1)).dump() +
               " (expected " + std::to_string(version) + ")");
  }
  const std::string data = bytes.substr(16 + mlen);
  std::size_t expected = 0;
  try {
    for (const auto& e : d.manifest.at("blocks")) {
      Block b;
      b.name = e.at("name").get<std::string>();
      b.is_float = e.at("dtype").get<std::string>() == "f32";
      b.rows = e.at("rows").get<Eigen::Index>();
      b.cols = e.at("cols").get<Eigen::Index>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto n = static_cast<std::size_t>(b.rows * b.cols);
      if (b.rows < 0 || b.cols < 0 || offset != expected || offset + 4 * n > data.size()) {
        throw fail("truncated or inconsistent block '" + b.name + "'");
      }
      for (std::size_t k = 0; k < n; ++k) {
        const auto raw = static_cast<std::uint32_t>(get_le(data, offset + 4 * k, 4));
        if (b.is_float) {
          b.f32.push_back(std::bit_cast<float>(raw));
        } else {
          b.i32.push_back(static_cast<std::int32_t>(raw));
        }
      }
      expected = offset + 4 * n;
      d.blocks.push_back(std::move(b));
    }
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("bad block directory: ") + e.what());
  }
  if (expected != data.size()) throw fail("data block size mismatch");
  if (d.manifest.value("checksum", "") != hex64(fnv1a64(data))) throw fail("checksum mismatch");
  return d;
}

inline void write(const std::filesystem::path& p, nlohmann::ordered_json manifest, const std::vector<Block>& blocks) {
  io::write_file(p, encode(std::move(manifest), blocks));
}

inline Decoded read(const std::filesystem::path& p, const std::string& kind, int version) {
  return decode(io::read_file(p), kind, version, p.string());
}

}  // namespace lakescout::binio
