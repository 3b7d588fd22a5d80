// SPDX-License-Identifier: Apache-2.0
#include "moodpipe/features/embedding_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace moodpipe::features {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[off + i]} << (8 * i);
  return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[off + i]} << (8 * i);
  return v;
}

}  // namespace

EmbeddingMatrix EmbeddingMatrix::from_tensor(const nn::Tensor& t) {
  EmbeddingMatrix m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.size(); ++i) m.values[i] = static_cast<float>(t[i]);
  return m;
}

nn::Tensor EmbeddingMatrix::to_tensor() const { return rows_tensor(0, rows); }

nn::Tensor EmbeddingMatrix::rows_tensor(std::size_t start,
                                        std::size_t count) const {
  if (start + count > rows) {
    throw std::out_of_range("rows_tensor: rows [" + std::to_string(start) +
                            ", " + std::to_string(start + count) + ") of " +
                            std::to_string(rows));
  }
  nn::Tensor t({count, cols});
  for (std::size_t i = 0; i < count * cols; ++i)
    t[i] = values[start * cols + i];
  return t;
}

MatrixFormatError::MatrixFormatError(const std::string& source,
                                     std::size_t offset,
                                     const std::string& what)
    : std::runtime_error(source + ": " + what + " (byte offset " +
                         std::to_string(offset) + ")"),
      offset_(offset) {}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                      std::uint64_t seed) noexcept {
  std::uint64_t h = seed;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::uint8_t> encode_matrix(const EmbeddingMatrix& m) {
  if (m.values.size() != m.rows * m.cols) {
    throw std::invalid_argument("encode_matrix: " + std::to_string(m.values.size()) +
                                " values for " + std::to_string(m.rows) + "x" +
                                std::to_string(m.cols));
  }
  if (m.rows > std::numeric_limits<std::uint32_t>::max() ||
      m.cols > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument("encode_matrix: dimensions exceed u32");
  }
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    if (!std::isfinite(m.values[i])) {
      throw std::invalid_argument("encode_matrix: non-finite value at row " +
                                  std::to_string(i / m.cols) + ", col " +
                                  std::to_string(i % m.cols));
    }
  }
  std::vector<std::uint8_t> out;
  out.reserve(kMmxHeaderBytes + 4 * m.values.size() + kMmxChecksumBytes);
  for (char c : {'M', 'M', 'X', '1'}) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, static_cast<std::uint32_t>(m.rows));
  put_u32(out, static_cast<std::uint32_t>(m.cols));
  put_u32(out, 0);
  for (float f : m.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
  const std::span<const std::uint8_t> payload(out.data() + kMmxHeaderBytes,
                                              4 * m.values.size());
  put_u64(out, fnv1a64(payload));
  return out;
}

EmbeddingMatrix decode_matrix(std::span<const std::uint8_t> bytes,
                              const std::string& source) {
  if (bytes.size() < kMmxHeaderBytes) {
    throw MatrixFormatError(source, bytes.size(), "truncated header");
  }
  if (std::memcmp(bytes.data(), "MMX1", 4) != 0) {
    throw MatrixFormatError(source, 0, "bad magic, expected MMX1");
  }
  const std::size_t rows = get_u32(bytes, 4);
  const std::size_t cols = get_u32(bytes, 8);
  if (get_u32(bytes, 12) != 0) {
    throw MatrixFormatError(source, 12, "reserved field is not zero");
  }
  if (rows == 0 || cols == 0) {
    throw MatrixFormatError(source, 4, "empty matrix " + std::to_string(rows) +
                                           "x" + std::to_string(cols));
  }
  const std::size_t payload = 4 * rows * cols;
  const std::size_t expected = kMmxHeaderBytes + payload + kMmxChecksumBytes;
  if (bytes.size() < expected) {
    throw MatrixFormatError(
        source, bytes.size(),
        "truncated payload: " + std::to_string(rows) + "x" +
            std::to_string(cols) + " needs " + std::to_string(expected) +
            " bytes");
  }
  if (bytes.size() > expected) {
    throw MatrixFormatError(
        source, expected,
        "declared " + std::to_string(rows) + "x" + std::to_string(cols) +
            " disagrees with payload length (" +
            std::to_string(bytes.size() - expected) + " trailing bytes)");
  }
  const auto payload_bytes = bytes.subspan(kMmxHeaderBytes, payload);
  const std::uint64_t stored = get_u64(bytes, kMmxHeaderBytes + payload);
  if (fnv1a64(payload_bytes) != stored) {
    throw MatrixFormatError(source, kMmxHeaderBytes + payload,
                            "checksum mismatch");
  }
  EmbeddingMatrix m(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    const float f =
        std::bit_cast<float>(get_u32(bytes, kMmxHeaderBytes + 4 * i));
    if (!std::isfinite(f)) {
      throw MatrixFormatError(source, kMmxHeaderBytes + 4 * i,
                              "non-finite entry at row " +
                                  std::to_string(i / cols) + ", col " +
                                  std::to_string(i % cols));
    }
    m.values[i] = f;
  }
  return m;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open for reading");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()),
                           static_cast<std::streamsize>(size))) {
    throw std::runtime_error(path.string() + ": read failed");
  }
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path,
                      std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

void write_embeddings(const EmbeddingMatrix& m,
                      const std::filesystem::path& path) {
  write_file_bytes(path, encode_matrix(m));
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
  return decode_matrix(read_file_bytes(path), path.string());
}

}  // namespace moodpipe::features
