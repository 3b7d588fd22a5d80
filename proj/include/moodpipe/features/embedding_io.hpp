// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "moodpipe/nn/tensor.hpp"

namespace moodpipe::features {

/// N x W row-major float32 matrix; one response (or frame) per row.
struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t r, std::size_t c)
      : rows(r), cols(c), values(r * c, 0.0f) {}

  float& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

  static EmbeddingMatrix from_tensor(const nn::Tensor& t);
  nn::Tensor to_tensor() const;
  /// Rows [start, start + count) as a tensor.
  nn::Tensor rows_tensor(std::size_t start, std::size_t count) const;

  friend bool operator==(const EmbeddingMatrix&,
                         const EmbeddingMatrix&) = default;
};

/// Malformed or corrupted matrix file. `offset` is the byte position where
/// the problem was detected.
class MatrixFormatError : public std::runtime_error {
 public:
  MatrixFormatError(const std::string& source, std::size_t offset,
                    const std::string& what);
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// On-disk layout, all integers little-endian:
//   "MMX1" | u32 rows | u32 cols | u32 reserved (0)
//   | rows*cols float32 row-major | u64 FNV-1a of the payload bytes
inline constexpr std::size_t kMmxHeaderBytes = 16;
inline constexpr std::size_t kMmxChecksumBytes = 8;

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                      std::uint64_t seed = 14695981039346656037ULL) noexcept;

std::vector<std::uint8_t> encode_matrix(const EmbeddingMatrix& m);
EmbeddingMatrix decode_matrix(std::span<const std::uint8_t> bytes,
                              const std::string& source = "<memory>");

/// Writes atomically (temp file + rename). Throws on non-finite values.
void write_embeddings(const EmbeddingMatrix& m,
                      const std::filesystem::path& path);
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path,
                      std::span<const std::uint8_t> bytes);

}  // namespace moodpipe::features
