#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "grokkit/nd/tensor.hpp"

// Deterministic dataset generators and fixed input embeddings.

namespace grokkit::tasks {

enum class ModOp { Add, Mul };

const char* to_string(ModOp op) noexcept;
ModOp parse_mod_op(const std::string& s);

/// All ordered pairs (a, b) in [0, p)^2 with label (a op b) mod p.
struct TokenDataset {
  int p = 0;
  ModOp op = ModOp::Add;
  std::vector<int> a;
  std::vector<int> b;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  TokenDataset subset(std::span<const std::size_t> rows) const;
};

/// p^2 rows in lexicographic (a, b) order. Throws ArgumentError for p < 2.
TokenDataset gen_modular(int p, ModOp op);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
  double fraction = 0.0;
};

/// Uniform (unstratified) random split. A Fisher-Yates shuffle driven by
/// SplitMix64(seed) permutes [0, rows); the first floor(fraction * rows)
/// entries form the training set. Both index lists are returned sorted.
Split split(std::size_t rows, double fraction, std::uint64_t seed);

enum class VectorKind { Xor, Parity };

/// Real-valued inputs with +-1 labels.
template <typename T>
struct VectorDataset {
  VectorKind kind = VectorKind::Xor;
  nd::Tensor2<T> x;
  std::vector<T> y;

  std::size_t dim() const noexcept { return x.cols(); }
  std::size_t size() const noexcept { return y.size(); }
  VectorDataset subset(std::span<const std::size_t> rows) const;
};

/// (q, k)-parity: x uniform on {+-1}^q, y = prod_{i in subset} x_i.
/// `subset` holds 1-based coordinates and must have exactly k distinct
/// entries in [1, q].
template <typename T>
VectorDataset<T> gen_parity(int q, int k, std::span<const int> subset, std::size_t n,
                            std::uint64_t seed);

/// XOR cluster data: x[0:2] uniform on {+-1}^2, x[2:p] uniform on
/// {+-eps}^(p-2), y = x1 * x2.
template <typename T>
VectorDataset<T> gen_xor(std::size_t p, std::size_t n, double eps, std::uint64_t seed);

enum class EmbedKind { OneHot, Binary, Fourier, External };

const char* to_string(EmbedKind k) noexcept;
EmbedKind parse_embed_kind(const std::string& s);

/// Fixed token embedding, one row per token.
struct EmbedTable {
  EmbedKind kind = EmbedKind::OneHot;
  nd::Tensor2<double> table;

  std::size_t vocab() const noexcept { return table.rows(); }
  std::size_t dim() const noexcept { return table.cols(); }
};

/// The first `count` primes (2, 3, 5, ...).
std::vector<int> first_primes(std::size_t count);

EmbedTable embed_onehot(int p);
/// Width floor(log2(p - 1)) + 1, most significant bit first.
EmbedTable embed_binary(int p);
/// Per frequency f: cos(2 pi f a / p), sin(2 pi f a / p), interleaved.
EmbedTable embed_fourier(int p, std::span<const int> freqs);
EmbedTable embed_fourier(int p);
/// One row per token, whitespace-separated decimals; exactly p rows of equal
/// width. Throws FormatError with expected vs found counts otherwise.
EmbedTable embed_external(const std::filesystem::path& path, int p);

/// Scale each row to unit Euclidean norm. All-zero rows (binary code of 0)
/// have no direction and are left at zero.
void normalize_rows(EmbedTable& e);

/// Build + normalize by kind. `external_path` is used for EmbedKind::External.
EmbedTable make_embedding(EmbedKind kind, int p, const std::filesystem::path& external_path = {});

/// Write a table in the external embedding format.
void write_embedding(const EmbedTable& e, const std::filesystem::path& path);

}  // namespace grokkit::tasks
