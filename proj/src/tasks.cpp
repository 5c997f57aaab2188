#include "grokkit/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "grokkit/errors.hpp"
#include "grokkit/rng.hpp"
#include "grokkit/util.hpp"

namespace grokkit::tasks {

const char* to_string(ModOp op) noexcept { return op == ModOp::Add ? "add" : "mul"; }

ModOp parse_mod_op(const std::string& s) {
  if (s == "add") return ModOp::Add;
  if (s == "mul") return ModOp::Mul;
  throw ArgumentError("unknown modular operation '" + s + "' (expected add|mul)");
}

TokenDataset TokenDataset::subset(std::span<const std::size_t> rows) const {
  TokenDataset out;
  out.p = p;
  out.op = op;
  out.a.reserve(rows.size());
  out.b.reserve(rows.size());
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) {
    if (r >= size()) throw IndexError("TokenDataset::subset: row " + std::to_string(r) + " out of range");
    out.a.push_back(a[r]);
    out.b.push_back(b[r]);
    out.labels.push_back(labels[r]);
  }
  return out;
}

TokenDataset gen_modular(int p, ModOp op) {
  if (p < 2) throw ArgumentError("gen_modular: modulus must be >= 2, got " + std::to_string(p));
  TokenDataset ds;
  ds.p = p;
  ds.op = op;
  const std::size_t n = static_cast<std::size_t>(p) * static_cast<std::size_t>(p);
  ds.a.reserve(n);
  ds.b.reserve(n);
  ds.labels.reserve(n);
  for (int a = 0; a < p; ++a) {
    for (int b = 0; b < p; ++b) {
      ds.a.push_back(a);
      ds.b.push_back(b);
      const long long v = op == ModOp::Add ? static_cast<long long>(a) + b
                                           : static_cast<long long>(a) * b;
      ds.labels.push_back(static_cast<int>(v % p));
    }
  }
  return ds;
}

Split split(std::size_t rows, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ArgumentError("split: fraction must lie in (0, 1), got " + format_real(fraction));
  }
  std::vector<std::size_t> perm(rows);
  for (std::size_t i = 0; i < rows; ++i) perm[i] = i;
  SplitMix64 rng(seed);
  for (std::size_t i = rows; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(perm[i - 1], perm[j]);
  }
  const auto n_train = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(rows)));
  Split s;
  s.seed = seed;
  s.fraction = fraction;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

template <typename T>
VectorDataset<T> VectorDataset<T>::subset(std::span<const std::size_t> rows) const {
  VectorDataset out;
  out.kind = kind;
  out.x = nd::Tensor2<T>(rows.size(), dim());
  out.y.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw IndexError("VectorDataset::subset: row out of range");
    std::copy_n(x.row(rows[i]).begin(), dim(), out.x.row(i).begin());
    out.y.push_back(y[rows[i]]);
  }
  return out;
}

namespace {

// Fills `dst` with +-magnitude, consuming one generator word per 64 entries.
template <typename T>
void fill_signs(SplitMix64& rng, std::span<T> dst, T magnitude) {
  std::uint64_t bits = 0;
  int left = 0;
  for (T& v : dst) {
    if (left == 0) {
      bits = rng.next();
      left = 64;
    }
    v = (bits & 1U) ? magnitude : -magnitude;
    bits >>= 1;
    --left;
  }
}

}  // namespace

template <typename T>
VectorDataset<T> gen_parity(int q, int k, std::span<const int> subset, std::size_t n,
                            std::uint64_t seed) {
  if (q < 1 || k < 1 || k > q) throw ArgumentError("gen_parity: need 1 <= k <= q");
  if (n < 1) throw ArgumentError("gen_parity: n must be >= 1");
  if (subset.size() != static_cast<std::size_t>(k)) {
    throw ArgumentError("gen_parity: subset has " + std::to_string(subset.size()) +
                        " coordinates, expected k = " + std::to_string(k));
  }
  std::vector<int> s(subset.begin(), subset.end());
  std::sort(s.begin(), s.end());
  if (std::adjacent_find(s.begin(), s.end()) != s.end()) {
    throw ArgumentError("gen_parity: subset coordinates must be distinct");
  }
  for (int c : s) {
    if (c < 1 || c > q) {
      throw ArgumentError("gen_parity: coordinate " + std::to_string(c) + " outside [1, " +
                          std::to_string(q) + "]");
    }
  }
  VectorDataset<T> ds;
  ds.kind = VectorKind::Parity;
  ds.x = nd::Tensor2<T>(n, static_cast<std::size_t>(q));
  ds.y.resize(n);
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = ds.x.row(i);
    fill_signs(rng, row, T(1));
    T y = T(1);
    for (int c : s) y *= row[static_cast<std::size_t>(c - 1)];
    ds.y[i] = y;
  }
  return ds;
}

template <typename T>
VectorDataset<T> gen_xor(std::size_t p, std::size_t n, double eps, std::uint64_t seed) {
  if (p < 3) throw ArgumentError("gen_xor: dimension p must be >= 3");
  if (!(eps > 0.0)) throw ArgumentError("gen_xor: noise scale must be > 0");
  VectorDataset<T> ds;
  ds.kind = VectorKind::Xor;
  ds.x = nd::Tensor2<T>(n, p);
  ds.y.resize(n);
  SplitMix64 rng(seed);
  const T e = static_cast<T>(eps);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = ds.x.row(i);
    const std::uint64_t w = rng.next();
    row[0] = (w & 1U) ? T(1) : T(-1);
    row[1] = (w & 2U) ? T(1) : T(-1);
    fill_signs(rng, row.subspan(2), e);
    ds.y[i] = row[0] * row[1];
  }
  return ds;
}

template struct VectorDataset<float>;
template struct VectorDataset<double>;
template VectorDataset<float> gen_parity<float>(int, int, std::span<const int>, std::size_t, std::uint64_t);
template VectorDataset<double> gen_parity<double>(int, int, std::span<const int>, std::size_t, std::uint64_t);
template VectorDataset<float> gen_xor<float>(std::size_t, std::size_t, double, std::uint64_t);
template VectorDataset<double> gen_xor<double>(std::size_t, std::size_t, double, std::uint64_t);

const char* to_string(EmbedKind k) noexcept {
  switch (k) {
    case EmbedKind::OneHot: return "onehot";
    case EmbedKind::Binary: return "binary";
    case EmbedKind::Fourier: return "fourier";
    case EmbedKind::External: return "external";
  }
  return "?";
}

EmbedKind parse_embed_kind(const std::string& s) {
  if (s == "onehot") return EmbedKind::OneHot;
  if (s == "binary") return EmbedKind::Binary;
  if (s == "fourier") return EmbedKind::Fourier;
  if (s == "external") return EmbedKind::External;
  throw ArgumentError("unknown embedding kind '" + s + "' (expected onehot|binary|fourier|external)");
}

std::vector<int> first_primes(std::size_t count) {
  std::vector<int> primes;
  for (int c = 2; primes.size() < count; ++c) {
    bool prime = true;
    for (int q : primes) {
      if (q * q > c) break;
      if (c % q == 0) {
        prime = false;
        break;
      }
    }
    if (prime) primes.push_back(c);
  }
  return primes;
}

namespace {
void check_vocab(int p, const char* what) {
  if (p < 2) throw ArgumentError(std::string(what) + ": vocabulary size must be >= 2");
}
}  // namespace

EmbedTable embed_onehot(int p) {
  check_vocab(p, "embed_onehot");
  return {EmbedKind::OneHot, nd::Tensor2<double>::identity(static_cast<std::size_t>(p))};
}

EmbedTable embed_binary(int p) {
  check_vocab(p, "embed_binary");
  // floor(log2(p - 1)) + 1 == bit width of p - 1.
  std::size_t width = 0;
  for (unsigned v = static_cast<unsigned>(p - 1); v != 0; v >>= 1) ++width;
  width = std::max<std::size_t>(width, 1);
  EmbedTable e{EmbedKind::Binary, nd::Tensor2<double>(static_cast<std::size_t>(p), width)};
  for (int a = 0; a < p; ++a)
    for (std::size_t bit = 0; bit < width; ++bit)
      e.table(static_cast<std::size_t>(a), bit) = ((static_cast<unsigned>(a) >> (width - 1 - bit)) & 1U) ? 1.0 : 0.0;
  return e;
}

EmbedTable embed_fourier(int p, std::span<const int> freqs) {
  check_vocab(p, "embed_fourier");
  if (freqs.empty()) throw ArgumentError("embed_fourier: need at least one frequency");
  EmbedTable e{EmbedKind::Fourier, nd::Tensor2<double>(static_cast<std::size_t>(p), 2 * freqs.size())};
  for (int a = 0; a < p; ++a) {
    for (std::size_t j = 0; j < freqs.size(); ++j) {
      const double theta = 2.0 * std::numbers::pi * static_cast<double>(freqs[j]) *
                           static_cast<double>(a) / static_cast<double>(p);
      e.table(static_cast<std::size_t>(a), 2 * j) = std::cos(theta);
      e.table(static_cast<std::size_t>(a), 2 * j + 1) = std::sin(theta);
    }
  }
  return e;
}

EmbedTable embed_fourier(int p) {
  const auto primes = first_primes(7);
  return embed_fourier(p, primes);
}

EmbedTable embed_external(const std::filesystem::path& path, int p) {
  check_vocab(p, "embed_external");
  std::ifstream in(path);
  if (!in) throw FormatError("embed_external: cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::vector<double> r;
    std::string tok;
    while (ls >> tok) {
      double v = 0.0;
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
        throw FormatError("embed_external: line " + std::to_string(lineno) + ": '" + tok +
                          "' is not a decimal number");
      }
      r.push_back(v);
    }
    if (!r.empty()) rows.push_back(std::move(r));
  }
  if (rows.size() != static_cast<std::size_t>(p)) {
    throw FormatError("embed_external: expected " + std::to_string(p) + " rows, found " +
                      std::to_string(rows.size()));
  }
  const std::size_t dim = rows[0].size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != dim) {
      throw FormatError("embed_external: row " + std::to_string(i + 1) + ": expected " +
                        std::to_string(dim) + " columns, found " + std::to_string(rows[i].size()));
    }
  }
  EmbedTable e{EmbedKind::External, nd::Tensor2<double>(rows.size(), dim)};
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), e.table.row(i).begin());
  return e;
}

void normalize_rows(EmbedTable& e) {
  for (std::size_t i = 0; i < e.table.rows(); ++i) {
    auto row = e.table.row(i);
    double ss = 0.0;
    for (double v : row) ss += v * v;
    if (ss == 0.0) continue;
    const double inv = 1.0 / std::sqrt(ss);
    for (double& v : row) v *= inv;
  }
}

EmbedTable make_embedding(EmbedKind kind, int p, const std::filesystem::path& external_path) {
  EmbedTable e;
  switch (kind) {
    case EmbedKind::OneHot: e = embed_onehot(p); break;
    case EmbedKind::Binary: e = embed_binary(p); break;
    case EmbedKind::Fourier: e = embed_fourier(p); break;
    case EmbedKind::External: e = embed_external(external_path, p); break;
  }
  normalize_rows(e);
  return e;
}

void write_embedding(const EmbedTable& e, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("write_embedding: cannot open " + path.string());
  for (std::size_t i = 0; i < e.table.rows(); ++i) {
    for (std::size_t j = 0; j < e.table.cols(); ++j) {
      if (j) out << ' ';
      out << format_real(e.table(i, j));
    }
    out << '\n';
  }
}

}  // namespace grokkit::tasks
