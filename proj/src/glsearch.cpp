#include "glsearch.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <set>
#include <thread>
#include <unordered_set>

namespace invo {
namespace {

// ---------------------------------------------------------------------------
// Packed matrices: entries as base-q digits in a flat uint8 array, row major,
// with (0,0) least significant.  All scan loops run on these; exact Scalar
// arithmetic is reserved for final witness verification.
// ---------------------------------------------------------------------------

constexpr size_t kMaxDim = 8;  // digit-level arithmetic bound
using Digits = std::array<uint8_t, kMaxDim * kMaxDim>;

bool q_is_prime(uint32_t q) {
  if (q < 2) return false;
  for (uint32_t d = 2; d * d <= q; ++d)
    if (q % d == 0) return false;
  return true;
}

uint32_t mod_inv(uint32_t a, uint32_t q) {
  a %= q;
  for (uint32_t x = 1; x < q; ++x)
    if (a * x % q == 1) return x;
  fail("DivisionByZero", "no inverse of " + std::to_string(a) + " mod " +
                             std::to_string(q));
}

/// q^e clamped into uint64; sets *fits=false on overflow.
uint64_t pow_u64(uint32_t q, size_t e, bool* fits) {
  uint64_t r = 1;
  *fits = true;
  for (size_t i = 0; i < e; ++i) {
    if (r > UINT64_MAX / q) {
      *fits = false;
      return UINT64_MAX;
    }
    r *= q;
  }
  return r;
}

void decode_digits(uint64_t code, size_t nn, uint32_t q, uint8_t* d) {
  for (size_t i = 0; i < nn; ++i) {
    d[i] = static_cast<uint8_t>(code % q);
    code /= q;
  }
}

uint64_t encode_digits(const uint8_t* d, size_t nn, uint32_t q) {
  uint64_t code = 0;
  for (size_t i = nn; i-- > 0;) code = code * q + d[i];
  return code;
}

void pmul(size_t m, uint32_t q, const uint8_t* a, const uint8_t* b,
          uint8_t* c) {
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < m; ++j) {
      uint32_t s = 0;
      for (size_t k = 0; k < m; ++k) s += uint32_t(a[i * m + k]) * b[k * m + j];
      c[i * m + j] = static_cast<uint8_t>(s % q);
    }
}

/// a^2 + c1 a + c0 I == 0, entrywise with early exit.
bool pis_ann(size_t m, uint32_t q, const uint8_t* a, uint32_t c1,
             uint32_t c0) {
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < m; ++j) {
      uint32_t s = 0;
      for (size_t k = 0; k < m; ++k) s += uint32_t(a[i * m + k]) * a[k * m + j];
      s += c1 * a[i * m + j];
      if (i == j) s += c0;
      if (s % q != 0) return false;
    }
  return true;
}

uint32_t pdet(size_t m, uint32_t q, const uint8_t* a) {
  uint8_t w[kMaxDim * kMaxDim];
  std::memcpy(w, a, m * m);
  uint32_t det = 1;
  for (size_t col = 0; col < m; ++col) {
    size_t piv = col;
    while (piv < m && w[piv * m + col] == 0) ++piv;
    if (piv == m) return 0;
    if (piv != col) {
      for (size_t j = 0; j < m; ++j) std::swap(w[piv * m + j], w[col * m + j]);
      det = det * (q - 1) % q;
    }
    uint32_t p = w[col * m + col];
    det = det * p % q;
    uint32_t pi = mod_inv(p, q);
    for (size_t r = col + 1; r < m; ++r) {
      uint32_t f = w[r * m + col];
      if (f == 0) continue;
      uint32_t g = f * pi % q;
      for (size_t j = col; j < m; ++j) {
        uint32_t v = w[r * m + j] + (q - g) * w[col * m + j] % q;
        w[r * m + j] = static_cast<uint8_t>(v % q);
      }
    }
  }
  return det;
}

/// Gauss-Jordan inverse; false when singular.
bool pinv(size_t m, uint32_t q, const uint8_t* a, uint8_t* out) {
  uint8_t w[kMaxDim * 2 * kMaxDim];
  const size_t cols = 2 * m;
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = 0; j < m; ++j) w[i * cols + j] = a[i * m + j];
    for (size_t j = 0; j < m; ++j)
      w[i * cols + m + j] = (i == j) ? 1 : 0;
  }
  for (size_t col = 0; col < m; ++col) {
    size_t piv = col;
    while (piv < m && w[piv * cols + col] == 0) ++piv;
    if (piv == m) return false;
    if (piv != col)
      for (size_t j = 0; j < cols; ++j)
        std::swap(w[piv * cols + j], w[col * cols + j]);
    uint32_t pi = mod_inv(w[col * cols + col], q);
    for (size_t j = 0; j < cols; ++j)
      w[col * cols + j] = static_cast<uint8_t>(w[col * cols + j] * pi % q);
    for (size_t r = 0; r < m; ++r) {
      if (r == col) continue;
      uint32_t f = w[r * cols + col];
      if (f == 0) continue;
      for (size_t j = 0; j < cols; ++j) {
        uint32_t v = w[r * cols + j] + (q - f) * w[col * cols + j] % q;
        w[r * cols + j] = static_cast<uint8_t>(v % q);
      }
    }
  }
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < m; ++j) out[i * m + j] = w[i * cols + m + j];
  return true;
}

/// Inverse of an invertible a annihilated by t^2 + c1 t + c0 (c0 != 0):
/// a^{-1} = -(a + c1 I)/c0.
void pinv_ann(size_t m, uint32_t q, const uint8_t* a, uint32_t c1, uint32_t c0,
              uint8_t* out) {
  uint32_t f = (q - mod_inv(c0, q)) % q;  // -1/c0
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < m; ++j) {
      uint32_t v = a[i * m + j];
      if (i == j) v += c1;
      out[i * m + j] = static_cast<uint8_t>(v % q * f % q);
    }
}

void inc_digits(uint8_t* d, size_t nn, uint32_t q) {
  for (size_t i = 0; i < nn; ++i) {
    if (++d[i] < q) return;
    d[i] = 0;
  }
}

// ---------------------------------------------------------------------------
// Budget metering and membership indices
// ---------------------------------------------------------------------------

struct OpMeter {
  uint64_t used = 0;
  uint64_t cap = 0;
  void charge(uint64_t k) {
    used += k;
    if (used > cap)
      fail("BudgetExceeded",
           "operation budget exhausted (" + std::to_string(cap) + " steps)");
  }
};

constexpr uint64_t kBitmapLimit = uint64_t(1) << 35;

/// Flat bitmap for code spaces up to 2^35 bits, hashed set above.
struct MemberIndex {
  bool bitmap = true;
  uint64_t space = 0;
  std::vector<uint64_t> words;
  std::unordered_set<uint64_t> hashed;
  uint64_t members = 0;

  void init(uint64_t code_space) {
    space = code_space;
    bitmap = code_space <= kBitmapLimit;
    if (bitmap) words.assign((code_space + 63) / 64, 0);
  }
  bool add(uint64_t c) {  // true when newly inserted
    if (bitmap) {
      uint64_t& w = words[c >> 6];
      uint64_t bit = uint64_t(1) << (c & 63);
      if (w & bit) return false;
      w |= bit;
      ++members;
      return true;
    }
    bool fresh = hashed.insert(c).second;
    if (fresh) ++members;
    return fresh;
  }
  bool test(uint64_t c) const {
    if (bitmap) return words[c >> 6] & (uint64_t(1) << (c & 63));
    return hashed.count(c) != 0;
  }
};

// ---------------------------------------------------------------------------
// Caches: annihilated-set codes per (n, q, poly) and suffix product indices
// per (n, q, ordered poly list).  Both immutable once built.
// ---------------------------------------------------------------------------

using PolyKey = std::array<uint32_t, 2>;  // (c1, c0) residues

PolyKey poly_key(const QuadPoly& p) {
  return {static_cast<uint32_t>(p.c1().residue()),
          static_cast<uint32_t>(p.c0().residue())};
}

struct AnnKey {
  size_t n;
  uint32_t q;
  PolyKey p;
  auto operator<=>(const AnnKey&) const = default;
};

struct SuffixKey {
  size_t n;
  uint32_t q;
  std::vector<PolyKey> polys;
  auto operator<=>(const SuffixKey&) const = default;
};

std::mutex g_cache_mu;
std::map<AnnKey, std::shared_ptr<const std::vector<uint64_t>>> g_ann_cache;
std::map<SuffixKey, std::shared_ptr<const MemberIndex>> g_suffix_cache;

void check_prime_field(const Field& f, const char* what) {
  if (f.is_rational())
    fail("BadField", std::string(what) + " requires a prime field");
}

void check_poly_field(const QuadPoly& p, uint32_t q) {
  if (p.field().is_rational() || p.field().characteristic() != q)
    fail("FieldMismatch", "annihilator " + p.str() + " is not over F_" +
                              std::to_string(q));
}

/// Enumeration preconditions shared by every exhaustive scan.
uint64_t scan_space(size_t n, uint32_t q, const SearchBudget& budget) {
  if (!q_is_prime(q))
    fail("BadField", "q = " + std::to_string(q) + " is not prime");
  if (n == 0) fail("BadInput", "dimension must be positive");
  if (n > budget.max_n || q > budget.max_q)
    fail("BudgetExceeded", "enumeration bounds exceeded: n = " +
                               std::to_string(n) + ", q = " +
                               std::to_string(q) + " (budget n <= " +
                               std::to_string(budget.max_n) + ", q <= " +
                               std::to_string(budget.max_q) + ")");
  bool fits = true;
  uint64_t space = pow_u64(q, n * n, &fits);
  if (!fits || space > budget.max_ops)
    fail("BudgetExceeded",
         "code space q^(n^2) exceeds the operation budget");
  return space;
}

std::shared_ptr<const std::vector<uint64_t>> ann_codes(
    size_t n, uint32_t q, const QuadPoly& p, const SearchBudget& budget) {
  check_poly_field(p, q);
  // Budget validation precedes the cache probe so that memoization stays
  // observationally invisible.
  uint64_t space = scan_space(n, q, budget);
  AnnKey key{n, q, poly_key(p)};
  {
    std::lock_guard<std::mutex> lk(g_cache_mu);
    auto it = g_ann_cache.find(key);
    if (it != g_ann_cache.end()) return it->second;
  }
  uint32_t c1 = key.p[0], c0 = key.p[1];
  size_t nn = n * n;

  auto scan_range = [&](uint64_t lo, uint64_t hi, std::vector<uint64_t>& out) {
    uint8_t d[kMaxDim * kMaxDim];
    decode_digits(lo, nn, q, d);
    for (uint64_t c = lo; c < hi; ++c) {
      if (pis_ann(n, q, d, c1, c0)) out.push_back(c);
      inc_digits(d, nn, q);
    }
  };

  unsigned jobs = std::max(1u, budget.jobs);
  std::vector<std::vector<uint64_t>> parts(jobs);
  if (jobs > 1 && space >= 4096) {
    std::vector<std::thread> workers;
    for (unsigned w = 0; w < jobs; ++w) {
      uint64_t lo = space / jobs * w;
      uint64_t hi = (w + 1 == jobs) ? space : space / jobs * (w + 1);
      workers.emplace_back(scan_range, lo, hi, std::ref(parts[w]));
    }
    for (auto& t : workers) t.join();
  } else {
    scan_range(0, space, parts[0]);
  }
  auto result = std::make_shared<std::vector<uint64_t>>();
  for (auto& part : parts)
    result->insert(result->end(), part.begin(), part.end());

  std::lock_guard<std::mutex> lk(g_cache_mu);
  auto [it, fresh] = g_ann_cache.emplace(key, result);
  (void)fresh;
  return it->second;
}

std::vector<Digits> decode_all(const std::vector<uint64_t>& codes, size_t n,
                               uint32_t q) {
  std::vector<Digits> out(codes.size());
  for (size_t i = 0; i < codes.size(); ++i)
    decode_digits(codes[i], n * n, q, out[i].data());
  return out;
}

/// Product set of the (ordered) suffix polynomial list as a membership index.
std::shared_ptr<const MemberIndex> suffix_index(
    size_t n, uint32_t q, const std::vector<QuadPoly>& polys,
    const SearchBudget& budget, OpMeter& meter) {
  SuffixKey key{n, q, {}};
  for (const QuadPoly& p : polys) key.polys.push_back(poly_key(p));
  {
    std::lock_guard<std::mutex> lk(g_cache_mu);
    auto it = g_suffix_cache.find(key);
    if (it != g_suffix_cache.end()) return it->second;
  }
  bool fits = true;
  uint64_t space = pow_u64(q, n * n, &fits);
  if (!fits) fail("BudgetExceeded", "code space does not fit in 64 bits");

  auto idx = std::make_shared<MemberIndex>();
  idx->init(space);
  if (polys.size() == 1) {
    auto codes = ann_codes(n, q, polys[0], budget);
    meter.charge(codes->size());
    for (uint64_t c : *codes) idx->add(c);
  } else {  // exactly two in every reachable split
    auto left = ann_codes(n, q, polys[0], budget);
    auto right = ann_codes(n, q, polys[1], budget);
    meter.charge(uint64_t(left->size()) * right->size());
    std::vector<Digits> rmats = decode_all(*right, n, q);
    uint8_t a[kMaxDim * kMaxDim], prod[kMaxDim * kMaxDim];
    for (uint64_t lc : *left) {
      decode_digits(lc, n * n, q, a);
      for (const Digits& b : rmats) {
        pmul(n, q, a, b.data(), prod);
        idx->add(encode_digits(prod, n * n, q));
      }
    }
  }
  std::lock_guard<std::mutex> lk(g_cache_mu);
  auto [it, fresh] = g_suffix_cache.emplace(key, idx);
  (void)fresh;
  return it->second;
}

Mat unpack_digits(const uint8_t* d, size_t n, uint32_t q) {
  Field f = Field::prime(q);
  Mat m(f, n, n);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j)
      m.at(i, j) = Scalar(f, static_cast<long>(d[i * n + j]));
  return m;
}

void pack_digits(const Mat& m, uint8_t* d) {
  size_t n = m.rows();
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j)
      d[i * n + j] = static_cast<uint8_t>(m.at(i, j).residue());
}

/// Splits X into factors annihilated by the (1- or 2-element) suffix list.
bool extract_suffix(const uint8_t* x, size_t n, uint32_t q,
                    const std::vector<QuadPoly>& polys,
                    const SearchBudget& budget, OpMeter& meter,
                    std::vector<Digits>& out) {
  PolyKey pk = poly_key(polys[0]);
  if (polys.size() == 1) {
    if (!pis_ann(n, q, x, pk[0], pk[1])) return false;
    Digits d{};
    std::memcpy(d.data(), x, n * n);
    out.push_back(d);
    return true;
  }
  PolyKey last = poly_key(polys[1]);
  auto codes = ann_codes(n, q, polys[0], budget);
  uint8_t b[kMaxDim * kMaxDim], binv[kMaxDim * kMaxDim],
      rest[kMaxDim * kMaxDim];
  for (uint64_t c : *codes) {
    meter.charge(1);
    decode_digits(c, n * n, q, b);
    if (pk[1] != 0) {
      pinv_ann(n, q, b, pk[0], pk[1], binv);
    } else if (!pinv(n, q, b, binv)) {
      continue;  // singular factor cannot divide an invertible target
    }
    pmul(n, q, binv, x, rest);
    if (pis_ann(n, q, rest, last[0], last[1])) {
      Digits d1{}, d2{};
      std::memcpy(d1.data(), b, n * n);
      std::memcpy(d2.data(), rest, n * n);
      out.push_back(d1);
      out.push_back(d2);
      return true;
    }
  }
  return false;
}

/// Exact re-verification of a factor list against the target, in Scalar
/// arithmetic: product equals T and each factor is annihilated.
void verify_witness(const Mat& T, const std::vector<Mat>& factors,
                    const std::vector<QuadPoly>& polys) {
  Mat prod = Mat::identity(T.field(), T.rows());
  for (const Mat& f : factors) prod = prod * f;
  if (prod != T) fail("Internal", "witness product does not match the target");
  for (size_t i = 0; i < factors.size(); ++i)
    if (!annihilates(factors[i], polys[i]))
      fail("Internal", "witness factor is not annihilated as prescribed");
}

// ---------------------------------------------------------------------------
// Randomized witness sampling for dimensions beyond the enumeration budget.
// Produces only positive (re-verified) answers; never used to conclude "no".
// ---------------------------------------------------------------------------

uint64_t splitmix64(uint64_t& s) {
  uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d4b6d7829fdb71ULL;
  return z ^ (z >> 31);
}

/// Random invertible g over F_q by rejection.
void random_invertible_digits(size_t m, uint32_t q, std::mt19937_64& rng,
                              uint8_t* g) {
  std::uniform_int_distribution<uint32_t> dist(0, q - 1);
  for (;;) {
    for (size_t i = 0; i < m * m; ++i) g[i] = static_cast<uint8_t>(dist(rng));
    if (pdet(m, q, g) != 0) return;
  }
}

/// Random invertible matrix annihilated by p: a random conjugate of a random
/// canonical form.  Supports every quadratic with nonzero constant term;
/// returns false when no invertible annihilated matrix exists at dimension m.
bool sample_annihilated(size_t m, uint32_t q, const QuadPoly& p,
                        std::mt19937_64& rng, uint8_t* out) {
  uint8_t d[kMaxDim * kMaxDim] = {0};
  auto rts = roots(p);
  if (rts.has_value()) {
    uint32_t x = static_cast<uint32_t>(rts->x.residue());
    uint32_t y = static_cast<uint32_t>(rts->y.residue());
    if (x == y) {  // x I + square-zero nilpotent of random rank
      std::uniform_int_distribution<size_t> rd(0, m / 2);
      size_t r = rd(rng);
      for (size_t i = 0; i < m; ++i) d[i * m + i] = static_cast<uint8_t>(x);
      for (size_t i = 0; i < r; ++i) d[2 * i * m + 2 * i + 1] = 1;
    } else {  // diagonal with a random multiplicity pattern
      std::uniform_int_distribution<size_t> ad(0, m);
      size_t a = ad(rng);
      for (size_t i = 0; i < m; ++i)
        d[i * m + i] = static_cast<uint8_t>(i < a ? x : y);
    }
  } else {  // companion blocks only; requires even dimension
    if (m % 2 != 0) return false;
    uint32_t c1 = static_cast<uint32_t>(p.c1().residue());
    uint32_t c0 = static_cast<uint32_t>(p.c0().residue());
    for (size_t b = 0; b + 1 < m; b += 2) {
      d[b * m + (b + 1)] = static_cast<uint8_t>((q - c0) % q);
      d[(b + 1) * m + b] = 1;
      d[(b + 1) * m + (b + 1)] = static_cast<uint8_t>((q - c1) % q);
    }
  }
  uint8_t g[kMaxDim * kMaxDim], gi[kMaxDim * kMaxDim], t[kMaxDim * kMaxDim];
  random_invertible_digits(m, q, rng, g);
  if (!pinv(m, q, g, gi)) return false;
  pmul(m, q, g, d, t);
  pmul(m, q, t, gi, out);
  return true;
}

enum class Decision { Yes, No, Undecided };

/// Randomized search for B = a1 a2 a3 with prescribed annihilators: sample
/// a1, a2, solve for a3 and test its annihilation.  A hit is re-verified in
/// exact arithmetic before being reported.
Decision randomized_triple(const Mat& B, const std::array<QuadPoly, 3>& polys,
                           uint64_t seed, uint64_t trials) {
  size_t m = B.rows();
  uint32_t q = B.field().characteristic();
  if (m > kMaxDim) return Decision::Undecided;
  uint8_t bd[kMaxDim * kMaxDim];
  pack_digits(B, bd);
  PolyKey k1 = poly_key(polys[0]), k2 = poly_key(polys[1]),
          k3 = poly_key(polys[2]);
  std::mt19937_64 rng(seed);
  uint8_t a1[kMaxDim * kMaxDim], a2[kMaxDim * kMaxDim],
      inv1[kMaxDim * kMaxDim], inv2[kMaxDim * kMaxDim],
      y[kMaxDim * kMaxDim], a3[kMaxDim * kMaxDim];
  for (uint64_t t = 0; t < trials; ++t) {
    if (!sample_annihilated(m, q, polys[0], rng, a1)) return Decision::Undecided;
    if (!sample_annihilated(m, q, polys[1], rng, a2)) return Decision::Undecided;
    pinv_ann(m, q, a1, k1[0], k1[1], inv1);
    pinv_ann(m, q, a2, k2[0], k2[1], inv2);
    pmul(m, q, inv1, bd, y);
    pmul(m, q, inv2, y, a3);
    if (!pis_ann(m, q, a3, k3[0], k3[1])) continue;
    std::vector<Mat> w{unpack_digits(a1, m, q), unpack_digits(a2, m, q),
                       unpack_digits(a3, m, q)};
    verify_witness(B, w, {polys[0], polys[1], polys[2]});
    return Decision::Yes;
  }
  return Decision::Undecided;
}

bool is_t2_minus_1(const QuadPoly& p) {
  return p.c1().is_zero() && (p.c0() + Scalar::one(p.field())).is_zero();
}

Mat direct_sum_scalar(const Mat& A, const Scalar& lambda, size_t pad) {
  size_t n = A.rows();
  Mat B(A.field(), n + pad, n + pad);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) B.at(i, j) = A.at(i, j);
  for (size_t i = 0; i < pad; ++i) B.at(n + i, n + i) = lambda;
  return B;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public API
// ---------------------------------------------------------------------------

uint64_t pack_mat(const Mat& m, uint32_t q) {
  check_prime_field(m.field(), "pack_mat");
  if (m.field().characteristic() != q)
    fail("FieldMismatch", "matrix is not over F_" + std::to_string(q));
  if (!m.is_square()) fail("BadInput", "pack_mat expects a square matrix");
  bool fits = true;
  pow_u64(q, m.rows() * m.rows(), &fits);
  if (!fits) fail("BadInput", "code space does not fit in 64 bits");
  uint64_t code = 0;
  size_t n = m.rows();
  for (size_t i = n; i-- > 0;)
    for (size_t j = n; j-- > 0;)
      code = code * q + static_cast<uint64_t>(m.at(i, j).residue());
  return code;
}

Mat unpack_mat(uint64_t code, size_t n, uint32_t q) {
  if (!q_is_prime(q))
    fail("BadField", "q = " + std::to_string(q) + " is not prime");
  uint8_t d[kMaxDim * kMaxDim];
  if (n > kMaxDim) fail("BadInput", "dimension exceeds the packed limit");
  decode_digits(code, n * n, q, d);
  return unpack_digits(d, n, q);
}

AnnSet enum_annihilated_codes(size_t n, uint32_t q, const QuadPoly& p,
                              const SearchBudget& budget) {
  auto codes = ann_codes(n, q, p, budget);
  return AnnSet{n, q, *codes};
}

std::vector<Mat> enum_annihilated(size_t n, uint32_t q, const QuadPoly& p,
                                  const SearchBudget& budget) {
  auto codes = ann_codes(n, q, p, budget);
  std::vector<Mat> out;
  out.reserve(codes->size());
  for (uint64_t c : *codes) out.push_back(unpack_mat(c, n, q));
  return out;
}

std::vector<Mat> enum_gl(size_t n, uint32_t q, const SearchBudget& budget) {
  uint64_t space = scan_space(n, q, budget);
  size_t nn = n * n;
  uint8_t d[kMaxDim * kMaxDim] = {0};
  std::vector<Mat> out;
  for (uint64_t c = 0; c < space; ++c) {
    if (pdet(n, q, d) != 0) out.push_back(unpack_digits(d, n, q));
    inc_digits(d, nn, q);
  }
  return out;
}

std::optional<std::vector<Mat>> product_membership(
    const Mat& T, const std::vector<QuadPoly>& polys,
    const SearchBudget& budget) {
  check_prime_field(T.field(), "product_membership");
  if (!T.is_square() || T.rows() == 0)
    fail("BadInput", "target must be square and nonempty");
  if (polys.empty() || polys.size() > 4)
    fail("BadInput", "between 1 and 4 annihilators are supported");
  uint32_t q = T.field().characteristic();
  for (const QuadPoly& p : polys) check_poly_field(p, q);
  if (T.det().is_zero())
    fail("BadInput", "target must be invertible");
  size_t n = T.rows();

  if (polys.size() == 1)
    return annihilates(T, polys[0]) ? std::optional<std::vector<Mat>>{{T}}
                                    : std::nullopt;

  OpMeter meter{0, budget.max_ops};
  size_t kp = polys.size() / 2;
  std::vector<QuadPoly> prefix(polys.begin(), polys.begin() + kp);
  std::vector<QuadPoly> suffix(polys.begin() + kp, polys.end());
  auto idx = suffix_index(n, q, suffix, budget, meter);

  uint8_t td[kMaxDim * kMaxDim];
  pack_digits(T, td);

  auto finish = [&](const std::vector<Digits>& pref_mats,
                    const uint8_t* x) -> std::optional<std::vector<Mat>> {
    std::vector<Digits> suff_mats;
    if (!extract_suffix(x, n, q, suffix, budget, meter, suff_mats))
      return std::nullopt;  // unreachable: index said member
    std::vector<Mat> w;
    for (const Digits& d : pref_mats) w.push_back(unpack_digits(d.data(), n, q));
    for (const Digits& d : suff_mats) w.push_back(unpack_digits(d.data(), n, q));
    verify_witness(T, w, polys);
    return w;
  };

  auto p1codes = ann_codes(n, q, prefix[0], budget);
  PolyKey k1 = poly_key(prefix[0]);
  uint8_t a1[kMaxDim * kMaxDim], i1[kMaxDim * kMaxDim], x1[kMaxDim * kMaxDim];
  if (kp == 1) {
    for (uint64_t c : *p1codes) {
      meter.charge(1);
      decode_digits(c, n * n, q, a1);
      if (k1[1] != 0) {
        pinv_ann(n, q, a1, k1[0], k1[1], i1);
      } else if (!pinv(n, q, a1, i1)) {
        continue;
      }
      pmul(n, q, i1, td, x1);
      if (!idx->test(encode_digits(x1, n * n, q))) continue;
      Digits d{};
      std::memcpy(d.data(), a1, n * n);
      if (auto w = finish({d}, x1)) return w;
    }
    return std::nullopt;
  }
  // kp == 2 (four annihilators)
  auto p2codes = ann_codes(n, q, prefix[1], budget);
  PolyKey k2 = poly_key(prefix[1]);
  std::vector<Digits> p2mats = decode_all(*p2codes, n, q);
  uint8_t i2[kMaxDim * kMaxDim], x2[kMaxDim * kMaxDim];
  for (uint64_t c : *p1codes) {
    decode_digits(c, n * n, q, a1);
    if (k1[1] != 0) {
      pinv_ann(n, q, a1, k1[0], k1[1], i1);
    } else if (!pinv(n, q, a1, i1)) {
      continue;
    }
    pmul(n, q, i1, td, x1);
    meter.charge(p2mats.size());
    for (const Digits& a2 : p2mats) {
      if (k2[1] != 0) {
        pinv_ann(n, q, a2.data(), k2[0], k2[1], i2);
      } else if (!pinv(n, q, a2.data(), i2)) {
        continue;
      }
      pmul(n, q, i2, x1, x2);
      if (!idx->test(encode_digits(x2, n * n, q))) continue;
      Digits d1{};
      std::memcpy(d1.data(), a1, n * n);
      if (auto w = finish({d1, a2}, x2)) return w;
    }
  }
  return std::nullopt;
}

uint64_t Census::total() const {
  uint64_t t = 0;
  for (const auto& [d, c] : by_det) t += c;
  return t;
}

namespace {

void put_u32(std::ostream& os, uint32_t v) {
  uint8_t b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}
void put_u64(std::ostream& os, uint64_t v) {
  uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}
uint32_t get_u32(std::istream& is) {
  uint8_t b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}
uint64_t get_u64(std::istream& is) {
  uint8_t b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

constexpr char kCensusMagic[4] = {'I', 'V', 'C', 'S'};

}  // namespace

Census census(size_t n, uint32_t q, size_t k, const QuadPoly& p,
              const SearchBudget& budget, const std::string& persist_path) {
  if (k == 0) fail("BadInput", "census needs at least one factor");
  auto s1codes = ann_codes(n, q, p, budget);
  bool fits = true;
  uint64_t space = pow_u64(q, n * n, &fits);
  if (!fits) fail("BudgetExceeded", "code space does not fit in 64 bits");
  OpMeter meter{0, budget.max_ops};

  MemberIndex acc;
  acc.init(space);
  std::vector<uint64_t> members;
  for (uint64_t c : *s1codes) {
    if (acc.add(c)) members.push_back(c);
  }
  std::vector<Digits> gens = decode_all(*s1codes, n, q);
  uint8_t x[kMaxDim * kMaxDim], prod[kMaxDim * kMaxDim];
  for (size_t level = 2; level <= k; ++level) {
    size_t snapshot = members.size();
    meter.charge(uint64_t(snapshot) * gens.size());
    for (size_t i = 0; i < snapshot; ++i) {
      decode_digits(members[i], n * n, q, x);
      for (const Digits& g : gens) {
        pmul(n, q, x, g.data(), prod);
        uint64_t c = encode_digits(prod, n * n, q);
        if (acc.add(c)) members.push_back(c);
      }
    }
    if (members.size() == snapshot) break;  // fixed point
  }

  Census out;
  out.n = n;
  out.q = q;
  out.k = k;
  out.poly = p.str();
  for (uint64_t c : members) {
    decode_digits(c, n * n, q, x);
    ++out.by_det[pdet(n, q, x)];
  }

  if (!persist_path.empty()) {
    std::ofstream os(persist_path, std::ios::binary | std::ios::trunc);
    if (!os) fail("BadInput", "cannot write census file " + persist_path);
    os.write(kCensusMagic, 4);
    put_u32(os, 1);  // format version
    put_u32(os, static_cast<uint32_t>(n));
    put_u32(os, q);
    put_u32(os, static_cast<uint32_t>(k));
    put_u32(os, static_cast<uint32_t>(p.c1().residue()));
    put_u32(os, static_cast<uint32_t>(p.c0().residue()));
    put_u32(os, static_cast<uint32_t>(out.by_det.size()));
    for (const auto& [d, cnt] : out.by_det) {
      put_u64(os, d);
      put_u64(os, cnt);
    }
    std::sort(members.begin(), members.end());
    put_u64(os, members.size());
    for (uint64_t c : members) put_u64(os, c);
    if (!os) fail("BadInput", "short write to census file " + persist_path);
  }
  return out;
}

Census load_census(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("BadInput", "cannot read census file " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCensusMagic, 4) != 0)
    fail("BadInput", "not a census file: " + path);
  uint32_t version = get_u32(is);
  if (version != 1)
    fail("BadInput", "unsupported census format version " +
                         std::to_string(version));
  Census out;
  out.n = get_u32(is);
  out.q = get_u32(is);
  out.k = get_u32(is);
  uint32_t c1 = get_u32(is), c0 = get_u32(is);
  Field f = Field::prime(out.q);
  out.poly = QuadPoly(Scalar(f, static_cast<long>(c1)),
                      Scalar(f, static_cast<long>(c0)))
                 .str();
  uint32_t ndet = get_u32(is);
  for (uint32_t i = 0; i < ndet; ++i) {
    uint64_t d = get_u64(is);
    uint64_t cnt = get_u64(is);
    out.by_det[d] = cnt;
  }
  uint64_t nmembers = get_u64(is);
  if (!is) fail("BadInput", "truncated census file: " + path);
  std::map<uint64_t, uint64_t> recount;
  uint8_t x[kMaxDim * kMaxDim];
  for (uint64_t i = 0; i < nmembers; ++i) {
    uint64_t c = get_u64(is);
    if (!is) fail("BadInput", "truncated census file: " + path);
    decode_digits(c, out.n * out.n, out.q, x);
    ++recount[pdet(out.n, out.q, x)];
  }
  if (recount != out.by_det)
    fail("BadInput", "census file is inconsistent with its member list");
  return out;
}

bool scalar_three_involution_product(const Scalar& mu, size_t m) {
  if (m == 0) return true;
  Scalar one = Scalar::one(mu.field());
  Scalar mu2 = mu * mu;
  if (mu2 * mu2 != one) return false;
  return mu2 == one || m % 2 == 0;
}

std::vector<Scalar> annihilated_det_values(const QuadPoly& p, size_t m) {
  Field f = p.field();
  if (m == 0) return {Scalar::one(f)};
  std::set<Scalar> vals;
  auto rts = roots(p);
  if (!rts.has_value()) {  // companion blocks of p only
    if (m % 2 != 0) return {};
    auto [norm, trace] = norm_trace(p);
    (void)trace;
    vals.insert(norm.pow(static_cast<long>(m / 2)));
  } else if (rts->x == rts->y) {  // root I + nilpotent
    if (rts->x.is_zero()) return {};
    vals.insert(rts->x.pow(static_cast<long>(m)));
  } else {
    // Diagonalizable with eigenvalues among the roots; a zero root is
    // excluded from invertible members.
    size_t lo = rts->y.is_zero() ? m : 0;
    size_t hi = rts->x.is_zero() ? 0 : m;
    for (size_t a = lo; a <= hi; ++a)
      vals.insert(rts->x.pow(static_cast<long>(a)) *
                  rts->y.pow(static_cast<long>(m - a)));
  }
  return {vals.begin(), vals.end()};
}

std::optional<size_t> lambda_stable_search(const Mat& A, const Scalar& lambda,
                                           const std::array<QuadPoly, 3>& polys,
                                           size_t qmax,
                                           const SearchBudget& budget) {
  check_prime_field(A.field(), "lambda_stable_search");
  if (!A.is_square()) fail("BadInput", "block must be square");
  if (lambda.field().is_rational() ||
      lambda.field().characteristic() != A.field().characteristic())
    fail("FieldMismatch", "lambda is not over the block's field");
  if (lambda.is_zero()) fail("BadScalar", "lambda must be invertible");
  uint32_t q = A.field().characteristic();
  for (const QuadPoly& p : polys) {
    check_poly_field(p, q);
    if (!p.is_non_derogatory())
      fail("BadPoly",
           "factor annihilators must have nonzero constant term: " + p.str());
  }
  size_t n = A.rows();
  Scalar detA = n == 0 ? Scalar::one(A.field()) : A.det();
  bool all_involution = is_t2_minus_1(polys[0]) && is_t2_minus_1(polys[1]) &&
                        is_t2_minus_1(polys[2]);
  Scalar scalar_core = lambda;  // value when A itself is scalar
  bool a_is_scalar = n == 0 || A.is_scalar(&scalar_core);

  std::optional<size_t> first_undecided;
  for (size_t pad = 0; pad <= qmax; ++pad) {
    size_t m = n + pad;
    Decision d = Decision::Undecided;

    // Exact determinant filter: the target's determinant must be attainable
    // as a product of per-factor determinants at dimension m.
    Scalar detB = detA * lambda.pow(static_cast<long>(pad));
    bool admissible = false;
    if (m == 0) {
      admissible = true;
      d = Decision::Yes;  // empty product
    } else {
      for (const Scalar& d1 : annihilated_det_values(polys[0], m)) {
        for (const Scalar& d2 : annihilated_det_values(polys[1], m)) {
          for (const Scalar& d3 : annihilated_det_values(polys[2], m)) {
            if (d1 * d2 * d3 == detB) admissible = true;
          }
        }
      }
      if (!admissible) d = Decision::No;
    }

    // Exact scalar-target decision (all-involution flavor).
    bool pad_scalar =
        a_is_scalar && (n == 0 || pad == 0 || scalar_core == lambda);
    Scalar mu = (n == 0) ? lambda : scalar_core;
    if (d == Decision::Undecided && pad_scalar && all_involution)
      d = scalar_three_involution_product(mu, m) ? Decision::Yes : Decision::No;

    // Exhaustive meet-in-the-middle when the dimension is enumerable.
    if (d == Decision::Undecided && m <= budget.max_n && q <= budget.max_q) {
      bool fits = true;
      uint64_t space = pow_u64(q, m * m, &fits);
      if (fits && space <= budget.max_ops) {
        try {
          auto w = product_membership(
              direct_sum_scalar(A, lambda, pad),
              {polys[0], polys[1], polys[2]}, budget);
          d = w.has_value() ? Decision::Yes : Decision::No;
        } catch (const error& e) {
          if (e.code() != "BudgetExceeded") throw;
        }
      }
    }

    // Randomized witness search: positive answers only, re-verified.
    if (d == Decision::Undecided && m <= kMaxDim) {
      uint64_t seed = 0x9e3779b97f4a7c15ULL;
      auto mix = [&seed](uint64_t v) {
        seed ^= v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2);
        splitmix64(seed);
      };
      mix(q);
      mix(m);
      mix(lambda.residue());
      for (const QuadPoly& p : polys) {
        mix(p.c1().residue());
        mix(p.c0().residue());
      }
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) mix(A.at(i, j).residue());
      d = randomized_triple(direct_sum_scalar(A, lambda, pad), polys, seed,
                            600'000);
    }

    if (d == Decision::Yes) {
      if (first_undecided.has_value() && *first_undecided < pad)
        fail("BudgetExceeded",
             "witness found at padding " + std::to_string(pad) +
                 " but padding " + std::to_string(*first_undecided) +
                 " could not be decided; least padding is not certifiable");
      return pad;
    }
    if (d == Decision::Undecided && !first_undecided.has_value())
      first_undecided = pad;
  }
  if (first_undecided.has_value())
    fail("BudgetExceeded",
         "padding " + std::to_string(*first_undecided) +
             " is beyond the enumeration budget and no exact shortcut or "
             "randomized witness decided it");
  return std::nullopt;
}

}  // namespace invo
