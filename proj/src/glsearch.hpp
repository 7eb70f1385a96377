#pragma once
/// @file glsearch.hpp
/// @brief Exhaustive finite-group oracle over GL_n(F_q): enumeration of
///        matrices annihilated by a quadratic, k-fold product membership
///        with witnesses, determinant censuses, and the padded search for
///        lambda-stable products.  This module is the independent ground
///        truth against which the constructions are checked.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "algebra.hpp"
#include "linalg.hpp"

namespace invo {

/// Explicit work limits for the exhaustive oracles.  Enumeration scans all
/// q^(n^2) matrices; product scans multiply set sizes.  Exceeding a limit
/// raises BudgetExceeded rather than guessing.
struct SearchBudget {
  size_t max_n = 3;                ///< largest matrix dimension enumerated
  uint32_t max_q = 7;              ///< largest field size enumerated
  uint64_t max_ops = 600'000'000;  ///< cap on elementary scan steps
  unsigned jobs = 1;               ///< worker threads for enumeration scans
};

/// All n x n matrices over F_q annihilated by a monic quadratic, stored as
/// packed codes: base-q digit packing of the entries, row major, with the
/// (0,0) entry as the least significant digit.
struct AnnSet {
  size_t n = 0;
  uint32_t q = 0;
  std::vector<uint64_t> codes;  ///< sorted ascending
};

uint64_t pack_mat(const Mat& m, uint32_t q);
Mat unpack_mat(uint64_t code, size_t n, uint32_t q);

/// Exhaustive scan of all q^(n^2) matrices; results are cached per
/// (n, q, polynomial) so repeated queries are free.
AnnSet enum_annihilated_codes(size_t n, uint32_t q, const QuadPoly& p,
                              const SearchBudget& budget = {});
std::vector<Mat> enum_annihilated(size_t n, uint32_t q, const QuadPoly& p,
                                  const SearchBudget& budget = {});

/// All invertible n x n matrices over F_q (enumeration helper for
/// cross-oracle checks).
std::vector<Mat> enum_gl(size_t n, uint32_t q, const SearchBudget& budget = {});

/// Decides whether T = a_1 ... a_k with a_i annihilated by polys[i], by
/// meet-in-the-middle: the product set of the longer suffix is precomputed
/// (and cached) as a flat bitmap, then prefix tuples are scanned.  Returns
/// the factor list on success; every witness is re-verified by direct
/// multiplication and annihilation checks before being returned.  The
/// target must be invertible.
std::optional<std::vector<Mat>> product_membership(
    const Mat& T, const std::vector<QuadPoly>& polys,
    const SearchBudget& budget = {});

/// Census of the set {products of at most k factors annihilated by p} in
/// GL-dimension n over F_q, stratified by determinant residue.
struct Census {
  size_t n = 0;
  uint32_t q = 0;
  size_t k = 0;
  std::string poly;                     ///< printable polynomial
  std::map<uint64_t, uint64_t> by_det;  ///< determinant residue -> count
  uint64_t total() const;
};

/// Computes the census; when persist_path is nonempty the result (with the
/// full member list) is written there in the versioned binary format.
Census census(size_t n, uint32_t q, size_t k, const QuadPoly& p,
              const SearchBudget& budget = {},
              const std::string& persist_path = "");

/// Reads back a persisted census (header and counts; members are checked
/// for consistency when present).
Census load_census(const std::string& path);

/// Exact decision for scalar targets against three factors annihilated by
/// t^2 - 1: mu I_m is such a product iff mu^4 = 1 and (mu = +-1 or m is
/// even).  Valid in every dimension m >= 1; cross-checked against
/// enumeration for small m in the tests.
bool scalar_three_involution_product(const Scalar& mu, size_t m);

/// The determinant values attainable by m x m matrices annihilated by p
/// (empty when no such matrix exists, e.g. odd m for a non-split p).
std::vector<Scalar> annihilated_det_values(const QuadPoly& p, size_t m);

/// Least padding pad <= qmax such that A + lambda I_pad (block diagonal) is
/// a (p1,p2,p3)-product, or nullopt when every padding up to qmax is
/// excluded exactly.  Paddings whose dimension exceeds the enumeration
/// budget are decided by exact shortcuts (attainable-determinant filter,
/// scalar-target decision); when a padding can be neither enumerated nor
/// shortcut and no earlier witness exists, BudgetExceeded is raised instead
/// of guessing.
std::optional<size_t> lambda_stable_search(const Mat& A, const Scalar& lambda,
                                           const std::array<QuadPoly, 3>& polys,
                                           size_t qmax,
                                           const SearchBudget& budget = {});

}  // namespace invo
