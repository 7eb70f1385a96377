#pragma once
/// @file linalg.hpp
/// @brief Exact dense matrices over Field, canonical-form machinery
///        (invariant factors, cyclic generators), quadratic-annihilator
///        helpers, and finite-rank operator compression.

#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "algebra.hpp"

namespace invo {

/// Dense exact matrix.
class Mat {
public:
  Mat(Field f, size_t rows, size_t cols);
  static Mat identity(Field f, size_t n);
  static Mat scalar_mat(Field f, size_t n, const Scalar& c);
  static Mat from_rows(Field f, const std::vector<std::vector<Scalar>>& rows);
  /// Convenience: integer entries (reduced into the field).
  static Mat of(Field f, const std::vector<std::vector<long>>& rows);

  Field field() const { return f_; }
  size_t rows() const { return r_; }
  size_t cols() const { return c_; }
  bool is_square() const { return r_ == c_; }

  Scalar& at(size_t i, size_t j) { return a_[i * c_ + j]; }
  const Scalar& at(size_t i, size_t j) const { return a_[i * c_ + j]; }

  Mat operator+(const Mat& o) const;
  Mat operator-(const Mat& o) const;
  Mat operator*(const Mat& o) const;
  Mat operator*(const Scalar& c) const;
  Mat operator-() const;
  bool operator==(const Mat& o) const;
  bool operator!=(const Mat& o) const { return !(*this == o); }

  Mat transpose() const;
  Scalar trace() const;
  Scalar det() const;
  size_t rank() const;
  Mat inverse() const;  ///< fails with Singular
  Mat pow(long k) const;

  bool is_zero() const;
  bool is_identity() const;
  /// True when the matrix is c * I; reports c.
  bool is_scalar(Scalar* c_out = nullptr) const;

  /// Solves A x = b; empty when inconsistent (A need not be square).
  std::optional<std::vector<Scalar>> solve(const std::vector<Scalar>& b) const;
  /// Basis of the right nullspace (as columns).
  std::vector<std::vector<Scalar>> nullspace() const;

  std::string str() const;  ///< "[[1,4],[0,2]]"

private:
  Field f_;
  size_t r_, c_;
  std::vector<Scalar> a_;
};

Mat operator*(const Scalar& c, const Mat& m);

/// Whether p(A) = A^2 + c1 A + c0 I = 0.
bool annihilates(const Mat& A, const QuadPoly& p);

/// The adjugate-like companion partner tr(p) I - A; when p(A) = 0 it
/// satisfies A * star = N(p) I, so star = N(p) A^{-1} for non-derogatory p.
Mat star_mat(const Mat& A, const QuadPoly& p);

/// Companion matrix [[0, -c0], [1, -c1]] of the monic quadratic p.
Mat companion(const QuadPoly& p);

/// Evaluation of a dense polynomial at a matrix.
Mat eval_poly(const Poly& f, const Mat& A);

/// Minimal polynomial of a vector / of the matrix itself.
Poly min_poly_of_vector(const Mat& A, const std::vector<Scalar>& x);
Poly min_poly(const Mat& A);

/// One cyclic summand of the Frobenius decomposition.
struct FrobeniusPart {
  std::vector<Scalar> generator;  ///< cyclic generator, original coordinates
  int degree = 0;                 ///< = dim of the cyclic summand
  Poly invariant;                 ///< its minimal polynomial
  FrobeniusPart() : invariant(Field::rationals()) {}
};

/// Cyclic decomposition with weakly decreasing invariant-factor degrees;
/// requires an invertible input (fails with Singular).
std::vector<FrobeniusPart> frobenius(const Mat& A);

/// Invariant factors, largest (the minimal polynomial) first.
std::vector<Poly> invariant_factors(const Mat& A);

/// Whether A is similar to its inverse (equal invariant factor lists).
bool similar_to_inverse(const Mat& A);

/// Sparse vector over an abstract countable basis keyed by integers.
using SparseVec = std::map<int64_t, Scalar>;

/// A finite-rank endomorphism w of a countably-infinite space: finitely many
/// basis vectors have a nonzero (finitely supported) image, all others map
/// to zero.
struct FiniteRankOp {
  Field field;
  std::map<int64_t, SparseVec> images;  ///< key k -> w(e_k)
};

/// Matrix of w restricted to a minimal subspace W with im w <= W and
/// W + ker w = V; optionally reports the chosen basis of W.
Mat compress_finite_rank(const FiniteRankOp& w,
                         std::vector<SparseVec>* basis_out = nullptr);

/// Deterministic random matrices for property tests.
Mat random_invertible(Field f, size_t n, std::mt19937_64& rng);
/// Random matrix annihilated by the split quadratic p (conjugated root/Jordan
/// structure); the result is invertible whenever p is non-derogatory.
Mat random_annihilated(Field f, size_t n, const QuadPoly& p,
                       std::mt19937_64& rng);

}  // namespace invo
