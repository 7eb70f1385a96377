#pragma once
/// @file algebra.hpp
/// @brief Exact scalar arithmetic over prime fields and the rationals,
///        monic quadratic polynomials, and scalar acceptability.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <gmpxx.h>

namespace invo {

/// Structured error with a stable machine-readable code.
class error : public std::runtime_error {
public:
  error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

private:
  std::string code_;
};

[[noreturn]] inline void fail(std::string code, const std::string& what) {
  throw error(std::move(code), what);
}

/// A coefficient field: F_p for a prime p, or the rationals.
class Field {
public:
  Field() : p_(0) {}
  static Field rationals() { return Field(); }
  static Field prime(uint32_t p);

  bool is_rational() const { return p_ == 0; }
  uint32_t characteristic() const { return p_; }
  bool operator==(const Field&) const = default;

  std::string str() const;                      ///< "Q" or "F5"
  static Field parse(std::string_view s);       ///< accepts "Q", "F5", "GF(5)"

private:
  uint32_t p_;
};

/// An exact field element. Elements of F_p are kept reduced in [0, p);
/// rationals are canonical mpq values.
class Scalar {
public:
  Scalar() : f_(Field::rationals()), q_(0) {}
  Scalar(Field f, long v);
  Scalar(Field f, const mpz_class& v);
  static Scalar zero(Field f) { return Scalar(f, 0L); }
  static Scalar one(Field f) { return Scalar(f, 1L); }
  static Scalar rational(const mpq_class& v);

  Field field() const { return f_; }
  bool is_zero() const;
  bool is_one() const;

  Scalar operator-() const;
  Scalar operator+(const Scalar& o) const;
  Scalar operator-(const Scalar& o) const;
  Scalar operator*(const Scalar& o) const;
  Scalar operator/(const Scalar& o) const;
  Scalar inv() const;
  Scalar pow(long k) const;

  bool operator==(const Scalar& o) const;
  bool operator!=(const Scalar& o) const { return !(*this == o); }
  /// Canonical order used for root ordering: residues ascending in [0, p)
  /// over F_p, usual order over the rationals.
  bool operator<(const Scalar& o) const;

  /// Residue value in [0, p); only valid over a prime field.
  uint64_t residue() const;
  const mpq_class& rational_value() const;

  std::string str() const;
  static Scalar parse(Field f, std::string_view s);  ///< "7", "-1", "3/4"

private:
  void check_same(const Scalar& o) const;
  Field f_;
  uint64_t v_ = 0;  // used when f_ is a prime field
  mpq_class q_;     // used when f_ is the rationals
};

/// Monic degree-2 polynomial t^2 + c1*t + c0.
class QuadPoly {
public:
  QuadPoly(Scalar c1, Scalar c0);
  Field field() const { return c0_.field(); }
  const Scalar& c1() const { return c1_; }
  const Scalar& c0() const { return c0_; }
  bool is_non_derogatory() const { return !c0_.is_zero(); }
  Scalar eval(const Scalar& t) const;
  bool operator==(const QuadPoly& o) const { return c1_ == o.c1_ && c0_ == o.c0_; }

  std::string str() const;
  /// Accepts "t^2-1", "(t-1)^2", "(t-1)(t-2)", "t^2+3t+2", "t^2-t-1".
  static QuadPoly parse(Field f, std::string_view s);

private:
  Scalar c1_, c0_;
};

/// norm N(p) = p(0) and trace tr(p) = -(coefficient of t); the roots of p
/// multiply to N(p) and sum to tr(p).
std::pair<Scalar, Scalar> norm_trace(const QuadPoly& p);

/// Reciprocal polynomial p#(t) = t^2 p(1/t), renormalized monic.  An
/// automorphism is annihilated by p iff its inverse is annihilated by p#.
/// Fails with NonDerogatoryRequired when p(0) = 0.
QuadPoly reciprocal(const QuadPoly& p);

struct Roots {
  Scalar x, y;  ///< canonical order: x <= y (x == y for a double root)
};

/// Roots of p in its own coefficient field; empty when p does not split.
std::optional<Roots> roots(const QuadPoly& p);

/// Why a scalar is (or is not) acceptable for a triple (p1,p2,p3).
struct Acceptability {
  enum class Kind { ProductOfRoots, NormSquare, No };
  Kind kind = Kind::No;
  /// Root witness (w1,w2,w3) with w1*w2*w3 = lambda, present for ProductOfRoots.
  std::optional<std::array<Scalar, 3>> witness;
  bool ok() const { return kind != Kind::No; }
  std::string str() const;
};

/// lambda is acceptable for (p1,p2,p3) when it is a product of roots of the
/// three polynomials, or when lambda^2 = N(p1)N(p2)N(p3).  The root-product
/// witness is preferred when both hold.
Acceptability acceptable(const Scalar& lambda, const QuadPoly& p1,
                         const QuadPoly& p2, const QuadPoly& p3);

/// Dense polynomial over a field; general-degree utility used by the
/// canonical-form machinery (gcd/lcm, minimal polynomials, evaluations).
class Poly {
public:
  explicit Poly(Field f) : f_(f) {}
  explicit Poly(const Scalar& c);
  static Poly monomial(Field f, int deg, const Scalar& c);
  static Poly from_coeffs(Field f, std::vector<Scalar> coeffs);
  static Poly from_quad(const QuadPoly& p);

  Field field() const { return f_; }
  int degree() const { return static_cast<int>(c_.size()) - 1; }  ///< -1 if zero
  bool is_zero() const { return c_.empty(); }
  Scalar coeff(int i) const;  ///< zero beyond the degree
  Scalar lead() const;
  bool is_monic() const;
  Poly monic() const;

  Poly operator+(const Poly& o) const;
  Poly operator-(const Poly& o) const;
  Poly operator*(const Poly& o) const;
  Poly operator*(const Scalar& c) const;
  bool operator==(const Poly& o) const { return f_ == o.f_ && c_ == o.c_; }

  /// Quotient and remainder; divisor must be nonzero.
  std::pair<Poly, Poly> divmod(const Poly& d) const;
  Scalar eval(const Scalar& t) const;
  std::string str() const;

private:
  void trim();
  Field f_;
  std::vector<Scalar> c_;  // c_[i] = coefficient of t^i; no trailing zeros
};

Poly gcd(Poly a, Poly b);  ///< monic gcd (zero if both zero)
Poly lcm(const Poly& a, const Poly& b);

}  // namespace invo
