#include "algebra.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace invo {

namespace {

bool is_prime_u32(uint32_t n) {
  if (n < 2) return false;
  for (uint64_t d = 2; d * d <= n; ++d)
    if (n % d == 0) return false;
  return true;
}

uint64_t mod_pow(uint64_t b, uint64_t e, uint64_t p) {
  uint64_t r = 1 % p;
  b %= p;
  while (e) {
    if (e & 1) r = r * b % p;
    b = b * b % p;
    e >>= 1;
  }
  return r;
}

uint64_t mod_inv(uint64_t a, uint64_t p) {
  if (a == 0) fail("DivisionByZero", "inverse of zero in F_" + std::to_string(p));
  int64_t t = 0, nt = 1;
  int64_t r = static_cast<int64_t>(p), nr = static_cast<int64_t>(a);
  while (nr != 0) {
    int64_t q = r / nr;
    std::swap(t -= q * nt, nt);
    std::swap(r -= q * nr, nr);
  }
  if (t < 0) t += static_cast<int64_t>(p);
  return static_cast<uint64_t>(t);
}

/// Square root mod an odd prime (Tonelli-Shanks); empty if a is not a square.
std::optional<uint64_t> sqrt_mod(uint64_t a, uint64_t p) {
  a %= p;
  if (a == 0) return 0;
  if (mod_pow(a, (p - 1) / 2, p) != 1) return std::nullopt;
  if (p % 4 == 3) return mod_pow(a, (p + 1) / 4, p);
  uint64_t q = p - 1, s = 0;
  while (q % 2 == 0) q /= 2, ++s;
  uint64_t z = 2;
  while (mod_pow(z, (p - 1) / 2, p) != p - 1) ++z;
  uint64_t m = s, c = mod_pow(z, q, p), t = mod_pow(a, q, p),
           r = mod_pow(a, (q + 1) / 2, p);
  while (t != 1) {
    uint64_t i = 0, tt = t;
    while (tt != 1) tt = tt * tt % p, ++i;
    uint64_t b = mod_pow(c, uint64_t{1} << (m - i - 1), p);
    m = i;
    c = b * b % p;
    t = t * c % p;
    r = r * b % p;
  }
  return r;
}

}  // namespace

// ------------------------------------------------------------------- Field

Field Field::prime(uint32_t p) {
  if (!is_prime_u32(p)) fail("BadField", std::to_string(p) + " is not prime");
  Field f;
  f.p_ = p;
  return f;
}

std::string Field::str() const {
  return is_rational() ? "Q" : "F" + std::to_string(p_);
}

Field Field::parse(std::string_view s) {
  std::string t;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) t += c;
  if (t == "Q" || t == "q") return rationals();
  if (!t.empty() && (t[0] == 'F' || t[0] == 'f')) t = t.substr(1);
  else if (t.size() > 4 && (t.rfind("GF(", 0) == 0 || t.rfind("gf(", 0) == 0) &&
           t.back() == ')')
    t = t.substr(3, t.size() - 4);
  if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) {
        return std::isdigit(static_cast<unsigned char>(c));
      }))
    fail("BadField", "cannot parse field tag '" + std::string(s) + "'");
  unsigned long v = std::stoul(t);
  if (v > 0xffffffffUL) fail("BadField", "field characteristic too large");
  return prime(static_cast<uint32_t>(v));
}

// ------------------------------------------------------------------ Scalar

Scalar::Scalar(Field f, long v) : f_(f) {
  if (f_.is_rational()) {
    q_ = mpq_class(v);
  } else {
    int64_t p = f_.characteristic();
    int64_t r = v % p;
    if (r < 0) r += p;
    v_ = static_cast<uint64_t>(r);
  }
}

Scalar::Scalar(Field f, const mpz_class& v) : f_(f) {
  if (f_.is_rational()) {
    q_ = mpq_class(v);
  } else {
    v_ = mpz_fdiv_ui(v.get_mpz_t(), f_.characteristic());
  }
}

Scalar Scalar::rational(const mpq_class& v) {
  Scalar s;
  s.q_ = v;
  s.q_.canonicalize();
  return s;
}

bool Scalar::is_zero() const {
  return f_.is_rational() ? sgn(q_) == 0 : v_ == 0;
}

bool Scalar::is_one() const {
  return f_.is_rational() ? q_ == 1 : v_ == 1 % f_.characteristic();
}

void Scalar::check_same(const Scalar& o) const {
  if (!(f_ == o.f_))
    fail("FieldMismatch", "operands live in " + f_.str() + " and " + o.f_.str());
}

Scalar Scalar::operator-() const {
  Scalar r = *this;
  if (f_.is_rational()) {
    mpq_class t = -q_;
    r.q_ = t;
  } else {
    r.v_ = v_ == 0 ? 0 : f_.characteristic() - v_;
  }
  return r;
}

Scalar Scalar::operator+(const Scalar& o) const {
  check_same(o);
  Scalar r = *this;
  if (f_.is_rational()) {
    mpq_class t = q_ + o.q_;
    r.q_ = t;
  } else {
    r.v_ = (v_ + o.v_) % f_.characteristic();
  }
  return r;
}

Scalar Scalar::operator-(const Scalar& o) const { return *this + (-o); }

Scalar Scalar::operator*(const Scalar& o) const {
  check_same(o);
  Scalar r = *this;
  if (f_.is_rational()) {
    mpq_class t = q_ * o.q_;
    r.q_ = t;
  } else {
    r.v_ = v_ * o.v_ % f_.characteristic();
  }
  return r;
}

Scalar Scalar::operator/(const Scalar& o) const { return *this * o.inv(); }

Scalar Scalar::inv() const {
  Scalar r = *this;
  if (f_.is_rational()) {
    if (sgn(q_) == 0) fail("DivisionByZero", "inverse of zero in Q");
    mpq_class t = 1 / q_;
    r.q_ = t;
  } else {
    r.v_ = mod_inv(v_, f_.characteristic());
  }
  return r;
}

Scalar Scalar::pow(long k) const {
  if (k < 0) return inv().pow(-k);
  Scalar r = Scalar::one(f_), b = *this;
  unsigned long e = static_cast<unsigned long>(k);
  while (e) {
    if (e & 1) r = r * b;
    b = b * b;
    e >>= 1;
  }
  return r;
}

bool Scalar::operator==(const Scalar& o) const {
  return f_ == o.f_ && (f_.is_rational() ? q_ == o.q_ : v_ == o.v_);
}

bool Scalar::operator<(const Scalar& o) const {
  check_same(o);
  return f_.is_rational() ? q_ < o.q_ : v_ < o.v_;
}

uint64_t Scalar::residue() const {
  if (f_.is_rational()) fail("BadField", "residue() on a rational scalar");
  return v_;
}

const mpq_class& Scalar::rational_value() const {
  if (!f_.is_rational()) fail("BadField", "rational_value() on an F_p scalar");
  return q_;
}

std::string Scalar::str() const {
  return f_.is_rational() ? q_.get_str() : std::to_string(v_);
}

Scalar Scalar::parse(Field f, std::string_view s) {
  std::string t;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) t += c;
  if (t.empty()) fail("BadScalar", "empty scalar literal");
  auto slash = t.find('/');
  try {
    if (slash == std::string::npos) {
      return Scalar(f, mpz_class(t));
    }
    Scalar num(f, mpz_class(t.substr(0, slash)));
    Scalar den(f, mpz_class(t.substr(slash + 1)));
    return num / den;
  } catch (const std::invalid_argument&) {
    fail("BadScalar", "cannot parse scalar '" + std::string(s) + "'");
  }
}

// ---------------------------------------------------------------- QuadPoly

QuadPoly::QuadPoly(Scalar c1, Scalar c0) : c1_(std::move(c1)), c0_(std::move(c0)) {
  if (!(c1_.field() == c0_.field()))
    fail("FieldMismatch", "quadratic coefficients in different fields");
}

Scalar QuadPoly::eval(const Scalar& t) const { return t * t + c1_ * t + c0_; }

std::string QuadPoly::str() const {
  std::string out = "t^2";
  auto term = [&](const Scalar& c, const std::string& var) {
    if (c.is_zero()) return;
    std::string cs = c.str();
    if (!cs.empty() && cs[0] == '-')
      out += cs;
    else
      out += "+" + cs;
    out += var;
  };
  term(c1_, "t");
  term(c0_, "");
  return out;
}

namespace {

/// Parses "t<signed constant>" inside a factored form, returning the root.
Scalar parse_linear_root(Field f, std::string_view body) {
  if (body.empty() || body[0] != 't')
    fail("BadPoly", "expected linear factor '(t...)'");
  std::string_view rest = body.substr(1);
  if (rest.empty()) return Scalar::zero(f);
  return -Scalar::parse(f, rest);
}

}  // namespace

QuadPoly QuadPoly::parse(Field f, std::string_view s) {
  std::string t;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c)) && c != '*') t += c;
  if (t.empty()) fail("BadPoly", "empty polynomial literal");

  if (t[0] == '(') {
    auto close = t.find(')');
    if (close == std::string::npos) fail("BadPoly", "unbalanced '(' in '" + t + "'");
    Scalar r1 = parse_linear_root(f, std::string_view(t).substr(1, close - 1));
    std::string_view rest = std::string_view(t).substr(close + 1);
    Scalar r2 = Scalar::zero(f);
    if (rest == "^2") {
      r2 = r1;
    } else if (!rest.empty() && rest[0] == '(' && rest.back() == ')') {
      r2 = parse_linear_root(f, rest.substr(1, rest.size() - 2));
    } else {
      fail("BadPoly", "cannot parse factored quadratic '" + t + "'");
    }
    return QuadPoly(-(r1 + r2), r1 * r2);
  }

  // Sum-of-terms form: coefficients of t^2 (must be 1), t, and 1.
  Scalar c2 = Scalar::zero(f), c1 = Scalar::zero(f), c0 = Scalar::zero(f);
  size_t i = 0;
  while (i < t.size()) {
    bool neg = false;
    while (i < t.size() && (t[i] == '+' || t[i] == '-')) {
      if (t[i] == '-') neg = !neg;
      ++i;
    }
    if (i >= t.size()) fail("BadPoly", "dangling sign in '" + t + "'");
    size_t j = i;
    while (j < t.size() && (std::isdigit(static_cast<unsigned char>(t[j])) || t[j] == '/'))
      ++j;
    Scalar coef = (j == i) ? Scalar::one(f)
                           : Scalar::parse(f, std::string_view(t).substr(i, j - i));
    if (neg) coef = -coef;
    int deg = 0;
    i = j;
    if (i < t.size() && t[i] == 't') {
      deg = 1;
      ++i;
      if (i + 1 < t.size() && t[i] == '^') {
        if (t[i + 1] == '2')
          deg = 2, i += 2;
        else if (t[i + 1] == '1')
          deg = 1, i += 2;
        else
          fail("BadPoly", "degree > 2 in '" + t + "'");
      }
    }
    if (deg == 2)
      c2 = c2 + coef;
    else if (deg == 1)
      c1 = c1 + coef;
    else
      c0 = c0 + coef;
  }
  if (!c2.is_one())
    fail("BadPoly", "quadratic must be monic: '" + std::string(s) + "'");
  return QuadPoly(c1, c0);
}

std::pair<Scalar, Scalar> norm_trace(const QuadPoly& p) {
  return {p.c0(), -p.c1()};
}

QuadPoly reciprocal(const QuadPoly& p) {
  if (!p.is_non_derogatory())
    fail("NonDerogatoryRequired", "reciprocal of " + p.str() + " (p(0) = 0)");
  Scalar n = p.c0().inv();
  return QuadPoly(p.c1() * n, n);
}

std::optional<Roots> roots(const QuadPoly& p) {
  Field f = p.field();
  auto sorted = [](Scalar a, Scalar b) {
    if (b < a) std::swap(a, b);
    return Roots{std::move(a), std::move(b)};
  };
  if (f.is_rational()) {
    // disc = c1^2 - 4 c0 must be the square of a rational.
    Scalar four(f, 4);
    mpq_class disc = (p.c1() * p.c1() - four * p.c0()).rational_value();
    if (sgn(disc) < 0) return std::nullopt;
    mpz_class num = disc.get_num(), den = disc.get_den();
    if (!mpz_perfect_square_p(num.get_mpz_t()) ||
        !mpz_perfect_square_p(den.get_mpz_t()))
      return std::nullopt;
    mpz_class sn, sd;
    mpz_sqrt(sn.get_mpz_t(), num.get_mpz_t());
    mpz_sqrt(sd.get_mpz_t(), den.get_mpz_t());
    Scalar s = Scalar::rational(mpq_class(sn, sd));
    Scalar half = Scalar::rational(mpq_class(1, 2));
    return sorted((-p.c1() + s) * half, (-p.c1() - s) * half);
  }
  uint64_t q = f.characteristic();
  if (q == 2) {
    std::vector<Scalar> found;
    for (long v = 0; v < 2; ++v) {
      Scalar t(f, v);
      if (p.eval(t).is_zero()) found.push_back(t);
    }
    if (found.empty()) return std::nullopt;
    if (found.size() == 2) return sorted(found[0], found[1]);
    // One root r found by evaluation; the other is c1 - r = c1 + r (char 2).
    Scalar other = p.c1() + found[0];
    if (!(p.eval(other).is_zero() && found[0] * other == p.c0()))
      return std::nullopt;  // double point over F_2 only if consistent
    return sorted(found[0], other);
  }
  uint64_t disc =
      (p.c1() * p.c1() - Scalar(f, 4) * p.c0()).residue();
  auto s = sqrt_mod(disc, q);
  if (!s) return std::nullopt;
  Scalar sq(f, static_cast<long>(*s));
  Scalar half = Scalar(f, 2).inv();
  return sorted((-p.c1() + sq) * half, (-p.c1() - sq) * half);
}

std::string Acceptability::str() const {
  switch (kind) {
    case Kind::No:
      return "No";
    case Kind::NormSquare:
      return "NormSquare";
    case Kind::ProductOfRoots: {
      auto& w = *witness;
      return "ProductOfRoots(" + w[0].str() + "," + w[1].str() + "," +
             w[2].str() + ")";
    }
  }
  return "?";
}

Acceptability acceptable(const Scalar& lambda, const QuadPoly& p1,
                         const QuadPoly& p2, const QuadPoly& p3) {
  auto r1 = roots(p1), r2 = roots(p2), r3 = roots(p3);
  if (r1 && r2 && r3) {
    for (const Scalar& w1 : {r1->x, r1->y})
      for (const Scalar& w2 : {r2->x, r2->y})
        for (const Scalar& w3 : {r3->x, r3->y})
          if (w1 * w2 * w3 == lambda)
            return {Acceptability::Kind::ProductOfRoots,
                    std::array<Scalar, 3>{w1, w2, w3}};
  }
  if (lambda * lambda == p1.c0() * p2.c0() * p3.c0())
    return {Acceptability::Kind::NormSquare, std::nullopt};
  return {Acceptability::Kind::No, std::nullopt};
}

// -------------------------------------------------------------------- Poly

Poly::Poly(const Scalar& c) : f_(c.field()) {
  if (!c.is_zero()) c_.push_back(c);
}

Poly Poly::monomial(Field f, int deg, const Scalar& c) {
  Poly p(f);
  if (c.is_zero()) return p;
  p.c_.assign(static_cast<size_t>(deg) + 1, Scalar::zero(f));
  p.c_.back() = c;
  return p;
}

Poly Poly::from_coeffs(Field f, std::vector<Scalar> coeffs) {
  Poly p(f);
  p.c_ = std::move(coeffs);
  p.trim();
  return p;
}

Poly Poly::from_quad(const QuadPoly& q) {
  return from_coeffs(q.field(), {q.c0(), q.c1(), Scalar::one(q.field())});
}

Scalar Poly::coeff(int i) const {
  if (i < 0 || i > degree()) return Scalar::zero(f_);
  return c_[static_cast<size_t>(i)];
}

Scalar Poly::lead() const {
  if (is_zero()) fail("BadPoly", "leading coefficient of the zero polynomial");
  return c_.back();
}

bool Poly::is_monic() const { return !is_zero() && c_.back().is_one(); }

Poly Poly::monic() const {
  if (is_zero()) return *this;
  return *this * c_.back().inv();
}

void Poly::trim() {
  while (!c_.empty() && c_.back().is_zero()) c_.pop_back();
}

Poly Poly::operator+(const Poly& o) const {
  Poly r(f_);
  size_t n = std::max(c_.size(), o.c_.size());
  r.c_.assign(n, Scalar::zero(f_));
  for (size_t i = 0; i < c_.size(); ++i) r.c_[i] = r.c_[i] + c_[i];
  for (size_t i = 0; i < o.c_.size(); ++i) r.c_[i] = r.c_[i] + o.c_[i];
  r.trim();
  return r;
}

Poly Poly::operator-(const Poly& o) const { return *this + o * (-Scalar::one(f_)); }

Poly Poly::operator*(const Poly& o) const {
  Poly r(f_);
  if (is_zero() || o.is_zero()) return r;
  r.c_.assign(c_.size() + o.c_.size() - 1, Scalar::zero(f_));
  for (size_t i = 0; i < c_.size(); ++i)
    for (size_t j = 0; j < o.c_.size(); ++j)
      r.c_[i + j] = r.c_[i + j] + c_[i] * o.c_[j];
  r.trim();
  return r;
}

Poly Poly::operator*(const Scalar& c) const {
  Poly r(f_);
  if (c.is_zero()) return r;
  r.c_ = c_;
  for (auto& x : r.c_) x = x * c;
  return r;
}

std::pair<Poly, Poly> Poly::divmod(const Poly& d) const {
  if (d.is_zero()) fail("DivisionByZero", "polynomial division by zero");
  Poly q(f_), r = *this;
  Scalar dl = d.lead().inv();
  while (!r.is_zero() && r.degree() >= d.degree()) {
    int k = r.degree() - d.degree();
    Scalar c = r.lead() * dl;
    q = q + monomial(f_, k, c);
    r = r - d * monomial(f_, k, c);
  }
  return {q, r};
}

Scalar Poly::eval(const Scalar& t) const {
  Scalar r = Scalar::zero(f_);
  for (size_t i = c_.size(); i-- > 0;) r = r * t + c_[i];
  return r;
}

std::string Poly::str() const {
  if (is_zero()) return "0";
  std::ostringstream out;
  bool first = true;
  for (size_t i = c_.size(); i-- > 0;) {
    if (c_[i].is_zero()) continue;
    std::string cs = c_[i].str();
    if (!first && cs[0] != '-') out << "+";
    if (i == 0 || !(c_[i].is_one() || cs == "-1"))
      out << cs;
    else if (cs == "-1")
      out << "-";
    if (i >= 1) out << "t";
    if (i >= 2) out << "^" << i;
    first = false;
  }
  return out.str();
}

Poly gcd(Poly a, Poly b) {
  while (!b.is_zero()) {
    Poly r = a.divmod(b).second;
    a = std::move(b);
    b = std::move(r);
  }
  return a.is_zero() ? a : a.monic();
}

Poly lcm(const Poly& a, const Poly& b) {
  if (a.is_zero() || b.is_zero()) return Poly(a.field());
  Poly g = gcd(a, b);
  return (a.divmod(g).first * b).monic();
}

}  // namespace invo
