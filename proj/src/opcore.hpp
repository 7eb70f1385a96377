#pragma once
/// @file opcore.hpp
/// @brief Representable automorphisms of a countably-infinite-dimensional
///        space and lazily evaluated locally-finite operators, with
///        window-based exact evaluation and verification.
///
/// The ambient space has a basis organized in blocks:
///   - finite blocks  "B<id>"  : slots 0..dim-1, acted on by an invertible
///                               matrix;
///   - shift blocks   "S<id>"  : slots over all integers, u(e_k) = m*e_{k+1}
///                               for a nonzero multiplier m;
///   - periodic blocks "P<id>" : countably many copies of a cell, each copy
///                               acted on by the same invertible matrix.
/// A RepAut is the block-diagonal action plus a strictly one-way coupling
/// (finite cells into shift blocks) plus a finite-rank perturbation.  Every
/// image has finite support and evaluation is exact.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "algebra.hpp"
#include "linalg.hpp"

namespace invo {

// ---------------------------------------------------------------------------
// Basis indexing

enum class BlockKind : uint8_t { Finite = 0, Shift = 1, Periodic = 2 };

/// One basis vector of the ambient space.
struct BasisIndex {
  BlockKind kind = BlockKind::Finite;
  uint32_t block = 0;
  int64_t copy = 0;  ///< periodic blocks only; always 0 otherwise
  int64_t slot = 0;

  static BasisIndex finite(uint32_t block, int64_t slot) {
    return {BlockKind::Finite, block, 0, slot};
  }
  static BasisIndex shift(uint32_t block, int64_t slot) {
    return {BlockKind::Shift, block, 0, slot};
  }
  static BasisIndex periodic(uint32_t block, int64_t copy, int64_t slot) {
    return {BlockKind::Periodic, block, copy, slot};
  }

  auto operator<=>(const BasisIndex&) const = default;

  std::string block_name() const;  ///< "B0", "S0", "P1"
  std::string str() const;         ///< "B0[2]", "S0[-3]", "P1[4,1]"
};

// ---------------------------------------------------------------------------
// Sparse vectors

/// Finite linear combination of basis vectors; zero coefficients are never
/// stored and term order is canonical.
class LinComb {
public:
  explicit LinComb(Field f) : f_(f) {}
  static LinComb unit(Field f, const BasisIndex& i);

  Field field() const { return f_; }
  bool is_zero() const { return terms_.empty(); }
  size_t size() const { return terms_.size(); }
  Scalar coeff(const BasisIndex& i) const;
  const std::map<BasisIndex, Scalar>& terms() const { return terms_; }

  /// Accumulate c on coordinate i; erases the term when it cancels.
  void add(const BasisIndex& i, const Scalar& c);
  /// this += c * o
  void add_scaled(const LinComb& o, const Scalar& c);

  LinComb& operator+=(const LinComb& o);
  LinComb& operator-=(const LinComb& o);
  LinComb operator+(const LinComb& o) const;
  LinComb operator-(const LinComb& o) const;
  LinComb operator*(const Scalar& c) const;
  LinComb operator-() const;
  bool operator==(const LinComb& o) const {
    return f_ == o.f_ && terms_ == o.terms_;
  }
  bool operator!=(const LinComb& o) const { return !(*this == o); }

  std::string str() const;  ///< e.g. "2*S0[1] + 4*B0[0]", "0" when empty

private:
  void check_same(const LinComb& o) const;
  Field f_;
  std::map<BasisIndex, Scalar> terms_;
};

// ---------------------------------------------------------------------------
// Echelonized spans of sparse vectors

/// A fully reduced echelon family of sparse vectors with coordinate
/// tracking: supports independence insertion, membership tests, and exact
/// coordinates both in the echelon basis and in terms of the inserted
/// vectors.  The workhorse behind orbit solves, image bases and the
/// finite-core inversion.
class SpanBasis {
public:
  explicit SpanBasis(Field f) : f_(f) {}

  /// Inserts x into the span; returns true when x was independent of the
  /// vectors inserted so far (dependent insertions are remembered for
  /// coordinate bookkeeping but add no new direction).
  bool insert(const LinComb& x);

  size_t dim() const { return rows_.size(); }
  size_t inserted() const { return inserted_; }
  Field field() const { return f_; }

  /// Residual of x after full elimination against the echelon basis.
  LinComb reduce(const LinComb& x) const;
  bool contains(const LinComb& x) const { return reduce(x).is_zero(); }

  /// Coordinates of x in the internal echelon basis; nullopt if outside.
  std::optional<std::vector<Scalar>> coords_in_echelon(const LinComb& x) const;
  /// Coordinates of x in terms of the vectors passed to insert (by
  /// insertion order, zero on dependent insertions); nullopt if outside.
  std::optional<std::vector<Scalar>> coords_in_inserted(const LinComb& x) const;

  /// The echelon vectors (each with a unit pivot owned by no other vector).
  std::vector<LinComb> echelon() const;
  std::vector<BasisIndex> pivots() const;

private:
  struct Row {
    LinComb vec;
    BasisIndex pivot;
    std::map<size_t, Scalar> combo;  // vec = sum combo[j] * inserted_j
  };
  Field f_;
  std::vector<Row> rows_;
  size_t inserted_ = 0;
};

// ---------------------------------------------------------------------------
// Windows

/// A finite set of basis indices: the surface on which identities are
/// checked exactly.  Images of window vectors may leave the window; only
/// the sources are enumerated.
class Window {
public:
  void insert(const BasisIndex& i) { idx_.insert(i); }
  void insert_shift_range(uint32_t block, int64_t lo, int64_t hi);
  void insert_finite_block(uint32_t block, int64_t dim);
  void insert_periodic_copy(uint32_t block, int64_t copy, int64_t dim);
  void insert_all(const Window& o);

  bool contains(const BasisIndex& i) const { return idx_.count(i) != 0; }
  size_t size() const { return idx_.size(); }
  bool empty() const { return idx_.empty(); }
  auto begin() const { return idx_.begin(); }
  auto end() const { return idx_.end(); }

  std::string str() const;  ///< per-block summary "B0(2) S0(65) P0(4)"

private:
  std::set<BasisIndex> idx_;
};

// ---------------------------------------------------------------------------
// Representable automorphisms

struct FiniteBlock {
  uint32_t id;
  Mat matrix;  ///< invertible
};
struct ShiftBlock {
  uint32_t id;
  Scalar multiplier;  ///< nonzero; u(e_k) = multiplier * e_{k+1}
};
struct PeriodicBlock {
  uint32_t id;
  Mat matrix;  ///< invertible; the same action on each of countably many copies
};

/// A representable automorphism of the countably-infinite-dimensional
/// ambient space.  Structured part = block diagonal + one-way coupling
/// (finite cells into shift blocks), hence invertible iff all blocks are;
/// the total operator adds a finite-rank perturbation whose invertibility
/// certificate (a finite core correction) is validated on demand.
class RepAut {
public:
  explicit RepAut(Field f) : f_(f), caches_(std::make_shared<Caches>()) {}

  RepAut& add_finite_block(uint32_t id, Mat m);
  RepAut& add_shift_block(uint32_t id, Scalar multiplier);
  RepAut& add_periodic_block(uint32_t id, Mat m);
  /// Coupling entry: from must index a finite block, image must be supported
  /// on shift blocks (strictly one-way).
  RepAut& add_coupling(const BasisIndex& from, LinComb image);
  /// Perturbation entry: arbitrary valid source and image (finite support).
  RepAut& add_perturbation(const BasisIndex& from, LinComb image);

  Field field() const { return f_; }
  const std::vector<FiniteBlock>& finite_blocks() const { return finite_; }
  const std::vector<ShiftBlock>& shift_blocks() const { return shift_; }
  const std::vector<PeriodicBlock>& periodic_blocks() const { return periodic_; }
  const std::map<BasisIndex, LinComb>& coupling() const { return coupling_; }
  const std::map<BasisIndex, LinComb>& perturbation() const { return pert_; }

  const FiniteBlock* find_finite(uint32_t id) const;
  const ShiftBlock* find_shift(uint32_t id) const;
  const PeriodicBlock* find_periodic(uint32_t id) const;

  /// Throws UnknownIndex unless i addresses a declared block within range.
  void check_index(const BasisIndex& i) const;

  /// Exact image of a basis vector / linear combination; finite support.
  LinComb apply(const BasisIndex& i) const;
  LinComb apply(const LinComb& x) const;

  /// Exact inverse image via the closed-form inverse of the structured part
  /// corrected on the finite perturbation core.  Throws NotInvertible when
  /// the invertibility certificate fails.
  LinComb apply_inverse(const BasisIndex& i) const;
  LinComb apply_inverse(const LinComb& x) const;

  /// Invertibility certificate: blocks are invertible by construction; this
  /// validates the finite core correction.  On failure *why explains.
  bool invertible(std::string* why = nullptr) const;

  /// Full invariant check (block validity, one-way coupling, index ranges,
  /// invertibility certificate); throws on violation.
  void validate() const;

  std::string str() const;  ///< one-line structural summary

private:
  struct InverseData;
  struct Caches {
    std::mutex mu;
    std::map<uint32_t, Mat> fin_inv, per_inv;
    std::shared_ptr<const InverseData> inv;
  };

  Mat finite_inverse(uint32_t id) const;
  Mat periodic_inverse(uint32_t id) const;
  std::shared_ptr<const InverseData> inverse_data() const;
  /// Structural action D + C on a basis vector (no perturbation).
  LinComb apply_structural(const BasisIndex& i) const;
  /// Inverse of the block-diagonal part D on a linear combination.
  LinComb apply_diag_inverse(const LinComb& x) const;
  /// Inverse of the structured part S = D + C:  S^{-1} = D^{-1} - D^{-1}CD^{-1}.
  LinComb apply_structural_inverse(const LinComb& x) const;
  /// Perturbation applied to a linear combination.
  LinComb apply_pert(const LinComb& x) const;
  void invalidate_caches();

  Field f_;
  std::vector<FiniteBlock> finite_;
  std::vector<ShiftBlock> shift_;
  std::vector<PeriodicBlock> periodic_;
  std::map<BasisIndex, LinComb> coupling_;
  std::map<BasisIndex, LinComb> pert_;
  mutable std::shared_ptr<Caches> caches_;
};

/// Default verification window for u: all finite-block slots, periodic
/// copy 0, shift slots -shift_halfwidth..shift_halfwidth, plus the
/// exceptional support (perturbation and coupling images) widened by margin
/// (shift slots +- margin, periodic copies up to support copy + margin).
Window default_window(const RepAut& u, int64_t shift_halfwidth = 32,
                      int64_t margin = 8);

/// The unique lambda with u - lambda*id of finite rank, when it exists: no
/// shift blocks and every periodic block scalar with the same scalar.
std::optional<Scalar> dominant_eigenvalue(const RepAut& u);

/// Determinant of u restricted to im(u - lambda*id) (a u-stable
/// finite-dimensional space), lambda the dominant eigenvalue; 1 when the
/// image is trivial.  Throws NoDominantEigenvalue.
Scalar induced_det(const RepAut& u);

// ---------------------------------------------------------------------------
// Lazily evaluated operators

/// A rule-defined locally-finite operator with an invertibility witness:
/// either an explicit inverse rule, or a non-derogatory degree-2 annihilator
/// p from which the inverse is derived as (tr(p)*id - op)/N(p).  Rules are
/// pure; evaluations are memoized invisibly.  A declared annihilator is a
/// structural promise; it is validated by check_annihilated on every window
/// a certificate is verified on.
class LazyOp {
public:
  using Rule = std::function<LinComb(const BasisIndex&)>;

  static LazyOp from_rule(Field f, Rule rule, Rule inverse_rule,
                          std::optional<QuadPoly> annihilator = std::nullopt);
  /// Witness by annihilator; p must be non-derogatory (p(0) != 0).
  static LazyOp from_annihilated_rule(Field f, Rule rule, QuadPoly annihilator);
  /// Rule without any invertibility witness (invert will refuse).
  static LazyOp from_plain_rule(Field f, Rule rule);
  static LazyOp from_repaut(std::shared_ptr<const RepAut> u);
  static LazyOp from_repaut(const RepAut& u);
  static LazyOp identity(Field f);
  static LazyOp scalar_op(Field f, const Scalar& lambda);  ///< lambda != 0

  Field field() const;
  LinComb apply(const BasisIndex& i) const;
  LinComb apply(const LinComb& x) const;

  bool has_inverse_witness() const;
  const std::optional<QuadPoly>& annihilator() const;
  /// Copy of this op carrying a declared annihilator.
  LazyOp with_annihilator(QuadPoly p) const;

private:
  struct Impl;
  explicit LazyOp(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<const Impl> impl_;
  friend LazyOp invert(const LazyOp& op);
};

/// Inverse of op from its witness; the derived inverse of an op annihilated
/// by non-derogatory p carries annihilator p#.  Throws NoWitness.
LazyOp invert(const LazyOp& op);

/// Composition; the rule applies right-to-left (the last op acts first, as
/// in function composition).  The inverse witness is composed in reverse
/// when every operand has one.  Throws ShapeMismatch on field mismatch.
LazyOp compose(const std::vector<LazyOp>& ops);

// ---------------------------------------------------------------------------
// Window checks

/// Outcome of a window check; a pass is an exact sampling certificate on
/// the window, not a global proof (constructions carry their structural
/// guarantees separately).
struct CheckReport {
  bool pass = true;
  size_t checked = 0;
  std::vector<std::string> failures;  ///< one line per failing index
  std::string str() const;
};

/// Verifies op^2(e_i) + c1*op(e_i) + c0*e_i = 0 for every i in W.
CheckReport check_annihilated(const LazyOp& op, const QuadPoly& p,
                              const Window& W);

/// Pointwise exact comparison of images of the window's basis vectors.
CheckReport equal_on_window(const LazyOp& op1, const LazyOp& op2,
                            const Window& W);

/// Super-elementarity evidence at depth N: exact linear independence of
/// {v^k(x) : -N <= k <= N} plus the set of basis vectors (drawn from the
/// orbit support) that the orbit segment spans.
struct CyclicReport {
  bool independent = false;
  int64_t depth = 0;
  std::vector<BasisIndex> spanned;
  bool pass() const { return independent; }
  std::string str() const;
};
CyclicReport cyclic_window_cert(const LazyOp& v, const LinComb& x, int64_t N);

/// Exact coefficients (exponent -> coefficient) expressing target in
/// span{v^k(x)}, growing |k| adaptively up to maxN; nullopt when the bound
/// is hit (caller may retry with a larger bound).
std::optional<std::map<int64_t, Scalar>> express_in_orbit_basis(
    const LazyOp& v, const LinComb& x, const LinComb& target, int64_t maxN);

}  // namespace invo
