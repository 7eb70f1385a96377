#pragma once
/// @file factorize.hpp
/// @brief Factorization of representable automorphisms into products of
///        three or four quadratic automorphisms with prescribed split
///        annihilating polynomials, together with verifiable certificates.
///
/// The central objects are Certificates: a target automorphism, an ordered
/// list of factors (each a lazily evaluated operator paired with the monic
/// degree-2 polynomial that annihilates it), and a window report showing
/// that the product of the factors agrees with the target and that every
/// factor is annihilated by its polynomial on that window.  All factor
/// polynomials are required to split over the ground field and to have a
/// nonzero constant term, so every factor is invertible with an explicit
/// inverse witness.
///
/// Construction is compositional: 2x2 scalar triples, paired shift models,
/// adjacency operators that turn an automorphism into an elementary one
/// (both for torsion stratifications and for free parts), dominance-killing
/// quadratic companions, and a finite-rank search branch that reduces
/// scalar-plus-finite-rank targets to an exhaustive matrix-group search.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "algebra.hpp"
#include "glsearch.hpp"
#include "linalg.hpp"
#include "modulestruct.hpp"
#include "opcore.hpp"

namespace invo {

// ---------------------------------------------------------------------------
// Certificates

/// One factor of a certified product: the operator, the monic degree-2
/// polynomial annihilating it, and a short human-readable role tag saying
/// which construction produced it (e.g. "adjacency", "elementary-left").
struct Factor {
  LazyOp op;
  QuadPoly annihilator;
  std::string role;
};

/// A certified factorization u = f_1 f_2 ... f_k (product order; applying
/// the certificate to a vector applies f_k first).  `window_report`
/// aggregates the checks run at construction time on `window`: each factor
/// annihilated by its polynomial, and the composed product equal to the
/// target on the window.
struct Certificate {
  std::shared_ptr<const RepAut> target;
  std::vector<Factor> factors;
  Window window;
  CheckReport window_report;
  std::string provenance;  ///< one-line construction trace

  std::string str() const;
};

/// Re-runs every certificate check on the window W: p_i(f_i) = 0 on W for
/// each factor and (f_1 ... f_k)(e) = u(e) for each e in W.  The report
/// aggregates all checks; failures carry the offending basis vector.
CheckReport verify_certificate(const RepAut& u, const Certificate& cert,
                               const Window& W);

// ---------------------------------------------------------------------------
// Finite building blocks

/// A matrix triple A*B*C = lambda*I with prescribed annihilators; the
/// matrices are 1x1 (root-product witness) or 2x2 (norm-square witness).
struct ScalarTriple {
  Mat A, B, C;
};

/// Builds matrices with A*B*C = lambda*I, p1(A) = p2(B) = p3(C) = 0.  With
/// a root-product witness lambda = w1*w2*w3 the triple is the 1x1 scalars
/// (w1)(w2)(w3); otherwise lambda^2 = N(p1)N(p2)N(p3) forces a 2x2 triple
/// in which A comes out upper triangular with the roots of p1 on the
/// diagonal (p1 must then split).  Fails with BadScalar when lambda = 0,
/// NotAcceptable when neither witness shape exists, NotSplit when the
/// norm-square shape is needed but p1 has no roots, and
/// NonDerogatoryRequired when a constant term vanishes.
ScalarTriple scalar_triple_2x2(const Scalar& lambda, const QuadPoly& p1,
                               const QuadPoly& p2, const QuadPoly& p3);

/// Certifies lambda * id as a product of three annihilated factors on the
/// whole of `space` (which must act as lambda * id on an
/// infinite-dimensional universe; checked structurally).  With a
/// root-product witness the factors are the global scalars w1, w2, w3;
/// otherwise the basis is paired off exhaustively -- the finite-block
/// vectors chained into the first periodic stream make the pairing total
/// -- and each pair carries one 2x2 scalar triple.  Fails with
/// NotAcceptable when no witness exists, BadInput when space is not the
/// scalar automorphism or is finite-dimensional.
Certificate scalar_id_factors(const Scalar& lambda,
                              const std::array<QuadPoly, 3>& polys,
                              const RepAut& space);

// ---------------------------------------------------------------------------
// Shift-pair model

/// Two operators on a single shift block (basis e_0, e_1, e_2, ... of block
/// 0, extended to negative slots by the same parity rules) with p(a) = 0,
/// q(b) = 0 and a*b super-elementary: the product has a two-dimensional
/// filtration whose layers it shifts cyclically, with cyclic vector e_1.
struct ShiftPairOps {
  LazyOp a, b;
};

/// Builds the pair for a split p = (t - alpha)(t - beta) (roots in
/// canonical order) and any monic degree-2 q with q(0) != 0:
///   a(e_{2n}) = alpha e_{2n} + e_{2n+3},   a(e_{2n+1}) = beta e_{2n+1},
///   b(e_{2n}) = e_{2n+1},                  b(e_{2n+1}) = mu e_{2n} + la e_{2n+1},
/// where q = t^2 - la t - mu.  Fails with NotSplit when p does not split,
/// NonDerogatoryRequired when a constant term vanishes.
ShiftPairOps shift_pair(const QuadPoly& p, const QuadPoly& q);

// ---------------------------------------------------------------------------
// Elementary factorization

/// One indecomposable summand of an elementary automorphism v: either a
/// whole shift block on which v acts as a scaled shift, or a cyclic part
/// whose v-orbit from `seed` is certified independent up to `bound` steps.
struct ElementaryComponent {
  enum class Kind { ScaledShift, Cyclic };
  Kind kind = Kind::ScaledShift;
  uint32_t block = 0;      ///< ScaledShift: which shift block
  Scalar mult;             ///< ScaledShift: v(e_k) = mult * e_{k+1}
  LinComb seed{Field::rationals()};  ///< Cyclic: orbit generator
  int64_t bound = 0;       ///< Cyclic: certified independence depth

  static ElementaryComponent scaled_shift(uint32_t block, Scalar mult);
  static ElementaryComponent cyclic(LinComb seed, int64_t bound);
  std::string str() const;
};

/// The two factors of an elementary automorphism.
struct ElementaryFactors {
  LazyOp f, g;
};

/// Factors an elementary v (given with its component decomposition) as
/// v = f * g with p(f) = 0 and q(g) = 0, by transporting the shift-pair
/// model through the isomorphism sending each component's orbit basis to
/// the model basis.  p must split.  Fails with NotElementaryEvidence when
/// a cyclic component's orbit certificate does not hold at its bound, or
/// when a vector of v's universe does not decompose over the components.
ElementaryFactors elementary_pair_ops(
    const LazyOp& v, const std::vector<ElementaryComponent>& comps,
    const QuadPoly& p, const QuadPoly& q, int64_t bound);

/// Certificate wrapper around elementary_pair_ops for a representable v:
/// v = f * g checked on the default window.
Certificate elementary_factor_pq(const RepAut& v,
                                 const std::vector<ElementaryComponent>& comps,
                                 const QuadPoly& p, const QuadPoly& q);

// ---------------------------------------------------------------------------
// Adjacency operators

/// Output of an adjacency construction: an operator a with p(a) = 0 such
/// that v = a * u is elementary, together with v, its component
/// decomposition, and a note describing the construction.
struct AdjacencyResult {
  LazyOp a;
  LazyOp v;
  std::vector<ElementaryComponent> components;
  std::string note;
};

/// Adjacency operator from a stratification: for u with stratification s
/// (all strata of u's own universe) and split p = (t - la)(t - mu), builds
/// a acting as la on a basis adapted to the strata, except on each
/// finite-dimensional stratum's generator, which is sent to mu times
/// itself plus the top chain vector of the next stratum.  The
/// stratification must pass its window certificate and be either all
/// finite-dimensional strata (torsion universe, no shift blocks -- the
/// stitched v has a single cyclic component) or all infinite-dimensional
/// strata (free universe -- a is the scalar la and every stratum yields a
/// scaled-shift or cyclic component); mixed shapes are BadInput.  Requires
/// every finite stratum to be followed by one of dimension >= 2 (else
/// NotSemiGood) and p split (else NotSplit).
AdjacencyResult adjacency_strat(const RepAut& u, const Stratification& s,
                                const QuadPoly& p);

/// Adjacency operator for an automorphism whose universe contains at least
/// one shift block: the quotient by the span W of the shift blocks is
/// stratified, representatives are adjusted so their escape happens below
/// slot 0 of the lowest shift block, and a pairs each representative with
/// one orbit vector of that block (companion cell of p) while acting as
/// the canonical root alpha of p on the rest of the adapted basis.  Then
/// v = a * u is elementary with one cyclic component through the lowest
/// shift generator and scaled-shift components (multiplier alpha * m) for
/// the remaining shift blocks; with no torsion quotient a is the scalar
/// alpha.  Requires p split with p(0) != 0 (NotSplit /
/// NonDerogatoryRequired) and at least one shift block (NoFreePart).
/// One-way couplings into the free part are supported; perturbations
/// originating in a shift block are not (BadInput).
AdjacencyResult adjacency_free(const RepAut& u, const QuadPoly& p);

// ---------------------------------------------------------------------------
// Dominance

/// Output of kill_dominant: a with p(a) = 0 built from 2x2 companion
/// cells over paired basis vectors, such that a - delta id has infinite
/// rank for every delta (no dominant eigenvalue), and v = a * u.
struct KillResult {
  LazyOp a;
  LazyOp v;
};

/// Pairs the basis of u's universe and places the companion matrix of p on
/// every pair: a(e) = f, a(f) = mu e + la f for p = t^2 - la t - mu.
/// Pairs are chosen inside each block when cell dimension allows and
/// across consecutive copies of one-dimensional periodic cells; an odd
/// finite block or odd leftover cell keeps one vector on which a acts as
/// the canonical root of p (requires p split in those cases).
/// `pairing_seed` varies the pairing deterministically (retry handle).
KillResult kill_dominant(const RepAut& u, const QuadPoly& p,
                         uint64_t pairing_seed = 0);

// ---------------------------------------------------------------------------
// Invariant closure

/// Smallest-by-construction extension of span(W) invariant under a, b and
/// c when c b a is a scalar plus an operator with image inside span(W):
/// returns an echelon basis of
///   W + a W + b W + c W + b a W + c b W + a c W + c a W.
/// Checks stability of the result under all three operators and fails
/// with HypothesisViolation if any image escapes (the hypothesis on
/// c b a must then be false).  The result has dimension <= 8 dim span(W).
std::vector<LinComb> invariant_closure(const LazyOp& a, const LazyOp& b,
                                       const LazyOp& c,
                                       const std::vector<LinComb>& W);

// ---------------------------------------------------------------------------
// Main factorization pipeline

/// A structured refusal: the target provably (or by exhausted search)
/// admits no factorization with the requested annihilators.
struct Refusal {
  std::string code;    ///< NotAcceptable | DeterminantObstruction | SearchExhausted
  std::string detail;
  std::string str() const { return code + ": " + detail; }
};

/// Either a certificate or a refusal.  Errors (bad input, unsupported
/// shapes, internal check failures) are thrown, not returned.
struct FactorOutcome {
  std::optional<Certificate> certificate;
  std::optional<Refusal> refusal;
  bool ok() const { return certificate.has_value(); }
};

/// Factorization of u = lambda id + w with w of finite rank, as a product
/// of three factors annihilated by polys.  Compresses w to a minimal
/// finite-dimensional invariant piece, searches for the least scalar
/// padding making the compressed block a product of three annihilated
/// matrices (prime fields: exhaustive search; rationals: decided by exact
/// determinant filters where available, otherwise UnsupportedField), and
/// glues the matrix witness to a 2x2 scalar tiling of the rest of the
/// universe.  Returns a Refusal when lambda is not acceptable, when a
/// determinant filter excludes every padding, or when the search space is
/// exhausted up to qmax.  Throws NoDominantEigenvalue when u is not a
/// scalar plus finite rank.
FactorOutcome finite_rank_three(const RepAut& u,
                                const std::array<QuadPoly, 3>& polys,
                                size_t qmax = 8,
                                const SearchBudget& budget = {},
                                uint64_t seed = 0);

/// Three-factor factorization of u with prescribed split annihilators.
/// Dispatch: dominant eigenvalue -> finite_rank_three; universe with a
/// shift block -> adjacency_free + elementary pair; otherwise (periodic
/// torsion) -> stratification + adjacency_strat + elementary pair.  The
/// adjacency branches require lambda-acceptability of the triple only
/// through the constructions themselves; refusals bubble up from the
/// finite-rank branch.
FactorOutcome factor_three(const RepAut& u, const std::array<QuadPoly, 3>& polys,
                           const SearchBudget& budget = {},
                           uint64_t seed = 0);

/// Four-factor factorization of u with prescribed split annihilators
/// (all with nonzero constant term).  When u has no dominant eigenvalue,
/// prepends omega id (omega a root of p1) and factors omega^{-1} u into
/// three; when u has a dominant eigenvalue, kills it with a companion
/// operator for p1 and factors the elementary-ready remainder into three.
/// The seed picks the first pairing used by the dominant-eigenvalue branch;
/// stuck builders retry with the next three seeds before giving up.
Certificate factor_four(const RepAut& u, const std::array<QuadPoly, 4>& polys,
                        const SearchBudget& budget = {},
                        uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Classification of three-factor products

/// The three named annihilator triples with complete product criteria:
///   Involutions: (t^2-1, t^2-1, t^2-1)
///   Unipotents:  ((t-1)^2, (t-1)^2, (t-1)^2)
///   Mixed:       ((t-1)^2, t^2-1, t^2-1)
enum class TripleFlavor { Involutions, Unipotents, Mixed };

/// Decision for "u is a product of three factors of the given flavor",
/// with the list of necessary-condition checks that were evaluated.
struct Decision {
  bool product = false;
  std::vector<std::string> reasons;
  std::string str() const;
};

/// Complete criterion per flavor.
///   Involutions: yes iff NOT (dominant lambda with lambda^4 != 1) and NOT
///     (finite-rank deviation from lambda id with lambda^4 = 1 and induced
///     determinant outside {+-lambda^k}).
///   Unipotents: yes iff NOT (dominant lambda with lambda^2 != 1), NOT
///     (u - id finite rank and induced det != 1), NOT (u + id finite rank
///     and induced det outside {+-1}).
///   Mixed: yes iff NOT (dominant lambda with lambda^2 != 1) and NOT
///     (dominant lambda in {+-1} with finite-rank deviation and induced
///     det outside {+-1}).
Decision classify3(const RepAut& u, TripleFlavor flavor);

}  // namespace invo
