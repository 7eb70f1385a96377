#pragma once
/// @file modulestruct.hpp
/// @brief Module-structure tooling for representable automorphisms:
///        submodule closures with free-orbit detection, stratifications
///        (increasing families of submodules with cyclic successive
///        quotients), the semi-good predicate, strata of the quotient by
///        the free part, and representative adjustment for couplings into
///        the free part.
///
/// Throughout, "submodule" means a linear subspace stable under both the
/// automorphism and its inverse: exactly the Laurent-polynomial submodules
/// of the ambient space when t acts as the automorphism.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "algebra.hpp"
#include "opcore.hpp"

namespace invo {

// ---------------------------------------------------------------------------
// Stratifications

/// One stratum: the class of `generator` generates the quotient of the
/// stratum's submodule by the sum of all earlier strata; `dim` is the
/// dimension of that quotient (nullopt = infinite).
struct Stratum {
  LinComb generator;
  std::optional<int64_t> dim;
};

/// Rule emitting one stratum per copy of a periodic block from `from_copy`
/// on: the q-th stratum it emits is generated by the gen_terms template
/// placed in copy from_copy + q plus the chain_terms template placed in
/// copy from_copy + q + 1.  Chaining is reserved for staircase generators
/// spanning consecutive copies; every rule the builder currently emits has
/// empty chain_terms.
struct TailRule {
  uint32_t block = 0;
  int64_t from_copy = 0;
  std::vector<std::pair<int64_t, Scalar>> gen_terms;    ///< (slot, coeff)
  std::vector<std::pair<int64_t, Scalar>> chain_terms;  ///< (slot, coeff)
  int64_t dim = 0;
};

/// An increasing family of submodules with nonzero cyclic successive
/// quotients: a finite list of explicit strata, optionally followed by tail
/// rules that are cycled round-robin to emit one stratum per remaining
/// periodic copy and cyclic cell summand (index order type omega).
struct Stratification {
  std::shared_ptr<const RepAut> ambient;
  std::vector<Stratum> prefix;
  std::vector<TailRule> tail;

  bool finite() const { return tail.empty(); }
  /// Materializes the j-th tail stratum (round-robin over the rules).
  Stratum tail_stratum(size_t j) const;
  /// Stratum k of the whole sequence: prefix first, then the tail.
  Stratum stratum(size_t k) const;
  std::string str() const;  ///< e.g. "dims [1,3] then P0 copies 1.. (dim 2)"
};

// ---------------------------------------------------------------------------
// Submodule closure

/// Result of a submodule closure from a finite seed: either a finite
/// echelon basis of the generated submodule, or a witness vector whose
/// two-sided orbit stayed linearly independent through the growth bound
/// after the growth entered a shift block.  Orbits inside shift blocks are
/// structurally free, so sustained independence there is accepted as a
/// freeness certificate rather than an undecidable general test.
struct ClosureResult {
  std::vector<LinComb> basis;
  std::optional<LinComb> free_witness;
  bool free_detected() const { return free_witness.has_value(); }
};

/// Closes `seed` under u and u^{-1} by exact span growth.  Returns the
/// basis when the span stabilizes without exceeding `bound` dimensions;
/// returns a free witness when the bound is hit after entering a shift
/// block and a seed orbit certifies independence at depth `bound`.  Fails
/// with BoundExceeded when the growth neither stabilizes nor certifies a
/// free orbit within the bound.
ClosureResult closure(const RepAut& u, const std::vector<LinComb>& seed,
                      size_t bound = 64);

// ---------------------------------------------------------------------------
// Predicates and builders

/// Semi-goodness: the index set must have no greatest element (a tail is
/// present) and every stratum with a predecessor must have dimension > 1
/// (infinite counts as > 1; only stratum 0 is exempt, so every tail rule
/// must have dimension > 1 outright).
CheckReport is_semi_good(const Stratification& s);

/// Builds a semi-good stratification of the space acted on by v, for v with
/// no shift blocks (periodic blocks + finite blocks + finite-rank
/// perturbation).  The finite prefix covers the perturbation-affected core,
/// seeded by the cyclic decomposition of v on that core in increasing
/// dimension order; at most one dimension-1 stratum is kept and placed
/// first; every other dimension-1 piece is covered greedily by candidates
/// of support <= search_support in deterministic order -- two-term sums
/// with a basis vector of the next untouched periodic copy, then a merge
/// with that copy's cyclic generator -- each candidate validated exactly by
/// a closure computation.  Tail rules then emit one stratum per remaining
/// copy and cyclic cell summand.  `backtrack` bounds the total number of
/// failed candidate validations.  Fails with BadInput (shift block present,
/// or no periodic block) or BuilderStuck (dominant eigenvalue, a cell
/// summand of dimension 1, or candidates exhausted).
Stratification build_strat_periodic(const RepAut& v, size_t search_support = 2,
                                    size_t backtrack = 8);

/// Strata of the quotient of the ambient space by the span W of all shift
/// blocks.  u must have a shift block and W must be stable (no perturbation
/// may leak from a shift block into the rest).  Generators are canonical
/// lifts supported on the non-shift coordinates: the prefix lists the
/// cyclic pieces of the induced action on the finite part -- finite blocks
/// plus perturbation-touched periodic copies -- in increasing dimension
/// order, and tail rules walk the remaining periodic copies; with no
/// periodic blocks the sequence is a finite list (possibly empty).
Stratification quotient_strata(const RepAut& u);

/// Rewrites representatives of quotient strata so that each x_k satisfies
///   u^{n_k}(x_k)  in  W_0 + span( u^l(x_i) : i <= k, 0 <= l < n_i ),
/// where n_k is the stratum dimension and W_0 is the span of every shift
/// block other than the lowest-id one together with that block's slots
/// <= 0.  Each step eliminates the window component of u^{n_k}(x_k),
/// peels the positive-slot part of the remainder and pulls it back through
/// u^{n_k}; the slot ceiling drops every round until the remainder lies in
/// W_0.  Representatives whose images never leave W_0 come back unchanged.
std::vector<LinComb> adjust_reps(const RepAut& u, const Stratification& strata,
                                 const std::vector<LinComb>& reps);

/// Window certificate for a stratification: the orbit family u^k(x_alpha),
/// with k in 0..dim-1 for finite strata and symmetric around 0 up to the
/// window's shift reach for infinite ones, must be linearly independent and
/// must span every window basis vector reachable within the checked strata
/// (tail strata are materialized while their generators stay supported
/// inside the window; reachability is probed on a slightly deeper orbit
/// family so that an understated dimension is caught).
CheckReport verify_strat(const Stratification& s, const Window& W);

}  // namespace invo
