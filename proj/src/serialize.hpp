#pragma once
/// \file serialize.hpp
/// \brief JSON serialization for every artifact the command-line tools
///        exchange: scalars, polynomials, matrices, basis indices, linear
///        combinations, windows, representable automorphisms,
///        stratifications, reports, and factorization certificates.
///
/// Certificates are stored as finite rule tables over the verified window
/// plus a structural tail descriptor, so a loaded certificate stays
/// decidable on windows larger than the stored one: scalar tails extend in
/// closed form, and pipeline tails rebuild the factors deterministically
/// from the recorded recipe (builder name, polynomials, seed, budget).

#include <json.hpp>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "factorize.hpp"
#include "glsearch.hpp"
#include "modulestruct.hpp"

namespace invo::io {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Leaf types

json field_json(Field f);                     ///< "F5" or "Q"
Field field_of(const json& j);

json scalar_json(const Scalar& s);            ///< decimal string, "n/d" over Q
Scalar scalar_of(const json& j, Field f);

json poly_json(const QuadPoly& p);            ///< {"field":…, "poly":"t^2+…"}
QuadPoly poly_of(const json& j);              ///< field read from the object
QuadPoly poly_of(const json& j, Field f);     ///< accepts a bare string too

/// {"field":…, "rows":…, "cols":…, "entries":[["1","0"],…]}
json mat_json(const Mat& m);
Mat mat_of(const json& j);

/// {"block":"S0","slot":-3} or {"block":"P1","copy":4,"slot":1}
json index_json(const BasisIndex& i);
BasisIndex index_of(const json& j);

/// [{"index":…, "coeff":"3"}, …] in canonical term order
json lincomb_json(const LinComb& x);
LinComb lincomb_of(const json& j, Field f);

json window_json(const Window& w);            ///< array of index objects
Window window_of(const json& j);

json report_json(const CheckReport& r);
CheckReport report_of(const json& j);

json budget_json(const SearchBudget& b);
SearchBudget budget_of(const json& j);

// ---------------------------------------------------------------------------
// Structured types

/// {"field":…, "finite_blocks":[{"id":…,"matrix":…}],
///  "shift_blocks":[{"id":…,"multiplier":…}],
///  "periodic_blocks":[{"id":…,"matrix":…}],
///  "coupling":[{"from":…,"image":…}], "perturbation":[{"from":…,"image":…}]}
json repaut_json(const RepAut& u);
RepAut repaut_of(const json& j);

/// {"prefix":[{"generator":…,"dim":2|null},…],
///  "tail":[{"block":…,"from_copy":…,"gen_terms":…,"chain_terms":…,"dim":…}],
///  "periodic_copies_from": k | null}
json strat_json(const Stratification& s);
Stratification strat_of(const json& j, std::shared_ptr<const RepAut> ambient);

json component_json(const ElementaryComponent& c);
ElementaryComponent component_of(const json& j, Field f);

json refusal_json(const Refusal& r);
json decision_json(const Decision& d);
json acceptability_json(const Acceptability& a);
json census_json(const Census& c);

// ---------------------------------------------------------------------------
// Certificates

/// How to regenerate the factors of a certificate beyond its stored rule
/// tables.  builder is one of "factor-three", "factor-four",
/// "scalar-tiles", "elementary"; fields a builder does not need are
/// ignored.  Rebuilds are deterministic: same recipe, same factors.
struct FactorRecipe {
  std::string builder;
  std::vector<QuadPoly> polys;
  std::optional<Scalar> lambda;                 ///< scalar-tiles only
  std::vector<ElementaryComponent> components;  ///< elementary only
  SearchBudget budget{};
  uint64_t seed = 0;                            ///< pipeline pairing seed
};

/// Serializes target, window, report, provenance, and one rule per factor.
/// Factors whose role marks them as global scalars are stored with kind
/// "scalar"; all others get kind "table" (finite table over the stored
/// window) with a tail descriptor carrying the recipe.
json certificate_json(const Certificate& cert, const FactorRecipe& recipe);

/// Loads a certificate whose factor rules answer queries inside the stored
/// table directly and rebuild the recorded pipeline (once, lazily, shared
/// across the factors) for indices beyond it.
Certificate certificate_of(const json& j);

// ---------------------------------------------------------------------------
// Files

json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const json& j);

}  // namespace invo::io
