#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "linalg.hpp"
#include "modulestruct.hpp"

using namespace invo;

namespace {

LinComb unit(Field f, const BasisIndex& i) { return LinComb::unit(f, i); }

template <class Fn>
std::string thrown_code(Fn&& fn) {
  try {
    fn();
  } catch (const error& e) {
    return e.code();
  }
  return "";
}

/// The closure-stability invariant: u and u^{-1} keep every basis vector
/// inside the span.
bool stable_under(const RepAut& u, const std::vector<LinComb>& basis) {
  SpanBasis span(u.field());
  for (const auto& b : basis) span.insert(b);
  for (const auto& b : basis) {
    if (!span.contains(u.apply(b))) return false;
    if (!span.contains(u.apply_inverse(b))) return false;
  }
  return true;
}

/// Every stratum generator's closure has exactly the recorded dimension.
void check_strata_cyclic(const Stratification& s, size_t tail_samples = 2) {
  const RepAut& u = *s.ambient;
  for (size_t k = 0; k < s.prefix.size(); ++k) {
    REQUIRE(s.prefix[k].dim.has_value());
    auto cl = closure(u, {s.prefix[k].generator},
                      static_cast<size_t>(*s.prefix[k].dim) + 8);
    CHECK_FALSE(cl.free_detected());
    CHECK(cl.basis.size() == static_cast<size_t>(*s.prefix[k].dim));
  }
  for (size_t j = 0; j < tail_samples && !s.tail.empty(); ++j) {
    Stratum st = s.tail_stratum(j);
    REQUIRE(st.dim.has_value());
    auto cl = closure(u, {st.generator}, static_cast<size_t>(*st.dim) + 8);
    CHECK_FALSE(cl.free_detected());
    CHECK(cl.basis.size() == static_cast<size_t>(*st.dim));
  }
}

int64_t prefix_dim_sum(const Stratification& s) {
  int64_t total = 0;
  for (const auto& st : s.prefix) {
    REQUIRE(st.dim.has_value());
    total += *st.dim;
  }
  return total;
}

}  // namespace

TEST_CASE("closure: block seeds stabilize to stable finite bases") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  QuadPoly imag = QuadPoly::parse(F5, "t^2+1");

  SUBCASE("a block generator closes inside its own block") {
    RepAut u(F5);
    u.add_finite_block(0, companion(inv)).add_finite_block(1, companion(imag));
    auto cl = closure(u, {unit(F5, BasisIndex::finite(0, 0))});
    REQUIRE_FALSE(cl.free_detected());
    CHECK(cl.basis.size() == 2);
    for (const auto& b : cl.basis)
      for (const auto& [i, c] : b.terms()) {
        CHECK(i.kind == BlockKind::Finite);
        CHECK(i.block == 0);
      }
    CHECK(stable_under(u, cl.basis));
  }

  SUBCASE("scalar plus finite rank: seeds inside the image stay small") {
    // u = 2*id + w on countably many 1-dim cells, w(e_copy0) = e_copy1.
    RepAut u(F5);
    u.add_periodic_block(0, Mat::of(F5, {{2}}));
    u.add_perturbation(BasisIndex::periodic(0, 0, 0),
                       unit(F5, BasisIndex::periodic(0, 1, 0)));
    u.validate();
    auto inside = closure(u, {unit(F5, BasisIndex::periodic(0, 1, 0))});
    REQUIRE_FALSE(inside.free_detected());
    CHECK(inside.basis.size() == 1);
    auto source = closure(u, {unit(F5, BasisIndex::periodic(0, 0, 0))});
    REQUIRE_FALSE(source.free_detected());
    CHECK(source.basis.size() == 2);
    CHECK(stable_under(u, source.basis));
  }

  SUBCASE("the growth bound is enforced") {
    RepAut u(F5);
    u.add_finite_block(0, companion(inv));
    CHECK(thrown_code([&] {
            closure(u, {unit(F5, BasisIndex::finite(0, 0))}, 1);
          }) == "BoundExceeded");
  }
}

TEST_CASE("closure: free orbits in shift territory are certified") {
  Field F5 = Field::prime(5);

  SUBCASE("the plain shift never stabilizes") {
    RepAut u(F5);
    u.add_shift_block(0, Scalar::one(F5));
    auto cl = closure(u, {unit(F5, BasisIndex::shift(0, 0))}, 10);
    REQUIRE(cl.free_detected());
    CHECK(*cl.free_witness == unit(F5, BasisIndex::shift(0, 0)));
  }

  SUBCASE("a coupled torsion generator rides into the free part") {
    RepAut u(F5);
    u.add_shift_block(0, Scalar::one(F5));
    u.add_finite_block(0, Mat::of(F5, {{2}}));
    u.add_coupling(BasisIndex::finite(0, 0),
                   unit(F5, BasisIndex::shift(0, 3)));
    auto cl = closure(u, {unit(F5, BasisIndex::finite(0, 0))}, 12);
    REQUIRE(cl.free_detected());
    CHECK(*cl.free_witness == unit(F5, BasisIndex::finite(0, 0)));
  }
}

TEST_CASE("semi-good predicate: tails required, dimension 1 only first") {
  Field F5 = Field::prime(5);
  auto u = std::make_shared<RepAut>(F5);
  u->add_periodic_block(0, companion(QuadPoly::parse(F5, "t^2+1")));
  LinComb g = unit(F5, BasisIndex::periodic(0, 0, 0));
  TailRule rule{0, 0, {{0, Scalar::one(F5)}}, {}, 2};

  Stratification good{u, {{g, 2}, {g, 2}}, {rule}};
  CHECK(is_semi_good(good).pass);

  Stratification finite_list{u, {{g, 2}, {g, 2}}, {}};
  auto rep = is_semi_good(finite_list);
  CHECK_FALSE(rep.pass);
  CHECK(rep.str().find("greatest element") != std::string::npos);

  Stratification dim1_inside{u, {{g, 2}, {g, 2}, {g, 2}, {g, 1}}, {rule}};
  CHECK_FALSE(is_semi_good(dim1_inside).pass);

  Stratification dim1_first{u, {{g, 1}, {g, 2}}, {rule}};
  CHECK(is_semi_good(dim1_first).pass);

  Stratification infinite_inside{u, {{g, 2}, {g, std::nullopt}}, {rule}};
  CHECK(is_semi_good(infinite_inside).pass);

  TailRule thin{0, 0, {{0, Scalar::one(F5)}}, {}, 1};
  Stratification thin_tail{u, {{g, 2}}, {thin}};
  CHECK_FALSE(is_semi_good(thin_tail).pass);
}

TEST_CASE("tail rules materialize strata copy by copy") {
  Field F5 = Field::prime(5);
  auto u = std::make_shared<RepAut>(F5);
  u->add_periodic_block(0, companion(QuadPoly::parse(F5, "t^2+1")));
  TailRule rule{0, 3, {{0, Scalar(F5, 2)}}, {{1, Scalar(F5, 4)}}, 2};
  Stratification s{u, {}, {rule}};

  Stratum st0 = s.tail_stratum(0);
  LinComb want0(F5);
  want0.add(BasisIndex::periodic(0, 3, 0), Scalar(F5, 2));
  want0.add(BasisIndex::periodic(0, 4, 1), Scalar(F5, 4));
  CHECK(st0.generator == want0);
  CHECK(st0.dim == 2);

  Stratum st2 = s.stratum(2);  // prefix is empty: stratum 2 = tail stratum 2
  CHECK(st2.generator.coeff(BasisIndex::periodic(0, 5, 0)) == Scalar(F5, 2));
  CHECK(st2.generator.coeff(BasisIndex::periodic(0, 6, 1)) == Scalar(F5, 4));

  Stratification finite_s{u, {{unit(F5, BasisIndex::periodic(0, 0, 0)), 2}}, {}};
  CHECK(thrown_code([&] { finite_s.stratum(1); }) == "BadInput");
}

TEST_CASE("builder: unperturbed copies become the tail in order") {
  Field F5 = Field::prime(5);
  QuadPoly p = QuadPoly::parse(F5, "t^2-t-1");
  Mat cell = companion(reciprocal(p)) * Scalar(F5, 2);
  RepAut v(F5);
  v.add_periodic_block(0, cell);

  Stratification s = build_strat_periodic(v);
  CHECK(s.prefix.empty());
  REQUIRE(s.tail.size() == 1);
  CHECK(s.tail[0].block == 0);
  CHECK(s.tail[0].from_copy == 0);
  CHECK(s.tail[0].dim == 2);
  CHECK(s.tail[0].chain_terms.empty());
  CHECK(is_semi_good(s).pass);
  CHECK(s.str().find("then P0 copies 0.. (dim 2)") != std::string::npos);

  // Strata are the copies in order.
  CHECK(s.stratum(0).generator == unit(F5, BasisIndex::periodic(0, 0, 0)));
  CHECK(s.stratum(3).generator == unit(F5, BasisIndex::periodic(0, 3, 0)));

  check_strata_cyclic(s, 3);
  CHECK(verify_strat(s, default_window(v)).pass);
}

TEST_CASE("builder: a perturbed core becomes a cyclic prefix stratum") {
  Field F7 = Field::prime(7);
  Mat cell = companion(QuadPoly::parse(F7, "t^2-1")) * Scalar(F7, 3);
  RepAut v(F7);
  v.add_periodic_block(0, cell);
  v.add_perturbation(BasisIndex::periodic(0, 0, 0),
                     unit(F7, BasisIndex::periodic(0, 0, 0)));
  v.validate();

  Stratification s = build_strat_periodic(v);
  REQUIRE(s.prefix.size() == 1);
  CHECK(s.prefix[0].dim == 2);
  for (const auto& [i, c] : s.prefix[0].generator.terms()) {
    CHECK(i.kind == BlockKind::Periodic);
    CHECK(i.copy == 0);
  }
  REQUIRE(s.tail.size() == 1);
  CHECK(s.tail[0].from_copy == 1);
  CHECK(s.tail[0].dim == 2);
  CHECK(is_semi_good(s).pass);
  check_strata_cyclic(s);
  CHECK(verify_strat(s, default_window(v)).pass);
}

TEST_CASE("builder: dimension-1 pieces merge with the next untouched copy") {
  Field F5 = Field::prime(5);

  SUBCASE("a coprime eigenvalue line is absorbed by a two-term sum") {
    RepAut v(F5);
    v.add_finite_block(0, Mat::identity(F5, 2));  // two eigenvalue-1 lines
    v.add_periodic_block(0, companion(QuadPoly::parse(F5, "t^2+1")));

    Stratification s = build_strat_periodic(v);
    REQUIRE(s.prefix.size() == 2);
    CHECK(s.prefix[0].dim == 1);
    CHECK(s.prefix[1].dim == 3);  // line + the whole first copy
    bool touches_copy0 = false;
    for (const auto& [i, c] : s.prefix[1].generator.terms())
      if (i.kind == BlockKind::Periodic && i.copy == 0) touches_copy0 = true;
    CHECK(touches_copy0);
    REQUIRE(s.tail.size() == 1);
    CHECK(s.tail[0].from_copy == 1);
    CHECK(is_semi_good(s).pass);
    check_strata_cyclic(s);
    CHECK(verify_strat(s, default_window(v)).pass);
  }

  SUBCASE("a merge needing the copy's cyclic generator obeys the support cap") {
    RepAut v(F5);
    v.add_finite_block(0, Mat::identity(F5, 2));
    v.add_periodic_block(0, Mat::of(F5, {{2, 0}, {0, 3}}));
    // No single basis vector of the cell is cyclic, so the only workable
    // candidate has support 3: refused at the default cap, accepted at 3.
    CHECK(thrown_code([&] { build_strat_periodic(v); }) == "BuilderStuck");
    Stratification s = build_strat_periodic(v, 3);
    REQUIRE(s.prefix.size() == 2);
    CHECK(s.prefix[1].dim == 3);
    CHECK(is_semi_good(s).pass);
    check_strata_cyclic(s);
    CHECK(verify_strat(s, default_window(v)).pass);
  }

  SUBCASE("a colliding eigenvalue line cannot merge anywhere") {
    RepAut v(F5);
    v.add_finite_block(0, Mat::scalar_mat(F5, 2, Scalar(F5, 2)));
    // t^2+1 = (t-2)(t-3) over F_5: the leftover eigenvalue divides the
    // cell annihilator of every copy, so every merge closure collapses.
    v.add_periodic_block(0, companion(QuadPoly::parse(F5, "t^2+1")));
    CHECK(thrown_code([&] { build_strat_periodic(v); }) == "BuilderStuck");
    CHECK(thrown_code([&] { build_strat_periodic(v, 2, 1); }) == "BuilderStuck");
  }
}

TEST_CASE("builder: copies the perturbation skips are filled explicitly") {
  Field F5 = Field::prime(5);
  RepAut v(F5);
  v.add_periodic_block(0, companion(QuadPoly::parse(F5, "t^2+1")));
  v.add_perturbation(BasisIndex::periodic(0, 1, 0),
                     unit(F5, BasisIndex::periodic(0, 1, 0)));
  v.validate();

  Stratification s = build_strat_periodic(v);
  REQUIRE(s.prefix.size() == 2);  // the perturbed copy 1 core, then copy 0
  CHECK(s.prefix[0].dim == 2);
  CHECK(s.prefix[1].dim == 2);
  CHECK(s.prefix[1].generator == unit(F5, BasisIndex::periodic(0, 0, 0)));
  REQUIRE(s.tail.size() == 1);
  CHECK(s.tail[0].from_copy == 2);
  CHECK(is_semi_good(s).pass);
  check_strata_cyclic(s);
  CHECK(verify_strat(s, default_window(v)).pass);
}

TEST_CASE("builder: refusals are honest") {
  Field F5 = Field::prime(5);

  SUBCASE("shift blocks are out of class") {
    RepAut v(F5);
    v.add_shift_block(0, Scalar::one(F5));
    v.add_periodic_block(0, companion(QuadPoly::parse(F5, "t^2+1")));
    CHECK(thrown_code([&] { build_strat_periodic(v); }) == "BadInput");
  }

  SUBCASE("a finite-dimensional space has no semi-good stratification") {
    RepAut v(F5);
    v.add_finite_block(0, companion(QuadPoly::parse(F5, "t^2+1")));
    CHECK(thrown_code([&] { build_strat_periodic(v); }) == "BadInput");
  }

  SUBCASE("a dominant eigenvalue leaves only dimension-1 strata") {
    RepAut v(F5);
    v.add_periodic_block(0, Mat::of(F5, {{2}}));
    CHECK(thrown_code([&] { build_strat_periodic(v); }) == "BuilderStuck");
  }

  SUBCASE("a dimension-1 cell summand recurs in every copy") {
    RepAut v(F5);
    v.add_periodic_block(0, Mat::of(F5, {{2, 0, 0}, {0, 2, 0}, {0, 0, 3}}));
    CHECK(thrown_code([&] { build_strat_periodic(v); }) == "BuilderStuck");
  }
}

TEST_CASE("quotient strata read the structure left after the free part") {
  Field F5 = Field::prime(5);

  SUBCASE("one companion block gives one stratum of dimension 2") {
    RepAut u(F5);
    u.add_shift_block(0, Scalar::one(F5));
    u.add_finite_block(0, companion(QuadPoly::parse(F5, "t^2-1")));
    Stratification s = quotient_strata(u);
    REQUIRE(s.prefix.size() == 1);
    CHECK(s.prefix[0].dim == 2);
    CHECK(s.tail.empty());
    CHECK(prefix_dim_sum(s) == 2);
  }

  SUBCASE("the shift alone leaves an empty quotient") {
    RepAut u(F5);
    u.add_shift_block(0, Scalar(F5, 2));
    Stratification s = quotient_strata(u);
    CHECK(s.prefix.empty());
    CHECK(s.tail.empty());
    CHECK(prefix_dim_sum(s) == 0);
  }

  SUBCASE("distinct eigenvalues still make a cyclic quotient") {
    RepAut u(F5);
    u.add_shift_block(0, Scalar::one(F5));
    u.add_finite_block(0, Mat::of(F5, {{1, 0}, {0, 2}}));
    Stratification s = quotient_strata(u);
    REQUIRE(s.prefix.size() == 1);
    CHECK(s.prefix[0].dim == 2);
    CHECK(prefix_dim_sum(s) == 2);
  }

  SUBCASE("periodic copies continue as an order-omega tail") {
    RepAut u(F5);
    u.add_shift_block(0, Scalar::one(F5));
    u.add_periodic_block(0, companion(QuadPoly::parse(F5, "t^2+1")));
    Stratification s = quotient_strata(u);
    CHECK(s.prefix.empty());
    REQUIRE(s.tail.size() == 1);
    CHECK(s.tail[0].from_copy == 0);
    CHECK(s.tail[0].dim == 2);
    CHECK_FALSE(s.finite());
  }

  SUBCASE("an operator without a free part is refused") {
    RepAut u(F5);
    u.add_finite_block(0, companion(QuadPoly::parse(F5, "t^2-1")));
    CHECK(thrown_code([&] { quotient_strata(u); }) == "BadInput");
  }
}

TEST_CASE("representative adjustment peels coupling tails into slots <= 0") {
  Field F5 = Field::prime(5);

  SUBCASE("the one-dimensional coupled block, peeled step by step") {
    RepAut u(F5);
    u.add_shift_block(0, Scalar::one(F5));
    u.add_finite_block(0, Mat::of(F5, {{2}}));
    u.add_coupling(BasisIndex::finite(0, 0), unit(F5, BasisIndex::shift(0, 3)));
    u.validate();

    Stratification s = quotient_strata(u);
    REQUIRE(s.prefix.size() == 1);
    CHECK(s.prefix[0].dim == 1);

    LinComb x = unit(F5, BasisIndex::finite(0, 0));
    auto adjusted = adjust_reps(u, s, {x});
    REQUIRE(adjusted.size() == 1);

    // x' = x - e_2 - 2 e_1 - 4 e_0: the coupling tail pulled back through u.
    LinComb expected = x;
    expected.add(BasisIndex::shift(0, 2), Scalar(F5, -1));
    expected.add(BasisIndex::shift(0, 1), Scalar(F5, -2));
    expected.add(BasisIndex::shift(0, 0), Scalar(F5, -4));
    CHECK(adjusted[0] == expected);

    // u(x') = 2 x' + 3 e_0: the image stays in W_0 + span(x').
    LinComb image = u.apply(adjusted[0]);
    LinComb want = adjusted[0] * Scalar(F5, 2);
    want.add(BasisIndex::shift(0, 0), Scalar(F5, 3));
    CHECK(image == want);
  }

  SUBCASE("a dimension-2 stratum peels through u^2") {
    RepAut u(F5);
    u.add_shift_block(0, Scalar::one(F5));
    u.add_finite_block(0, companion(QuadPoly::parse(F5, "t^2-1")));
    u.add_coupling(BasisIndex::finite(0, 1), unit(F5, BasisIndex::shift(0, 2)));
    u.validate();

    Stratification s = quotient_strata(u);
    REQUIRE(s.prefix.size() == 1);
    REQUIRE(s.prefix[0].dim == 2);

    LinComb x = unit(F5, BasisIndex::finite(0, 0));
    auto adjusted = adjust_reps(u, s, {x});
    REQUIRE(adjusted.size() == 1);
    LinComb expected = x;
    expected.add(BasisIndex::shift(0, 0), Scalar(F5, -1));
    CHECK(adjusted[0] == expected);

    // Exact membership: u^2(x') reduces against {x', u(x')} to a remainder
    // supported on slots <= 0.
    LinComb w = u.apply(u.apply(adjusted[0]));
    SpanBasis window(F5);
    window.insert(adjusted[0]);
    window.insert(u.apply(adjusted[0]));
    LinComb rem = window.reduce(w);
    CHECK_FALSE(rem.is_zero());
    for (const auto& [i, c] : rem.terms()) {
      CHECK(i.kind == BlockKind::Shift);
      CHECK(i.slot <= 0);
    }
  }

  SUBCASE("representatives are unchanged without coupling past slot 0") {
    RepAut plain(F5);
    plain.add_shift_block(0, Scalar::one(F5));
    plain.add_finite_block(0, Mat::of(F5, {{2}}));
    LinComb x = unit(F5, BasisIndex::finite(0, 0));
    CHECK(adjust_reps(plain, quotient_strata(plain), {x}) ==
          std::vector<LinComb>{x});

    RepAut low(F5);
    low.add_shift_block(0, Scalar::one(F5));
    low.add_finite_block(0, Mat::of(F5, {{2}}));
    low.add_coupling(BasisIndex::finite(0, 0), unit(F5, BasisIndex::shift(0, 0)));
    CHECK(adjust_reps(low, quotient_strata(low), {x}) ==
          std::vector<LinComb>{x});
  }

  SUBCASE("couplings into a non-distinguished shift block need no peeling") {
    RepAut u(F5);
    u.add_shift_block(0, Scalar::one(F5));
    u.add_shift_block(1, Scalar::one(F5));
    u.add_finite_block(0, Mat::of(F5, {{2}}));
    u.add_coupling(BasisIndex::finite(0, 0), unit(F5, BasisIndex::shift(1, 5)));
    LinComb x = unit(F5, BasisIndex::finite(0, 0));
    CHECK(adjust_reps(u, quotient_strata(u), {x}) == std::vector<LinComb>{x});
  }

  SUBCASE("infinite strata cannot be adjusted") {
    RepAut u(F5);
    u.add_shift_block(0, Scalar::one(F5));
    auto amb = std::make_shared<RepAut>(u);
    Stratification s{amb, {{unit(F5, BasisIndex::shift(0, 0)), std::nullopt}}, {}};
    CHECK(thrown_code([&] {
            adjust_reps(u, s, {unit(F5, BasisIndex::shift(0, 0))});
          }) == "BadInput");
  }
}

TEST_CASE("stratification window certificates") {
  Field F5 = Field::prime(5);

  SUBCASE("a repeated generator is caught as a dependence") {
    RepAut u(F5);
    u.add_finite_block(0, companion(QuadPoly::parse(F5, "t^2-1")));
    auto amb = std::make_shared<RepAut>(u);
    LinComb g = unit(F5, BasisIndex::finite(0, 0));
    Stratification s{amb, {{g, 2}, {g, 2}}, {}};
    auto rep = verify_strat(s, default_window(u));
    CHECK_FALSE(rep.pass);
    CHECK(rep.str().find("dependent") != std::string::npos);
  }

  SUBCASE("an understated dimension is caught by the deeper probe") {
    RepAut u(F5);
    u.add_finite_block(0, companion(QuadPoly::parse(F5, "t^2-1")));
    auto amb = std::make_shared<RepAut>(u);
    LinComb g = unit(F5, BasisIndex::finite(0, 0));
    Stratification s{amb, {{g, 1}}, {}};  // the true cyclic module has dim 2
    auto rep = verify_strat(s, default_window(u));
    CHECK_FALSE(rep.pass);
    CHECK(rep.str().find("reachable") != std::string::npos);
  }

  SUBCASE("one infinite stratum certifies a free module") {
    RepAut u(F5);
    u.add_shift_block(0, Scalar::one(F5));
    auto amb = std::make_shared<RepAut>(u);
    Stratification s{amb, {{unit(F5, BasisIndex::shift(0, 0)), std::nullopt}}, {}};
    auto rep = verify_strat(s, default_window(u));
    CHECK(rep.pass);
    CHECK(rep.checked > 65);  // the orbit family plus every window vector
  }
}
