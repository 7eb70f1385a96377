#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "factorize.hpp"

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

/// Every certificate contract at once: the stored report passed, the factor
/// annihilators are exactly the requested ones, and the certificate still
/// verifies on an independently chosen (usually wider) window.
void check_cert(const Certificate& cert, const RepAut& u,
                const std::vector<QuadPoly>& polys, const Window& wide) {
  REQUIRE(cert.window_report.pass);
  REQUIRE(cert.factors.size() == polys.size());
  for (size_t k = 0; k < polys.size(); ++k)
    CHECK(cert.factors[k].annihilator == polys[k]);
  CheckReport re = verify_certificate(u, cert, wide);
  if (!re.pass) INFO(re.str());
  CHECK(re.pass);
}

/// Evidence that v - delta*id has unbounded rank for every delta: the
/// sampled images must span at least `threshold` dimensions.
bool rank_evidence(const LazyOp& v, Field f,
                   const std::vector<BasisIndex>& sample, size_t threshold) {
  for (uint32_t d = 0; d < f.characteristic(); ++d) {
    Scalar del(f, static_cast<long>(d));
    SpanBasis sp(f);
    for (const auto& i : sample) sp.insert(v.apply(i) - unit(f, i) * del);
    if (sp.dim() < threshold) return false;
  }
  return true;
}

Window periodic_window(uint32_t block, int64_t copies, int64_t dim) {
  Window W;
  for (int64_t c = 0; c < copies; ++c) W.insert_periodic_copy(block, c, dim);
  return W;
}

}  // namespace

// ---------------------------------------------------------------------------
// Scalar triples

TEST_CASE("scalar_triple_2x2: norm-square witness over F_5 is the pinned "
          "matrix triple") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  ScalarTriple t = scalar_triple_2x2(Scalar(F5, 2), inv, inv, inv);

  CHECK(t.A == Mat::of(F5, {{1, 0}, {0, 4}}));
  CHECK(t.B == Mat::of(F5, {{0, 1}, {1, 0}}));
  CHECK(t.C == Mat::of(F5, {{0, 3}, {2, 0}}));
  CHECK(annihilates(t.A, inv));
  CHECK(annihilates(t.B, inv));
  CHECK(annihilates(t.C, inv));
  Mat prod = t.A * t.B * t.C;
  CHECK(prod == Mat::scalar_mat(F5, 2, Scalar(F5, 2)));
  CHECK(prod.det() == Scalar(F5, 4));  // = lambda^2
}

TEST_CASE("scalar_triple_2x2: root-product witness gives 1x1 scalars") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  ScalarTriple t = scalar_triple_2x2(Scalar(F5, 1), inv, inv, inv);
  REQUIRE(t.A.rows() == 1);
  REQUIRE(t.B.rows() == 1);
  REQUIRE(t.C.rows() == 1);
  CHECK(t.A.at(0, 0) * t.B.at(0, 0) * t.C.at(0, 0) == Scalar(F5, 1));
  CHECK(annihilates(t.A, inv));
  CHECK(annihilates(t.B, inv));
  CHECK(annihilates(t.C, inv));
}

TEST_CASE("scalar_triple_2x2: asymmetric norm-square shape with non-split "
          "outer factors") {
  Field F5 = Field::prime(5);
  QuadPoly p1 = QuadPoly::parse(F5, "t^2-1");
  QuadPoly p2 = QuadPoly::parse(F5, "t^2+2");    // no roots in F_5
  QuadPoly p3 = QuadPoly::parse(F5, "t^2+t+2");  // no roots in F_5
  // lambda^2 = 16 = 1 = (-1) * 2 * 2 = N(p1)N(p2)N(p3)
  ScalarTriple t = scalar_triple_2x2(Scalar(F5, 4), p1, p2, p3);
  REQUIRE(t.A.rows() == 2);
  CHECK(annihilates(t.A, p1));
  CHECK(annihilates(t.B, p2));
  CHECK(annihilates(t.C, p3));
  CHECK(t.A * t.B * t.C == Mat::scalar_mat(F5, 2, Scalar(F5, 4)));
  // A is upper triangular with the roots of p1 in canonical order.
  CHECK(t.A.at(0, 0) == Scalar(F5, 1));
  CHECK(t.A.at(1, 1) == Scalar(F5, 4));
  CHECK(t.A.at(1, 0) == Scalar(F5, 0));
}

TEST_CASE("scalar_triple_2x2: error paths") {
  Field F5 = Field::prime(5);
  Field F7 = Field::prime(7);
  QuadPoly inv5 = QuadPoly::parse(F5, "t^2-1");
  QuadPoly inv7 = QuadPoly::parse(F7, "t^2-1");

  CHECK(thrown_code([&] {
          scalar_triple_2x2(Scalar(F7, 3), inv7, inv7, inv7);
        }) == "NotAcceptable");
  CHECK(thrown_code([&] {
          scalar_triple_2x2(Scalar(F5, 0), inv5, inv5, inv5);
        }) == "BadScalar");
  CHECK(thrown_code([&] {
          scalar_triple_2x2(Scalar(F5, 2), inv5,
                            QuadPoly::parse(F5, "t^2-t"), inv5);
        }) == "NonDerogatoryRequired");
  CHECK(thrown_code([&] {
          scalar_triple_2x2(Scalar(F5, 2), inv7, inv7, inv7);
        }) == "FieldMismatch");
}

TEST_CASE("scalar_id_factors: norm-square tiling over an odd finite block "
          "plus a periodic stream") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  RepAut space(F5);
  space.add_finite_block(0, Mat::scalar_mat(F5, 3, Scalar(F5, 2)));
  space.add_periodic_block(0, Mat::of(F5, {{2}}));
  space.validate();

  Certificate cert = scalar_id_factors(Scalar(F5, 2), {inv, inv, inv}, space);
  Window wide = default_window(space);
  for (int64_t c = 0; c < 12; ++c) wide.insert_periodic_copy(0, c, 1);
  check_cert(cert, space, {inv, inv, inv}, wide);
}

TEST_CASE("scalar_id_factors: root-product witness yields global scalars") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  RepAut space(F5);
  space.add_periodic_block(0, Mat::of(F5, {{1}}));
  space.validate();

  Certificate cert = scalar_id_factors(Scalar(F5, 1), {inv, inv, inv}, space);
  check_cert(cert, space, {inv, inv, inv}, periodic_window(0, 10, 1));
  // each factor acts as one global scalar
  for (const auto& fct : cert.factors) {
    LinComb i0 = fct.op.apply(BasisIndex::periodic(0, 0, 0));
    LinComb i7 = fct.op.apply(BasisIndex::periodic(0, 7, 0));
    REQUIRE(i0.terms().size() == 1);
    REQUIRE(i7.terms().size() == 1);
    CHECK(i0.terms().begin()->second == i7.terms().begin()->second);
  }
}

TEST_CASE("scalar_id_factors: refusal and bad-input paths") {
  Field F7 = Field::prime(7);
  QuadPoly inv = QuadPoly::parse(F7, "t^2-1");
  RepAut three(F7);
  three.add_periodic_block(0, Mat::of(F7, {{3}}));
  three.validate();
  CHECK(thrown_code([&] {
          scalar_id_factors(Scalar(F7, 3), {inv, inv, inv}, three);
        }) == "NotAcceptable");

  RepAut notscalar(F7);
  notscalar.add_finite_block(0, Mat::of(F7, {{1, 0}, {0, 2}}));
  notscalar.add_periodic_block(0, Mat::of(F7, {{1}}));
  notscalar.validate();
  CHECK(thrown_code([&] {
          scalar_id_factors(Scalar(F7, 1), {inv, inv, inv}, notscalar);
        }) == "BadInput");

  RepAut finonly(F7);
  finonly.add_finite_block(0, Mat::scalar_mat(F7, 2, Scalar(F7, 1)));
  finonly.validate();
  CHECK(thrown_code([&] {
          scalar_id_factors(Scalar(F7, 1), {inv, inv, inv}, finonly);
        }) == "BadInput");

  RepAut shifty(F7);
  shifty.add_shift_block(0, Scalar(F7, 1));
  shifty.validate();
  CHECK(thrown_code([&] {
          scalar_id_factors(Scalar(F7, 1), {inv, inv, inv}, shifty);
        }) == "BadInput");
}

// ---------------------------------------------------------------------------
// Shift-pair model

TEST_CASE("shift_pair: pinned rules and the super-elementary product over "
          "F_5") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  ShiftPairOps ops = shift_pair(inv, inv);
  auto e = [&](int64_t n) { return BasisIndex::shift(0, n); };

  // roots of t^2-1 in canonical order: alpha = 1, beta = 4
  CHECK(ops.a.apply(e(0)) == unit(F5, e(0)) + unit(F5, e(3)));
  CHECK(ops.a.apply(e(1)) == unit(F5, e(1)) * Scalar(F5, 4));
  CHECK(ops.b.apply(e(0)) == unit(F5, e(1)));
  CHECK(ops.b.apply(e(1)) == unit(F5, e(0)));
  // parity rules extend to negative slots
  CHECK(ops.a.apply(e(-2)) == unit(F5, e(-2)) + unit(F5, e(1)));
  CHECK(ops.b.apply(e(-1)) == unit(F5, e(-2)));

  Window W;
  W.insert_shift_range(0, -32, 32);
  CHECK(check_annihilated(ops.a, inv, W).pass);
  CHECK(check_annihilated(ops.b, inv, W).pass);

  LazyOp u = compose({ops.a, ops.b});
  CHECK(u.apply(e(0)) == unit(F5, e(1)) * Scalar(F5, 4));
  CHECK(u.apply(e(1)) == unit(F5, e(0)) + unit(F5, e(3)));
  CyclicReport rep = cyclic_window_cert(u, unit(F5, e(1)), 16);
  CHECK(rep.independent);
}

TEST_CASE("shift_pair: asymmetric polynomials and error paths") {
  Field F7 = Field::prime(7);
  QuadPoly p = QuadPoly::parse(F7, "t^2-3t+2");  // (t-1)(t-2)
  QuadPoly q = QuadPoly::parse(F7, "t^2+t+3");   // no roots in F_7
  ShiftPairOps ops = shift_pair(p, q);
  Window W;
  W.insert_shift_range(0, -16, 16);
  CHECK(check_annihilated(ops.a, p, W).pass);
  CHECK(check_annihilated(ops.b, q, W).pass);
  CHECK(cyclic_window_cert(compose({ops.a, ops.b}),
                           unit(F7, BasisIndex::shift(0, 1)), 12)
            .independent);

  CHECK(thrown_code([&] {
          shift_pair(QuadPoly::parse(F7, "t^2+1"), q);
        }) == "NotSplit");
  CHECK(thrown_code([&] {
          shift_pair(p, QuadPoly::parse(F7, "t^2-t"));
        }) == "NonDerogatoryRequired");
  CHECK(thrown_code([&] {
          ops.a.apply(BasisIndex::finite(0, 0));
        }) == "BadInput");
}

// ---------------------------------------------------------------------------
// Elementary transport

TEST_CASE("elementary_factor_pq: a plain shift splits into two annihilated "
          "factors") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  RepAut v(F5);
  v.add_shift_block(0, Scalar(F5, 1));
  v.validate();

  Certificate cert = elementary_factor_pq(
      v, {ElementaryComponent::scaled_shift(0, Scalar(F5, 1))}, inv, inv);
  check_cert(cert, v, {inv, inv}, default_window(v, 40, 8));
}

TEST_CASE("elementary_pair_ops: scaled shift over F_7 with asymmetric "
          "polynomials") {
  Field F7 = Field::prime(7);
  QuadPoly p = QuadPoly::parse(F7, "t^2-3t+2");
  QuadPoly q = QuadPoly::parse(F7, "t^2-1");
  RepAut v(F7);
  v.add_shift_block(0, Scalar(F7, 3));
  v.validate();

  ElementaryFactors ef = elementary_pair_ops(
      LazyOp::from_repaut(v),
      {ElementaryComponent::scaled_shift(0, Scalar(F7, 3))}, p, q, 16);
  Window W = default_window(v, 24, 8);
  CHECK(check_annihilated(ef.f, p, W).pass);
  CHECK(check_annihilated(ef.g, q, W).pass);
  CHECK(equal_on_window(compose({ef.f, ef.g}), LazyOp::from_repaut(v), W)
            .pass);
}

TEST_CASE("elementary_pair_ops: two shift blocks decompose jointly") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  RepAut v(F5);
  v.add_shift_block(0, Scalar(F5, 1));
  v.add_shift_block(1, Scalar(F5, 2));
  v.validate();

  Certificate cert = elementary_factor_pq(
      v,
      {ElementaryComponent::scaled_shift(0, Scalar(F5, 1)),
       ElementaryComponent::scaled_shift(1, Scalar(F5, 2))},
      inv, inv);
  check_cert(cert, v, {inv, inv}, default_window(v, 20, 6));
}

TEST_CASE("elementary_pair_ops: evidence and input validation") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");

  SUBCASE("a dependent orbit is not elementary evidence") {
    RepAut v(F5);
    v.add_finite_block(0, companion(inv));
    v.validate();
    CHECK(thrown_code([&] {
            elementary_pair_ops(
                LazyOp::from_repaut(v),
                {ElementaryComponent::cyclic(unit(F5, BasisIndex::finite(0, 0)),
                                             12)},
                inv, inv, 12);
          }) == "NotElementaryEvidence");
  }

  SUBCASE("a mislabeled scaled shift is rejected") {
    RepAut v(F5);
    v.add_shift_block(0, Scalar(F5, 2));
    v.validate();
    CHECK(thrown_code([&] {
            elementary_pair_ops(
                LazyOp::from_repaut(v),
                {ElementaryComponent::scaled_shift(0, Scalar(F5, 1))}, inv,
                inv, 12);
          }) == "BadInput");
  }

  SUBCASE("empty component lists are rejected") {
    RepAut v(F5);
    v.add_shift_block(0, Scalar(F5, 1));
    v.validate();
    CHECK(thrown_code([&] {
            elementary_pair_ops(LazyOp::from_repaut(v), {}, inv, inv, 12);
          }) == "BadInput");
  }
}

// ---------------------------------------------------------------------------
// Adjacency from a stratification

TEST_CASE("adjacency_strat: torsion universe of companion cells") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  RepAut u(F5);
  u.add_periodic_block(0, companion(QuadPoly::parse(F5, "t^2-t-1")));
  u.validate();

  Stratification s = build_strat_periodic(u);
  AdjacencyResult ar = adjacency_strat(u, s, inv);

  Window W = periodic_window(0, 8, 2);
  CHECK(check_annihilated(ar.a, inv, W).pass);
  REQUIRE(ar.components.size() == 1);
  CHECK(ar.components[0].kind == ElementaryComponent::Kind::Cyclic);
  CHECK(cyclic_window_cert(ar.v, ar.components[0].seed, 12).independent);
  // duality: a^{-1} v = u
  CHECK(equal_on_window(compose({invert(ar.a), ar.v}),
                        LazyOp::from_repaut(u), W)
            .pass);
}

TEST_CASE("adjacency_strat: all-infinite strata give a scalar adjacency") {
  Field F7 = Field::prime(7);
  QuadPoly p = QuadPoly::parse(F7, "t^2-3t+2");  // roots 1, 2
  RepAut u(F7);
  u.add_shift_block(0, Scalar(F7, 1));
  u.add_shift_block(1, Scalar(F7, 3));
  u.validate();

  auto amb = std::make_shared<RepAut>(u);
  Stratification s{amb,
                   {Stratum{unit(F7, BasisIndex::shift(0, 0)), std::nullopt},
                    Stratum{unit(F7, BasisIndex::shift(1, 0)), std::nullopt}},
                   {}};
  AdjacencyResult ar = adjacency_strat(u, s, p);

  Window W = default_window(u, 12, 4);
  // a = 1 * id (first canonical root)
  CHECK(ar.a.apply(BasisIndex::shift(0, -2)) ==
        unit(F7, BasisIndex::shift(0, -2)));
  REQUIRE(ar.components.size() == 2);
  CHECK(ar.components[0].kind == ElementaryComponent::Kind::ScaledShift);
  CHECK(ar.components[0].mult == Scalar(F7, 1));
  CHECK(ar.components[1].mult == Scalar(F7, 3));
  CHECK(equal_on_window(compose({invert(ar.a), ar.v}),
                        LazyOp::from_repaut(u), W)
            .pass);
}

TEST_CASE("adjacency_strat: rejections") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");

  SUBCASE("dimension-1 tail strata are not semi-good") {
    RepAut u(F5);
    u.add_periodic_block(0, Mat::of(F5, {{2}}));
    u.validate();
    auto amb = std::make_shared<RepAut>(u);
    Stratification s{amb, {}, {TailRule{0, 0, {{0, Scalar(F5, 1)}}, {}, 1}}};
    CHECK(thrown_code([&] { adjacency_strat(u, s, inv); }) == "NotSemiGood");
  }

  SUBCASE("mixed finite and infinite strata are rejected") {
    RepAut u(F5);
    u.add_shift_block(0, Scalar(F5, 1));
    u.add_periodic_block(0, Mat::of(F5, {{2}}));
    u.validate();
    auto amb = std::make_shared<RepAut>(u);
    Stratification s{amb,
                     {Stratum{unit(F5, BasisIndex::shift(0, 0)), std::nullopt}},
                     {TailRule{0, 0, {{0, Scalar(F5, 1)}}, {}, 1}}};
    CHECK(thrown_code([&] { adjacency_strat(u, s, inv); }) == "BadInput");
  }

  SUBCASE("a stratification failing its window certificate is rejected") {
    RepAut u(F5);
    u.add_periodic_block(0, companion(QuadPoly::parse(F5, "t^2-t-1")));
    u.validate();
    auto amb = std::make_shared<RepAut>(u);
    // wrong dimension claim: these cells are 2-dimensional
    Stratification s{amb, {}, {TailRule{0, 0, {{0, Scalar(F5, 1)}}, {}, 3}}};
    CHECK(thrown_code([&] { adjacency_strat(u, s, inv); }) == "BadInput");
  }
}

// ---------------------------------------------------------------------------
// Adjacency through the free part

TEST_CASE("adjacency_free: pinned companion pairing over F_5") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  RepAut u(F5);
  u.add_shift_block(0, Scalar(F5, 1));
  u.add_finite_block(0, companion(inv));
  u.validate();

  AdjacencyResult ar = adjacency_free(u, inv);
  BasisIndex x0 = BasisIndex::finite(0, 0);
  // the quotient representative pairs with the first positive orbit vector
  CHECK(ar.a.apply(x0) == unit(F5, BasisIndex::shift(0, 1)));
  CHECK(ar.a.apply(BasisIndex::shift(0, 1)) == unit(F5, x0));
  CHECK(ar.v.apply(BasisIndex::shift(0, 0)) == unit(F5, x0));

  Window W = default_window(u, 16, 6);
  CHECK(check_annihilated(ar.a, inv, W).pass);
  REQUIRE(ar.components.size() == 1);
  CHECK(cyclic_window_cert(ar.v, ar.components[0].seed, 12).independent);
  CHECK(equal_on_window(compose({invert(ar.a), ar.v}),
                        LazyOp::from_repaut(u), W)
            .pass);
}

TEST_CASE("adjacency_free: pure shift universes take the scalar shortcut") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  RepAut u(F5);
  u.add_shift_block(0, Scalar(F5, 2));
  u.validate();

  AdjacencyResult ar = adjacency_free(u, inv);
  CHECK(ar.a.apply(BasisIndex::shift(0, 5)) ==
        unit(F5, BasisIndex::shift(0, 5)));
  REQUIRE(ar.components.size() == 1);
  CHECK(ar.components[0].kind == ElementaryComponent::Kind::ScaledShift);
  CHECK(ar.components[0].mult == Scalar(F5, 2));
}

TEST_CASE("adjacency_free: extra shift blocks become scaled-shift "
          "components") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  RepAut u(F5);
  u.add_shift_block(0, Scalar(F5, 1));
  u.add_shift_block(1, Scalar(F5, 2));
  u.add_finite_block(0, Mat::of(F5, {{3}}));
  u.validate();

  AdjacencyResult ar = adjacency_free(u, inv);
  REQUIRE(ar.components.size() == 2);
  CHECK(ar.components[0].kind == ElementaryComponent::Kind::Cyclic);
  CHECK(ar.components[1].kind == ElementaryComponent::Kind::ScaledShift);
  CHECK(ar.components[1].block == 1);
  CHECK(ar.components[1].mult == Scalar(F5, 2));  // alpha = 1 times 2
  Window W = default_window(u, 12, 4);
  CHECK(check_annihilated(ar.a, inv, W).pass);
  CHECK(equal_on_window(compose({invert(ar.a), ar.v}),
                        LazyOp::from_repaut(u), W)
            .pass);
}

TEST_CASE("adjacency_free: couplings into the free part are transported") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  RepAut u(F5);
  u.add_shift_block(0, Scalar(F5, 1));
  u.add_finite_block(0, Mat::of(F5, {{2}}));
  u.add_coupling(BasisIndex::finite(0, 0), unit(F5, BasisIndex::shift(0, 0)));
  u.validate();

  AdjacencyResult ar = adjacency_free(u, inv);
  Window W = default_window(u, 16, 6);
  CHECK(check_annihilated(ar.a, inv, W).pass);
  CHECK(equal_on_window(compose({invert(ar.a), ar.v}),
                        LazyOp::from_repaut(u), W)
            .pass);
}

TEST_CASE("adjacency_free: rejections") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");

  SUBCASE("no shift block") {
    RepAut u(F5);
    u.add_periodic_block(0, companion(inv));
    u.validate();
    CHECK(thrown_code([&] { adjacency_free(u, inv); }) == "NoFreePart");
  }

  SUBCASE("perturbation out of the free part") {
    RepAut u(F5);
    u.add_shift_block(0, Scalar(F5, 1));
    u.add_finite_block(0, Mat::of(F5, {{2}}));
    u.add_perturbation(BasisIndex::shift(0, 0),
                       unit(F5, BasisIndex::finite(0, 0)));
    u.validate();
    CHECK(thrown_code([&] { adjacency_free(u, inv); }) == "BadInput");
  }
}

// ---------------------------------------------------------------------------
// Killing a dominant eigenvalue

TEST_CASE("kill_dominant: pinned cross-copy pairing on 3*id over F_7") {
  Field F7 = Field::prime(7);
  QuadPoly inv = QuadPoly::parse(F7, "t^2-1");
  RepAut u(F7);
  u.add_periodic_block(0, Mat::of(F7, {{3}}));
  u.validate();
  auto g = [&](int64_t c) { return BasisIndex::periodic(0, c, 0); };

  KillResult kr = kill_dominant(u, inv, 0);
  CHECK(kr.a.apply(g(0)) == unit(F7, g(1)));
  CHECK(kr.a.apply(g(1)) == unit(F7, g(0)));
  CHECK(kr.a.apply(g(2)) == unit(F7, g(3)));
  CHECK(kr.v.apply(g(0)) == unit(F7, g(1)) * Scalar(F7, 3));
  CHECK(kr.v.apply(g(1)) == unit(F7, g(0)) * Scalar(F7, 3));

  Window W = periodic_window(0, 16, 1);
  CHECK(check_annihilated(kr.a, inv, W).pass);
  // one vector per pair cell: rank evidence for every delta
  std::vector<BasisIndex> sample;
  for (int64_t c = 0; c < 24; c += 2) sample.push_back(g(c));
  CHECK(rank_evidence(kr.v, F7, sample, 12));

  // a different seed shifts the stream phase: copy 0 becomes a leftover
  KillResult kr1 = kill_dominant(u, inv, 1);
  CHECK(kr1.a.apply(g(0)) == unit(F7, g(0)));  // alpha = 1
  CHECK(kr1.a.apply(g(1)) == unit(F7, g(2)));
}

TEST_CASE("kill_dominant: odd finite block leaves an eigenvector leftover") {
  Field F7 = Field::prime(7);
  QuadPoly p = QuadPoly::parse(F7, "t^2+t+1");  // (t-2)(t-4) over F_7
  RepAut u(F7);
  u.add_finite_block(0, Mat::of(F7, {{1, 0, 0}, {0, 2, 0}, {0, 0, 3}}));
  u.add_periodic_block(0, Mat::of(F7, {{5}}));
  u.validate();
  auto b = [&](int64_t s) { return BasisIndex::finite(0, s); };

  KillResult kr = kill_dominant(u, p, 0);
  CHECK(kr.a.apply(b(0)) == unit(F7, b(1)));
  CHECK(kr.a.apply(b(1)) ==
        unit(F7, b(0)) * Scalar(F7, 6) + unit(F7, b(1)) * Scalar(F7, 6));
  CHECK(kr.a.apply(b(2)) == unit(F7, b(2)) * Scalar(F7, 2));  // leftover root

  Window W = periodic_window(0, 12, 1);
  W.insert_finite_block(0, 3);
  CHECK(check_annihilated(kr.a, p, W).pass);
}

TEST_CASE("kill_dominant: two-dimensional cells pair within each copy") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  RepAut u(F5);
  u.add_periodic_block(0, companion(QuadPoly::parse(F5, "t^2-t-1")));
  u.validate();

  KillResult kr = kill_dominant(u, inv, 0);
  CHECK(kr.a.apply(BasisIndex::periodic(0, 0, 0)) ==
        unit(F5, BasisIndex::periodic(0, 0, 1)));
  Window W = periodic_window(0, 12, 2);
  CHECK(check_annihilated(kr.a, inv, W).pass);

  // u has no dominant eigenvalue; the companion transform keeps that.
  std::vector<BasisIndex> sample;
  for (int64_t c = 0; c < 12; ++c) {
    sample.push_back(BasisIndex::periodic(0, c, 0));
    sample.push_back(BasisIndex::periodic(0, c, 1));
  }
  CHECK(rank_evidence(kr.v, F5, sample, 12));
}

TEST_CASE("kill_dominant: error paths") {
  Field F7 = Field::prime(7);
  QuadPoly inv = QuadPoly::parse(F7, "t^2-1");

  RepAut fin(F7);
  fin.add_finite_block(0, Mat::of(F7, {{1, 0}, {0, 2}}));
  fin.validate();
  CHECK(thrown_code([&] { kill_dominant(fin, inv, 0); }) == "BadInput");

  // a leftover under a non-split annihilator fails lazily, on first use
  RepAut odd(F7);
  odd.add_finite_block(0, Mat::of(F7, {{1, 0, 0}, {0, 2, 0}, {0, 0, 3}}));
  odd.add_periodic_block(0, Mat::of(F7, {{1}}));
  odd.validate();
  QuadPoly nosplit = QuadPoly::parse(F7, "t^2+1");
  KillResult kr = kill_dominant(odd, nosplit, 0);
  CHECK(kr.a.apply(BasisIndex::finite(0, 0)) ==
        unit(F7, BasisIndex::finite(0, 1)));
  CHECK(thrown_code([&] {
          kr.a.apply(BasisIndex::finite(0, 2));
        }) == "NotSplit");
}

// ---------------------------------------------------------------------------
// Invariant closure

TEST_CASE("invariant_closure: identity triple returns the span itself") {
  Field F5 = Field::prime(5);
  LazyOp id = LazyOp::identity(F5);
  std::vector<LinComb> W{unit(F5, BasisIndex::periodic(0, 0, 0))};
  auto out = invariant_closure(id, id, id, W);
  CHECK(out.size() == 1);
}

TEST_CASE("invariant_closure: matrix witnesses extended by the identity "
          "stay within the bound") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  Mat T = Mat::of(F5, {{0, 2}, {2, 0}});
  auto wit = product_membership(T, {inv, inv, inv});
  REQUIRE(wit.has_value());

  auto embed = [&](const Mat& M) {
    return LazyOp::from_plain_rule(F5, [M, F5](const BasisIndex& i) {
      if (i.kind == BlockKind::Finite && i.block == 0) {
        LinComb out(F5);
        for (size_t r = 0; r < M.rows(); ++r)
          out.add(BasisIndex::finite(0, static_cast<int64_t>(r)),
                  M.at(r, static_cast<size_t>(i.slot)));
        return out;
      }
      return LinComb::unit(F5, i);
    });
  };
  // product order: T = w0 w1 w2, so c b a = T-hat with (a,b,c) reversed
  LazyOp a = embed((*wit)[2]), b = embed((*wit)[1]), c = embed((*wit)[0]);
  std::vector<LinComb> W{unit(F5, BasisIndex::finite(0, 0)),
                         unit(F5, BasisIndex::periodic(0, 0, 0))};
  auto out = invariant_closure(a, b, c, W);
  CHECK(out.size() <= 8 * W.size());
  SpanBasis sp(F5);
  for (const auto& v : out) sp.insert(v);
  for (const auto& v : out) {
    CHECK(sp.contains(a.apply(v)));
    CHECK(sp.contains(b.apply(v)));
    CHECK(sp.contains(c.apply(v)));
  }
}

TEST_CASE("invariant_closure: a shift escapes the eight-term sum") {
  Field F5 = Field::prime(5);
  RepAut s(F5);
  s.add_shift_block(0, Scalar(F5, 1));
  s.validate();
  LazyOp a = LazyOp::from_repaut(s);
  LazyOp id = LazyOp::identity(F5);
  std::vector<LinComb> W{unit(F5, BasisIndex::shift(0, 0))};
  CHECK(thrown_code([&] { invariant_closure(a, id, id, W); }) ==
        "HypothesisViolation");
}

// ---------------------------------------------------------------------------
// Finite-rank three-factor pipeline

TEST_CASE("finite_rank_three: scalar plus rank one over F_5") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  RepAut u(F5);
  u.add_periodic_block(0, Mat::of(F5, {{2}}));
  u.add_perturbation(BasisIndex::periodic(0, 0, 0),
                     unit(F5, BasisIndex::periodic(0, 1, 0)));
  u.validate();

  FactorOutcome fo = finite_rank_three(u, {inv, inv, inv});
  REQUIRE(fo.ok());
  check_cert(*fo.certificate, u, {inv, inv, inv}, periodic_window(0, 14, 1));

  // the padding recorded in the provenance matches a direct search on the
  // compressed core (the core is similar to [[2,0],[1,2]])
  Mat A = Mat::of(F5, {{2, 0}, {1, 2}});
  auto qstar = lambda_stable_search(A, Scalar(F5, 2), {inv, inv, inv}, 8);
  REQUIRE(qstar.has_value());
  std::string tag = "pad " + std::to_string(*qstar);
  CHECK(fo.certificate->provenance.find(tag) != std::string::npos);
}

TEST_CASE("finite_rank_three: refusals") {
  SUBCASE("unacceptable scalar") {
    Field F7 = Field::prime(7);
    QuadPoly inv = QuadPoly::parse(F7, "t^2-1");
    RepAut u(F7);
    u.add_periodic_block(0, Mat::of(F7, {{3}}));
    u.add_perturbation(BasisIndex::periodic(0, 0, 0),
                       unit(F7, BasisIndex::periodic(0, 1, 0)));
    u.validate();
    FactorOutcome fo = finite_rank_three(u, {inv, inv, inv});
    REQUIRE_FALSE(fo.ok());
    CHECK(fo.refusal->code == "NotAcceptable");
  }

  SUBCASE("unipotent triple with core determinant 2") {
    Field F7 = Field::prime(7);
    QuadPoly u1 = QuadPoly::parse(F7, "t^2-2t+1");
    RepAut u(F7);
    u.add_periodic_block(0, Mat::of(F7, {{1}}));
    u.add_perturbation(BasisIndex::periodic(0, 0, 0),
                       unit(F7, BasisIndex::periodic(0, 0, 0)));
    u.validate();  // u(e) = 2e on the perturbed cell
    FactorOutcome fo = finite_rank_three(u, {u1, u1, u1});
    REQUIRE_FALSE(fo.ok());
    CHECK(fo.refusal->code == "DeterminantObstruction");
  }

  SUBCASE("mixed triple needs determinant +-1") {
    Field F5 = Field::prime(5);
    QuadPoly u1 = QuadPoly::parse(F5, "t^2-2t+1");
    QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
    RepAut u(F5);
    u.add_periodic_block(0, Mat::of(F5, {{1}}));
    u.add_perturbation(BasisIndex::periodic(0, 0, 0),
                       unit(F5, BasisIndex::periodic(0, 0, 0)) * Scalar(F5, 2));
    u.validate();  // u(e) = 3e: core det 3, outside {1, -1}
    FactorOutcome fo = finite_rank_three(u, {u1, inv, inv});
    REQUIRE_FALSE(fo.ok());
    CHECK(fo.refusal->code == "DeterminantObstruction");
  }
}

TEST_CASE("finite_rank_three: exact scalar input delegates to the tiling") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  RepAut u(F5);
  u.add_periodic_block(0, Mat::of(F5, {{2}}));
  u.validate();
  FactorOutcome fo = finite_rank_three(u, {inv, inv, inv});
  REQUIRE(fo.ok());
  check_cert(*fo.certificate, u, {inv, inv, inv}, periodic_window(0, 10, 1));
}

TEST_CASE("finite_rank_three: unipotent Jordan core across a finite block") {
  Field F5 = Field::prime(5);
  QuadPoly u1 = QuadPoly::parse(F5, "t^2-2t+1");
  RepAut u(F5);
  u.add_finite_block(0, Mat::of(F5, {{1, 1}, {0, 1}}));
  u.add_periodic_block(0, Mat::of(F5, {{1}}));
  u.validate();
  FactorOutcome fo = finite_rank_three(u, {u1, u1, u1});
  REQUIRE(fo.ok());
  Window wide = periodic_window(0, 10, 1);
  wide.insert_finite_block(0, 2);
  check_cert(*fo.certificate, u, {u1, u1, u1}, wide);
}

TEST_CASE("finite_rank_three: rational targets") {
  Field Q = Field::rationals();
  QuadPoly inv = QuadPoly::parse(Q, "t^2-1");

  SUBCASE("decided by the determinant filter") {
    RepAut u(Q);
    u.add_periodic_block(0, Mat::of(Q, {{1}}));
    u.add_perturbation(BasisIndex::periodic(0, 0, 0),
                       unit(Q, BasisIndex::periodic(0, 0, 0)));
    u.validate();  // u(e) = 2e: involution filter needs det in {1, -1}
    FactorOutcome fo = finite_rank_three(u, {inv, inv, inv});
    REQUIRE_FALSE(fo.ok());
    CHECK(fo.refusal->code == "DeterminantObstruction");
  }

  SUBCASE("no exhaustive search over the rationals") {
    RepAut u(Q);
    u.add_periodic_block(0, Mat::of(Q, {{1}}));
    u.add_perturbation(BasisIndex::periodic(0, 0, 0),
                       unit(Q, BasisIndex::periodic(0, 0, 0)) * Scalar(Q, -2));
    u.validate();  // u(e) = -e: det -1 passes the filter
    CHECK(thrown_code([&] {
            finite_rank_three(u, {inv, inv, inv});
          }) == "UnsupportedField");
  }
}

TEST_CASE("finite_rank_three: throws without a dominant eigenvalue") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  RepAut u(F5);
  u.add_periodic_block(0, companion(QuadPoly::parse(F5, "t^2-t-1")));
  u.validate();
  CHECK(thrown_code([&] {
          finite_rank_three(u, {inv, inv, inv});
        }) == "NoDominantEigenvalue");
}

// ---------------------------------------------------------------------------
// factor_three

TEST_CASE("factor_three: free branch on a plain shift") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  RepAut u(F5);
  u.add_shift_block(0, Scalar(F5, 1));
  u.validate();

  FactorOutcome fo = factor_three(u, {inv, inv, inv});
  REQUIRE(fo.ok());
  check_cert(*fo.certificate, u, {inv, inv, inv}, default_window(u, 20, 6));
  CHECK(fo.certificate->factors[0].role == "adjacency-inverse");
  CHECK(fo.certificate->factors[1].role == "elementary-left");
  CHECK(fo.certificate->factors[2].role == "elementary-right");
}

TEST_CASE("factor_three: torsion branch on companion cells") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  RepAut u(F5);
  u.add_periodic_block(0, companion(QuadPoly::parse(F5, "t^2-t-1")));
  u.validate();

  FactorOutcome fo = factor_three(u, {inv, inv, inv});
  REQUIRE(fo.ok());
  check_cert(*fo.certificate, u, {inv, inv, inv}, periodic_window(0, 6, 2));
}

TEST_CASE("factor_three: mixed split polynomials on a scaled shift") {
  Field F7 = Field::prime(7);
  QuadPoly p1 = QuadPoly::parse(F7, "t^2-3t+2");
  QuadPoly p2 = QuadPoly::parse(F7, "t^2-1");
  QuadPoly p3 = QuadPoly::parse(F7, "t^2+t+1");  // roots 2 and 4
  RepAut u(F7);
  u.add_shift_block(0, Scalar(F7, 3));
  u.validate();

  FactorOutcome fo = factor_three(u, {p1, p2, p3});
  REQUIRE(fo.ok());
  check_cert(*fo.certificate, u, {p1, p2, p3}, default_window(u, 16, 4));
}

TEST_CASE("factor_three: dominant branch refusal propagates") {
  Field F7 = Field::prime(7);
  QuadPoly inv = QuadPoly::parse(F7, "t^2-1");
  RepAut u(F7);
  u.add_periodic_block(0, Mat::of(F7, {{3}}));
  u.validate();
  FactorOutcome fo = factor_three(u, {inv, inv, inv});
  REQUIRE_FALSE(fo.ok());
  CHECK(fo.refusal->code == "NotAcceptable");
}

// ---------------------------------------------------------------------------
// factor_four

TEST_CASE("factor_four: dominant scalar plus rank one over F_7") {
  Field F7 = Field::prime(7);
  QuadPoly inv = QuadPoly::parse(F7, "t^2-1");
  RepAut u(F7);
  u.add_periodic_block(0, Mat::of(F7, {{3}}));
  u.add_perturbation(BasisIndex::periodic(0, 0, 0),
                     unit(F7, BasisIndex::periodic(0, 1, 0)));
  u.validate();

  Certificate cert = factor_four(u, {inv, inv, inv, inv});
  check_cert(cert, u, {inv, inv, inv, inv}, periodic_window(0, 8, 1));
}

TEST_CASE("factor_four: dominant scalar with no deviation over F_5") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  RepAut u(F5);
  u.add_periodic_block(0, Mat::of(F5, {{2}}));
  u.validate();

  Certificate cert = factor_four(u, {inv, inv, inv, inv});
  check_cert(cert, u, {inv, inv, inv, inv}, periodic_window(0, 8, 1));
}

TEST_CASE("factor_four: unipotent annihilators on a scaled shift") {
  Field F5 = Field::prime(5);
  QuadPoly u1 = QuadPoly::parse(F5, "t^2-2t+1");
  RepAut u(F5);
  u.add_shift_block(0, Scalar(F5, 2));
  u.validate();

  Certificate cert = factor_four(u, {u1, u1, u1, u1});
  check_cert(cert, u, {u1, u1, u1, u1}, default_window(u, 16, 4));
  CHECK(cert.factors[0].role == "scalar-prefix");
}

TEST_CASE("factor_four: shift plus coupled finite block") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  RepAut u(F5);
  u.add_shift_block(0, Scalar(F5, 1));
  u.add_finite_block(0, companion(inv));
  u.add_coupling(BasisIndex::finite(0, 1), unit(F5, BasisIndex::shift(0, 0)));
  u.validate();

  Certificate cert = factor_four(u, {inv, inv, inv, inv});
  Window wide = default_window(u, 16, 4);
  check_cert(cert, u, {inv, inv, inv, inv}, wide);
}

// ---------------------------------------------------------------------------
// Classification

TEST_CASE("classify3: dominant 3 over F_7 fails every flavor") {
  Field F7 = Field::prime(7);
  RepAut u(F7);
  u.add_periodic_block(0, Mat::of(F7, {{3}}));
  u.validate();
  CHECK_FALSE(classify3(u, TripleFlavor::Involutions).product);
  CHECK_FALSE(classify3(u, TripleFlavor::Unipotents).product);
  CHECK_FALSE(classify3(u, TripleFlavor::Mixed).product);
}

TEST_CASE("classify3: without a dominant eigenvalue everything is a "
          "product") {
  Field F5 = Field::prime(5);
  RepAut u(F5);
  u.add_shift_block(0, Scalar(F5, 3));
  u.validate();
  for (auto fl : {TripleFlavor::Involutions, TripleFlavor::Unipotents,
                  TripleFlavor::Mixed}) {
    Decision d = classify3(u, fl);
    CHECK(d.product);
    REQUIRE_FALSE(d.reasons.empty());
  }
}

TEST_CASE("classify3: determinant obstructions at lambda = 1 over F_7") {
  Field F7 = Field::prime(7);
  RepAut u(F7);
  u.add_periodic_block(0, Mat::of(F7, {{1}}));
  u.add_perturbation(BasisIndex::periodic(0, 0, 0),
                     unit(F7, BasisIndex::periodic(0, 0, 0)));
  u.validate();  // u(e) = 2e on one cell: induced det 2
  CHECK(induced_det(u) == Scalar(F7, 2));
  CHECK_FALSE(classify3(u, TripleFlavor::Involutions).product);
  CHECK_FALSE(classify3(u, TripleFlavor::Unipotents).product);
  CHECK_FALSE(classify3(u, TripleFlavor::Mixed).product);
}

TEST_CASE("classify3: lambda = 4 over F_7 is excluded by the scalar "
          "conditions alone") {
  Field F7 = Field::prime(7);
  RepAut u(F7);
  u.add_periodic_block(0, Mat::of(F7, {{4}}));
  u.add_perturbation(BasisIndex::periodic(0, 0, 0),
                     unit(F7, BasisIndex::periodic(0, 1, 0)));
  u.validate();
  CHECK_FALSE(classify3(u, TripleFlavor::Involutions).product);  // 4^4 = 4
  CHECK_FALSE(classify3(u, TripleFlavor::Unipotents).product);   // 4^2 = 2
  CHECK_FALSE(classify3(u, TripleFlavor::Mixed).product);
}

TEST_CASE("classify3: positive decisions agree with the constructive "
          "pipeline") {
  Field F7 = Field::prime(7);
  QuadPoly inv = QuadPoly::parse(F7, "t^2-1");
  QuadPoly u1 = QuadPoly::parse(F7, "t^2-2t+1");
  RepAut u(F7);
  u.add_periodic_block(0, Mat::of(F7, {{1}}));
  u.add_perturbation(BasisIndex::periodic(0, 0, 0),
                     unit(F7, BasisIndex::periodic(0, 0, 0)) * Scalar(F7, 5));
  u.validate();  // u(e) = 6e = -e on one cell: induced det -1

  CHECK(induced_det(u) == Scalar(F7, 6));
  CHECK(classify3(u, TripleFlavor::Involutions).product);
  CHECK(classify3(u, TripleFlavor::Mixed).product);
  CHECK_FALSE(classify3(u, TripleFlavor::Unipotents).product);

  FactorOutcome fi = finite_rank_three(u, {inv, inv, inv});
  REQUIRE(fi.ok());
  check_cert(*fi.certificate, u, {inv, inv, inv}, periodic_window(0, 8, 1));

  FactorOutcome fm = finite_rank_three(u, {u1, inv, inv});
  REQUIRE(fm.ok());
  check_cert(*fm.certificate, u, {u1, inv, inv}, periodic_window(0, 8, 1));

  FactorOutcome fu = finite_rank_three(u, {u1, u1, u1});
  REQUIRE_FALSE(fu.ok());
  CHECK(fu.refusal->code == "DeterminantObstruction");
}

TEST_CASE("classify3: an involution core passes and factors") {
  Field F7 = Field::prime(7);
  QuadPoly inv = QuadPoly::parse(F7, "t^2-1");
  RepAut u(F7);
  u.add_finite_block(0, Mat::of(F7, {{0, 1}, {1, 0}}));
  u.add_periodic_block(0, Mat::of(F7, {{1}}));
  u.validate();
  CHECK(classify3(u, TripleFlavor::Involutions).product);
  FactorOutcome fo = factor_three(u, {inv, inv, inv});
  REQUIRE(fo.ok());
  Window wide = periodic_window(0, 8, 1);
  wide.insert_finite_block(0, 2);
  check_cert(*fo.certificate, u, {inv, inv, inv}, wide);
}

// ---------------------------------------------------------------------------
// Certificate verification

TEST_CASE("verify_certificate: tampering is caught") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  RepAut u(F5);
  u.add_shift_block(0, Scalar(F5, 1));
  u.validate();
  FactorOutcome fo = factor_three(u, {inv, inv, inv});
  REQUIRE(fo.ok());
  Certificate cert = *fo.certificate;
  Window W = default_window(u, 12, 4);
  REQUIRE(verify_certificate(u, cert, W).pass);

  SUBCASE("wrong claimed annihilator") {
    cert.factors[0].annihilator = QuadPoly::parse(F5, "t^2-t-1");
    CheckReport rep = verify_certificate(u, cert, W);
    CHECK_FALSE(rep.pass);
    CHECK_FALSE(rep.failures.empty());
  }

  SUBCASE("replaced factor breaks the product") {
    cert.factors[1].op = LazyOp::identity(F5);
    CheckReport rep = verify_certificate(u, cert, W);
    CHECK_FALSE(rep.pass);
  }

  SUBCASE("factor count limits") {
    cert.factors.clear();
    CHECK(thrown_code([&] { verify_certificate(u, cert, W); }) == "BadInput");
  }
}

TEST_CASE("certificates: provenance and str are informative") {
  Field F5 = Field::prime(5);
  QuadPoly inv = QuadPoly::parse(F5, "t^2-1");
  RepAut u(F5);
  u.add_shift_block(0, Scalar(F5, 2));
  u.validate();
  FactorOutcome fo = factor_three(u, {inv, inv, inv});
  REQUIRE(fo.ok());
  CHECK_FALSE(fo.certificate->provenance.empty());
  std::string s = fo.certificate->str();
  CHECK(s.find("3 factors") != std::string::npos);
  CHECK(s.find("verified") != std::string::npos);
}
