// Tests for the C API: every operation goes through the extern "C"
// surface with JSON text in and JSON text out, exactly as a foreign
// caller would use the shared library.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <invofactor.h>

#include <cstdlib>
#include <memory>
#include <string>

#include <json.hpp>

using json = nlohmann::ordered_json;

namespace {

// Owns a ctx for the duration of a test case.
struct Ctx {
  ivf_ctx* p = ivf_ctx_new();
  ~Ctx() { ivf_ctx_free(p); }
  operator ivf_ctx*() const { return p; }
};

// Wraps a string the library allocated so it is always released.
std::string take(char* s) {
  std::string out = s ? s : "";
  ivf_string_free(s);
  return out;
}

// The error accessors return pointers owned by the ctx; copy, don't free.
std::string last_code(ivf_ctx* ctx) { return ivf_last_error_code(ctx); }
std::string last_message(ivf_ctx* ctx) { return ivf_last_error(ctx); }

// A 2x2 companion block over F5 with an S0 shift: infinite, non-torsion.
const char* kShiftOp = R"({
  "field": "F5",
  "finite_blocks": [],
  "shift_blocks": [{"id": 0, "multiplier": "1"}],
  "periodic_blocks": [],
  "coupling": [],
  "perturbation": []
})";

// 3·id on an infinite periodic sum of 1x1 blocks over F7.
const char* kTripleIdOp = R"({
  "field": "F7",
  "finite_blocks": [],
  "shift_blocks": [],
  "periodic_blocks": [{"id": 0, "matrix":
      {"field": "F7", "rows": 1, "cols": 1, "entries": [["3"]]}}],
  "coupling": [],
  "perturbation": []
})";

// 2·id over F5 as a periodic sum of 1x1 blocks.
const char* kDoubleIdOp = R"({
  "field": "F5",
  "finite_blocks": [],
  "shift_blocks": [],
  "periodic_blocks": [{"id": 0, "matrix":
      {"field": "F5", "rows": 1, "cols": 1, "entries": [["2"]]}}],
  "coupling": [],
  "perturbation": []
})";

}  // namespace

TEST_CASE("version and ctx basics") {
  CHECK(std::string(ivf_version()) == "1.0.0");
  Ctx ctx;
  CHECK(last_code(ctx).empty());
  CHECK(last_message(ctx).empty());
  // Freeing a null string is a no-op.
  ivf_string_free(nullptr);
}

TEST_CASE("factor: three factors for a shift, certificate parses") {
  Ctx ctx;
  char* cert = nullptr;
  char* refusal = nullptr;
  ivf_status st = ivf_factor(ctx, kShiftOp, "t^2-1;t^2-1;t^2-1", 0, nullptr,
                             &cert, &refusal);
  REQUIRE(st == IVF_OK);
  REQUIRE(cert != nullptr);
  CHECK(refusal == nullptr);
  json c = json::parse(take(cert));
  CHECK(c.at("format") == "invofactor-certificate");
  CHECK(c.at("factors").size() == 3);
  CHECK(c.at("report").at("pass") == true);
}

TEST_CASE("factor: four factors for a dominant target") {
  Ctx ctx;
  char* cert = nullptr;
  char* refusal = nullptr;
  ivf_status st = ivf_factor(ctx, kTripleIdOp, "t^2-1;t^2-1;t^2-1;t^2-1", 0,
                             nullptr, &cert, &refusal);
  REQUIRE(st == IVF_OK);
  json c = json::parse(take(cert));
  CHECK(c.at("factors").size() == 4);
  CHECK(c.at("report").at("pass") == true);
}

TEST_CASE("factor: refusal is machine readable, not an error") {
  Ctx ctx;
  char* cert = nullptr;
  char* refusal = nullptr;
  // 3 is not expressible over F7 with three t^2-1 annihilators.
  ivf_status st = ivf_factor(ctx, kTripleIdOp, "t^2-1;t^2-1;t^2-1", 0, nullptr,
                             &cert, &refusal);
  CHECK(st == IVF_E_REFUSED);
  CHECK(cert == nullptr);
  REQUIRE(refusal != nullptr);
  json r = json::parse(take(refusal));
  CHECK(r.at("code") == "NotAcceptable");
  CHECK(last_code(ctx) == "NotAcceptable");
}

TEST_CASE("factor: malformed inputs") {
  Ctx ctx;
  char* cert = nullptr;
  char* refusal = nullptr;
  std::string expected_code;
  SUBCASE("bad json") {
    CHECK(ivf_factor(ctx, "{not json", "t^2-1;t^2-1;t^2-1", 0, nullptr, &cert,
                     &refusal) == IVF_E_BAD_INPUT);
    expected_code = "BadInput";
  }
  SUBCASE("wrong poly count") {
    CHECK(ivf_factor(ctx, kShiftOp, "t^2-1;t^2-1", 0, nullptr, &cert,
                     &refusal) == IVF_E_BAD_INPUT);
    expected_code = "BadInput";
  }
  SUBCASE("degree != 2") {
    CHECK(ivf_factor(ctx, kShiftOp, "t^2-1;t^2-1;t^3-1", 0, nullptr, &cert,
                     &refusal) == IVF_E_BAD_INPUT);
    expected_code = "BadPoly";
  }
  CHECK(cert == nullptr);
  CHECK(refusal == nullptr);
  CHECK(last_code(ctx) == expected_code);
  CHECK_FALSE(last_message(ctx).empty());
}

TEST_CASE("verify: accepts a fresh certificate, embedded or explicit target") {
  Ctx ctx;
  char* cert = nullptr;
  char* refusal = nullptr;
  REQUIRE(ivf_factor(ctx, kShiftOp, "t^2-1;t^2-1;t^2-1", 0, nullptr, &cert,
                     &refusal) == IVF_OK);
  std::string cert_text = take(cert);

  char* report = nullptr;
  SUBCASE("explicit op, default window") {
    CHECK(ivf_verify(ctx, kShiftOp, cert_text.c_str(), 0, &report) == IVF_OK);
  }
  SUBCASE("embedded target") {
    CHECK(ivf_verify(ctx, nullptr, cert_text.c_str(), 0, &report) == IVF_OK);
  }
  SUBCASE("window wider than the stored table") {
    CHECK(ivf_verify(ctx, nullptr, cert_text.c_str(), 64, &report) == IVF_OK);
  }
  REQUIRE(report != nullptr);
  json rep = json::parse(take(report));
  CHECK(rep.at("pass") == true);
  CHECK(rep.at("failures").empty());
  CHECK(rep.contains("window"));
}

TEST_CASE("verify: tampered certificate fails with a report") {
  Ctx ctx;
  char* cert = nullptr;
  char* refusal = nullptr;
  REQUIRE(ivf_factor(ctx, kShiftOp, "t^2-1;t^2-1;t^2-1", 0, nullptr, &cert,
                     &refusal) == IVF_OK);
  json c = json::parse(take(cert));
  // Corrupt one stored table coefficient so an identity must break.
  bool corrupted = false;
  for (auto& f : c.at("factors")) {
    if (f.at("rule").at("kind") != "table") continue;
    auto& entry = f.at("rule").at("entries").at(0);
    auto& term = entry.at("image").at(0);
    int cur = std::stoi(term.at("coeff").get<std::string>());
    int next = (cur + 1) % 5 == 0 ? 1 : (cur + 1) % 5;
    term["coeff"] = std::to_string(next);
    corrupted = true;
    break;
  }
  REQUIRE(corrupted);
  char* report = nullptr;
  CHECK(ivf_verify(ctx, kShiftOp, c.dump().c_str(), 0, &report) ==
        IVF_E_VERIFY_FAILED);
  REQUIRE(report != nullptr);
  json rep = json::parse(take(report));
  CHECK(rep.at("pass") == false);
  CHECK_FALSE(rep.at("failures").empty());
  CHECK(last_code(ctx) == "VerifyFailed");
}

TEST_CASE("verify: malformed certificate") {
  Ctx ctx;
  char* report = nullptr;
  CHECK(ivf_verify(ctx, kShiftOp, "{\"format\":\"wrong\"}", 0, &report) ==
        IVF_E_BAD_INPUT);
  CHECK(report == nullptr);
}

TEST_CASE("search: membership with witness, and honest non-membership") {
  Ctx ctx;
  char* out = nullptr;
  const char* two_i =
      R"({"field":"F5","rows":2,"cols":2,"entries":[["2","0"],["0","2"]]})";
  REQUIRE(ivf_search(ctx, two_i, "t^2-1;t^2-1;t^2-1", nullptr, &out) == IVF_OK);
  json r = json::parse(take(out));
  CHECK(r.at("member") == true);
  REQUIRE(r.at("witness").size() == 3);
  // The witness matrices are returned in spec matrix form.
  CHECK(r.at("witness").at(0).at("rows") == 2);

  // 3·I over F7 is not a product of three involutions.
  const char* three_i =
      R"({"field":"F7","rows":2,"cols":2,"entries":[["3","0"],["0","3"]]})";
  out = nullptr;
  REQUIRE(ivf_search(ctx, three_i, "t^2-1;t^2-1;t^2-1", nullptr, &out) ==
          IVF_OK);
  json r2 = json::parse(take(out));
  CHECK(r2.at("member") == false);
  CHECK_FALSE(r2.contains("witness"));
}

TEST_CASE("search: budget exceeded maps to its own status") {
  Ctx ctx;
  char* out = nullptr;
  const char* two_i =
      R"({"field":"F5","rows":2,"cols":2,"entries":[["2","0"],["0","2"]]})";
  CHECK(ivf_search(ctx, two_i, "t^2-1;t^2-1;t^2-1", R"({"max_ops": 3})",
                   &out) == IVF_E_BUDGET);
  CHECK(out == nullptr);
  CHECK(last_code(ctx) == "BudgetExceeded");
}

TEST_CASE("census: involution counts in GL_2(F_3)") {
  Ctx ctx;
  char* out = nullptr;
  REQUIRE(ivf_census(ctx, 2, 3, 1, "t^2-1", nullptr, &out) == IVF_OK);
  json c = json::parse(take(out));
  CHECK(c.at("n") == 2);
  CHECK(c.at("q") == 3);
  CHECK(c.at("k") == 1);
  // GL_2(F_3) holds 1 + 12 + 1 = 14 involutions (I, -I, twelve of det -1).
  std::uint64_t total = 0;
  for (const auto& [det, count] : c.at("by_det").items())
    total += count.get<std::uint64_t>();
  CHECK(total == 14);
}

TEST_CASE("acceptable: yes with witness and honest no") {
  Ctx ctx;
  char* out = nullptr;
  REQUIRE(ivf_acceptable(ctx, "2", "F5", "t^2-1;t^2-1;t^2-1", &out) == IVF_OK);
  json ns = json::parse(take(out));
  CHECK(ns.at("acceptable") == true);
  CHECK(ns.at("kind") == "NormSquare");

  out = nullptr;
  REQUIRE(ivf_acceptable(ctx, "4", "F5", "t^2-1;t^2-1;t^2-1", &out) == IVF_OK);
  json por = json::parse(take(out));
  CHECK(por.at("kind") == "ProductOfRoots");
  // One root from each polynomial multiplying to lambda.
  REQUIRE(por.at("witness").size() == 3);
  CHECK(por.at("witness") == json::array({"1", "1", "4"}));

  out = nullptr;
  REQUIRE(ivf_acceptable(ctx, "3", "F7", "t^2-1;t^2-1;t^2-1", &out) == IVF_OK);
  json no = json::parse(take(out));
  CHECK(no.at("acceptable") == false);
  CHECK(no.at("kind") == "No");
  CHECK_FALSE(no.contains("witness"));
}

TEST_CASE("acceptable: needs exactly three polynomials") {
  Ctx ctx;
  char* out = nullptr;
  CHECK(ivf_acceptable(ctx, "2", "F5", "t^2-1;t^2-1", &out) == IVF_E_BAD_INPUT);
  CHECK(out == nullptr);
}

TEST_CASE("classify: all three flavors answer on 2*id over F5") {
  Ctx ctx;
  for (const char* flavor : {"involutions", "unipotents", "mixed"}) {
    char* out = nullptr;
    REQUIRE(ivf_classify(ctx, kDoubleIdOp, flavor, &out) == IVF_OK);
    json r = json::parse(take(out));
    REQUIRE(r.contains("product"));
    CHECK_FALSE(r.at("reasons").empty());
    // 2^4 = 1 mod 5, so three involutions reach 2*id; the unipotent and
    // mixed triples need lambda^2 = 1 and 2^2 = 4 != 1.
    bool expected = std::string(flavor) == "involutions";
    CHECK(r.at("product") == expected);
  }
  char* out = nullptr;
  CHECK(ivf_classify(ctx, kDoubleIdOp, "nonsense", &out) == IVF_E_BAD_INPUT);
}

TEST_CASE("strata: periodic and quotient kinds") {
  Ctx ctx;
  char* out = nullptr;
  // Torsion target: companion of t^2-t-1 repeated -> periodic strata.
  const char* torsion = R"({
    "field": "F5",
    "finite_blocks": [],
    "shift_blocks": [],
    "periodic_blocks": [{"id": 0, "matrix":
        {"field": "F5", "rows": 2, "cols": 2,
         "entries": [["0","1"],["1","1"]]}}],
    "coupling": [],
    "perturbation": []
  })";
  REQUIRE(ivf_strata(ctx, torsion, &out) == IVF_OK);
  json per = json::parse(take(out));
  CHECK(per.at("kind") == "periodic");
  CHECK(per.contains("prefix"));

  out = nullptr;
  REQUIRE(ivf_strata(ctx, kShiftOp, &out) == IVF_OK);
  json quo = json::parse(take(out));
  CHECK(quo.at("kind") == "quotient");
}

TEST_CASE("environment variable overrides the enumeration budget") {
  Ctx ctx;
  const char* two_i =
      R"({"field":"F5","rows":2,"cols":2,"entries":[["2","0"],["0","2"]]})";
  setenv("INVOFACTOR_BUDGET", "3", 1);
  char* out = nullptr;
  CHECK(ivf_search(ctx, two_i, "t^2-1;t^2-1;t^2-1", nullptr, &out) ==
        IVF_E_BUDGET);
  setenv("INVOFACTOR_BUDGET", "not-a-number", 1);
  CHECK(ivf_search(ctx, two_i, "t^2-1;t^2-1;t^2-1", nullptr, &out) ==
        IVF_E_BAD_INPUT);
  unsetenv("INVOFACTOR_BUDGET");
  CHECK(ivf_search(ctx, two_i, "t^2-1;t^2-1;t^2-1", nullptr, &out) == IVF_OK);
  json r = json::parse(take(out));
  CHECK(r.at("member") == true);
}

TEST_CASE("round trip: factor then verify through the C API only") {
  Ctx ctx;
  char* cert = nullptr;
  char* refusal = nullptr;
  // Mixed annihilators: the middle factor is unipotent.
  REQUIRE(ivf_factor(ctx, kShiftOp, "t^2-1;(t-1)^2;t^2-1", 7, nullptr, &cert,
                     &refusal) == IVF_OK);
  std::string cert_text = take(cert);
  json c = json::parse(cert_text);
  CHECK(c.at("factors").at(1).at("annihilator").at("poly") == "t^2+3t+1");
  char* report = nullptr;
  CHECK(ivf_verify(ctx, nullptr, cert_text.c_str(), 48, &report) == IVF_OK);
  json rep = json::parse(take(report));
  CHECK(rep.at("pass") == true);
}
