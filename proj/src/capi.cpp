#include "invofactor.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include "serialize.hpp"

using invo::io::json;

struct ivf_ctx {
  std::string code;
  std::string msg;
};

namespace {

char* dup_out(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** slot, const json& j) {
  if (slot) *slot = dup_out(j.dump(2));
}

void clear_err(ivf_ctx* ctx) {
  if (ctx) {
    ctx->code.clear();
    ctx->msg.clear();
  }
}

ivf_status set_err(ivf_ctx* ctx, ivf_status st, const std::string& code,
                   const std::string& msg) {
  if (ctx) {
    ctx->code = code;
    ctx->msg = msg;
  }
  return st;
}

/// Maps a thrown library error to the status contract: budget overruns to
/// IVF_E_BUDGET, internal assertion failures to IVF_E_INTERNAL, everything
/// else (malformed JSON, bad polynomials, unknown indices, ...) to
/// IVF_E_BAD_INPUT.
ivf_status from_error(ivf_ctx* ctx, const invo::error& e) {
  if (e.code() == "BudgetExceeded" || e.code() == "BoundExceeded")
    return set_err(ctx, IVF_E_BUDGET, e.code(), e.what());
  if (e.code() == "Internal")
    return set_err(ctx, IVF_E_INTERNAL, e.code(), e.what());
  return set_err(ctx, IVF_E_BAD_INPUT, e.code(), e.what());
}

invo::RepAut op_of_text(const char* op_json) {
  if (!op_json) invo::fail("BadInput", "missing operator JSON");
  return invo::io::repaut_of(json::parse(op_json, nullptr, true));
}

std::vector<invo::QuadPoly> polys_of_text(invo::Field f, const char* polys) {
  if (!polys) invo::fail("BadInput", "missing polynomial list");
  std::vector<invo::QuadPoly> out;
  std::string s(polys);
  size_t start = 0;
  while (start <= s.size()) {
    size_t end = s.find(';', start);
    std::string piece = s.substr(
        start, end == std::string::npos ? std::string::npos : end - start);
    size_t a = piece.find_first_not_of(" \t");
    size_t b = piece.find_last_not_of(" \t");
    if (a != std::string::npos)
      out.push_back(invo::QuadPoly::parse(f, piece.substr(a, b - a + 1)));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  if (out.empty()) invo::fail("BadInput", "empty polynomial list");
  return out;
}

/// Budget resolution order: library defaults, then the caller's JSON, then
/// the INVOFACTOR_BUDGET environment variable (operation cap).
invo::SearchBudget budget_of_text(const char* budget_json) {
  invo::SearchBudget b;
  if (budget_json && *budget_json)
    b = invo::io::budget_of(json::parse(budget_json, nullptr, true));
  if (const char* env = std::getenv("INVOFACTOR_BUDGET")) {
    char* endp = nullptr;
    unsigned long long cap = std::strtoull(env, &endp, 10);
    if (endp && *endp == '\0' && cap > 0)
      b.max_ops = static_cast<uint64_t>(cap);
    else
      invo::fail("BadInput",
                 std::string("INVOFACTOR_BUDGET must be a positive "
                             "integer, got '") +
                     env + "'");
  }
  return b;
}

template <class Fn>
ivf_status run(ivf_ctx* ctx, Fn&& fn) {
  clear_err(ctx);
  try {
    return fn();
  } catch (const invo::error& e) {
    return from_error(ctx, e);
  } catch (const nlohmann::json::exception& e) {
    return set_err(ctx, IVF_E_BAD_INPUT, "BadInput", e.what());
  } catch (const std::exception& e) {
    return set_err(ctx, IVF_E_BAD_INPUT, "BadInput", e.what());
  }
}

}  // namespace

extern "C" {

ivf_ctx* ivf_ctx_new(void) { return new ivf_ctx{}; }

void ivf_ctx_free(ivf_ctx* ctx) { delete ctx; }

const char* ivf_last_error_code(const ivf_ctx* ctx) {
  return ctx ? ctx->code.c_str() : "";
}

const char* ivf_last_error(const ivf_ctx* ctx) {
  return ctx ? ctx->msg.c_str() : "";
}

void ivf_string_free(char* s) { delete[] s; }

const char* ivf_version(void) { return "1.0.0"; }

ivf_status ivf_factor(ivf_ctx* ctx, const char* op_json, const char* polys,
                      uint64_t seed, const char* budget_json,
                      char** cert_json_out, char** refusal_json_out) {
  return run(ctx, [&]() -> ivf_status {
    invo::RepAut u = op_of_text(op_json);
    std::vector<invo::QuadPoly> ps = polys_of_text(u.field(), polys);
    invo::SearchBudget budget = budget_of_text(budget_json);
    if (ps.size() != 3 && ps.size() != 4)
      invo::fail("BadInput", "factor needs 3 or 4 polynomials, got " +
                                 std::to_string(ps.size()));

    auto refused = [&](const invo::Refusal& r) {
      put(refusal_json_out, invo::io::refusal_json(r));
      return set_err(ctx, IVF_E_REFUSED, r.code, r.detail);
    };

    if (ps.size() == 3) {
      invo::FactorOutcome fo =
          invo::factor_three(u, {ps[0], ps[1], ps[2]}, budget, seed);
      if (!fo.ok()) return refused(*fo.refusal);
      invo::io::FactorRecipe recipe{"factor-three", ps, {}, {}, budget, seed};
      put(cert_json_out, invo::io::certificate_json(*fo.certificate, recipe));
      return IVF_OK;
    }
    try {
      invo::Certificate cert =
          invo::factor_four(u, {ps[0], ps[1], ps[2], ps[3]}, budget, seed);
      invo::io::FactorRecipe recipe{"factor-four", ps, {}, {}, budget, seed};
      put(cert_json_out, invo::io::certificate_json(cert, recipe));
      return IVF_OK;
    } catch (const invo::error& e) {
      if (e.code() == "BuilderStuck")
        return refused(invo::Refusal{e.code(), e.what()});
      throw;
    }
  });
}

ivf_status ivf_verify(ivf_ctx* ctx, const char* op_json,
                      const char* cert_json, int64_t window,
                      char** report_json_out) {
  return run(ctx, [&]() -> ivf_status {
    if (!cert_json) invo::fail("BadInput", "missing certificate JSON");
    invo::Certificate cert =
        invo::io::certificate_of(json::parse(cert_json, nullptr, true));
    std::shared_ptr<const invo::RepAut> u = cert.target;
    if (op_json)
      u = std::make_shared<const invo::RepAut>(op_of_text(op_json));
    if (window <= 0) window = 32;
    int64_t margin = std::max<int64_t>(8, window / 4);
    invo::Window W = invo::default_window(*u, window, margin);
    W.insert_all(cert.window);
    invo::CheckReport rep = invo::verify_certificate(*u, cert, W);
    json out = invo::io::report_json(rep);
    out["window"] = W.str();
    put(report_json_out, out);
    if (!rep.pass)
      return set_err(ctx, IVF_E_VERIFY_FAILED, "VerifyFailed",
                     rep.failures.empty() ? "verification failed"
                                          : rep.failures.front());
    return IVF_OK;
  });
}

ivf_status ivf_search(ivf_ctx* ctx, const char* target_matrix_json,
                      const char* polys, const char* budget_json,
                      char** result_json_out) {
  return run(ctx, [&]() -> ivf_status {
    if (!target_matrix_json) invo::fail("BadInput", "missing target matrix");
    invo::Mat T =
        invo::io::mat_of(json::parse(target_matrix_json, nullptr, true));
    std::vector<invo::QuadPoly> ps = polys_of_text(T.field(), polys);
    invo::SearchBudget budget = budget_of_text(budget_json);
    auto witness = invo::product_membership(T, ps, budget);
    json out{{"member", witness.has_value()}};
    if (witness) {
      json ws = json::array();
      for (const auto& m : *witness) ws.push_back(invo::io::mat_json(m));
      out["witness"] = std::move(ws);
    }
    put(result_json_out, out);
    return IVF_OK;
  });
}

ivf_status ivf_census(ivf_ctx* ctx, size_t n, uint32_t q, size_t k,
                      const char* poly, const char* budget_json,
                      char** census_json_out) {
  return run(ctx, [&]() -> ivf_status {
    if (!poly) invo::fail("BadInput", "missing polynomial");
    invo::Field f = invo::Field::prime(q);
    invo::QuadPoly p = invo::QuadPoly::parse(f, poly);
    invo::SearchBudget budget = budget_of_text(budget_json);
    invo::Census c = invo::census(n, q, k, p, budget);
    put(census_json_out, invo::io::census_json(c));
    return IVF_OK;
  });
}

ivf_status ivf_acceptable(ivf_ctx* ctx, const char* lambda, const char* field,
                          const char* polys, char** result_json_out) {
  return run(ctx, [&]() -> ivf_status {
    if (!lambda || !field) invo::fail("BadInput", "missing lambda or field");
    invo::Field f = invo::Field::parse(field);
    invo::Scalar lam = invo::Scalar::parse(f, lambda);
    std::vector<invo::QuadPoly> ps = polys_of_text(f, polys);
    if (ps.size() != 3)
      invo::fail("BadInput", "acceptability is defined for exactly 3 "
                             "polynomials, got " +
                                 std::to_string(ps.size()));
    invo::Acceptability a = invo::acceptable(lam, ps[0], ps[1], ps[2]);
    put(result_json_out, invo::io::acceptability_json(a));
    return IVF_OK;
  });
}

ivf_status ivf_classify(ivf_ctx* ctx, const char* op_json, const char* flavor,
                        char** decision_json_out) {
  return run(ctx, [&]() -> ivf_status {
    invo::RepAut u = op_of_text(op_json);
    if (!flavor) invo::fail("BadInput", "missing flavor");
    std::string fl(flavor);
    invo::TripleFlavor tf = invo::TripleFlavor::Involutions;
    if (fl == "involutions")
      tf = invo::TripleFlavor::Involutions;
    else if (fl == "unipotents")
      tf = invo::TripleFlavor::Unipotents;
    else if (fl == "mixed")
      tf = invo::TripleFlavor::Mixed;
    else
      invo::fail("BadInput", "unknown flavor '" + fl +
                                 "' (expected involutions, unipotents, or "
                                 "mixed)");
    invo::Decision d = invo::classify3(u, tf);
    put(decision_json_out, invo::io::decision_json(d));
    return IVF_OK;
  });
}

ivf_status ivf_strata(ivf_ctx* ctx, const char* op_json,
                      char** strat_json_out) {
  return run(ctx, [&]() -> ivf_status {
    invo::RepAut u = op_of_text(op_json);
    try {
      json out;
      if (!u.shift_blocks().empty()) {
        invo::Stratification s = invo::quotient_strata(u);
        out = invo::io::strat_json(s);
        out["kind"] = "quotient";
      } else {
        invo::Stratification s = invo::build_strat_periodic(u);
        out = invo::io::strat_json(s);
        out["kind"] = "periodic";
      }
      put(strat_json_out, out);
      return IVF_OK;
    } catch (const invo::error& e) {
      if (e.code() != "BuilderStuck") throw;
      put(strat_json_out,
          invo::io::refusal_json(invo::Refusal{e.code(), e.what()}));
      return set_err(ctx, IVF_E_REFUSED, e.code(), e.what());
    }
  });
}

}  // extern "C"
