// Command-line frontend for the invofactor shared library.
//
// Every mathematical operation goes through the C API in invofactor.h; this
// file only parses arguments, moves JSON between files and the library, and
// renders human-readable summaries.  Machine artifacts (certificates,
// reports, search results) are JSON; summaries go to standard output.
//
// Exit codes are stable: 0 success, 1 malformed input, 2 refusal with a
// machine-readable reason, 3 verification failure, 4 budget exceeded.
#include <CLI11.hpp>
#include <json.hpp>

#include <invofactor.h>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using json = nlohmann::ordered_json;

namespace {

struct CtxGuard {
  ivf_ctx* p = ivf_ctx_new();
  ~CtxGuard() { ivf_ctx_free(p); }
  operator ivf_ctx*() const { return p; }
};

// Owns one string returned by the library.
struct OutStr {
  char* p = nullptr;
  ~OutStr() { ivf_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

int exit_code(ivf_status st) {
  switch (st) {
    case IVF_OK:              return 0;
    case IVF_E_BAD_INPUT:     return 1;
    case IVF_E_REFUSED:       return 2;
    case IVF_E_VERIFY_FAILED: return 3;
    case IVF_E_BUDGET:        return 4;
    case IVF_E_INTERNAL:      return 1;
  }
  return 1;
}

int report_error(ivf_ctx* ctx, ivf_status st) {
  std::cerr << "error [" << ivf_last_error_code(ctx)
            << "]: " << ivf_last_error(ctx) << "\n";
  return exit_code(st);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("short write to '" + path + "'");
}

// Accepts either inline JSON (first non-space character '{') or a file path.
std::string json_arg(const std::string& arg) {
  size_t i = arg.find_first_not_of(" \t\r\n");
  if (i != std::string::npos && arg[i] == '{') return arg;
  return read_text_file(arg);
}

std::string budget_text(unsigned jobs, std::uint64_t max_ops) {
  json b{{"jobs", jobs}};
  if (max_ops > 0) b["max_ops"] = max_ops;
  return b.dump();
}

// Renders a matrix-JSON value as one compact line of rows.
std::string matrix_line(const json& m) {
  std::string s = "[";
  for (size_t r = 0; r < m.at("entries").size(); ++r) {
    if (r) s += ", ";
    s += "[";
    const auto& row = m.at("entries").at(r);
    for (size_t c = 0; c < row.size(); ++c) {
      if (c) s += ", ";
      s += row.at(c).get<std::string>();
    }
    s += "]";
  }
  return s + "]";
}

// Shared flags threaded into every subcommand.
struct Global {
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::uint64_t max_ops = 0;  // 0 = library default
};

int run_factor(ivf_ctx* ctx, const Global& g, const std::string& input,
               const std::string& polys, const std::string& field,
               int window, const std::string& out_path) {
  std::string op = read_text_file(input);
  if (!field.empty()) {
    std::string tag = json::parse(op).value("field", "");
    if (tag != field) {
      std::cerr << "error [BadInput]: operator is over " << tag
                << " but --field requested " << field << "\n";
      return 1;
    }
  }
  OutStr cert, refusal;
  ivf_status st = ivf_factor(ctx, op.c_str(), polys.c_str(), g.seed,
                             budget_text(g.jobs, g.max_ops).c_str(), &cert.p,
                             &refusal.p);
  if (st == IVF_E_REFUSED) {
    std::cout << json::parse(refusal.str()).dump(2) << "\n";
    return 2;
  }
  if (st != IVF_OK) return report_error(ctx, st);

  // Re-check the certificate on the requested window before writing it.
  OutStr report;
  st = ivf_verify(ctx, op.c_str(), cert.p, window, &report.p);
  if (st != IVF_OK) {
    std::cerr << "error: freshly built certificate failed its self-check ["
              << ivf_last_error_code(ctx) << "]: " << ivf_last_error(ctx)
              << "\n";
    return exit_code(st);
  }
  write_text_file(out_path, cert.str() + "\n");

  json c = json::parse(cert.str());
  json rep = json::parse(report.str());
  std::cout << "wrote " << c.at("factors").size() << "-factor certificate to "
            << out_path << "\n";
  std::cout << "annihilators:";
  for (const auto& f : c.at("factors"))
    std::cout << " " << f.at("annihilator").at("poly").get<std::string>();
  std::cout << "\nself-check: pass (" << rep.at("checked").get<std::uint64_t>()
            << " identities, " << rep.at("window").get<std::string>() << ")\n";
  return 0;
}

int run_verify(ivf_ctx* ctx, const std::string& op_path,
               const std::string& cert_path, int window) {
  std::string cert = read_text_file(cert_path);
  std::string op;
  if (!op_path.empty()) op = read_text_file(op_path);
  OutStr report;
  ivf_status st = ivf_verify(ctx, op_path.empty() ? nullptr : op.c_str(),
                             cert.c_str(), window, &report.p);
  if (st == IVF_OK || st == IVF_E_VERIFY_FAILED) {
    json rep = json::parse(report.str());
    std::cout << (st == IVF_OK ? "PASS" : "FAIL") << ": checked "
              << rep.at("checked").get<std::uint64_t>() << " identities, "
              << rep.at("window").get<std::string>() << "\n";
    for (const auto& f : rep.at("failures"))
      std::cout << "  failure: " << f.get<std::string>() << "\n";
    return exit_code(st);
  }
  return report_error(ctx, st);
}

int run_search(ivf_ctx* ctx, const Global& g, int n, int q,
               const std::string& polys, const std::string& target_arg,
               const std::string& out_path) {
  std::string target = json_arg(target_arg);
  json t = json::parse(target);
  if (n > 0 && t.value("rows", -1) != n) {
    std::cerr << "error [BadInput]: target has " << t.value("rows", -1)
              << " rows but --n requested " << n << "\n";
    return 1;
  }
  if (q > 0 && t.value("field", "") != "F" + std::to_string(q)) {
    std::cerr << "error [BadInput]: target is over " << t.value("field", "")
              << " but --q requested F" << q << "\n";
    return 1;
  }
  OutStr result;
  ivf_status st = ivf_search(ctx, target.c_str(), polys.c_str(),
                             budget_text(g.jobs, g.max_ops).c_str(),
                             &result.p);
  if (st != IVF_OK) return report_error(ctx, st);
  json r = json::parse(result.str());
  if (!out_path.empty()) write_text_file(out_path, r.dump(2) + "\n");
  if (r.at("member").get<bool>()) {
    std::cout << "member: yes; witness factors:\n";
    for (const auto& w : r.at("witness"))
      std::cout << "  " << matrix_line(w) << "\n";
  } else {
    std::cout << "member: no (search was exhaustive)\n";
  }
  return 0;
}

int run_census(ivf_ctx* ctx, const Global& g, int n, int q, int k,
               const std::string& poly, const std::string& out_path) {
  OutStr result;
  ivf_status st = ivf_census(ctx, n, q, k, poly.c_str(),
                             budget_text(g.jobs, g.max_ops).c_str(),
                             &result.p);
  if (st != IVF_OK) return report_error(ctx, st);
  json c = json::parse(result.str());
  if (!out_path.empty()) write_text_file(out_path, c.dump(2) + "\n");
  std::uint64_t total = 0;
  std::cout << "products of <= " << k << " factors annihilated by " << poly
            << " in GL_" << n << "(F_" << q << "), by determinant:\n";
  for (const auto& [det, count] : c.at("by_det").items()) {
    std::cout << "  det " << det << ": " << count.get<std::uint64_t>() << "\n";
    total += count.get<std::uint64_t>();
  }
  std::cout << "total: " << total << "\n";
  return 0;
}

int run_acceptable(ivf_ctx* ctx, const std::string& lambda,
                   const std::string& field, const std::string& polys) {
  OutStr result;
  ivf_status st =
      ivf_acceptable(ctx, lambda.c_str(), field.c_str(), polys.c_str(),
                     &result.p);
  if (st != IVF_OK) return report_error(ctx, st);
  json r = json::parse(result.str());
  if (r.at("acceptable").get<bool>()) {
    std::cout << "acceptable: yes (" << r.at("kind").get<std::string>() << ")";
    if (r.contains("witness")) {
      std::cout << "; witness roots:";
      for (const auto& w : r.at("witness"))
        std::cout << " " << w.get<std::string>();
    }
    std::cout << "\n";
  } else {
    std::cout << "acceptable: no\n";
  }
  return 0;
}

int run_classify(ivf_ctx* ctx, const std::string& input,
                 const std::string& flavor) {
  std::string op = read_text_file(input);
  OutStr result;
  ivf_status st = ivf_classify(ctx, op.c_str(), flavor.c_str(), &result.p);
  if (st != IVF_OK) return report_error(ctx, st);
  json r = json::parse(result.str());
  std::cout << flavor << ": "
            << (r.at("product").get<bool>() ? "product" : "not a product")
            << "\n";
  for (const auto& reason : r.at("reasons"))
    std::cout << "  " << reason.get<std::string>() << "\n";
  return 0;
}

int run_strata(ivf_ctx* ctx, const std::string& input,
               const std::string& out_path) {
  std::string op = read_text_file(input);
  OutStr result;
  ivf_status st = ivf_strata(ctx, op.c_str(), &result.p);
  if (st == IVF_E_REFUSED) {
    std::cout << json::parse(result.str()).dump(2) << "\n";
    return 2;
  }
  if (st != IVF_OK) return report_error(ctx, st);
  json s = json::parse(result.str());
  if (!out_path.empty()) {
    write_text_file(out_path, s.dump(2) + "\n");
    std::cout << "wrote " << s.at("kind").get<std::string>()
              << " stratification (" << s.at("prefix").size()
              << " explicit strata) to " << out_path << "\n";
  } else {
    std::cout << s.dump(2) << "\n";
  }
  return 0;
}

// Reproduces the library's worked examples end to end through the C API.
int run_demo(ivf_ctx* ctx, const Global& g) {
  const char* shift_op = R"({
    "field": "F5",
    "finite_blocks": [],
    "shift_blocks": [{"id": 0, "multiplier": "1"}],
    "periodic_blocks": [],
    "coupling": [],
    "perturbation": []
  })";
  const char* triple_id = R"({
    "field": "F7",
    "finite_blocks": [],
    "shift_blocks": [],
    "periodic_blocks": [{"id": 0, "matrix":
        {"field": "F7", "rows": 1, "cols": 1, "entries": [["3"]]}}],
    "coupling": [],
    "perturbation": []
  })";
  const char* two_i2 =
      R"({"field":"F5","rows":2,"cols":2,"entries":[["2","0"],["0","2"]]})";

  std::cout << "== acceptability of a scalar ==\n";
  for (auto [lam, field] : {std::pair{"2", "F5"}, std::pair{"3", "F7"}}) {
    std::cout << "lambda=" << lam << " over " << field << ", three t^2-1 -> ";
    OutStr r;
    if (ivf_acceptable(ctx, lam, field, "t^2-1;t^2-1;t^2-1", &r.p) != IVF_OK)
      return report_error(ctx, IVF_E_INTERNAL);
    json a = json::parse(r.str());
    std::cout << (a.at("acceptable").get<bool>()
                      ? a.at("kind").get<std::string>()
                      : std::string("No"))
              << "\n";
  }

  std::cout << "\n== exhaustive witness: 2*I_2 over F_5 as a product of "
               "three involutions ==\n";
  {
    OutStr r;
    if (ivf_search(ctx, two_i2, "t^2-1;t^2-1;t^2-1",
                   budget_text(g.jobs, g.max_ops).c_str(), &r.p) != IVF_OK)
      return report_error(ctx, IVF_E_INTERNAL);
    json s = json::parse(r.str());
    for (const auto& w : s.at("witness"))
      std::cout << "  " << matrix_line(w) << "\n";
  }

  std::cout << "\n== factoring an infinite shift into three involutions ==\n";
  {
    OutStr cert, refusal;
    if (ivf_factor(ctx, shift_op, "t^2-1;t^2-1;t^2-1", g.seed,
                   budget_text(g.jobs, g.max_ops).c_str(), &cert.p,
                   &refusal.p) != IVF_OK)
      return report_error(ctx, IVF_E_INTERNAL);
    OutStr report;
    if (ivf_verify(ctx, nullptr, cert.p, 48, &report.p) != IVF_OK)
      return report_error(ctx, IVF_E_VERIFY_FAILED);
    json rep = json::parse(report.str());
    std::cout << "  certificate verifies: "
              << rep.at("checked").get<std::uint64_t>() << " identities, "
              << rep.at("window").get<std::string>() << "\n";
  }

  std::cout << "\n== a refusal with a machine-readable reason ==\n";
  {
    std::cout << "  3*id over F_7, three t^2-1 -> ";
    OutStr cert, refusal;
    ivf_status st = ivf_factor(ctx, triple_id, "t^2-1;t^2-1;t^2-1", g.seed,
                               budget_text(g.jobs, g.max_ops).c_str(),
                               &cert.p, &refusal.p);
    if (st != IVF_E_REFUSED) {
      std::cerr << "expected a refusal, got status " << st << "\n";
      return 1;
    }
    std::cout << json::parse(refusal.str()).at("code").get<std::string>()
              << "\n";
    std::cout << "  with a fourth involution -> ";
    OutStr cert4, refusal4;
    if (ivf_factor(ctx, triple_id, "t^2-1;t^2-1;t^2-1;t^2-1", g.seed,
                   budget_text(g.jobs, g.max_ops).c_str(), &cert4.p,
                   &refusal4.p) != IVF_OK)
      return report_error(ctx, IVF_E_INTERNAL);
    std::cout << json::parse(cert4.str()).at("factors").size()
              << "-factor certificate\n";
  }

  std::cout << "\n== census: involution products fill GL_2(F_3) ==\n";
  {
    OutStr r;
    if (ivf_census(ctx, 2, 3, 4, "t^2-1",
                   budget_text(g.jobs, g.max_ops).c_str(), &r.p) != IVF_OK)
      return report_error(ctx, IVF_E_INTERNAL);
    json c = json::parse(r.str());
    std::uint64_t total = 0;
    for (const auto& [det, count] : c.at("by_det").items())
      total += count.get<std::uint64_t>();
    std::cout << "  products of <= 4 involutions: " << total
              << " of 48 elements\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "invofactor: factor automorphisms of an infinite-dimensional space "
      "into products of 3-4 quadratic automorphisms, verify the resulting "
      "certificates exactly, and run exhaustive finite-group searches."};
  app.require_subcommand(1);
  app.fallthrough();

  Global g;
  app.add_option("--seed", g.seed, "pairing seed; identical seeds reproduce "
                                   "identical certificates")
      ->capture_default_str();
  app.add_option("--jobs", g.jobs, "worker threads for searches")
      ->capture_default_str();
  app.add_option("--max-ops", g.max_ops,
                 "operation budget for enumerations (0 = library default; "
                 "the INVOFACTOR_BUDGET environment variable overrides)")
      ->capture_default_str();

  int rc = 0;
  CtxGuard ctx;

  {
    auto* sc = app.add_subcommand(
        "factor", "factor an operator, writing a certificate");
    auto input = std::make_shared<std::string>();
    auto polys = std::make_shared<std::string>();
    auto field = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto window = std::make_shared<int>(32);
    sc->add_option("--input", *input, "operator JSON file")
        ->required()
        ->check(CLI::ExistingFile);
    sc->add_option("--polys", *polys,
                   "3 or 4 annihilators, e.g. \"t^2-1;t^2-1;t^2-1\"")
        ->required();
    sc->add_option("--field", *field,
                   "cross-check: refuse unless the operator is over this "
                   "field (e.g. F5)");
    sc->add_option("--window", *window, "half-width of the self-check window")
        ->capture_default_str();
    sc->add_option("--out", *out, "certificate output file")->required();
    sc->callback([&, input, polys, field, window, out] {
      rc = run_factor(ctx, g, *input, *polys, *field, *window, *out);
    });
  }
  {
    auto* sc =
        app.add_subcommand("verify", "re-check a certificate exactly");
    auto op = std::make_shared<std::string>();
    auto cert = std::make_shared<std::string>();
    auto window = std::make_shared<int>(0);
    sc->add_option("--op", *op,
                   "operator JSON file (defaults to the certificate's "
                   "embedded target)")
        ->check(CLI::ExistingFile);
    sc->add_option("--cert", *cert, "certificate file")
        ->required()
        ->check(CLI::ExistingFile);
    sc->add_option("--window", *window,
                   "half-width of the verification window (0 = library "
                   "default)")
        ->capture_default_str();
    sc->callback(
        [&, op, cert, window] { rc = run_verify(ctx, *op, *cert, *window); });
  }
  {
    auto* sc = app.add_subcommand(
        "search", "exhaustive product membership in GL_n(F_q)");
    auto n = std::make_shared<int>(0);
    auto q = std::make_shared<int>(0);
    auto polys = std::make_shared<std::string>();
    auto target = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    sc->add_option("--n", *n, "cross-check: target must be n x n");
    sc->add_option("--q", *q, "cross-check: target must be over F_q");
    sc->add_option("--polys", *polys, "factor annihilators, one per factor")
        ->required();
    sc->add_option("--target", *target, "target matrix: JSON file or inline")
        ->required();
    sc->add_option("--out", *out, "write the result JSON here");
    sc->callback([&, n, q, polys, target, out] {
      rc = run_search(ctx, g, *n, *q, *polys, *target, *out);
    });
  }
  {
    auto* sc = app.add_subcommand(
        "census", "count k-fold products by determinant in GL_n(F_q)");
    auto n = std::make_shared<int>(0);
    auto q = std::make_shared<int>(0);
    auto k = std::make_shared<int>(0);
    auto poly = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    sc->add_option("--n", *n, "matrix size")->required();
    sc->add_option("--q", *q, "field size")->required();
    sc->add_option("--k", *k, "number of factors")->required();
    sc->add_option("--poly", *poly, "annihilator of every factor")
        ->required();
    sc->add_option("--out", *out, "write the census JSON here");
    sc->callback([&, n, q, k, poly, out] {
      rc = run_census(ctx, g, *n, *q, *k, *poly, *out);
    });
  }
  {
    auto* sc = app.add_subcommand(
        "acceptable",
        "decide whether a scalar admits three such annihilated factors");
    auto lambda = std::make_shared<std::string>();
    auto field = std::make_shared<std::string>();
    auto polys = std::make_shared<std::string>();
    sc->add_option("--lambda", *lambda, "the scalar")->required();
    sc->add_option("--field", *field, "ground field, e.g. F5")->required();
    sc->add_option("--polys", *polys, "exactly three annihilators")
        ->required();
    sc->callback([&, lambda, field, polys] {
      rc = run_acceptable(ctx, *lambda, *field, *polys);
    });
  }
  {
    auto* sc = app.add_subcommand(
        "classify", "decide three-factor expressibility by flavor");
    auto input = std::make_shared<std::string>();
    auto flavor = std::make_shared<std::string>();
    sc->add_option("--input", *input, "operator JSON file")
        ->required()
        ->check(CLI::ExistingFile);
    sc->add_option("--flavor", *flavor, "involutions, unipotents, or mixed")
        ->required()
        ->check(CLI::IsMember({"involutions", "unipotents", "mixed"}));
    sc->callback(
        [&, input, flavor] { rc = run_classify(ctx, *input, *flavor); });
  }
  {
    auto* sc = app.add_subcommand(
        "strata", "dump the stratification used by the constructions");
    auto input = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    sc->add_option("--input", *input, "operator JSON file")
        ->required()
        ->check(CLI::ExistingFile);
    sc->add_option("--out", *out, "write the stratification JSON here");
    sc->callback([&, input, out] { rc = run_strata(ctx, *input, *out); });
  }
  {
    auto* sc = app.add_subcommand(
        "demo", "walk through the worked examples end to end");
    sc->callback([&] { rc = run_demo(ctx, g); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int parse_rc = app.exit(e);
    return parse_rc == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
