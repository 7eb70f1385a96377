#include "serialize.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <utility>

namespace invo::io {

namespace {

/// Converts json access errors (missing key, wrong type, parse failure)
/// into the library's BadInput error with a stable context prefix.
template <class F>
auto guarded(const char* what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    fail("BadInput", std::string(what) + ": " + e.what());
  }
}

uint32_t block_id_of(const std::string& name, const char* what) {
  if (name.size() < 2)
    fail("BadInput", std::string(what) + ": bad block name '" + name + "'");
  try {
    return static_cast<uint32_t>(std::stoul(name.substr(1)));
  } catch (const std::exception&) {
    fail("BadInput", std::string(what) + ": bad block name '" + name + "'");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Leaf types

json field_json(Field f) { return f.str(); }

Field field_of(const json& j) {
  return guarded("field", [&] { return Field::parse(j.get<std::string>()); });
}

json scalar_json(const Scalar& s) { return s.str(); }

Scalar scalar_of(const json& j, Field f) {
  return guarded("scalar", [&] {
    if (j.is_number_integer()) return Scalar(f, j.get<long>());
    return Scalar::parse(f, j.get<std::string>());
  });
}

json poly_json(const QuadPoly& p) {
  return json{{"field", field_json(p.field())}, {"poly", p.str()}};
}

QuadPoly poly_of(const json& j) {
  return guarded("polynomial", [&] {
    Field f = field_of(j.at("field"));
    return QuadPoly::parse(f, j.at("poly").get<std::string>());
  });
}

QuadPoly poly_of(const json& j, Field f) {
  return guarded("polynomial", [&] {
    if (j.is_string()) return QuadPoly::parse(f, j.get<std::string>());
    QuadPoly p = poly_of(j);
    if (p.field() != f)
      fail("FieldMismatch", "polynomial field differs from the ambient one");
    return p;
  });
}

json mat_json(const Mat& m) {
  json rows = json::array();
  for (size_t r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (size_t c = 0; c < m.cols(); ++c) row.push_back(m.at(r, c).str());
    rows.push_back(std::move(row));
  }
  return json{{"field", field_json(m.field())},
              {"rows", m.rows()},
              {"cols", m.cols()},
              {"entries", std::move(rows)}};
}

Mat mat_of(const json& j) {
  return guarded("matrix", [&] {
    Field f = field_of(j.at("field"));
    size_t rows = j.at("rows").get<size_t>();
    size_t cols = j.at("cols").get<size_t>();
    const json& e = j.at("entries");
    if (e.size() != rows)
      fail("BadInput", "matrix: entry row count does not match 'rows'");
    std::vector<std::vector<Scalar>> out;
    out.reserve(rows);
    for (size_t r = 0; r < rows; ++r) {
      if (e[r].size() != cols)
        fail("BadInput", "matrix: entry column count does not match 'cols'");
      std::vector<Scalar> row;
      row.reserve(cols);
      for (size_t c = 0; c < cols; ++c) row.push_back(scalar_of(e[r][c], f));
      out.push_back(std::move(row));
    }
    return Mat::from_rows(f, std::move(out));
  });
}

json index_json(const BasisIndex& i) {
  json j{{"block", i.block_name()}};
  if (i.kind == BlockKind::Periodic) j["copy"] = i.copy;
  j["slot"] = i.slot;
  return j;
}

BasisIndex index_of(const json& j) {
  return guarded("basis index", [&] {
    std::string name = j.at("block").get<std::string>();
    uint32_t id = block_id_of(name, "basis index");
    int64_t slot = j.at("slot").get<int64_t>();
    switch (name[0]) {
      case 'B':
        return BasisIndex::finite(id, slot);
      case 'S':
        return BasisIndex::shift(id, slot);
      case 'P':
        return BasisIndex::periodic(id, j.at("copy").get<int64_t>(), slot);
      default:
        fail("BadInput",
             "basis index: block name must start with B, S, or P, got '" +
                 name + "'");
    }
  });
}

json lincomb_json(const LinComb& x) {
  json out = json::array();
  for (const auto& [i, c] : x.terms())
    out.push_back(json{{"index", index_json(i)}, {"coeff", c.str()}});
  return out;
}

LinComb lincomb_of(const json& j, Field f) {
  return guarded("linear combination", [&] {
    LinComb x(f);
    for (const auto& term : j)
      x.add(index_of(term.at("index")), scalar_of(term.at("coeff"), f));
    return x;
  });
}

json window_json(const Window& w) {
  json out = json::array();
  for (const auto& i : w) out.push_back(index_json(i));
  return out;
}

Window window_of(const json& j) {
  return guarded("window", [&] {
    Window w;
    for (const auto& e : j) w.insert(index_of(e));
    return w;
  });
}

json report_json(const CheckReport& r) {
  return json{{"pass", r.pass}, {"checked", r.checked},
              {"failures", r.failures}};
}

CheckReport report_of(const json& j) {
  return guarded("report", [&] {
    CheckReport r;
    r.pass = j.at("pass").get<bool>();
    r.checked = j.at("checked").get<size_t>();
    for (const auto& s : j.value("failures", json::array()))
      r.failures.push_back(s.get<std::string>());
    return r;
  });
}

json budget_json(const SearchBudget& b) {
  return json{{"max_n", b.max_n},
              {"max_q", b.max_q},
              {"max_ops", b.max_ops},
              {"jobs", b.jobs}};
}

SearchBudget budget_of(const json& j) {
  return guarded("budget", [&] {
    SearchBudget b;
    b.max_n = j.value("max_n", b.max_n);
    b.max_q = j.value("max_q", b.max_q);
    b.max_ops = j.value("max_ops", b.max_ops);
    b.jobs = j.value("jobs", b.jobs);
    return b;
  });
}

// ---------------------------------------------------------------------------
// Structured types

json repaut_json(const RepAut& u) {
  json fin = json::array(), shf = json::array(), per = json::array();
  for (const auto& b : u.finite_blocks())
    fin.push_back(json{{"id", b.id}, {"matrix", mat_json(b.matrix)}});
  for (const auto& b : u.shift_blocks())
    shf.push_back(json{{"id", b.id}, {"multiplier", b.multiplier.str()}});
  for (const auto& b : u.periodic_blocks())
    per.push_back(json{{"id", b.id}, {"matrix", mat_json(b.matrix)}});
  json cpl = json::array(), prt = json::array();
  for (const auto& [from, image] : u.coupling())
    cpl.push_back(
        json{{"from", index_json(from)}, {"image", lincomb_json(image)}});
  for (const auto& [from, image] : u.perturbation())
    prt.push_back(
        json{{"from", index_json(from)}, {"image", lincomb_json(image)}});
  return json{{"field", field_json(u.field())},
              {"finite_blocks", std::move(fin)},
              {"shift_blocks", std::move(shf)},
              {"periodic_blocks", std::move(per)},
              {"coupling", std::move(cpl)},
              {"perturbation", std::move(prt)}};
}

RepAut repaut_of(const json& j) {
  return guarded("operator", [&] {
    Field f = field_of(j.at("field"));
    RepAut u(f);
    for (const auto& b : j.value("finite_blocks", json::array()))
      u.add_finite_block(b.at("id").get<uint32_t>(), mat_of(b.at("matrix")));
    for (const auto& b : j.value("shift_blocks", json::array()))
      u.add_shift_block(b.at("id").get<uint32_t>(),
                        scalar_of(b.at("multiplier"), f));
    for (const auto& b : j.value("periodic_blocks", json::array()))
      u.add_periodic_block(b.at("id").get<uint32_t>(), mat_of(b.at("matrix")));
    for (const auto& e : j.value("coupling", json::array()))
      u.add_coupling(index_of(e.at("from")), lincomb_of(e.at("image"), f));
    for (const auto& e : j.value("perturbation", json::array()))
      u.add_perturbation(index_of(e.at("from")), lincomb_of(e.at("image"), f));
    u.validate();
    return u;
  });
}

json strat_json(const Stratification& s) {
  json prefix = json::array();
  for (const auto& st : s.prefix) {
    json e{{"generator", lincomb_json(st.generator)}};
    if (st.dim)
      e["dim"] = *st.dim;
    else
      e["dim"] = nullptr;
    prefix.push_back(std::move(e));
  }
  json tail = json::array();
  std::optional<int64_t> from;
  for (const auto& r : s.tail) {
    json gen = json::array(), chain = json::array();
    for (const auto& [slot, c] : r.gen_terms)
      gen.push_back(json::array({slot, c.str()}));
    for (const auto& [slot, c] : r.chain_terms)
      chain.push_back(json::array({slot, c.str()}));
    tail.push_back(json{{"block", r.block},
                        {"from_copy", r.from_copy},
                        {"gen_terms", std::move(gen)},
                        {"chain_terms", std::move(chain)},
                        {"dim", r.dim}});
    from = from ? std::min(*from, r.from_copy) : r.from_copy;
  }
  json out{{"prefix", std::move(prefix)}, {"tail", std::move(tail)}};
  out["periodic_copies_from"] = from ? json(*from) : json(nullptr);
  return out;
}

Stratification strat_of(const json& j,
                        std::shared_ptr<const RepAut> ambient) {
  return guarded("stratification", [&] {
    if (!ambient) fail("BadInput", "stratification: missing ambient operator");
    Field f = ambient->field();
    Stratification s{std::move(ambient), {}, {}};
    for (const auto& e : j.value("prefix", json::array())) {
      Stratum st{lincomb_of(e.at("generator"), f), std::nullopt};
      if (e.contains("dim") && !e.at("dim").is_null())
        st.dim = e.at("dim").get<int64_t>();
      s.prefix.push_back(std::move(st));
    }
    for (const auto& e : j.value("tail", json::array())) {
      TailRule r;
      r.block = e.at("block").get<uint32_t>();
      r.from_copy = e.at("from_copy").get<int64_t>();
      for (const auto& t : e.value("gen_terms", json::array()))
        r.gen_terms.emplace_back(t.at(0).get<int64_t>(),
                                 scalar_of(t.at(1), f));
      for (const auto& t : e.value("chain_terms", json::array()))
        r.chain_terms.emplace_back(t.at(0).get<int64_t>(),
                                   scalar_of(t.at(1), f));
      r.dim = e.at("dim").get<int64_t>();
      s.tail.push_back(std::move(r));
    }
    return s;
  });
}

json component_json(const ElementaryComponent& c) {
  if (c.kind == ElementaryComponent::Kind::ScaledShift)
    return json{{"kind", "scaled_shift"},
                {"block", c.block},
                {"mult", c.mult.str()}};
  return json{{"kind", "cyclic"},
              {"seed", lincomb_json(c.seed)},
              {"bound", c.bound}};
}

ElementaryComponent component_of(const json& j, Field f) {
  return guarded("component", [&] {
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "scaled_shift")
      return ElementaryComponent::scaled_shift(j.at("block").get<uint32_t>(),
                                               scalar_of(j.at("mult"), f));
    if (kind == "cyclic")
      return ElementaryComponent::cyclic(lincomb_of(j.at("seed"), f),
                                         j.at("bound").get<int64_t>());
    fail("BadInput", "component: unknown kind '" + kind + "'");
  });
}

json refusal_json(const Refusal& r) {
  return json{{"refused", true}, {"code", r.code}, {"detail", r.detail}};
}

json decision_json(const Decision& d) {
  return json{{"product", d.product}, {"reasons", d.reasons}};
}

json acceptability_json(const Acceptability& a) {
  const char* kind = "No";
  if (a.kind == Acceptability::Kind::ProductOfRoots) kind = "ProductOfRoots";
  if (a.kind == Acceptability::Kind::NormSquare) kind = "NormSquare";
  json out{{"acceptable", a.kind != Acceptability::Kind::No}, {"kind", kind}};
  if (a.witness) {
    json w = json::array();
    for (const auto& s : *a.witness) w.push_back(s.str());
    out["witness"] = std::move(w);
  }
  return out;
}

json census_json(const Census& c) {
  json by_det = json::object();
  for (const auto& [det, count] : c.by_det)
    by_det[std::to_string(det)] = count;
  return json{{"n", c.n},     {"q", c.q},
              {"k", c.k},     {"poly", c.poly},
              {"total", c.total()}, {"by_det", std::move(by_det)}};
}

// ---------------------------------------------------------------------------
// Certificates

namespace {

json recipe_json(const FactorRecipe& recipe, size_t factor_index) {
  json polys = json::array();
  for (const auto& p : recipe.polys) polys.push_back(p.str());
  json out{{"kind", "pipeline"},
           {"builder", recipe.builder},
           {"polys", std::move(polys)},
           {"factor_index", factor_index},
           {"seed", recipe.seed},
           {"budget", budget_json(recipe.budget)}};
  if (recipe.lambda) out["lambda"] = recipe.lambda->str();
  if (!recipe.components.empty()) {
    json comps = json::array();
    for (const auto& c : recipe.components)
      comps.push_back(component_json(c));
    out["components"] = std::move(comps);
  }
  return out;
}

/// Probes whether the factor acts as alpha * id on the whole stored window.
std::optional<Scalar> global_scalar_on(const LazyOp& op, const Window& W) {
  std::optional<Scalar> alpha;
  for (const auto& i : W) {
    LinComb img = op.apply(i);
    if (img.terms().size() != 1) return std::nullopt;
    const auto& [idx, c] = *img.terms().begin();
    if (idx != i) return std::nullopt;
    if (!alpha)
      alpha = c;
    else if (*alpha != c)
      return std::nullopt;
  }
  return alpha;
}

/// Rebuilds the pipeline recorded in a certificate, once, on first use;
/// the result is shared by every factor rule of the loaded certificate.
struct Rebuild {
  std::shared_ptr<const RepAut> target;
  FactorRecipe recipe;
  std::optional<std::vector<LazyOp>> built;

  const LazyOp& factor(size_t k) {
    if (!built) run();
    if (k >= built->size())
      fail("BadInput", "certificate: recipe rebuilt " +
                           std::to_string(built->size()) +
                           " factors, index " + std::to_string(k) +
                           " requested");
    return (*built)[k];
  }

  void run() {
    std::vector<LazyOp> ops;
    const auto& polys = recipe.polys;
    auto need = [&](size_t n) {
      if (polys.size() != n)
        fail("BadInput", "certificate: builder '" + recipe.builder +
                             "' needs " + std::to_string(n) +
                             " polynomials, got " +
                             std::to_string(polys.size()));
    };
    if (recipe.builder == "factor-three") {
      need(3);
      FactorOutcome fo = factor_three(*target, {polys[0], polys[1], polys[2]},
                                      recipe.budget, recipe.seed);
      if (!fo.ok())
        fail("BadInput", "certificate: recorded recipe refuses to rebuild (" +
                             fo.refusal->code + ")");
      for (const auto& f : fo.certificate->factors) ops.push_back(f.op);
    } else if (recipe.builder == "factor-four") {
      need(4);
      Certificate cert = factor_four(
          *target, {polys[0], polys[1], polys[2], polys[3]}, recipe.budget,
          recipe.seed);
      for (const auto& f : cert.factors) ops.push_back(f.op);
    } else if (recipe.builder == "scalar-tiles") {
      need(3);
      if (!recipe.lambda)
        fail("BadInput", "certificate: scalar-tiles recipe needs a lambda");
      Certificate cert = scalar_id_factors(
          *recipe.lambda, {polys[0], polys[1], polys[2]}, *target);
      for (const auto& f : cert.factors) ops.push_back(f.op);
    } else if (recipe.builder == "elementary") {
      need(2);
      Certificate cert = elementary_factor_pq(*target, recipe.components,
                                              polys[0], polys[1]);
      for (const auto& f : cert.factors) ops.push_back(f.op);
    } else {
      fail("BadInput",
           "certificate: unknown builder '" + recipe.builder + "'");
    }
    built = std::move(ops);
  }
};

}  // namespace

json certificate_json(const Certificate& cert, const FactorRecipe& recipe) {
  if (!cert.target) fail("BadInput", "certificate: missing target");
  const RepAut& u = *cert.target;
  const size_t n = cert.factors.size();
  bool periodic_tail =
      !u.periodic_blocks().empty() && u.shift_blocks().empty();

  // Collect, per factor, every index the stored-window checks consult, so
  // that re-verifying the loaded certificate on its own window is a pure
  // table replay: the annihilation check of factor k reads f_k on W and on
  // the support of f_k(W); the product check reads factor k at the support
  // of the partial product of the factors to its right.
  std::vector<std::set<BasisIndex>> queried(n);
  for (const auto& i : cert.window) {
    for (size_t k = 0; k < n; ++k) {
      queried[k].insert(i);
      LinComb img = cert.factors[k].op.apply(i);
      for (const auto& [idx, c] : img.terms()) queried[k].insert(idx);
    }
    LinComb x = LinComb::unit(u.field(), i);
    for (size_t k = n; k-- > 0;) {
      for (const auto& [idx, c] : x.terms()) queried[k].insert(idx);
      x = cert.factors[k].op.apply(x);
    }
  }

  json factors = json::array();
  for (size_t k = 0; k < n; ++k) {
    const Factor& f = cert.factors[k];
    json rule;
    std::optional<Scalar> alpha;
    if (f.role.rfind("scalar", 0) == 0)
      alpha = global_scalar_on(f.op, cert.window);
    if (alpha) {
      rule = json{{"kind", "scalar"},
                  {"alpha", alpha->str()},
                  {"note", "scalar " + alpha->str() + " beyond window"}};
    } else {
      json entries = json::array();
      for (const auto& i : queried[k])
        entries.push_back(json{{"from", index_json(i)},
                               {"image", lincomb_json(f.op.apply(i))}});
      rule = json{{"kind", "table"},
                  {"entries", std::move(entries)},
                  {"tail", recipe_json(recipe, k)},
                  {"note", periodic_tail
                               ? "periodic block tail"
                               : "pipeline tail beyond the stored table"}};
    }
    factors.push_back(json{{"annihilator", poly_json(f.annihilator)},
                           {"role", f.role},
                           {"rule", std::move(rule)}});
  }

  return json{{"format", "invofactor-certificate"},
              {"version", 1},
              {"target", repaut_json(u)},
              {"factors", std::move(factors)},
              {"window", window_json(cert.window)},
              {"report", report_json(cert.window_report)},
              {"provenance", cert.provenance}};
}

Certificate certificate_of(const json& j) {
  return guarded("certificate", [&] {
    if (j.value("format", std::string()) != "invofactor-certificate")
      fail("BadInput", "certificate: missing or unknown format tag");
    auto target = std::make_shared<const RepAut>(repaut_of(j.at("target")));
    Field f = target->field();

    auto rebuild = std::make_shared<Rebuild>();
    rebuild->target = target;
    bool have_recipe = false;

    std::vector<Factor> factors;
    for (const auto& fj : j.at("factors")) {
      QuadPoly p = poly_of(fj.at("annihilator"), f);
      std::string role = fj.value("role", std::string());
      const json& rule = fj.at("rule");
      std::string kind = rule.at("kind").get<std::string>();
      LazyOp op = LazyOp::identity(f);
      if (kind == "scalar") {
        op = LazyOp::scalar_op(f, scalar_of(rule.at("alpha"), f))
                 .with_annihilator(p);
      } else if (kind == "table" || kind == "blockwise") {
        auto table = std::make_shared<std::map<BasisIndex, LinComb>>();
        for (const auto& e : rule.at("entries"))
          table->emplace(index_of(e.at("from")),
                         lincomb_of(e.at("image"), f));
        const json& tail = rule.at("tail");
        std::string tkind = tail.at("kind").get<std::string>();
        if (tkind == "scalar") {
          Scalar alpha = scalar_of(tail.at("alpha"), f);
          op = LazyOp::from_annihilated_rule(
              f,
              [table, alpha, f](const BasisIndex& i) {
                auto it = table->find(i);
                if (it != table->end()) return it->second;
                return LinComb::unit(f, i) * alpha;
              },
              p);
        } else if (tkind == "pipeline") {
          if (!have_recipe) {
            FactorRecipe r;
            r.builder = tail.at("builder").get<std::string>();
            for (const auto& ps : tail.at("polys"))
              r.polys.push_back(poly_of(ps, f));
            if (tail.contains("lambda"))
              r.lambda = scalar_of(tail.at("lambda"), f);
            for (const auto& cj : tail.value("components", json::array()))
              r.components.push_back(component_of(cj, f));
            r.budget = budget_of(tail.value("budget", json::object()));
            r.seed = tail.value("seed", uint64_t{0});
            rebuild->recipe = std::move(r);
            have_recipe = true;
          }
          size_t index = tail.at("factor_index").get<size_t>();
          op = LazyOp::from_annihilated_rule(
              f,
              [table, rebuild, index](const BasisIndex& i) {
                auto it = table->find(i);
                if (it != table->end()) return it->second;
                return rebuild->factor(index).apply(i);
              },
              p);
        } else {
          fail("BadInput", "certificate: unknown tail kind '" + tkind + "'");
        }
      } else {
        fail("BadInput", "certificate: unknown rule kind '" + kind + "'");
      }
      factors.push_back(Factor{std::move(op), p, role});
    }

    Certificate cert{target, std::move(factors), window_of(j.at("window")),
                     report_of(j.at("report")),
                     j.value("provenance", std::string())};
    return cert;
  });
}

// ---------------------------------------------------------------------------
// Files

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("BadInput", "cannot read '" + path + "'");
  try {
    return json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail("BadInput", "'" + path + "': " + e.what());
  }
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) fail("BadInput", "cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) fail("BadInput", "failed writing '" + path + "'");
}

}  // namespace invo::io
