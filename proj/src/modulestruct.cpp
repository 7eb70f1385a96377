/// @file modulestruct.cpp

#include "modulestruct.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <sstream>

#include "linalg.hpp"

namespace invo {

namespace {

// ---------------------------------------------------------------------------
// Small helpers

LinComb lift_vector(Field f, const std::vector<BasisIndex>& coords,
                    const std::vector<Scalar>& v) {
  LinComb x(f);
  for (size_t i = 0; i < coords.size() && i < v.size(); ++i)
    x.add(coords[i], v[i]);
  return x;
}

/// Ordered basis of the perturbation-affected finite part: every finite
/// block slot, then every periodic copy touched by a perturbation source or
/// image, in canonical (block, copy) order.
std::vector<BasisIndex> affected_core(const RepAut& u) {
  std::vector<BasisIndex> out;
  for (const auto& b : u.finite_blocks())
    for (size_t s = 0; s < b.matrix.rows(); ++s)
      out.push_back(BasisIndex::finite(b.id, static_cast<int64_t>(s)));
  std::set<std::pair<uint32_t, int64_t>> copies;
  auto touch = [&](const BasisIndex& i) {
    if (i.kind == BlockKind::Periodic) copies.insert({i.block, i.copy});
  };
  for (const auto& [from, img] : u.perturbation()) {
    touch(from);
    for (const auto& [i, c] : img.terms()) touch(i);
  }
  for (const auto& [block, copy] : copies) {
    const PeriodicBlock* pb = u.find_periodic(block);
    for (size_t s = 0; s < pb->matrix.rows(); ++s)
      out.push_back(BasisIndex::periodic(block, copy, static_cast<int64_t>(s)));
  }
  return out;
}

/// Matrix of u restricted to the given coordinates.  Shift-supported image
/// terms are dropped (they vanish modulo the free part); any other image
/// term outside the coordinate list means the span is not stable.
Mat restricted_matrix(const RepAut& u, const std::vector<BasisIndex>& coords) {
  Field f = u.field();
  std::map<BasisIndex, size_t> pos;
  for (size_t j = 0; j < coords.size(); ++j) pos[coords[j]] = j;
  Mat m(f, coords.size(), coords.size());
  for (size_t j = 0; j < coords.size(); ++j) {
    LinComb img = u.apply(coords[j]);
    for (const auto& [i, c] : img.terms()) {
      if (i.kind == BlockKind::Shift) continue;
      auto it = pos.find(i);
      if (it == pos.end())
        fail("Internal",
             "restricted image leaves the affected core at " + i.str());
      m.at(it->second, j) = c;
    }
  }
  return m;
}

/// Cyclic summands of a periodic cell in increasing dimension order, as
/// per-copy generator templates.  When the cell is cyclic, plain basis
/// vectors are preferred over the decomposition generator (candidate order:
/// basis vectors first).
struct CellPart {
  std::vector<std::pair<int64_t, Scalar>> terms;
  int64_t dim = 0;
};

std::vector<CellPart> cell_templates(const Mat& cell) {
  Field f = cell.field();
  size_t n = cell.rows();
  auto parts = frobenius(cell);
  std::sort(parts.begin(), parts.end(),
            [](const FrobeniusPart& a, const FrobeniusPart& b) {
              return a.degree < b.degree;
            });
  std::vector<CellPart> out;
  if (parts.size() == 1) {
    for (size_t s = 0; s < n; ++s) {
      std::vector<Scalar> e(n, Scalar::zero(f));
      e[s] = Scalar::one(f);
      if (min_poly_of_vector(cell, e).degree() == static_cast<int>(n)) {
        out.push_back({{{static_cast<int64_t>(s), Scalar::one(f)}},
                       static_cast<int64_t>(n)});
        return out;
      }
    }
  }
  for (const auto& part : parts) {
    CellPart cp;
    cp.dim = part.degree;
    for (size_t s = 0; s < part.generator.size(); ++s)
      if (!part.generator[s].is_zero())
        cp.terms.push_back({static_cast<int64_t>(s), part.generator[s]});
    out.push_back(std::move(cp));
  }
  return out;
}

LinComb place_in_copy(Field f, uint32_t block, int64_t copy,
                      const std::vector<std::pair<int64_t, Scalar>>& terms) {
  LinComb x(f);
  for (const auto& [slot, c] : terms)
    x.add(BasisIndex::periodic(block, copy, slot), c);
  return x;
}

bool has_shift_support(const LinComb& x) {
  for (const auto& [i, c] : x.terms())
    if (i.kind == BlockKind::Shift) return true;
  return false;
}

}  // namespace

// ---------------------------------------------------------------------------
// Stratification

Stratum Stratification::tail_stratum(size_t j) const {
  if (tail.empty()) fail("BadInput", "stratification has no tail rules");
  if (!ambient) fail("BadInput", "stratification has no ambient operator");
  size_t r = j % tail.size();
  int64_t q = static_cast<int64_t>(j / tail.size());
  const TailRule& rule = tail[r];
  LinComb g(ambient->field());
  for (const auto& [slot, c] : rule.gen_terms)
    g.add(BasisIndex::periodic(rule.block, rule.from_copy + q, slot), c);
  for (const auto& [slot, c] : rule.chain_terms)
    g.add(BasisIndex::periodic(rule.block, rule.from_copy + q + 1, slot), c);
  return {g, rule.dim};
}

Stratum Stratification::stratum(size_t k) const {
  if (k < prefix.size()) return prefix[k];
  if (tail.empty())
    fail("BadInput", "stratum " + std::to_string(k) +
                         " is past the end of a finite stratification");
  return tail_stratum(k - prefix.size());
}

std::string Stratification::str() const {
  std::ostringstream os;
  os << "dims [";
  for (size_t k = 0; k < prefix.size(); ++k) {
    if (k) os << ",";
    if (prefix[k].dim)
      os << *prefix[k].dim;
    else
      os << "inf";
  }
  os << "]";
  for (const auto& r : tail)
    os << " then P" << r.block << " copies " << r.from_copy << ".. (dim "
       << r.dim << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// closure

ClosureResult closure(const RepAut& u, const std::vector<LinComb>& seed,
                      size_t bound) {
  u.validate();
  Field f = u.field();
  SpanBasis span(f);
  std::deque<LinComb> work;
  for (const auto& s : seed) {
    if (s.field() != f)
      fail("FieldMismatch", "seed vector is over a different field");
    if (span.insert(s)) work.push_back(s);
  }
  bool overflow = span.dim() > bound;
  while (!overflow && !work.empty()) {
    LinComb x = std::move(work.front());
    work.pop_front();
    LinComb images[2] = {u.apply(x), u.apply_inverse(x)};
    for (auto& y : images) {
      if (span.insert(y)) work.push_back(std::move(y));
      if (span.dim() > bound) {
        overflow = true;
        break;
      }
    }
  }
  if (!overflow) {
    ClosureResult r;
    r.basis = span.echelon();
    return r;
  }
  // The bound was hit.  If the growth entered a shift block, look for a seed
  // whose two-sided orbit stays independent through the bound: such orbits
  // live in structurally free territory and certify a free direction.
  bool shift_touched = false;
  for (const auto& v : span.echelon())
    if (has_shift_support(v)) {
      shift_touched = true;
      break;
    }
  if (shift_touched) {
    LazyOp op = LazyOp::from_repaut(u);
    for (const auto& s : seed) {
      if (s.is_zero()) continue;
      CyclicReport cert = cyclic_window_cert(op, s, static_cast<int64_t>(bound));
      if (cert.independent) {
        ClosureResult r;
        r.free_witness = s;
        return r;
      }
    }
  }
  fail("BoundExceeded", "closure exceeded " + std::to_string(bound) +
                            " dimensions without stabilizing or certifying a "
                            "free orbit");
}

// ---------------------------------------------------------------------------
// is_semi_good

CheckReport is_semi_good(const Stratification& s) {
  CheckReport rep;
  auto big_enough = [](const std::optional<int64_t>& d) {
    return !d.has_value() || *d > 1;
  };
  ++rep.checked;
  if (s.tail.empty()) {
    rep.pass = false;
    rep.failures.push_back(
        "the index set has a greatest element (finite list, no tail rule)");
  }
  for (size_t k = 0; k < s.prefix.size(); ++k) {
    ++rep.checked;
    if (k == 0) continue;  // the least stratum is the only one exempt
    if (!big_enough(s.prefix[k].dim)) {
      rep.pass = false;
      rep.failures.push_back("stratum " + std::to_string(k) +
                             " has a predecessor but dimension 1");
    }
  }
  for (size_t r = 0; r < s.tail.size(); ++r) {
    ++rep.checked;
    if (s.tail[r].dim <= 1) {
      rep.pass = false;
      rep.failures.push_back("tail rule " + std::to_string(r) +
                             " emits dimension-" + std::to_string(s.tail[r].dim) +
                             " strata infinitely often");
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// build_strat_periodic

namespace {

/// Validates one candidate stratum generator exactly: its closure must be
/// finite of the expected dimension and entirely new with respect to the
/// running sum.  On success the running sum absorbs the closure.
bool try_stratum(const RepAut& v, SpanBasis& running, const LinComb& gen,
                 int64_t want_dim) {
  ClosureResult cl = closure(v, {gen}, static_cast<size_t>(want_dim) + 8);
  if (cl.free_detected()) return false;
  if (cl.basis.size() != static_cast<size_t>(want_dim)) return false;
  SpanBasis tentative = running;
  size_t fresh = 0;
  for (const auto& b : cl.basis)
    if (tentative.insert(b)) ++fresh;
  if (fresh != static_cast<size_t>(want_dim)) return false;
  running = std::move(tentative);
  return true;
}

}  // namespace

Stratification build_strat_periodic(const RepAut& v, size_t search_support,
                                    size_t backtrack) {
  if (!v.shift_blocks().empty())
    fail("BadInput", "the builder requires an operator with no shift blocks");
  if (v.periodic_blocks().empty())
    fail("BadInput",
         "the builder requires at least one periodic block (an "
         "infinite-dimensional torsion space)");
  v.validate();
  Field f = v.field();

  if (auto lam = dominant_eigenvalue(v))
    fail("BuilderStuck",
         "every periodic block acts as the scalar " + lam->str() +
             ": outside a finite core no generator y has (y, v(y)) "
             "independent, so almost every stratum would have dimension 1");

  // Per-block cell analysis.  Each copy contributes one stratum per cyclic
  // summand, so a dimension-1 summand would recur infinitely often.
  std::map<uint32_t, std::vector<CellPart>> cells;
  for (const auto& b : v.periodic_blocks()) {
    auto parts = cell_templates(b.matrix);
    for (const auto& p : parts)
      if (p.dim < 2)
        fail("BuilderStuck",
             "periodic block P" + std::to_string(b.id) +
                 " has a cyclic summand of dimension 1, which would recur in "
                 "every copy");
    cells[b.id] = std::move(parts);
  }

  Stratification s;
  s.ambient = std::make_shared<RepAut>(v);
  SpanBasis running(f);
  size_t failures = 0;
  std::map<uint32_t, std::set<int64_t>> used;  // copies consumed by the prefix

  std::vector<BasisIndex> core = affected_core(v);
  for (const auto& i : core)
    if (i.kind == BlockKind::Periodic) used[i.block].insert(i.copy);

  // Cyclic pieces of the core in increasing dimension order; at most one
  // dimension-1 stratum is kept (first), the rest await merge coverage.
  std::vector<LinComb> leftovers;
  if (!core.empty()) {
    Mat m = restricted_matrix(v, core);
    auto parts = frobenius(m);
    std::sort(parts.begin(), parts.end(),
              [](const FrobeniusPart& a, const FrobeniusPart& b) {
                return a.degree < b.degree;
              });
    for (const auto& part : parts) {
      LinComb gen = lift_vector(f, core, part.generator);
      if (part.degree == 1 && !s.prefix.empty()) {
        leftovers.push_back(gen);
        continue;
      }
      if (!try_stratum(v, running, gen, part.degree))
        fail("Internal", "a cyclic piece of the core failed validation");
      s.prefix.push_back({gen, part.degree});
    }
  }

  // Greedy coverage of the remaining dimension-1 pieces.  Candidates, in
  // deterministic order per periodic block: two-term sums with a basis
  // vector of the next untouched copy, then the merge with that copy's
  // cyclic generator; each is support-bounded and validated by a closure.
  for (const LinComb& g : leftovers) {
    bool covered = false;
    for (const auto& b : v.periodic_blocks()) {
      const auto& parts = cells[b.id];
      if (parts.size() != 1) continue;  // only a cyclic copy can be consumed whole
      int64_t cell_dim = static_cast<int64_t>(b.matrix.rows());
      int64_t copy = 0;
      while (used[b.id].count(copy)) ++copy;
      std::vector<std::vector<std::pair<int64_t, Scalar>>> cands;
      for (int64_t slot = 0; slot < cell_dim; ++slot)
        cands.push_back({{slot, Scalar::one(f)}});
      if (parts[0].terms.size() > 1) cands.push_back(parts[0].terms);
      for (const auto& tmpl : cands) {
        if (1 + tmpl.size() > search_support) continue;
        LinComb y = g + place_in_copy(f, b.id, copy, tmpl);
        if (try_stratum(v, running, y, 1 + cell_dim)) {
          s.prefix.push_back({y, 1 + cell_dim});
          used[b.id].insert(copy);
          covered = true;
          break;
        }
        if (++failures > backtrack)
          fail("BuilderStuck",
               "merge candidates exhausted the backtrack budget while "
               "covering a dimension-1 piece (" +
                   std::to_string(failures) + " failed validations)");
      }
      if (covered) break;
    }
    if (!covered)
      fail("BuilderStuck",
           "no candidate of support <= " + std::to_string(search_support) +
               " covers a dimension-1 piece: its eigenvalue divides every "
               "reachable copy's annihilator");
  }

  // Explicit strata for consumed-range gaps, then tail rules for the rest.
  for (const auto& b : v.periodic_blocks()) {
    const auto& parts = cells[b.id];
    const auto& consumed = used[b.id];
    int64_t start = consumed.empty() ? 0 : *consumed.rbegin() + 1;
    for (int64_t copy = 0; copy < start; ++copy) {
      if (consumed.count(copy)) continue;
      for (const auto& part : parts) {
        LinComb gen = place_in_copy(f, b.id, copy, part.terms);
        if (!try_stratum(v, running, gen, part.dim))
          fail("Internal", "an untouched copy failed stratum validation");
        s.prefix.push_back({gen, part.dim});
      }
    }
    for (const auto& part : parts)
      s.tail.push_back({b.id, start, part.terms, {}, part.dim});
  }
  return s;
}

// ---------------------------------------------------------------------------
// quotient_strata

Stratification quotient_strata(const RepAut& u) {
  if (u.shift_blocks().empty())
    fail("BadInput",
         "quotient strata require a shift block (a free part to quotient by)");
  u.validate();
  // The span of the shift blocks must be stable under u.
  for (const auto& [from, img] : u.perturbation()) {
    if (from.kind != BlockKind::Shift) continue;
    for (const auto& [i, c] : img.terms())
      if (i.kind != BlockKind::Shift)
        fail("BadInput", "the free part is not stable: the perturbation at " +
                             from.str() + " leaks into " + i.str());
  }
  Field f = u.field();
  Stratification s;
  s.ambient = std::make_shared<RepAut>(u);

  std::map<uint32_t, std::set<int64_t>> used;
  std::vector<BasisIndex> core = affected_core(u);
  for (const auto& i : core)
    if (i.kind == BlockKind::Periodic) used[i.block].insert(i.copy);

  if (!core.empty()) {
    // The induced action on the finite part modulo the free part: shift
    // terms of images drop out.
    Mat m = restricted_matrix(u, core);
    auto parts = frobenius(m);
    std::sort(parts.begin(), parts.end(),
              [](const FrobeniusPart& a, const FrobeniusPart& b) {
                return a.degree < b.degree;
              });
    for (const auto& part : parts)
      s.prefix.push_back({lift_vector(f, core, part.generator), part.degree});
  }

  for (const auto& b : u.periodic_blocks()) {
    auto parts = cell_templates(b.matrix);
    const auto& consumed = used[b.id];
    int64_t start = consumed.empty() ? 0 : *consumed.rbegin() + 1;
    for (int64_t copy = 0; copy < start; ++copy) {
      if (consumed.count(copy)) continue;
      for (const auto& part : parts)
        s.prefix.push_back({place_in_copy(f, b.id, copy, part.terms), part.dim});
    }
    for (const auto& part : parts)
      s.tail.push_back({b.id, start, part.terms, {}, part.dim});
  }
  return s;
}

// ---------------------------------------------------------------------------
// adjust_reps

std::vector<LinComb> adjust_reps(const RepAut& u, const Stratification& strata,
                                 const std::vector<LinComb>& reps) {
  if (u.shift_blocks().empty())
    fail("BadInput", "representative adjustment requires a shift block");
  u.validate();
  Field f = u.field();
  // The distinguished free generator: slot 0 of the lowest-id shift block.
  // Every other shift block lies inside W_0 wholesale; only positive slots
  // of the distinguished block ever get peeled.
  uint32_t c_block = u.shift_blocks().front().id;
  for (const auto& b : u.shift_blocks()) c_block = std::min(c_block, b.id);

  auto drop_shift = [&f](const LinComb& x) {
    LinComb r(f);
    for (const auto& [i, c] : x.terms())
      if (i.kind != BlockKind::Shift) r.add(i, c);
    return r;
  };

  std::vector<LinComb> out;
  std::vector<LinComb> windows;  // u^l(x_i) for already adjusted i, l < n_i
  for (size_t k = 0; k < reps.size(); ++k) {
    Stratum st = strata.stratum(k);
    if (!st.dim.has_value())
      fail("BadInput",
           "cannot adjust a representative of an infinite-dimensional stratum");
    int64_t n = *st.dim;
    if (n < 1) fail("BadInput", "stratum dimension must be positive");
    LinComb x = reps[k];
    if (x.field() != f)
      fail("FieldMismatch", "representative is over a different field");

    std::optional<int64_t> ceiling;  // max peeled slot must strictly decrease
    for (;;) {
      // Window family up to the current candidate, and its image u^n(x).
      std::vector<LinComb> family = windows;
      LinComb w = x;
      for (int64_t l = 0; l < n; ++l) {
        family.push_back(w);
        w = u.apply(w);
      }
      // Eliminate the window component on the non-shift coordinates; the
      // residue lies in the free part exactly when the input is in class.
      SpanBasis torsion(f);
      for (const auto& q : family) torsion.insert(drop_shift(q));
      auto coords = torsion.coords_in_inserted(drop_shift(w));
      if (!coords)
        fail("BadInput",
             "the image does not reduce against the stratification windows");
      LinComb rem = w;
      for (size_t j = 0; j < family.size(); ++j)
        rem.add_scaled(family[j], -(*coords)[j]);
      LinComb peel(f);
      int64_t top = 0;
      for (const auto& [i, c] : rem.terms()) {
        if (i.kind != BlockKind::Shift)
          fail("BadInput", "the free-part remainder has a non-shift term at " +
                               i.str());
        if (i.block == c_block && i.slot > 0) {
          peel.add(i, c);
          top = std::max(top, i.slot);
        }
      }
      if (peel.is_zero()) break;
      if (ceiling && top >= *ceiling)
        fail("BadInput",
             "peeling does not make progress; the operator is outside the "
             "supported class");
      ceiling = top;
      // Pull the peeled part back through u^n and subtract; the candidate's
      // class is unchanged because the correction stays in the free part.
      LinComb back = peel;
      for (int64_t l = 0; l < n; ++l) back = u.apply_inverse(back);
      if (!drop_shift(back).is_zero())
        fail("BadInput",
             "the free part is not closed under the inverse; cannot adjust");
      x -= back;
    }
    out.push_back(x);
    LinComb w = x;
    for (int64_t l = 0; l < n; ++l) {
      windows.push_back(w);
      w = u.apply(w);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// verify_strat

CheckReport verify_strat(const Stratification& s, const Window& W) {
  if (!s.ambient) fail("BadInput", "stratification has no ambient operator");
  const RepAut& u = *s.ambient;
  Field f = u.field();
  CheckReport rep;

  // Orbit depth for infinite strata: one past the window's shift reach.
  int64_t depth = 4;
  for (const BasisIndex& i : W)
    if (i.kind == BlockKind::Shift)
      depth = std::max(depth, (i.slot < 0 ? -i.slot : i.slot) + 1);

  // Materialize the checked strata: the whole prefix, then tail strata while
  // their generators stay supported inside the window.
  std::vector<Stratum> checked(s.prefix.begin(), s.prefix.end());
  for (size_t j = 0; !s.tail.empty(); ++j) {
    Stratum st = s.tail_stratum(j);
    bool inside = !st.generator.is_zero();
    for (const auto& [i, c] : st.generator.terms())
      if (!W.contains(i)) inside = false;
    if (!inside) break;
    checked.push_back(std::move(st));
  }

  // The orbit family, with a deeper shadow family for the reachability
  // probe: window vectors the shadow reaches must already be spanned by the
  // family itself, otherwise a stratum's recorded dimension understates its
  // module and the certificate fails.
  constexpr int64_t kProbeMargin = 4;
  SpanBasis family(f);
  SpanBasis shadow(f);
  for (size_t k = 0; k < checked.size(); ++k) {
    const Stratum& st = checked[k];
    int64_t lo = 0, hi, shadow_lo, shadow_hi;
    if (st.dim.has_value()) {
      hi = *st.dim - 1;
      shadow_lo = lo;
      shadow_hi = hi + kProbeMargin;
    } else {
      lo = -depth;
      hi = depth;
      shadow_lo = lo - kProbeMargin;
      shadow_hi = hi + kProbeMargin;
    }
    LinComb w = st.generator;
    for (int64_t l = 0; l > shadow_lo; --l) w = u.apply_inverse(w);
    for (int64_t l = shadow_lo; l <= shadow_hi; ++l) {
      if (l >= lo && l <= hi) {
        ++rep.checked;
        if (!family.insert(w)) {
          rep.pass = false;
          rep.failures.push_back("stratum " + std::to_string(k) +
                                 " orbit vector at exponent " +
                                 std::to_string(l) + " is dependent");
        }
      }
      shadow.insert(w);
      if (l < shadow_hi) w = u.apply(w);
    }
  }

  for (const BasisIndex& i : W) {
    ++rep.checked;
    LinComb e = LinComb::unit(f, i);
    if (family.contains(e)) continue;
    if (shadow.contains(e)) {
      rep.pass = false;
      rep.failures.push_back("window vector " + i.str() +
                             " is reachable but not spanned by the orbit "
                             "family");
    }
  }
  return rep;
}

}  // namespace invo
