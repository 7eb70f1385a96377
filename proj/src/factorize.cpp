#include "factorize.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace invo {
namespace {

// ---------------------------------------------------------------------------
// Small helpers

Roots split_roots(const QuadPoly& p, const char* who) {
  auto r = roots(p);
  if (!r)
    fail("NotSplit", std::string(who) + ": " + p.str() + " has no roots in " +
                         p.field().str());
  return *r;
}

void require_nonderog(const QuadPoly& p, const char* who) {
  if (!p.is_non_derogatory())
    fail("NonDerogatoryRequired",
         std::string(who) + ": " + p.str() + " has zero constant term");
}

// Coefficients of p written as t^2 - lam*t - mu.
struct LamMu {
  Scalar lam, mu;
};
LamMu lam_mu(const QuadPoly& p) { return {-p.c1(), -p.c0()}; }

void require_field(Field f, Field g, const char* who) {
  if (!(f == g))
    fail("FieldMismatch", std::string(who) + ": " + f.str() + " vs " + g.str());
}

void merge_report(CheckReport& dst, const CheckReport& src,
                  const std::string& label) {
  dst.pass = dst.pass && src.pass;
  dst.checked += src.checked;
  for (const auto& line : src.failures)
    dst.failures.push_back(label + ": " + line);
}

// Membership in {+-lambda^k} (the subgroup generated by -1 and lambda).
bool in_pm_lambda_powers(const Scalar& d, const Scalar& lambda) {
  Field f = lambda.field();
  if (f.is_rational()) {
    Scalar one = Scalar::one(f);
    if (lambda == one || lambda == -one) return d == one || d == -one;
    for (long k = -64; k <= 64; ++k) {
      Scalar x = lambda.pow(k);
      if (d == x || d == -x) return true;
    }
    return false;
  }
  Scalar x = Scalar::one(f);
  for (uint32_t k = 0; k < f.characteristic(); ++k) {
    if (d == x || d == -x) return true;
    x = x * lambda;
  }
  return false;
}

// Round -> exponent walk over Z: 0, 1, -1, 2, -2, ...
int64_t zig(int64_t r) { return (r % 2 == 1) ? (r + 1) / 2 : -(r / 2); }

std::string poly_triple_str(const QuadPoly& p1, const QuadPoly& p2,
                            const QuadPoly& p3) {
  return "(" + p1.str() + ", " + p2.str() + ", " + p3.str() + ")";
}

// ---------------------------------------------------------------------------
// Pairing of the structural basis
//
// Chain 0 walks the finite-block vectors (rotated by seed); every infinite
// block contributes one endless stream (shift slots zig-zag over Z, periodic
// copies in order), skipping an excluded finite set.  In total mode the
// first stream is appended to chain 0, phases are zero and every vector has
// a partner.  Otherwise each stream starts at phase seed&1 (position 0
// unpaired when the phase is 1) and an odd finite chain leaves its last
// vector unpaired.

class Pairing {
 public:
  struct Mate {
    BasisIndex partner;
    int role = 0;  // role of the queried vector: 0 = first slot of the cell
  };

  Pairing(const RepAut& u, bool total, uint64_t seed,
          std::set<BasisIndex> excl)
      : total_(total), excl_(std::move(excl)) {
    for (const auto& b : u.finite_blocks())
      for (int64_t s = 0; s < static_cast<int64_t>(b.matrix.rows()); ++s) {
        BasisIndex i = BasisIndex::finite(b.id, s);
        if (!excl_.count(i)) {
          fin_pos_[i] = fin_.size();
          fin_.push_back(i);
        }
      }
    for (const auto& b : u.shift_blocks())
      streams_.push_back(Stream{true, b.id, 1});
    for (const auto& b : u.periodic_blocks())
      streams_.push_back(
          Stream{false, b.id, static_cast<int64_t>(b.matrix.rows())});
    rot_ = fin_.empty() ? 0 : static_cast<int64_t>(seed % fin_.size());
    phase_ = total_ ? 0 : static_cast<int64_t>(seed & 1);
    if (total_ && streams_.empty())
      fail("BadInput", "a total pairing needs an infinite universe");
  }

  std::optional<Mate> mate(const BasisIndex& i) const {
    if (excl_.count(i))
      fail("Internal", "pairing queried on an excluded vector " + i.str());
    auto [chain, pos] = locate(i);
    if (chain == 0 && !total_) {
      // finite-only chain, phase 0, odd tail unpaired
      int64_t n = static_cast<int64_t>(fin_.size());
      if (pos == n - 1 && n % 2 == 1) return std::nullopt;
      return Mate{at(chain, pos ^ 1), static_cast<int>(pos & 1)};
    }
    int64_t ph = (chain == 0) ? 0 : phase_;
    if (pos < ph) return std::nullopt;
    int64_t q = pos - ph;
    return Mate{at(chain, (q ^ 1) + ph), static_cast<int>(q & 1)};
  }

 private:
  struct Stream {
    bool shift;
    uint32_t block;
    int64_t dim;
  };

  static int64_t slot_to_raw(int64_t s) { return s > 0 ? 2 * s - 1 : -2 * s; }
  static int64_t raw_to_slot(int64_t r) {
    return (r % 2 == 1) ? (r + 1) / 2 : -r / 2;
  }

  int64_t stream_of(const BasisIndex& i) const {
    for (size_t j = 0; j < streams_.size(); ++j) {
      const Stream& st = streams_[j];
      if (st.shift && i.kind == BlockKind::Shift && i.block == st.block)
        return static_cast<int64_t>(j);
      if (!st.shift && i.kind == BlockKind::Periodic &&
          i.block == st.block)
        return static_cast<int64_t>(j);
    }
    fail("Internal", "pairing queried on an unknown vector " + i.str());
  }

  int64_t raw_pos(const Stream& st, const BasisIndex& i) const {
    return st.shift ? slot_to_raw(i.slot) : i.copy * st.dim + i.slot;
  }
  BasisIndex at_raw(const Stream& st, int64_t r) const {
    return st.shift ? BasisIndex::shift(st.block, raw_to_slot(r))
                    : BasisIndex::periodic(st.block, r / st.dim, r % st.dim);
  }
  bool excluded(const Stream& st, int64_t r) const {
    return excl_.count(at_raw(st, r)) != 0;
  }
  int64_t eff_of_raw(const Stream& st, int64_t r) const {
    int64_t skipped = 0;
    for (const auto& e : excl_) {
      if (st.shift ? (e.kind == BlockKind::Shift && e.block == st.block)
                   : (e.kind == BlockKind::Periodic &&
                      e.block == st.block)) {
        if (raw_pos(st, e) < r) ++skipped;
      }
    }
    return r - skipped;
  }
  int64_t raw_of_eff(const Stream& st, int64_t e) const {
    int64_t r = -1, need = e;
    while (need >= 0) {
      ++r;
      if (!excluded(st, r)) --need;
    }
    return r;
  }

  // (chain, position); chain 0 = finite (+ first stream in total mode),
  // chain j >= 1 = streams_[j-1] (or streams_[j] in total mode).
  std::pair<int64_t, int64_t> locate(const BasisIndex& i) const {
    if (i.kind == BlockKind::Finite) {
      auto it = fin_pos_.find(i);
      if (it == fin_pos_.end())
        fail("Internal", "pairing queried on an unknown vector " + i.str());
      int64_t n = static_cast<int64_t>(fin_.size());
      return {0, (static_cast<int64_t>(it->second) - rot_ + n) % n};
    }
    int64_t j = stream_of(i);
    const Stream& st = streams_[j];
    int64_t eff = eff_of_raw(st, raw_pos(st, i));
    if (total_ && j == 0) return {0, static_cast<int64_t>(fin_.size()) + eff};
    return {total_ ? j : j + 1, eff};
  }

  BasisIndex at(int64_t chain, int64_t pos) const {
    if (chain == 0) {
      int64_t n = static_cast<int64_t>(fin_.size());
      if (pos < n) return fin_[(pos + rot_) % n];
      const Stream& st = streams_[0];
      return at_raw(st, raw_of_eff(st, pos - n));
    }
    const Stream& st = streams_[total_ ? chain : chain - 1];
    return at_raw(st, raw_of_eff(st, pos));
  }

  bool total_;
  std::set<BasisIndex> excl_;
  std::vector<BasisIndex> fin_;
  std::map<BasisIndex, size_t> fin_pos_;
  std::vector<Stream> streams_;
  int64_t rot_ = 0;
  int64_t phase_ = 0;
};

// Image of a basis cell pair under one matrix of a 2x2 triple, in the pair
// basis (first, second): columns of M give the images.
LinComb tile_image(const Mat& M, const LinComb& first, const LinComb& second,
                   int role) {
  LinComb out(first.field());
  out.add_scaled(first, M.at(0, role));
  out.add_scaled(second, M.at(1, role));
  return out;
}

// ---------------------------------------------------------------------------
// Two-generator model on a single shift line

struct ModelPQ {
  Field f;
  LazyOp a, b, u, ui;
  LinComb x1;
  std::map<int64_t, LinComb> orb;
  SpanBasis ospan;
  std::vector<int64_t> oexp;
  int64_t oround = 0;

  ModelPQ(Field f_, const QuadPoly& p, const QuadPoly& q)
      : f(f_),
        a(shift_pair(p, q).a),
        b(shift_pair(p, q).b),
        u(compose({a, b})),
        ui(invert(u)),
        x1(LinComb::unit(f, BasisIndex::shift(0, 1))),
        ospan(f_) {
    orb.emplace(0, x1);
  }

  const LinComb& orbit(int64_t k) {
    auto it = orb.find(k);
    if (it != orb.end()) return it->second;
    if (k > 0) {
      const LinComb& prev = orbit(k - 1);
      it = orb.emplace(k, u.apply(prev)).first;
    } else {
      const LinComb& next = orbit(k + 1);
      it = orb.emplace(k, ui.apply(next)).first;
    }
    return it->second;
  }

  std::map<int64_t, Scalar> express(const LinComb& target) {
    std::optional<std::vector<Scalar>> co;
    while (!(co = ospan.coords_in_inserted(target))) {
      if (oexp.size() > 4096)
        fail("Internal", "model orbit expression exceeded its growth bound");
      int64_t k = zig(oround++);
      if (!ospan.insert(orbit(k)))
        fail("Internal", "model orbit lost linear independence");
      oexp.push_back(k);
    }
    std::map<int64_t, Scalar> out;
    for (size_t r = 0; r < co->size(); ++r)
      if (!(*co)[r].is_zero()) out[oexp[r]] = (*co)[r];
    return out;
  }
};

// ---------------------------------------------------------------------------
// Transport of the model through an elementary decomposition

class Transport {
 public:
  Transport(const LazyOp& v, std::vector<ElementaryComponent> comps,
            const QuadPoly& p, const QuadPoly& q, int64_t bound)
      : v_(v),
        vinv_(invert(v)),
        comps_(std::move(comps)),
        model_(v.field(), p, q),
        span_(v.field()) {
    if (comps_.empty())
      fail("BadInput", "at least one elementary component is required");
    Field f = v_.field();
    for (size_t j = 0; j < comps_.size(); ++j) {
      const ElementaryComponent& c = comps_[j];
      if (c.kind == ElementaryComponent::Kind::Cyclic) {
        int64_t depth = c.bound > 0 ? c.bound : bound;
        CyclicReport rep = cyclic_window_cert(v_, c.seed, depth);
        if (!rep.independent)
          fail("NotElementaryEvidence",
               "component " + std::to_string(j) +
                   " fails orbit independence at depth " +
                   std::to_string(depth));
        orbits_[j].emplace(0, c.seed);
      } else {
        if (c.mult.is_zero())
          fail("BadInput", "scaled-shift multiplier must be nonzero");
        if (!scaled_.emplace(c.block, j).second)
          fail("BadInput", "duplicate scaled-shift component for block S" +
                               std::to_string(c.block));
        BasisIndex e0 = BasisIndex::shift(c.block, 0);
        LinComb want = LinComb::unit(f, BasisIndex::shift(c.block, 1)) * c.mult;
        if (v_.apply(e0) != want)
          fail("BadInput", "block S" + std::to_string(c.block) +
                               " is not a scaled shift with multiplier " +
                               c.mult.str());
        orbits_[j].emplace(0, LinComb::unit(f, e0));
      }
    }
  }

  // which: 0 = transported model a (factor f), 1 = transported model b (g).
  LinComb image(int which, const BasisIndex& i) {
    Field f = v_.field();
    // Fast path: raw unit of a scaled-shift block transports to a scaled
    // model orbit vector directly.
    auto fast = i.kind == BlockKind::Shift ? scaled_.find(i.block)
                                                  : scaled_.end();
    if (fast != scaled_.end()) {
      const ElementaryComponent& c = comps_[fast->second];
      int64_t s = i.slot;
      LinComb ym = (which == 0 ? model_.a : model_.b).apply(model_.orbit(s));
      auto co = model_.express(ym);
      LinComb out(f);
      for (const auto& [k, ck] : co)
        out.add(BasisIndex::shift(i.block, k), ck * c.mult.pow(k - s));
      return out;
    }
    // General path: decompose over the joint orbit family, transport each
    // component's part through the model and back.
    auto parts = decompose(LinComb::unit(f, i));
    LinComb out(f);
    for (auto& [j, terms] : parts) {
      LinComb ym(f);
      for (const auto& [k, ck] : terms) ym.add_scaled(model_.orbit(k), ck);
      LinComb rm = (which == 0 ? model_.a : model_.b).apply(ym);
      auto co = model_.express(rm);
      for (const auto& [k, ck] : co) out.add_scaled(real_orbit(j, k), ck);
    }
    return out;
  }

 private:
  // comp -> (exponent -> coefficient) of the query over the orbit family
  std::map<size_t, std::map<int64_t, Scalar>> decompose(const LinComb& x) {
    std::optional<std::vector<Scalar>> co;
    while (!(co = span_.coords_in_inserted(x))) grow();
    std::map<size_t, std::map<int64_t, Scalar>> parts;
    for (size_t r = 0; r < co->size(); ++r)
      if (!(*co)[r].is_zero()) parts[tags_[r].first][tags_[r].second] = (*co)[r];
    return parts;
  }

  void grow() {
    if (tags_.size() > 4096)
      fail("BoundExceeded",
           "joint orbit family exceeded 4096 vectors without spanning the "
           "requested vector");
    int64_t r = round_++;
    int64_t k = zig(r);
    for (size_t j = 0; j < comps_.size(); ++j) {
      if (!span_.insert(real_orbit(j, k)))
        fail("NotElementaryEvidence",
             "joint orbit family is linearly dependent at component " +
                 std::to_string(j) + ", exponent " + std::to_string(k));
      tags_.emplace_back(j, k);
    }
  }

  const LinComb& real_orbit(size_t j, int64_t k) {
    auto& cache = orbits_[j];
    auto it = cache.find(k);
    if (it != cache.end()) return it->second;
    if (comps_[j].kind == ElementaryComponent::Kind::ScaledShift) {
      const ElementaryComponent& c = comps_[j];
      LinComb vec =
          LinComb::unit(v_.field(), BasisIndex::shift(c.block, k)) *
          c.mult.pow(k);
      return cache.emplace(k, std::move(vec)).first->second;
    }
    if (k > 0) {
      const LinComb& prev = real_orbit(j, k - 1);
      return cache.emplace(k, v_.apply(prev)).first->second;
    }
    const LinComb& next = real_orbit(j, k + 1);
    return cache.emplace(k, vinv_.apply(next)).first->second;
  }

  LazyOp v_, vinv_;
  std::vector<ElementaryComponent> comps_;
  ModelPQ model_;
  SpanBasis span_;
  std::vector<std::pair<size_t, int64_t>> tags_;
  std::map<size_t, std::map<int64_t, LinComb>> orbits_;
  std::map<uint32_t, size_t> scaled_;
  int64_t round_ = 0;
};

// ---------------------------------------------------------------------------
// Stratification solver (torsion universes, all strata finite)

class StratSolver {
 public:
  StratSolver(const RepAut& u, Stratification s, const Scalar& la,
              const Scalar& mu)
      : u_(u), s_(std::move(s)), la_(la), mu_(mu), span_(u.field()) {}

  LinComb a_image(const BasisIndex& i) {
    LinComb target = LinComb::unit(u_.field(), i);
    std::optional<std::vector<Scalar>> co;
    while (!(co = span_.coords_in_inserted(target))) ensure(chains_.size() + 1);
    LinComb out(u_.field());
    for (size_t r = 0; r < co->size(); ++r)
      if (!(*co)[r].is_zero()) out.add_scaled(a_of_row(r), (*co)[r]);
    return out;
  }

  const LinComb& cyc_seed() {
    ensure(1);
    return chains_[0].back();
  }

 private:
  void ensure(size_t count) {
    while (chains_.size() < count) {
      if (rows_.size() > 4096)
        fail("BoundExceeded",
             "stratification chains exceeded 4096 vectors without spanning "
             "the requested vector");
      size_t k = chains_.size();
      Stratum st = s_.stratum(k);
      if (!st.dim)
        fail("BadInput", "stratum " + std::to_string(k) +
                             " is infinite-dimensional in the stitching "
                             "branch");
      std::vector<LinComb> ch{st.generator};
      for (int64_t l = 1; l < *st.dim; ++l) ch.push_back(u_.apply(ch.back()));
      for (size_t l = 0; l < ch.size(); ++l) {
        if (!span_.insert(ch[l]))
          fail("Internal",
               "stratification chain vectors are linearly dependent");
        rows_.emplace_back(k, l);
      }
      chains_.push_back(std::move(ch));
    }
  }

  LinComb a_of_row(size_t r) {
    auto [k, l] = rows_[r];
    if (l >= 1) return chains_[k][l] * la_;
    ensure(k + 2);  // the stitch needs the next stratum's top chain vector
    return chains_[k][0] * mu_ + chains_[k + 1].back();
  }

  RepAut u_;
  Stratification s_;
  Scalar la_, mu_;
  SpanBasis span_;
  std::vector<std::pair<size_t, size_t>> rows_;
  std::vector<std::vector<LinComb>> chains_;
};

// ---------------------------------------------------------------------------
// Free-part solver (universes with shift blocks)

class FreeSolver {
 public:
  FreeSolver(const RepAut& u, Stratification qs, uint32_t b0,
             const Scalar& alpha, const LamMu& pc)
      : u_(u), qs_(std::move(qs)), b0_(b0), alpha_(alpha), pc_(pc),
        mult0_(Scalar::one(u.field())), span_(u.field()) {
    for (const auto& b : u.shift_blocks()) {
      blocks_.push_back(b.id);
      if (b.id == b0_) mult0_ = b.multiplier;
    }
    total_ = qs_.finite() ? static_cast<int64_t>(qs_.prefix.size()) : -1;
  }

  LinComb a_image(const BasisIndex& i) {
    LinComb target = LinComb::unit(u_.field(), i);
    std::optional<std::vector<Scalar>> co;
    while (!(co = span_.coords_in_inserted(target))) grow();
    LinComb out(u_.field());
    for (size_t r = 0; r < co->size(); ++r)
      if (!(*co)[r].is_zero()) out.add_scaled(a_of_row(rows_[r]), (*co)[r]);
    return out;
  }

 private:
  struct Row {
    bool chain;       // false: raw shift unit, true: adjusted-rep chain vector
    uint32_t block;   // shift unit: block id
    int64_t slot;     // shift unit: slot
    size_t k, l;      // chain vector: stratum and exponent
  };

  bool stratum_exists(int64_t k) const { return total_ < 0 || k < total_; }

  void grow() {
    if (rows_.size() > 4096)
      fail("BoundExceeded",
           "adapted basis exceeded 4096 vectors without spanning the "
           "requested vector");
    int64_t r = round_++;
    int64_t s = zig(r);
    for (uint32_t b : blocks_) {
      if (!span_.insert(
              LinComb::unit(u_.field(), BasisIndex::shift(b, s))))
        fail("Internal", "adapted basis lost independence at a shift unit");
      rows_.push_back(Row{false, b, s, 0, 0});
    }
    if (stratum_exists(r)) ensure_strata(static_cast<size_t>(r) + 1);
  }

  void ensure_strata(size_t upto) {
    while (chains_.size() < upto && stratum_exists(chains_.size())) {
      size_t k = chains_.size();
      Stratum st = qs_.stratum(k);
      if (!st.dim)
        fail("BadInput",
             "quotient stratum " + std::to_string(k) +
                 " is infinite-dimensional (the quotient must be torsion)");
      raw_.push_back(st.generator);
      std::vector<LinComb> adj = adjust_reps(u_, qs_, raw_);
      std::vector<LinComb> ch{adj.back()};
      for (int64_t l = 1; l < *st.dim; ++l) ch.push_back(u_.apply(ch.back()));
      for (size_t l = 0; l < ch.size(); ++l) {
        if (!span_.insert(ch[l]))
          fail("Internal", "adapted basis lost independence at a chain vector");
        rows_.push_back(Row{true, 0, 0, k, l});
      }
      chains_.push_back(std::move(ch));
    }
  }

  LinComb a_of_row(const Row& t) {
    Field f = u_.field();
    if (t.chain) {
      if (t.l >= 1) return chains_[t.k][t.l] * alpha_;
      // the paired rule: a(x_k) = lam x_k + mu u^{k+1}(c)
      LinComb out = chains_[t.k][0] * pc_.lam;
      int64_t e = static_cast<int64_t>(t.k) + 1;
      out.add(BasisIndex::shift(b0_, e), pc_.mu * mult0_.pow(e));
      return out;
    }
    if (t.block == b0_ && t.slot >= 1 && stratum_exists(t.slot - 1)) {
      // the other half of the pair: a(u^{k+1}(c)) = x_k, on the raw unit
      ensure_strata(static_cast<size_t>(t.slot));
      return chains_[t.slot - 1][0] * mult0_.pow(-t.slot);
    }
    return LinComb::unit(f, BasisIndex::shift(t.block, t.slot)) * alpha_;
  }

  RepAut u_;
  Stratification qs_;
  uint32_t b0_;
  Scalar alpha_;
  LamMu pc_;
  Scalar mult0_;
  SpanBasis span_;
  std::vector<uint32_t> blocks_;
  std::vector<Row> rows_;
  std::vector<LinComb> raw_;
  std::vector<std::vector<LinComb>> chains_;
  int64_t total_ = -1;
  int64_t round_ = 0;
};

// ---------------------------------------------------------------------------
// Certificate assembly

Certificate assemble_cert(const RepAut& u, std::vector<Factor> factors,
                          Window W, std::string provenance) {
  Certificate c;
  c.target = std::make_shared<RepAut>(u);
  c.factors = std::move(factors);
  c.window = std::move(W);
  c.provenance = std::move(provenance);
  c.window_report = verify_certificate(*c.target, c, c.window);
  if (!c.window_report.pass)
    fail("Internal", "freshly built certificate fails its window checks: " +
                         c.window_report.str());
  return c;
}

// ---------------------------------------------------------------------------
// Index relabeling (used by factor_four's universe normalization)

struct IndexMap {
  Field f;
  std::function<BasisIndex(const BasisIndex&)> fwd, bwd;

  LinComb map_fwd(const LinComb& x) const {
    LinComb out(f);
    for (const auto& [i, c] : x.terms()) out.add(fwd(i), c);
    return out;
  }
  LinComb map_bwd(const LinComb& x) const {
    LinComb out(f);
    for (const auto& [i, c] : x.terms()) out.add(bwd(i), c);
    return out;
  }
};

// M.bwd . op . M.fwd with the annihilator carried over (conjugation
// preserves annihilating polynomials).
LazyOp conjugate_op(const LazyOp& op, const IndexMap& M, const QuadPoly& p) {
  IndexMap m = M;
  LazyOp inner = op;
  return LazyOp::from_annihilated_rule(
      M.f,
      [m, inner](const BasisIndex& i) {
        return m.map_bwd(inner.apply(m.fwd(i)));
      },
      p);
}

}  // namespace

// ---------------------------------------------------------------------------
// Certificate / report plumbing

std::string Certificate::str() const {
  std::ostringstream o;
  o << "certificate: " << factors.size() << " factors";
  for (const auto& fct : factors)
    o << " [" << fct.role << ": " << fct.annihilator.str() << "]";
  o << " on " << (target ? target->str() : "<none>");
  o << "; window " << window.str() << "; "
    << (window_report.pass ? "verified" : "FAILED") << " ("
    << window_report.checked << " checks)";
  if (!provenance.empty()) o << "; " << provenance;
  return o.str();
}

CheckReport verify_certificate(const RepAut& u, const Certificate& cert,
                               const Window& W) {
  if (cert.factors.empty() || cert.factors.size() > 4)
    fail("BadInput", "a certificate carries between 1 and 4 factors, got " +
                         std::to_string(cert.factors.size()));
  CheckReport out;
  std::vector<LazyOp> ops;
  for (size_t k = 0; k < cert.factors.size(); ++k) {
    const Factor& fct = cert.factors[k];
    require_field(fct.op.field(), u.field(), "verify_certificate");
    CheckReport ann = check_annihilated(fct.op, fct.annihilator, W);
    merge_report(out, ann,
                 "factor " + std::to_string(k + 1) +
                     (fct.role.empty() ? "" : " (" + fct.role + ")"));
    ops.push_back(fct.op);
  }
  CheckReport prod = equal_on_window(compose(ops), LazyOp::from_repaut(u), W);
  merge_report(out, prod, "product");
  return out;
}

// ---------------------------------------------------------------------------
// Scalar triples

ScalarTriple scalar_triple_2x2(const Scalar& lambda, const QuadPoly& p1,
                               const QuadPoly& p2, const QuadPoly& p3) {
  Field f = lambda.field();
  require_field(p1.field(), f, "scalar_triple_2x2");
  require_field(p2.field(), f, "scalar_triple_2x2");
  require_field(p3.field(), f, "scalar_triple_2x2");
  if (lambda.is_zero())
    fail("BadScalar", "scalar_triple_2x2: lambda must be nonzero");
  require_nonderog(p1, "scalar_triple_2x2");
  require_nonderog(p2, "scalar_triple_2x2");
  require_nonderog(p3, "scalar_triple_2x2");

  Acceptability acc = acceptable(lambda, p1, p2, p3);
  if (!acc.ok())
    fail("NotAcceptable", "scalar_triple_2x2: " + lambda.str() +
                              " with " + poly_triple_str(p1, p2, p3) + ": " +
                              acc.str());

  if (acc.kind == Acceptability::Kind::ProductOfRoots) {
    const auto& w = *acc.witness;
    ScalarTriple t{Mat(f, 1, 1), Mat(f, 1, 1), Mat(f, 1, 1)};
    t.A.at(0, 0) = w[0];
    t.B.at(0, 0) = w[1];
    t.C.at(0, 0) = w[2];
    if (!annihilates(t.A, p1) || !annihilates(t.B, p2) ||
        !annihilates(t.C, p3) || !(w[0] * w[1] * w[2] == lambda))
      fail("Internal", "root-product witness fails its defining identities");
    return t;
  }

  // Norm-square witness: lambda^2 = N(p1)N(p2)N(p3), with p1 = (t-x)(t-y).
  Roots r1 = split_roots(p1, "scalar_triple_2x2 (norm-square shape)");
  Scalar x = r1.x, y = r1.y;
  Scalar beta = p2.c0(), gamma = p3.c0();
  Scalar mu = -p2.c1() * beta.inv();
  Scalar nu = -p3.c1() * gamma.inv();
  Scalar li = lambda.inv();

  Mat Bp(f, 2, 2), Cp(f, 2, 2);
  Bp.at(0, 0) = Scalar::zero(f);
  Bp.at(0, 1) = -beta.inv();
  Bp.at(1, 0) = Scalar::one(f);
  Bp.at(1, 1) = mu;
  Cp.at(0, 0) = nu;
  Cp.at(0, 1) = li * x;
  Cp.at(1, 0) = -(x.inv() * gamma.inv() * lambda);
  Cp.at(1, 1) = Scalar::zero(f);

  ScalarTriple t{(Cp * Bp) * lambda, Bp.inverse(), Cp.inverse()};
  if (!annihilates(t.A, p1) || !annihilates(t.B, p2) || !annihilates(t.C, p3))
    fail("Internal", "norm-square triple fails an annihilation identity");
  Mat prod = t.A * t.B * t.C;
  Scalar sc = Scalar::zero(f);
  if (!prod.is_scalar(&sc) || !(sc == lambda))
    fail("Internal", "norm-square triple does not multiply to lambda");
  if (!(prod.det() == lambda * lambda) ||
      !(lambda * lambda == p1.c0() * p2.c0() * p3.c0()))
    fail("Internal", "norm-square determinant identity violated");
  return t;
}

Certificate scalar_id_factors(const Scalar& lambda,
                              const std::array<QuadPoly, 3>& polys,
                              const RepAut& space) {
  Field f = space.field();
  require_field(lambda.field(), f, "scalar_id_factors");
  for (const auto& p : polys) {
    require_field(p.field(), f, "scalar_id_factors");
    require_nonderog(p, "scalar_id_factors");
  }
  if (lambda.is_zero())
    fail("BadScalar", "scalar_id_factors: lambda must be nonzero");

  if (!space.shift_blocks().empty())
    fail("BadInput",
         "scalar_id_factors: a shift block never acts as a scalar");
  if (!space.perturbation().empty())
    fail("BadInput", "scalar_id_factors: space carries a perturbation");
  for (const auto& b : space.finite_blocks())
    if (!(b.matrix == Mat::scalar_mat(f, b.matrix.rows(), lambda)))
      fail("BadInput", "scalar_id_factors: finite block B" +
                           std::to_string(b.id) + " is not " + lambda.str() +
                           " * id");
  for (const auto& b : space.periodic_blocks())
    if (!(b.matrix == Mat::scalar_mat(f, b.matrix.rows(), lambda)))
      fail("BadInput", "scalar_id_factors: periodic block P" +
                           std::to_string(b.id) + " is not " + lambda.str() +
                           " * id");
  if (space.periodic_blocks().empty())
    fail("BadInput",
         "scalar_id_factors: the scalar universe must be infinite-"
         "dimensional");

  Acceptability acc = acceptable(lambda, polys[0], polys[1], polys[2]);
  if (!acc.ok())
    fail("NotAcceptable",
         "scalar_id_factors: " + lambda.str() + " with " +
             poly_triple_str(polys[0], polys[1], polys[2]) + ": " + acc.str());

  std::vector<Factor> factors;
  std::string prov;
  if (acc.kind == Acceptability::Kind::ProductOfRoots) {
    const auto& w = *acc.witness;
    const char* roles[3] = {"scalar-left", "scalar-middle", "scalar-right"};
    for (int i = 0; i < 3; ++i)
      factors.push_back(Factor{
          LazyOp::scalar_op(f, w[i]).with_annihilator(polys[i]), polys[i],
          roles[i]});
    prov = "root-product witness (" + w[0].str() + ", " + w[1].str() + ", " +
           w[2].str() + ")";
  } else {
    ScalarTriple tiles =
        scalar_triple_2x2(lambda, polys[0], polys[1], polys[2]);
    auto pairing = std::make_shared<Pairing>(space, /*total=*/true,
                                             /*seed=*/0,
                                             std::set<BasisIndex>{});
    const Mat mats[3] = {tiles.A, tiles.B, tiles.C};
    const char* roles[3] = {"tile-left", "tile-middle", "tile-right"};
    for (int i = 0; i < 3; ++i) {
      Mat M = mats[i];
      auto rule = [pairing, M, f](const BasisIndex& idx) {
        auto m = pairing->mate(idx);
        if (!m) fail("Internal", "total pairing produced a leftover");
        LinComb self = LinComb::unit(f, idx);
        LinComb partner = LinComb::unit(f, m->partner);
        return m->role == 0 ? tile_image(M, self, partner, 0)
                            : tile_image(M, partner, self, 1);
      };
      factors.push_back(Factor{LazyOp::from_annihilated_rule(f, rule, polys[i]),
                               polys[i], roles[i]});
    }
    prov = "norm-square tiling, first factor roots (" +
           split_roots(polys[0], "scalar_id_factors").x.str() + ", " +
           split_roots(polys[0], "scalar_id_factors").y.str() +
           "), total pairing seed 0";
  }
  return assemble_cert(space, std::move(factors), default_window(space),
                       "scalar_id_factors: lambda = " + lambda.str() + "; " +
                           acc.str() + "; " + prov);
}

// ---------------------------------------------------------------------------
// Shift-pair model operators

ShiftPairOps shift_pair(const QuadPoly& p, const QuadPoly& q) {
  Field f = p.field();
  require_field(q.field(), f, "shift_pair");
  require_nonderog(p, "shift_pair");
  require_nonderog(q, "shift_pair");
  Roots rp = split_roots(p, "shift_pair");
  Scalar alpha = rp.x, beta = rp.y;
  LamMu qc = lam_mu(q);

  auto guard = [](const BasisIndex& i) {
    if (i.kind != BlockKind::Shift || i.block != 0)
      fail("BadInput",
           "shift_pair operators live on shift block 0, got " + i.str());
  };
  auto a_rule = [f, alpha, beta, guard](const BasisIndex& i) {
    guard(i);
    int64_t n = i.slot;
    LinComb out(f);
    if (((n % 2) + 2) % 2 == 0) {
      out.add(BasisIndex::shift(0, n), alpha);
      out.add(BasisIndex::shift(0, n + 3), Scalar::one(f));
    } else {
      out.add(BasisIndex::shift(0, n), beta);
    }
    return out;
  };
  auto b_rule = [f, qc, guard](const BasisIndex& i) {
    guard(i);
    int64_t n = i.slot;
    LinComb out(f);
    if (((n % 2) + 2) % 2 == 0) {
      out.add(BasisIndex::shift(0, n + 1), Scalar::one(f));
    } else {
      out.add(BasisIndex::shift(0, n - 1), qc.mu);
      out.add(BasisIndex::shift(0, n), qc.lam);
    }
    return out;
  };
  return ShiftPairOps{LazyOp::from_annihilated_rule(f, a_rule, p),
                      LazyOp::from_annihilated_rule(f, b_rule, q)};
}

// ---------------------------------------------------------------------------
// Elementary components and transport

ElementaryComponent ElementaryComponent::scaled_shift(uint32_t block,
                                                      Scalar mult) {
  ElementaryComponent c;
  c.kind = Kind::ScaledShift;
  c.block = block;
  c.mult = std::move(mult);
  return c;
}

ElementaryComponent ElementaryComponent::cyclic(LinComb seed, int64_t bound) {
  ElementaryComponent c;
  c.kind = Kind::Cyclic;
  c.seed = std::move(seed);
  c.bound = bound;
  return c;
}

std::string ElementaryComponent::str() const {
  if (kind == Kind::ScaledShift)
    return "scaled-shift S" + std::to_string(block) + " * " + mult.str();
  return "cyclic seed " + seed.str() + " depth " + std::to_string(bound);
}

ElementaryFactors elementary_pair_ops(
    const LazyOp& v, const std::vector<ElementaryComponent>& comps,
    const QuadPoly& p, const QuadPoly& q, int64_t bound) {
  Field f = v.field();
  require_field(p.field(), f, "elementary_pair_ops");
  require_field(q.field(), f, "elementary_pair_ops");
  auto tr = std::make_shared<Transport>(v, comps, p, q,
                                        bound > 0 ? bound : 12);
  auto f_rule = [tr](const BasisIndex& i) { return tr->image(0, i); };
  auto g_rule = [tr](const BasisIndex& i) { return tr->image(1, i); };
  return ElementaryFactors{LazyOp::from_annihilated_rule(f, f_rule, p),
                           LazyOp::from_annihilated_rule(f, g_rule, q)};
}

Certificate elementary_factor_pq(const RepAut& v,
                                 const std::vector<ElementaryComponent>& comps,
                                 const QuadPoly& p, const QuadPoly& q) {
  ElementaryFactors ef =
      elementary_pair_ops(LazyOp::from_repaut(v), comps, p, q, 16);
  std::ostringstream prov;
  prov << "elementary transport over " << comps.size() << " component(s):";
  for (const auto& c : comps) prov << " [" << c.str() << "]";
  std::vector<Factor> factors{Factor{ef.f, p, "elementary-left"},
                              Factor{ef.g, q, "elementary-right"}};
  return assemble_cert(v, std::move(factors), default_window(v), prov.str());
}

// ---------------------------------------------------------------------------
// Adjacency constructions

AdjacencyResult adjacency_strat(const RepAut& u, const Stratification& s,
                                const QuadPoly& p) {
  Field f = u.field();
  require_field(p.field(), f, "adjacency_strat");
  require_nonderog(p, "adjacency_strat");
  Roots rp = split_roots(p, "adjacency_strat");
  Scalar la = rp.x, mu = rp.y;

  CheckReport sv = verify_strat(s, default_window(u));
  if (!sv.pass)
    fail("BadInput", "adjacency_strat: the stratification fails its window "
                     "certificate: " +
                         sv.str());

  bool all_infinite = s.tail.empty();
  bool any_infinite = false, any_finite = !s.tail.empty();
  for (const auto& st : s.prefix) {
    if (st.dim)
      any_finite = true;
    else
      any_infinite = true;
    all_infinite = all_infinite && !st.dim;
  }

  if (all_infinite) {
    // Free universes: a is the scalar root la, and v = la * u is elementary
    // stratum by stratum.
    LazyOp a = LazyOp::scalar_op(f, la).with_annihilator(p);
    LazyOp v = compose({a, LazyOp::from_repaut(u)});
    std::vector<ElementaryComponent> comps;
    for (const auto& st : s.prefix) {
      const auto& terms = st.generator.terms();
      bool single_shift =
          terms.size() == 1 &&
          terms.begin()->first.kind == BlockKind::Shift;
      if (single_shift) {
        uint32_t b = terms.begin()->first.block;
        Scalar m = Scalar::zero(f);
        for (const auto& sb : u.shift_blocks())
          if (sb.id == b) m = sb.multiplier;
        comps.push_back(ElementaryComponent::scaled_shift(b, la * m));
      } else {
        comps.push_back(ElementaryComponent::cyclic(st.generator, 12));
      }
    }
    return AdjacencyResult{a, v, std::move(comps),
                           "all strata infinite: a = " + la.str() + " * id"};
  }

  if (any_infinite && any_finite)
    fail("BadInput",
         "adjacency_strat: mixed finite and infinite strata are not "
         "supported");
  if (!u.shift_blocks().empty())
    fail("BadInput",
         "adjacency_strat: finite strata cannot cover a universe with shift "
         "blocks");

  CheckReport sg = is_semi_good(s);
  if (!sg.pass)
    fail("NotSemiGood", "adjacency_strat: " + sg.str());

  auto solver = std::make_shared<StratSolver>(u, s, la, mu);
  LazyOp a = LazyOp::from_annihilated_rule(
      f, [solver](const BasisIndex& i) { return solver->a_image(i); }, p);
  LazyOp v = compose({a, LazyOp::from_repaut(u)});
  LinComb seed = solver->cyc_seed();
  CyclicReport cyc = cyclic_window_cert(v, seed, 12);
  if (!cyc.independent)
    fail("Internal",
         "adjacency_strat: the stitched transform lost cyclicity: " +
             cyc.str());
  std::vector<ElementaryComponent> comps{ElementaryComponent::cyclic(seed, 12)};
  return AdjacencyResult{
      a, v, std::move(comps),
      "stitched strata with (la, mu) = (" + la.str() + ", " + mu.str() + ")"};
}

AdjacencyResult adjacency_free(const RepAut& u, const QuadPoly& p) {
  Field f = u.field();
  require_field(p.field(), f, "adjacency_free");
  require_nonderog(p, "adjacency_free");
  Roots rp = split_roots(p, "adjacency_free");
  Scalar alpha = rp.x;
  LamMu pc = lam_mu(p);

  if (u.shift_blocks().empty())
    fail("NoFreePart", "adjacency_free: the universe has no shift block");
  for (const auto& [src, img] : u.perturbation())
    if (src.kind == BlockKind::Shift)
      fail("BadInput",
           "adjacency_free: perturbations out of the free part are not "
           "supported (source " +
               src.str() + ")");

  uint32_t b0 = u.shift_blocks().front().id;
  for (const auto& b : u.shift_blocks()) b0 = std::min(b0, b.id);

  Stratification qs = quotient_strata(u);
  for (const auto& st : qs.prefix)
    if (!st.dim)
      fail("BadInput",
           "adjacency_free: the quotient by the free part must be torsion");

  std::vector<ElementaryComponent> comps;
  if (qs.prefix.empty() && qs.tail.empty()) {
    // No torsion quotient at all: a = alpha * id works outright.
    LazyOp a = LazyOp::scalar_op(f, alpha).with_annihilator(p);
    LazyOp v = compose({a, LazyOp::from_repaut(u)});
    for (const auto& b : u.shift_blocks())
      comps.push_back(
          ElementaryComponent::scaled_shift(b.id, alpha * b.multiplier));
    return AdjacencyResult{a, v, std::move(comps),
                           "pure free universe: a = " + alpha.str() + " * id"};
  }

  auto solver = std::make_shared<FreeSolver>(u, qs, b0, alpha, pc);
  LazyOp a = LazyOp::from_annihilated_rule(
      f, [solver](const BasisIndex& i) { return solver->a_image(i); }, p);
  LazyOp v = compose({a, LazyOp::from_repaut(u)});
  LinComb c = LinComb::unit(f, BasisIndex::shift(b0, 0));
  CyclicReport cyc = cyclic_window_cert(v, c, 12);
  if (!cyc.independent)
    fail("Internal", "adjacency_free: the stitched transform lost cyclicity "
                     "through the lowest shift generator: " +
                         cyc.str());
  comps.push_back(ElementaryComponent::cyclic(c, 12));
  for (const auto& b : u.shift_blocks())
    if (b.id != b0)
      comps.push_back(
          ElementaryComponent::scaled_shift(b.id, alpha * b.multiplier));
  return AdjacencyResult{
      a, v, std::move(comps),
      "free cover through S" + std::to_string(b0) + ", alpha = " +
          alpha.str() + ", (lam, mu) = (" + pc.lam.str() + ", " +
          pc.mu.str() + ")"};
}

// ---------------------------------------------------------------------------
// Dominant-eigenvalue removal

KillResult kill_dominant(const RepAut& u, const QuadPoly& p,
                         uint64_t pairing_seed) {
  Field f = u.field();
  require_field(p.field(), f, "kill_dominant");
  require_nonderog(p, "kill_dominant");
  if (u.shift_blocks().empty() && u.periodic_blocks().empty())
    fail("BadInput", "kill_dominant: the universe must be "
                     "infinite-dimensional");
  LamMu pc = lam_mu(p);
  auto pairing = std::make_shared<Pairing>(u, /*total=*/false, pairing_seed,
                                           std::set<BasisIndex>{});
  QuadPoly pcopy = p;
  auto rule = [pairing, pc, pcopy, f](const BasisIndex& i) {
    auto m = pairing->mate(i);
    LinComb out(f);
    if (!m) {
      auto rr = roots(pcopy);
      if (!rr)
        fail("NotSplit",
             "kill_dominant: a pairing leftover needs a split annihilator, "
             "but " + pcopy.str() + " has no roots");
      out.add(i, rr->x);
      return out;
    }
    if (m->role == 0) {
      out.add(m->partner, Scalar::one(f));
    } else {
      out.add(m->partner, pc.mu);
      out.add(i, pc.lam);
    }
    return out;
  };
  LazyOp a = LazyOp::from_annihilated_rule(f, rule, p);
  LazyOp v = compose({a, LazyOp::from_repaut(u)});
  return KillResult{a, v};
}

// ---------------------------------------------------------------------------
// Invariant closure

std::vector<LinComb> invariant_closure(const LazyOp& a, const LazyOp& b,
                                       const LazyOp& c,
                                       const std::vector<LinComb>& W) {
  Field f = a.field();
  require_field(b.field(), f, "invariant_closure");
  require_field(c.field(), f, "invariant_closure");

  SpanBasis base(f);
  for (const auto& w : W) base.insert(w);
  size_t dim_w = base.echelon().size();

  SpanBasis closure(f);
  for (const auto& w : W) {
    closure.insert(w);
    LinComb aw = a.apply(w), bw = b.apply(w), cw = c.apply(w);
    closure.insert(aw);
    closure.insert(bw);
    closure.insert(cw);
    closure.insert(b.apply(aw));
    closure.insert(c.apply(bw));
    closure.insert(a.apply(cw));
    closure.insert(c.apply(aw));
  }
  std::vector<LinComb> out = closure.echelon();
  if (out.size() > 8 * dim_w)
    fail("Internal", "invariant closure exceeded the 8x dimension bound");
  const LazyOp* ops[3] = {&a, &b, &c};
  const char* names[3] = {"a", "b", "c"};
  for (int k = 0; k < 3; ++k)
    for (const auto& v : out)
      if (!closure.contains(ops[k]->apply(v)))
        fail("HypothesisViolation",
             std::string("invariant_closure: the image under ") + names[k] +
                 " escapes the eight-term sum; the scalar-plus-small "
                 "hypothesis on c b a must be false");
  return out;
}

// ---------------------------------------------------------------------------
// Finite-rank three-factor pipeline

FactorOutcome finite_rank_three(const RepAut& u,
                                const std::array<QuadPoly, 3>& polys,
                                size_t qmax, const SearchBudget& budget,
                                uint64_t seed) {
  Field f = u.field();
  for (const auto& p : polys) {
    require_field(p.field(), f, "finite_rank_three");
    require_nonderog(p, "finite_rank_three");
  }
  auto dom = dominant_eigenvalue(u);
  if (!dom)
    fail("NoDominantEigenvalue",
         "finite_rank_three: u is not a scalar plus a finite-rank deviation");
  Scalar lambda = *dom;

  Acceptability acc = acceptable(lambda, polys[0], polys[1], polys[2]);
  if (!acc.ok())
    return FactorOutcome{
        std::nullopt,
        Refusal{"NotAcceptable",
                lambda.str() + " with " +
                    poly_triple_str(polys[0], polys[1], polys[2]) + ": " +
                    acc.str()}};

  // Flatten the deviation w = u - lambda id over its touched coordinates.
  std::set<BasisIndex> touched;
  for (const auto& b : u.finite_blocks())
    for (int64_t s = 0; s < static_cast<int64_t>(b.matrix.rows()); ++s)
      touched.insert(BasisIndex::finite(b.id, s));
  for (const auto& [src, img] : u.perturbation()) {
    touched.insert(src);
    for (const auto& [i, cf] : img.terms()) touched.insert(i);
  }
  std::vector<BasisIndex> flat(touched.begin(), touched.end());
  std::map<BasisIndex, int64_t> pos;
  for (size_t k = 0; k < flat.size(); ++k)
    pos[flat[k]] = static_cast<int64_t>(k);

  FiniteRankOp w{f, {}};
  for (size_t k = 0; k < flat.size(); ++k) {
    LinComb img = u.apply(flat[k]) - LinComb::unit(f, flat[k]) * lambda;
    if (img.is_zero()) continue;
    SparseVec sv;
    for (const auto& [i, cf] : img.terms()) {
      auto it = pos.find(i);
      if (it == pos.end())
        fail("Internal", "the deviation leaves its touched coordinate set");
      sv[it->second] = cf;
    }
    w.images[static_cast<int64_t>(k)] = std::move(sv);
  }

  std::vector<SparseVec> basis_out;
  Mat A0 = compress_finite_rank(w, &basis_out);
  size_t r = A0.rows();
  if (r == 0)
    return FactorOutcome{scalar_id_factors(lambda, polys, u), std::nullopt};
  Mat A = A0 + Mat::scalar_mat(f, r, lambda);

  // Real-space cell vectors and an exactness check of the compression.
  std::vector<LinComb> cellv;
  for (const auto& sv : basis_out) {
    LinComb v(f);
    for (const auto& [k, cf] : sv) v.add(flat[k], cf);
    cellv.push_back(v);
  }
  for (size_t j = 0; j < r; ++j) {
    LinComb rhs(f);
    for (size_t l = 0; l < r; ++l) rhs.add_scaled(cellv[l], A.at(l, j));
    if (!(u.apply(cellv[j]) == rhs))
      fail("Internal", "compressed core disagrees with the action of u");
  }

  // Determinant filters for the named triples (complete criteria).
  Scalar one = Scalar::one(f);
  auto is_inv = [&](const QuadPoly& p) {
    return p.c1().is_zero() && p.c0() == -one;
  };
  auto is_u1 = [&](const QuadPoly& p) {
    return p.c1() == -(one + one) && p.c0() == one;
  };
  int ninv = 0, nu1 = 0;
  for (const auto& p : polys) {
    if (is_inv(p)) ++ninv;
    if (is_u1(p)) ++nu1;
  }
  Scalar detA = A.det();
  bool named = false;
  if (ninv == 3) {
    named = true;
    if (!in_pm_lambda_powers(detA, lambda))
      return FactorOutcome{
          std::nullopt,
          Refusal{"DeterminantObstruction",
                  "involution triple: core determinant " + detA.str() +
                      " lies outside the subgroup generated by -1 and " +
                      lambda.str()}};
  } else if (nu1 == 3) {
    named = true;
    if (lambda == one) {
      if (!(detA == one))
        return FactorOutcome{
            std::nullopt,
            Refusal{"DeterminantObstruction",
                    "unipotent triple at lambda = 1: core determinant " +
                        detA.str() + " must equal 1"}};
    } else {  // acceptability forces lambda in {1, -1}
      if (!(detA == one || detA == -one))
        return FactorOutcome{
            std::nullopt,
            Refusal{"DeterminantObstruction",
                    "unipotent triple at lambda = -1: core determinant " +
                        detA.str() + " must be 1 or -1"}};
    }
  } else if (nu1 == 1 && ninv == 2) {
    named = true;
    if (!(detA == one || detA == -one))
      return FactorOutcome{
          std::nullopt,
          Refusal{"DeterminantObstruction",
                  "mixed triple: core determinant " + detA.str() +
                      " must be 1 or -1"}};
  }

  if (f.is_rational())
    fail("UnsupportedField",
         std::string("finite_rank_three: witness search over the rationals "
                     "is not implemented") +
             (named ? " (the determinant obstructions pass)" : ""));

  auto qstar = lambda_stable_search(A, lambda, polys, qmax, budget);
  if (!qstar)
    return FactorOutcome{
        std::nullopt,
        Refusal{"SearchExhausted",
                "no padding up to " + std::to_string(qmax) +
                    " makes the compressed core a product of the triple"}};

  size_t m = r + *qstar;
  Mat B(f, m, m);
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < m; ++j)
      B.at(i, j) = (i < r && j < r) ? A.at(i, j)
                   : (i == j ? lambda : Scalar::zero(f));
  auto wit = product_membership(B, {polys[0], polys[1], polys[2]}, budget);
  if (!wit)
    fail("Internal",
         "padded witness extraction failed after a positive search decision");

  // Fresh periodic vectors complete the cell to dimension m; the kernel of
  // w completes the touched span; everything else is tiled.
  auto pick_fresh = [&](const std::set<BasisIndex>& used, size_t count) {
    std::vector<BasisIndex> out;
    if (count == 0) return out;
    if (u.periodic_blocks().empty())
      fail("BadInput",
           "finite_rank_three: the universe must be infinite-dimensional");
    for (int64_t copy = 0; out.size() < count; ++copy)
      for (const auto& b : u.periodic_blocks())
        for (int64_t s = 0;
             s < static_cast<int64_t>(b.matrix.rows()) && out.size() < count;
             ++s) {
          BasisIndex i = BasisIndex::periodic(b.id, copy, s);
          if (!used.count(i)) out.push_back(i);
        }
    return out;
  };
  std::set<BasisIndex> used = touched;
  std::vector<BasisIndex> fresh = pick_fresh(used, *qstar);
  for (const auto& i : fresh) {
    used.insert(i);
    cellv.push_back(LinComb::unit(f, i));
  }

  // Kernel completion of the touched span.
  Mat Wm(f, flat.size(), flat.size());
  for (const auto& [k, sv] : w.images)
    for (const auto& [i, cf] : sv) Wm.at(i, k) = cf;
  SpanBasis full(f);
  for (const auto& v : cellv)
    if (!full.insert(v))
      fail("Internal", "cell vectors are linearly dependent");
  std::vector<LinComb> kv;
  for (const auto& z : Wm.nullspace()) {
    LinComb kz(f);
    for (size_t k = 0; k < flat.size(); ++k) kz.add(flat[k], z[k]);
    if (full.insert(kz)) kv.push_back(kz);
  }
  if (r + kv.size() != flat.size())
    fail("Internal", "kernel completion fell short of the touched span");

  bool por = acc.kind == Acceptability::Kind::ProductOfRoots;
  std::array<Scalar, 3> wroots{one, one, one};
  std::optional<ScalarTriple> tiles;
  std::optional<BasisIndex> zextra;
  std::shared_ptr<Pairing> pairing;
  if (por) {
    wroots = *acc.witness;
  } else {
    tiles = scalar_triple_2x2(lambda, polys[0], polys[1], polys[2]);
    if (kv.size() % 2 == 1) {
      zextra = pick_fresh(used, 1).front();
      used.insert(*zextra);
    }
    pairing = std::make_shared<Pairing>(u, /*total=*/true, seed, used);
  }

  struct Glue {
    Field f;
    std::map<BasisIndex, int64_t> pos;
    std::set<BasisIndex> freshset;
    std::vector<LinComb> cellv, kv;
    std::vector<Mat> wit;
    size_t m = 0;
    bool por = false;
    std::array<Scalar, 3> wroots;
    std::optional<ScalarTriple> tiles;
    std::optional<BasisIndex> zextra;
    std::shared_ptr<Pairing> pairing;
    SpanBasis full;

    explicit Glue(Field ff) : f(ff), wroots{Scalar::one(ff), Scalar::one(ff),
                                            Scalar::one(ff)},
                              full(ff) {}

    const Mat& tile_mat(int fi) const {
      return fi == 0 ? tiles->A : (fi == 1 ? tiles->B : tiles->C);
    }
    LinComb k_image(int fi, size_t j) const {
      if (por) return kv[j] * wroots[fi];
      size_t mate = j ^ 1;
      if (mate < kv.size())
        return tile_image(tile_mat(fi), kv[j & ~size_t(1)],
                          kv[(j & ~size_t(1)) + 1], static_cast<int>(j & 1));
      // odd tail pairs with the reserved extra unit
      return tile_image(tile_mat(fi), kv[j],
                        LinComb::unit(f, *zextra), 0);
    }
    LinComb image(int fi, const BasisIndex& e) {
      if (pos.count(e) || freshset.count(e)) {
        auto co = full.coords_in_inserted(LinComb::unit(f, e));
        if (!co)
          fail("Internal", "touched vector escapes the cell + kernel span");
        LinComb out(f);
        for (size_t j = 0; j < co->size(); ++j) {
          if ((*co)[j].is_zero()) continue;
          if (j < m) {
            LinComb col(f);
            for (size_t l = 0; l < m; ++l)
              col.add_scaled(cellv[l], wit[fi].at(l, j));
            out.add_scaled(col, (*co)[j]);
          } else {
            out.add_scaled(k_image(fi, j - m), (*co)[j]);
          }
        }
        return out;
      }
      if (zextra && e == *zextra)
        return tile_image(tile_mat(fi), kv.back(), LinComb::unit(f, e), 1);
      if (por) return LinComb::unit(f, e) * wroots[fi];
      auto mt = pairing->mate(e);
      if (!mt) fail("Internal", "total pairing produced a leftover");
      LinComb self = LinComb::unit(f, e);
      LinComb partner = LinComb::unit(f, mt->partner);
      return mt->role == 0 ? tile_image(tile_mat(fi), self, partner, 0)
                           : tile_image(tile_mat(fi), partner, self, 1);
    }
  };

  auto glue = std::make_shared<Glue>(f);
  glue->pos = pos;
  for (const auto& i : fresh) glue->freshset.insert(i);
  glue->cellv = cellv;
  glue->kv = kv;
  glue->wit = *wit;
  glue->m = m;
  glue->por = por;
  glue->wroots = wroots;
  glue->tiles = tiles;
  glue->zextra = zextra;
  glue->pairing = pairing;
  for (const auto& v : cellv) glue->full.insert(v);
  for (const auto& v : kv) glue->full.insert(v);

  std::vector<Factor> factors;
  const char* roles[3] = {"core-left", "core-middle", "core-right"};
  for (int fi = 0; fi < 3; ++fi) {
    auto rule = [glue, fi](const BasisIndex& i) { return glue->image(fi, i); };
    factors.push_back(Factor{LazyOp::from_annihilated_rule(f, rule, polys[fi]),
                             polys[fi], roles[fi]});
  }

  Window W = default_window(u);
  for (const auto& i : flat) W.insert(i);
  for (const auto& i : fresh) W.insert(i);
  if (zextra) W.insert(*zextra);

  std::ostringstream prov;
  prov << "finite-rank core: lambda = " << lambda.str() << ", core dim " << r
       << ", pad " << *qstar << ", core det " << detA.str() << "; "
       << acc.str();
  return FactorOutcome{
      assemble_cert(u, std::move(factors), std::move(W), prov.str()),
      std::nullopt};
}

// ---------------------------------------------------------------------------
// Main three-factor dispatch

namespace {

// Shared assembly for both adjacency branches: u = a^{-1} * f * g.
Certificate adjacency_assembly(const RepAut& u, const AdjacencyResult& ar,
                               const std::array<QuadPoly, 3>& polys,
                               const std::string& branch) {
  LazyOp a_inv = invert(ar.a);
  if (!a_inv.annihilator() || !(*a_inv.annihilator() == polys[0]))
    a_inv = a_inv.with_annihilator(polys[0]);
  ElementaryFactors ef =
      elementary_pair_ops(ar.v, ar.components, polys[1], polys[2], 16);
  std::vector<Factor> factors{Factor{a_inv, polys[0], "adjacency-inverse"},
                              Factor{ef.f, polys[1], "elementary-left"},
                              Factor{ef.g, polys[2], "elementary-right"}};
  return assemble_cert(u, std::move(factors), default_window(u),
                       branch + "; " + ar.note);
}

}  // namespace

FactorOutcome factor_three(const RepAut& u,
                           const std::array<QuadPoly, 3>& polys,
                           const SearchBudget& budget, uint64_t seed) {
  Field f = u.field();
  for (const auto& p : polys) {
    require_field(p.field(), f, "factor_three");
    require_nonderog(p, "factor_three");
    split_roots(p, "factor_three");
  }
  if (dominant_eigenvalue(u))
    return finite_rank_three(u, polys, 8, budget, seed);
  if (!u.shift_blocks().empty()) {
    AdjacencyResult ar = adjacency_free(u, reciprocal(polys[0]));
    return FactorOutcome{
        adjacency_assembly(u, ar, polys, "free-part adjacency"), std::nullopt};
  }
  Stratification s = build_strat_periodic(u);
  AdjacencyResult ar = adjacency_strat(u, s, reciprocal(polys[0]));
  return FactorOutcome{
      adjacency_assembly(u, ar, polys, "torsion stratification"),
      std::nullopt};
}

// ---------------------------------------------------------------------------
// Four-factor pipeline

namespace {

RepAut scale_repaut(const RepAut& u, const Scalar& c) {
  Field f = u.field();
  RepAut out(f);
  for (const auto& b : u.finite_blocks()) out.add_finite_block(b.id, b.matrix * c);
  for (const auto& b : u.shift_blocks())
    out.add_shift_block(b.id, b.multiplier * c);
  for (const auto& b : u.periodic_blocks())
    out.add_periodic_block(b.id, b.matrix * c);
  for (const auto& [src, img] : u.coupling()) out.add_coupling(src, img * c);
  for (const auto& [src, img] : u.perturbation())
    out.add_perturbation(src, img * c);
  return out;
}

Certificate factor_four_dominant(const RepAut& u,
                                 const std::array<QuadPoly, 4>& polys,
                                 const SearchBudget& budget, uint64_t seed) {
  Field f = u.field();
  Scalar lam = *dominant_eigenvalue(u);
  const auto& fb = u.finite_blocks();
  const auto& pb = u.periodic_blocks();
  if (pb.empty())
    fail("BadInput", "factor_four: the universe must be infinite-dimensional");
  for (const auto& b : pb)
    if (!(b.matrix == Mat::scalar_mat(f, b.matrix.rows(), lam)))
      fail("Internal", "dominant eigenvalue with a non-scalar periodic cell");

  // ---- normalize: all finite blocks into one (even-dimensional) block 0,
  // all periodic coordinates into one 1-dimensional stream.
  std::map<uint32_t, int64_t> fin_off;
  int64_t n0 = 0;
  for (const auto& b : fb) {
    fin_off[b.id] = n0;
    n0 += static_cast<int64_t>(b.matrix.rows());
  }
  bool stolen = (n0 % 2 == 1);
  int64_t nfin = n0 + (stolen ? 1 : 0);
  int64_t P = static_cast<int64_t>(pb.size());
  std::map<uint32_t, int64_t> per_pos;
  std::vector<uint32_t> per_ids;
  std::vector<int64_t> per_dims;
  for (const auto& b : pb) {
    per_pos[b.id] = static_cast<int64_t>(per_ids.size());
    per_ids.push_back(b.id);
    per_dims.push_back(static_cast<int64_t>(b.matrix.rows()));
  }

  IndexMap R{f, {}, {}};
  int64_t shift_amt = stolen ? 1 : 0;
  R.fwd = [=](const BasisIndex& i) {
    if (i.kind == BlockKind::Finite)
      return BasisIndex::finite(0, fin_off.at(i.block) + i.slot);
    if (i.kind != BlockKind::Periodic)
      fail("Internal", "normalization met a shift coordinate");
    int64_t j = per_pos.at(i.block);
    int64_t g = i.copy * per_dims[j] + i.slot;
    int64_t m = g * P + j;
    if (stolen && m == 0) return BasisIndex::finite(0, n0);
    return BasisIndex::periodic(0, m - shift_amt, 0);
  };
  R.bwd = [=](const BasisIndex& i) {
    if (i.kind == BlockKind::Finite) {
      if (stolen && i.slot == n0) {
        uint32_t b = per_ids[0];
        return BasisIndex::periodic(b, 0, 0);
      }
      for (auto it = fin_off.rbegin(); it != fin_off.rend(); ++it)
        if (i.slot >= it->second)
          return BasisIndex::finite(it->first, i.slot - it->second);
      fail("Internal", "normalization inverse met an unknown finite slot");
    }
    int64_t m = i.copy + shift_amt;
    int64_t j = m % P;
    int64_t g = m / P;
    uint32_t b = per_ids[j];
    return BasisIndex::periodic(b, g / per_dims[j], g % per_dims[j]);
  };

  RepAut un(f);
  if (nfin > 0) {
    Mat B0(f, nfin, nfin);
    for (const auto& b : fb)
      for (size_t i = 0; i < b.matrix.rows(); ++i)
        for (size_t j = 0; j < b.matrix.cols(); ++j)
          B0.at(fin_off[b.id] + i, fin_off[b.id] + j) = b.matrix.at(i, j);
    if (stolen) B0.at(n0, n0) = lam;
    un.add_finite_block(0, B0);
  }
  Mat cell1(f, 1, 1);
  cell1.at(0, 0) = lam;
  un.add_periodic_block(0, cell1);
  for (const auto& [src, img] : u.perturbation())
    un.add_perturbation(R.fwd(src), R.map_fwd(img));
  un.validate();
  {
    RepAut ucopy = u;
    IndexMap Rc = R;
    LazyOp mapped = LazyOp::from_plain_rule(f, [ucopy, Rc](const BasisIndex& i) {
      return Rc.map_fwd(ucopy.apply(Rc.bwd(i)));
    });
    CheckReport eq =
        equal_on_window(LazyOp::from_repaut(un), mapped, default_window(un));
    if (!eq.pass)
      fail("Internal", "normalized universe disagrees with the original: " +
                           eq.str());
  }

  // ---- kill the dominant eigenvalue on the normalized universe.
  QuadPoly p1s = reciprocal(polys[0]);
  LamMu ps = lam_mu(p1s);
  Scalar alpha_s = split_roots(p1s, "factor_four").x;
  KillResult kr = kill_dominant(un, p1s, seed);
  Pairing pr(un, /*total=*/false, seed, {});
  int64_t phi = static_cast<int64_t>(seed & 1);

  // ---- rebuild v = a * un as a representable automorphism.
  RepAut vr(f);
  if (nfin > 0) {
    Mat Af(f, nfin, nfin);
    for (int64_t s = 0; s < nfin; ++s) {
      auto mt = pr.mate(BasisIndex::finite(0, s));
      if (!mt) fail("Internal", "even finite chain produced a leftover");
      if (mt->role == 0) {
        Af.at(mt->partner.slot, s) = Scalar::one(f);
      } else {
        Af.at(mt->partner.slot, s) = ps.mu;
        Af.at(s, s) = ps.lam;
      }
    }
    Mat B0 = un.finite_blocks().front().matrix;
    vr.add_finite_block(0, Af * B0);
  }
  Mat cell2(f, 2, 2);
  cell2.at(0, 1) = lam * ps.mu;
  cell2.at(1, 0) = lam;
  cell2.at(1, 1) = lam * ps.lam;
  vr.add_periodic_block(0, cell2);
  if (phi == 1) {
    Mat b1(f, 1, 1);
    b1.at(0, 0) = lam * alpha_s;
    vr.add_finite_block(1, b1);
  }

  IndexMap Rv{f, {}, {}};
  Rv.fwd = [=](const BasisIndex& i) {
    if (i.kind == BlockKind::Finite) return i;
    if (phi == 1 && i.copy == 0) return BasisIndex::finite(1, 0);
    int64_t c = i.copy - phi;
    return BasisIndex::periodic(0, c / 2, c % 2);
  };
  Rv.bwd = [=](const BasisIndex& i) {
    if (i.kind == BlockKind::Finite) {
      if (i.block == 1) return BasisIndex::periodic(0, 0, 0);
      return i;
    }
    return BasisIndex::periodic(0, 2 * i.copy + i.slot + phi, 0);
  };
  for (const auto& [src, img] : un.perturbation())
    vr.add_perturbation(Rv.fwd(src), Rv.map_fwd(kr.a.apply(img)));
  vr.validate();
  {
    LazyOp krv = kr.v;
    IndexMap Rc = Rv;
    LazyOp mapped = LazyOp::from_plain_rule(f, [krv, Rc](const BasisIndex& i) {
      return Rc.map_fwd(krv.apply(Rc.bwd(i)));
    });
    CheckReport eq =
        equal_on_window(LazyOp::from_repaut(vr), mapped, default_window(vr));
    if (!eq.pass)
      fail("Internal",
           "rebuilt elementary-ready transform disagrees with a * u: " +
               eq.str());
  }

  // ---- factor the remainder into three and transport everything back.
  std::array<QuadPoly, 3> rest{polys[1], polys[2], polys[3]};
  FactorOutcome fo = factor_three(vr, rest, budget);
  if (!fo.ok())
    fail("Internal",
         "factor_four: the three-factor stage refused a torsion universe: " +
             fo.refusal->str());

  IndexMap S{f, {}, {}};
  {
    auto rf = R.fwd, rvf = Rv.fwd, rb = R.bwd, rvb = Rv.bwd;
    S.fwd = [rf, rvf](const BasisIndex& i) { return rvf(rf(i)); };
    S.bwd = [rb, rvb](const BasisIndex& i) { return rb(rvb(i)); };
  }
  std::vector<Factor> factors;
  factors.push_back(Factor{conjugate_op(invert(kr.a), R, polys[0]), polys[0],
                           "dominant-kill-inverse"});
  const auto& inner = fo.certificate->factors;
  for (size_t k = 0; k < inner.size(); ++k)
    factors.push_back(Factor{conjugate_op(inner[k].op, S, polys[k + 1]),
                             polys[k + 1], inner[k].role});

  std::ostringstream prov;
  prov << "dominant lambda = " << lam.str() << ", pairing seed " << seed
       << ", first-factor reciprocal " << p1s.str() << "; inner: "
       << fo.certificate->provenance;
  return assemble_cert(u, std::move(factors), default_window(u), prov.str());
}

}  // namespace

Certificate factor_four(const RepAut& u, const std::array<QuadPoly, 4>& polys,
                        const SearchBudget& budget, uint64_t seed) {
  Field f = u.field();
  for (const auto& p : polys) {
    require_field(p.field(), f, "factor_four");
    require_nonderog(p, "factor_four");
    split_roots(p, "factor_four");
  }
  std::array<QuadPoly, 3> rest{polys[1], polys[2], polys[3]};
  if (!dominant_eigenvalue(u)) {
    Scalar omega = split_roots(polys[0], "factor_four").x;
    RepAut us = scale_repaut(u, omega.inv());
    {
      CheckReport eq = equal_on_window(
          LazyOp::from_repaut(us),
          compose({LazyOp::scalar_op(f, omega.inv()), LazyOp::from_repaut(u)}),
          default_window(u));
      if (!eq.pass)
        fail("Internal",
             "scaled universe disagrees with omega^{-1} u: " + eq.str());
    }
    FactorOutcome fo = factor_three(us, rest, budget, seed);
    if (!fo.ok())
      fail("Internal",
           "factor_four: the three-factor stage refused a scaled universe: " +
               fo.refusal->str());
    std::vector<Factor> factors{
        Factor{LazyOp::scalar_op(f, omega).with_annihilator(polys[0]),
               polys[0], "scalar-prefix"}};
    for (const auto& fct : fo.certificate->factors) factors.push_back(fct);
    return assemble_cert(u, std::move(factors), default_window(u),
                         "scalar prefix omega = " + omega.str() + "; inner: " +
                             fo.certificate->provenance);
  }
  std::string trace;
  for (uint64_t attempt = seed; attempt < seed + 4; ++attempt) {
    try {
      return factor_four_dominant(u, polys, budget, attempt);
    } catch (const error& e) {
      if (e.code() != "BuilderStuck") throw;
      trace += (trace.empty() ? "" : "; ") + std::string("seed ") +
               std::to_string(attempt) + ": " + e.what();
    }
  }
  fail("BuilderStuck",
       "factor_four: every pairing seed left the torsion builder stuck (" +
           trace + ")");
}

// ---------------------------------------------------------------------------
// Classification

Decision classify3(const RepAut& u, TripleFlavor flavor) {
  Field f = u.field();
  Scalar one = Scalar::one(f);
  Decision d;
  auto dom = dominant_eigenvalue(u);
  if (!dom) {
    d.product = true;
    d.reasons.push_back(
        "no dominant eigenvalue: every finite-rank obstruction is vacuous");
    return d;
  }
  Scalar lam = *dom;
  Scalar det = induced_det(u);
  d.reasons.push_back("dominant eigenvalue " + lam.str() +
                      ", induced determinant " + det.str());
  switch (flavor) {
    case TripleFlavor::Involutions: {
      if (!(lam.pow(4) == one)) {
        d.product = false;
        d.reasons.push_back("lambda^4 = " + lam.pow(4).str() +
                            " != 1 excludes a triple of involutions");
        return d;
      }
      if (!in_pm_lambda_powers(det, lam)) {
        d.product = false;
        d.reasons.push_back(
            "induced determinant lies outside the subgroup generated by -1 "
            "and lambda");
        return d;
      }
      d.product = true;
      d.reasons.push_back("lambda^4 = 1 and the determinant lies in the "
                          "subgroup generated by -1 and lambda");
      return d;
    }
    case TripleFlavor::Unipotents: {
      if (!(lam * lam == one)) {
        d.product = false;
        d.reasons.push_back("lambda^2 = " + (lam * lam).str() +
                            " != 1 excludes a triple of unipotent-type "
                            "factors");
        return d;
      }
      if (lam == one && !(det == one)) {
        d.product = false;
        d.reasons.push_back(
            "u - id has finite rank and the induced determinant differs "
            "from 1");
        return d;
      }
      if (lam == -one && !(det == one || det == -one)) {
        d.product = false;
        d.reasons.push_back(
            "u + id has finite rank and the induced determinant is outside "
            "{1, -1}");
        return d;
      }
      d.product = true;
      d.reasons.push_back("the unipotent determinant conditions hold");
      return d;
    }
    case TripleFlavor::Mixed: {
      if (!(lam * lam == one)) {
        d.product = false;
        d.reasons.push_back("lambda^2 = " + (lam * lam).str() +
                            " != 1 excludes the mixed triple");
        return d;
      }
      if (!(det == one || det == -one)) {
        d.product = false;
        d.reasons.push_back(
            "the induced determinant is outside {1, -1}");
        return d;
      }
      d.product = true;
      d.reasons.push_back("lambda^2 = 1 and the determinant lies in {1, -1}");
      return d;
    }
  }
  fail("Internal", "unknown triple flavor");
}

std::string Decision::str() const {
  std::string out = product ? "product" : "not a product";
  for (const auto& r : reasons) out += "; " + r;
  return out;
}

}  // namespace invo
