/// @file opcore.cpp

#include "opcore.hpp"

#include <algorithm>
#include <sstream>

namespace invo {

// ---------------------------------------------------------------------------
// BasisIndex

std::string BasisIndex::block_name() const {
  const char* prefix =
      kind == BlockKind::Finite ? "B" : kind == BlockKind::Shift ? "S" : "P";
  return prefix + std::to_string(block);
}

std::string BasisIndex::str() const {
  std::ostringstream os;
  os << block_name() << '[';
  if (kind == BlockKind::Periodic) os << copy << ',';
  os << slot << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// LinComb

LinComb LinComb::unit(Field f, const BasisIndex& i) {
  LinComb x(f);
  x.add(i, Scalar::one(f));
  return x;
}

Scalar LinComb::coeff(const BasisIndex& i) const {
  auto it = terms_.find(i);
  return it == terms_.end() ? Scalar::zero(f_) : it->second;
}

void LinComb::add(const BasisIndex& i, const Scalar& c) {
  if (c.field() != f_) fail("FieldMismatch", "coefficient field mismatch");
  if (c.is_zero()) return;
  auto [it, inserted] = terms_.emplace(i, c);
  if (!inserted) {
    it->second = it->second + c;
    if (it->second.is_zero()) terms_.erase(it);
  }
}

void LinComb::add_scaled(const LinComb& o, const Scalar& c) {
  check_same(o);
  if (c.is_zero()) return;
  for (const auto& [i, v] : o.terms_) add(i, v * c);
}

LinComb& LinComb::operator+=(const LinComb& o) {
  check_same(o);
  for (const auto& [i, v] : o.terms_) add(i, v);
  return *this;
}

LinComb& LinComb::operator-=(const LinComb& o) {
  check_same(o);
  for (const auto& [i, v] : o.terms_) add(i, -v);
  return *this;
}

LinComb LinComb::operator+(const LinComb& o) const {
  LinComb r(*this);
  r += o;
  return r;
}

LinComb LinComb::operator-(const LinComb& o) const {
  LinComb r(*this);
  r -= o;
  return r;
}

LinComb LinComb::operator*(const Scalar& c) const {
  LinComb r(f_);
  r.add_scaled(*this, c);
  return r;
}

LinComb LinComb::operator-() const {
  return *this * (-Scalar::one(f_));
}

std::string LinComb::str() const {
  if (terms_.empty()) return "0";
  std::ostringstream os;
  bool first = true;
  for (const auto& [i, v] : terms_) {
    if (!first) os << " + ";
    first = false;
    if (!v.is_one()) os << v.str() << '*';
    os << i.str();
  }
  return os.str();
}

void LinComb::check_same(const LinComb& o) const {
  if (f_ != o.f_) fail("FieldMismatch", "linear combination field mismatch");
}

// ---------------------------------------------------------------------------
// SpanBasis

bool SpanBasis::insert(const LinComb& x) {
  if (x.field() != f_) fail("FieldMismatch", "span basis field mismatch");
  LinComb r = x;
  std::map<size_t, Scalar> combo{{inserted_, Scalar::one(f_)}};
  for (const Row& row : rows_) {
    Scalar c = r.coeff(row.pivot);
    if (c.is_zero()) continue;
    r.add_scaled(row.vec, -c);
    for (const auto& [j, v] : row.combo) {
      auto [it, fresh] = combo.emplace(j, -(v * c));
      if (!fresh) {
        it->second = it->second - v * c;
        if (it->second.is_zero()) combo.erase(it);
      }
    }
  }
  ++inserted_;
  if (r.is_zero()) return false;

  BasisIndex pivot = r.terms().begin()->first;
  Scalar lead = r.coeff(pivot);
  Scalar inv = lead.inv();
  r = r * inv;
  for (auto& [j, v] : combo) v = v * inv;
  // Keep the family fully reduced: eliminate the new pivot everywhere.
  for (Row& row : rows_) {
    Scalar d = row.vec.coeff(pivot);
    if (d.is_zero()) continue;
    row.vec.add_scaled(r, -d);
    for (const auto& [j, v] : combo) {
      auto [it, fresh] = row.combo.emplace(j, -(v * d));
      if (!fresh) {
        it->second = it->second - v * d;
        if (it->second.is_zero()) row.combo.erase(it);
      }
    }
  }
  rows_.push_back(Row{std::move(r), pivot, std::move(combo)});
  return true;
}

LinComb SpanBasis::reduce(const LinComb& x) const {
  LinComb r = x;
  for (const Row& row : rows_) {
    Scalar c = r.coeff(row.pivot);
    if (!c.is_zero()) r.add_scaled(row.vec, -c);
  }
  return r;
}

std::optional<std::vector<Scalar>> SpanBasis::coords_in_echelon(
    const LinComb& x) const {
  LinComb r = x;
  std::vector<Scalar> coords(rows_.size(), Scalar::zero(f_));
  for (size_t k = 0; k < rows_.size(); ++k) {
    Scalar c = r.coeff(rows_[k].pivot);
    if (c.is_zero()) continue;
    coords[k] = c;
    r.add_scaled(rows_[k].vec, -c);
  }
  if (!r.is_zero()) return std::nullopt;
  return coords;
}

std::optional<std::vector<Scalar>> SpanBasis::coords_in_inserted(
    const LinComb& x) const {
  auto ech = coords_in_echelon(x);
  if (!ech) return std::nullopt;
  std::vector<Scalar> coords(inserted_, Scalar::zero(f_));
  for (size_t k = 0; k < rows_.size(); ++k) {
    if ((*ech)[k].is_zero()) continue;
    for (const auto& [j, v] : rows_[k].combo) coords[j] = coords[j] + (*ech)[k] * v;
  }
  return coords;
}

std::vector<LinComb> SpanBasis::echelon() const {
  std::vector<LinComb> v;
  v.reserve(rows_.size());
  for (const Row& row : rows_) v.push_back(row.vec);
  return v;
}

std::vector<BasisIndex> SpanBasis::pivots() const {
  std::vector<BasisIndex> v;
  v.reserve(rows_.size());
  for (const Row& row : rows_) v.push_back(row.pivot);
  return v;
}

// ---------------------------------------------------------------------------
// Window

void Window::insert_shift_range(uint32_t block, int64_t lo, int64_t hi) {
  for (int64_t k = lo; k <= hi; ++k) insert(BasisIndex::shift(block, k));
}

void Window::insert_finite_block(uint32_t block, int64_t dim) {
  for (int64_t s = 0; s < dim; ++s) insert(BasisIndex::finite(block, s));
}

void Window::insert_periodic_copy(uint32_t block, int64_t copy, int64_t dim) {
  for (int64_t s = 0; s < dim; ++s) insert(BasisIndex::periodic(block, copy, s));
}

void Window::insert_all(const Window& o) {
  idx_.insert(o.idx_.begin(), o.idx_.end());
}

std::string Window::str() const {
  std::map<std::string, size_t> counts;
  for (const BasisIndex& i : idx_) ++counts[i.block_name()];
  std::ostringstream os;
  bool first = true;
  for (const auto& [name, n] : counts) {
    if (!first) os << ' ';
    first = false;
    os << name << '(' << n << ')';
  }
  if (first) os << "empty";
  return os.str();
}

// ---------------------------------------------------------------------------
// RepAut: construction and validation

namespace {

void require_invertible(const Mat& m, const char* what) {
  if (m.rows() != m.cols()) fail("BadInput", std::string(what) + " must be square");
  if (m.rows() == 0) fail("BadInput", std::string(what) + " must be nonempty");
  if (m.det().is_zero()) fail("NotInvertible", std::string(what) + " is singular");
}

}  // namespace

RepAut& RepAut::add_finite_block(uint32_t id, Mat m) {
  if (find_finite(id)) fail("BadInput", "duplicate finite block id");
  if (m.field() != f_) fail("FieldMismatch", "finite block field mismatch");
  require_invertible(m, "finite block");
  finite_.push_back(FiniteBlock{id, std::move(m)});
  invalidate_caches();
  return *this;
}

RepAut& RepAut::add_shift_block(uint32_t id, Scalar multiplier) {
  if (find_shift(id)) fail("BadInput", "duplicate shift block id");
  if (multiplier.field() != f_) fail("FieldMismatch", "shift multiplier field mismatch");
  if (multiplier.is_zero()) fail("NotInvertible", "shift multiplier must be nonzero");
  shift_.push_back(ShiftBlock{id, std::move(multiplier)});
  invalidate_caches();
  return *this;
}

RepAut& RepAut::add_periodic_block(uint32_t id, Mat m) {
  if (find_periodic(id)) fail("BadInput", "duplicate periodic block id");
  if (m.field() != f_) fail("FieldMismatch", "periodic block field mismatch");
  require_invertible(m, "periodic block");
  periodic_.push_back(PeriodicBlock{id, std::move(m)});
  invalidate_caches();
  return *this;
}

RepAut& RepAut::add_coupling(const BasisIndex& from, LinComb image) {
  check_index(from);
  if (from.kind != BlockKind::Finite)
    fail("BadInput", "coupling source must lie in a finite block");
  if (image.field() != f_) fail("FieldMismatch", "coupling image field mismatch");
  for (const auto& [i, c] : image.terms()) {
    check_index(i);
    if (i.kind != BlockKind::Shift)
      fail("BadInput", "coupling image must be supported on shift blocks");
  }
  if (image.is_zero()) fail("BadInput", "coupling image must be nonzero");
  if (coupling_.count(from)) fail("BadInput", "duplicate coupling source");
  coupling_.emplace(from, std::move(image));
  invalidate_caches();
  return *this;
}

RepAut& RepAut::add_perturbation(const BasisIndex& from, LinComb image) {
  check_index(from);
  if (image.field() != f_) fail("FieldMismatch", "perturbation image field mismatch");
  for (const auto& [i, c] : image.terms()) check_index(i);
  if (pert_.count(from)) fail("BadInput", "duplicate perturbation source");
  pert_.emplace(from, std::move(image));
  invalidate_caches();
  return *this;
}

const FiniteBlock* RepAut::find_finite(uint32_t id) const {
  for (const auto& b : finite_)
    if (b.id == id) return &b;
  return nullptr;
}

const ShiftBlock* RepAut::find_shift(uint32_t id) const {
  for (const auto& b : shift_)
    if (b.id == id) return &b;
  return nullptr;
}

const PeriodicBlock* RepAut::find_periodic(uint32_t id) const {
  for (const auto& b : periodic_)
    if (b.id == id) return &b;
  return nullptr;
}

void RepAut::check_index(const BasisIndex& i) const {
  switch (i.kind) {
    case BlockKind::Finite: {
      const FiniteBlock* b = find_finite(i.block);
      if (!b || i.copy != 0 || i.slot < 0 || i.slot >= static_cast<int64_t>(b->matrix.rows()))
        fail("UnknownIndex", "no basis vector " + i.str());
      return;
    }
    case BlockKind::Shift: {
      if (!find_shift(i.block) || i.copy != 0)
        fail("UnknownIndex", "no basis vector " + i.str());
      return;
    }
    case BlockKind::Periodic: {
      const PeriodicBlock* b = find_periodic(i.block);
      if (!b || i.copy < 0 || i.slot < 0 || i.slot >= static_cast<int64_t>(b->matrix.rows()))
        fail("UnknownIndex", "no basis vector " + i.str());
      return;
    }
  }
  fail("UnknownIndex", "no basis vector " + i.str());
}

void RepAut::invalidate_caches() { caches_ = std::make_shared<Caches>(); }

std::string RepAut::str() const {
  std::ostringstream os;
  os << "RepAut over " << f_.str() << ": " << finite_.size() << " finite, "
     << shift_.size() << " shift, " << periodic_.size() << " periodic"
     << ", coupling " << coupling_.size() << ", perturbation " << pert_.size();
  return os.str();
}

// ---------------------------------------------------------------------------
// RepAut: forward application

LinComb RepAut::apply_structural(const BasisIndex& i) const {
  LinComb out(f_);
  switch (i.kind) {
    case BlockKind::Finite: {
      const Mat& m = find_finite(i.block)->matrix;
      for (size_t r = 0; r < m.rows(); ++r)
        out.add(BasisIndex::finite(i.block, static_cast<int64_t>(r)), m.at(r, static_cast<size_t>(i.slot)));
      break;
    }
    case BlockKind::Shift: {
      out.add(BasisIndex::shift(i.block, i.slot + 1),
              find_shift(i.block)->multiplier);
      break;
    }
    case BlockKind::Periodic: {
      const Mat& m = find_periodic(i.block)->matrix;
      for (size_t r = 0; r < m.rows(); ++r)
        out.add(BasisIndex::periodic(i.block, i.copy, static_cast<int64_t>(r)),
                m.at(r, static_cast<size_t>(i.slot)));
      break;
    }
  }
  auto c = coupling_.find(i);
  if (c != coupling_.end()) out += c->second;
  return out;
}

LinComb RepAut::apply(const BasisIndex& i) const {
  check_index(i);
  LinComb out = apply_structural(i);
  auto p = pert_.find(i);
  if (p != pert_.end()) out += p->second;
  return out;
}

LinComb RepAut::apply(const LinComb& x) const {
  LinComb out(f_);
  for (const auto& [i, c] : x.terms()) out.add_scaled(apply(i), c);
  return out;
}

// ---------------------------------------------------------------------------
// RepAut: closed-form inverse
//
// Write u = S + P with S = D + C: D the block-diagonal part, C the one-way
// coupling (finite cells -> shift blocks), P the perturbation.  C kills
// shift vectors and D preserves blocks, so C D^{-1} C = 0 and
//   S^{-1} = D^{-1} - D^{-1} C D^{-1}.
// With T := S^{-1} P (finite rank, image U := im T):
//   u^{-1} = (I + T)^{-1} S^{-1},
//   (I + T)^{-1} x = x - (I_U + T|_U)^{-1} T x,
// which reduces inversion to one finite matrix inverse on U.

struct RepAut::InverseData {
  bool ok = false;
  std::string why;
  SpanBasis ubasis;  // echelon basis of U = im T
  Mat minv;          // inverse of (I_U + T|_U) in the echelon basis

  InverseData(Field f) : ubasis(f), minv(Mat::identity(f, 0)) {}
};

Mat RepAut::finite_inverse(uint32_t id) const {
  auto caches = caches_;
  {
    std::lock_guard<std::mutex> lock(caches->mu);
    auto it = caches->fin_inv.find(id);
    if (it != caches->fin_inv.end()) return it->second;
  }
  Mat inv = find_finite(id)->matrix.inverse();
  std::lock_guard<std::mutex> lock(caches->mu);
  return caches->fin_inv.emplace(id, std::move(inv)).first->second;
}

Mat RepAut::periodic_inverse(uint32_t id) const {
  auto caches = caches_;
  {
    std::lock_guard<std::mutex> lock(caches->mu);
    auto it = caches->per_inv.find(id);
    if (it != caches->per_inv.end()) return it->second;
  }
  Mat inv = find_periodic(id)->matrix.inverse();
  std::lock_guard<std::mutex> lock(caches->mu);
  return caches->per_inv.emplace(id, std::move(inv)).first->second;
}

LinComb RepAut::apply_diag_inverse(const LinComb& x) const {
  LinComb out(f_);
  for (const auto& [i, c] : x.terms()) {
    switch (i.kind) {
      case BlockKind::Finite: {
        Mat inv = finite_inverse(i.block);
        for (size_t r = 0; r < inv.rows(); ++r)
          out.add(BasisIndex::finite(i.block, static_cast<int64_t>(r)),
                  inv.at(r, static_cast<size_t>(i.slot)) * c);
        break;
      }
      case BlockKind::Shift: {
        out.add(BasisIndex::shift(i.block, i.slot - 1),
                find_shift(i.block)->multiplier.inv() * c);
        break;
      }
      case BlockKind::Periodic: {
        Mat inv = periodic_inverse(i.block);
        for (size_t r = 0; r < inv.rows(); ++r)
          out.add(BasisIndex::periodic(i.block, i.copy, static_cast<int64_t>(r)),
                  inv.at(r, static_cast<size_t>(i.slot)) * c);
        break;
      }
    }
  }
  return out;
}

LinComb RepAut::apply_structural_inverse(const LinComb& x) const {
  LinComb d = apply_diag_inverse(x);
  if (coupling_.empty()) return d;
  LinComb corr(f_);
  for (const auto& [i, c] : d.terms()) {
    auto it = coupling_.find(i);
    if (it != coupling_.end()) corr.add_scaled(it->second, c);
  }
  if (corr.is_zero()) return d;
  return d - apply_diag_inverse(corr);
}

LinComb RepAut::apply_pert(const LinComb& x) const {
  LinComb out(f_);
  for (const auto& [i, img] : pert_) {
    Scalar c = x.coeff(i);
    if (!c.is_zero()) out.add_scaled(img, c);
  }
  return out;
}

std::shared_ptr<const RepAut::InverseData> RepAut::inverse_data() const {
  auto caches = caches_;
  {
    std::lock_guard<std::mutex> lock(caches->mu);
    if (caches->inv) return caches->inv;
  }
  auto data = std::make_shared<InverseData>(f_);
  // U = im T spanned by T(e_i) over perturbation sources.
  for (const auto& [i, img] : pert_)
    data->ubasis.insert(apply_structural_inverse(img));
  size_t r = data->ubasis.dim();
  Mat m = Mat::identity(f_, static_cast<int>(r));
  std::vector<LinComb> basis = data->ubasis.echelon();
  bool ok = true;
  for (size_t j = 0; j < r && ok; ++j) {
    LinComb w = basis[j] + apply_structural_inverse(apply_pert(basis[j]));
    auto coords = data->ubasis.coords_in_echelon(w);
    if (!coords) fail("Internal", "perturbation core is not T-stable");
    for (size_t k = 0; k < r; ++k) m.at(k, j) = (*coords)[k];
  }
  if (r == 0) {
    data->ok = true;
  } else {
    try {
      data->minv = m.inverse();
      data->ok = ok;
    } catch (const error&) {
      data->ok = false;
      data->why = "finite core correction is singular (operator not injective)";
    }
  }
  std::lock_guard<std::mutex> lock(caches->mu);
  if (!caches->inv) caches->inv = data;
  return caches->inv;
}

bool RepAut::invertible(std::string* why) const {
  auto data = inverse_data();
  if (!data->ok && why) *why = data->why;
  return data->ok;
}

LinComb RepAut::apply_inverse(const LinComb& x) const {
  auto data = inverse_data();
  if (!data->ok) fail("NotInvertible", data->why);
  LinComb s = apply_structural_inverse(x);
  if (pert_.empty()) return s;
  LinComb ts = apply_structural_inverse(apply_pert(s));
  if (ts.is_zero()) return s;
  auto coords = data->ubasis.coords_in_echelon(ts);
  if (!coords) fail("Internal", "inverse correction escaped the finite core");
  size_t r = data->ubasis.dim();
  std::vector<Scalar> zc(r, Scalar::zero(f_));
  for (size_t k = 0; k < r; ++k)
    for (size_t j = 0; j < r; ++j)
      zc[k] = zc[k] + data->minv.at(k, j) * (*coords)[j];
  LinComb z(f_);
  std::vector<LinComb> basis = data->ubasis.echelon();
  for (size_t k = 0; k < r; ++k) z.add_scaled(basis[k], zc[k]);
  return s - z;
}

LinComb RepAut::apply_inverse(const BasisIndex& i) const {
  check_index(i);
  return apply_inverse(LinComb::unit(f_, i));
}

void RepAut::validate() const {
  // Blocks were validated on insertion; recheck the cross-cutting pieces.
  for (const auto& [from, img] : coupling_) {
    check_index(from);
    if (from.kind != BlockKind::Finite)
      fail("BadInput", "coupling source must lie in a finite block");
    for (const auto& [i, c] : img.terms())
      if (i.kind != BlockKind::Shift)
        fail("BadInput", "coupling image must be supported on shift blocks");
  }
  for (const auto& [from, img] : pert_) {
    check_index(from);
    for (const auto& [i, c] : img.terms()) check_index(i);
  }
  std::string why;
  if (!invertible(&why)) fail("NotInvertible", why);
}

// ---------------------------------------------------------------------------
// default_window

Window default_window(const RepAut& u, int64_t shift_halfwidth, int64_t margin) {
  Window w;
  for (const auto& b : u.finite_blocks()) w.insert_finite_block(b.id, b.matrix.rows());
  for (const auto& b : u.periodic_blocks()) w.insert_periodic_copy(b.id, 0, b.matrix.rows());
  for (const auto& b : u.shift_blocks())
    w.insert_shift_range(b.id, -shift_halfwidth, shift_halfwidth);

  auto widen = [&](const BasisIndex& i) {
    switch (i.kind) {
      case BlockKind::Finite:
        break;  // whole block already present
      case BlockKind::Shift:
        w.insert_shift_range(i.block, i.slot - margin, i.slot + margin);
        break;
      case BlockKind::Periodic: {
        int64_t dim = u.find_periodic(i.block)->matrix.rows();
        for (int64_t c = 0; c <= i.copy + margin; ++c)
          w.insert_periodic_copy(i.block, c, dim);
        break;
      }
    }
  };
  for (const auto& [from, img] : u.perturbation()) {
    widen(from);
    for (const auto& [i, c] : img.terms()) widen(i);
  }
  for (const auto& [from, img] : u.coupling())
    for (const auto& [i, c] : img.terms()) widen(i);
  return w;
}

// ---------------------------------------------------------------------------
// dominant_eigenvalue / induced_det

std::optional<Scalar> dominant_eigenvalue(const RepAut& u) {
  // u - lambda*id must have finite rank: shift blocks deviate with infinite
  // rank for every lambda, and a periodic family does unless its cell is the
  // scalar lambda itself.  Finite blocks, coupling and perturbation are
  // finite-rank deviations regardless.
  if (!u.shift_blocks().empty()) return std::nullopt;
  if (u.periodic_blocks().empty()) return std::nullopt;
  std::optional<Scalar> lambda;
  for (const auto& b : u.periodic_blocks()) {
    Scalar s = Scalar::zero(u.field());
    if (!b.matrix.is_scalar(&s)) return std::nullopt;
    if (lambda && !(*lambda == s)) return std::nullopt;
    lambda = s;
  }
  return lambda;
}

Scalar induced_det(const RepAut& u) {
  auto lambda = dominant_eigenvalue(u);
  if (!lambda) fail("NoDominantEigenvalue", "operator has no dominant eigenvalue");
  Field f = u.field();
  // Deviation w = u - lambda*id is supported on finite-block columns and
  // perturbation sources (no shift blocks exist here, so no coupling either).
  std::set<BasisIndex> sources;
  for (const auto& b : u.finite_blocks())
    for (size_t s = 0; s < b.matrix.rows(); ++s)
      sources.insert(BasisIndex::finite(b.id, s));
  for (const auto& [i, img] : u.perturbation()) sources.insert(i);

  SpanBasis imw(f);
  for (const BasisIndex& i : sources) {
    LinComb wi = u.apply(i);
    wi.add(i, -*lambda);
    if (!wi.is_zero()) imw.insert(wi);
  }
  size_t r = imw.dim();
  if (r == 0) return Scalar::one(f);
  std::vector<LinComb> basis = imw.echelon();
  Mat m = Mat::identity(f, r);
  for (size_t j = 0; j < r; ++j) {
    auto coords = imw.coords_in_echelon(u.apply(basis[j]));
    if (!coords) fail("Internal", "image of the deviation is not stable");
    for (size_t k = 0; k < r; ++k)
      m.at(k, j) = (*coords)[k];
  }
  return m.det();
}

// ---------------------------------------------------------------------------
// LazyOp

struct LazyOp::Impl {
  Field field;
  Rule rule;
  Rule inverse_rule;                  // may be empty
  std::optional<QuadPoly> annihilator;
  mutable std::mutex mu;
  mutable std::map<BasisIndex, LinComb> memo;

  Impl(Field f, Rule r, Rule ir, std::optional<QuadPoly> p)
      : field(f), rule(std::move(r)), inverse_rule(std::move(ir)),
        annihilator(std::move(p)) {}
};

LazyOp LazyOp::from_rule(Field f, Rule rule, Rule inverse_rule,
                         std::optional<QuadPoly> annihilator) {
  if (!rule) fail("BadInput", "operator rule must be callable");
  return LazyOp(std::make_shared<const Impl>(f, std::move(rule),
                                             std::move(inverse_rule),
                                             std::move(annihilator)));
}

LazyOp LazyOp::from_annihilated_rule(Field f, Rule rule, QuadPoly p) {
  if (!p.is_non_derogatory())
    fail("NonDerogatoryRequired",
         "annihilator witness requires a nonzero constant term");
  return from_rule(f, std::move(rule), Rule(), std::move(p));
}

LazyOp LazyOp::from_plain_rule(Field f, Rule rule) {
  return from_rule(f, std::move(rule), Rule(), std::nullopt);
}

LazyOp LazyOp::from_repaut(std::shared_ptr<const RepAut> u) {
  if (!u) fail("BadInput", "null operator");
  Field f = u->field();
  auto fwd = [u](const BasisIndex& i) { return u->apply(i); };
  auto bwd = [u](const BasisIndex& i) { return u->apply_inverse(i); };
  return from_rule(f, fwd, bwd);
}

LazyOp LazyOp::from_repaut(const RepAut& u) {
  return from_repaut(std::make_shared<const RepAut>(u));
}

LazyOp LazyOp::identity(Field f) {
  auto rule = [f](const BasisIndex& i) { return LinComb::unit(f, i); };
  return from_rule(f, rule, rule);
}

LazyOp LazyOp::scalar_op(Field f, const Scalar& lambda) {
  if (lambda.is_zero()) fail("NotInvertible", "scalar operator must be nonzero");
  Scalar linv = lambda.inv();
  auto fwd = [f, lambda](const BasisIndex& i) {
    return LinComb::unit(f, i) * lambda;
  };
  auto bwd = [f, linv](const BasisIndex& i) {
    return LinComb::unit(f, i) * linv;
  };
  return from_rule(f, fwd, bwd);
}

Field LazyOp::field() const { return impl_->field; }

LinComb LazyOp::apply(const BasisIndex& i) const {
  {
    std::lock_guard<std::mutex> lock(impl_->mu);
    auto it = impl_->memo.find(i);
    if (it != impl_->memo.end()) return it->second;
  }
  LinComb out = impl_->rule(i);
  std::lock_guard<std::mutex> lock(impl_->mu);
  return impl_->memo.emplace(i, std::move(out)).first->second;
}

LinComb LazyOp::apply(const LinComb& x) const {
  LinComb out(impl_->field);
  for (const auto& [i, c] : x.terms()) out.add_scaled(apply(i), c);
  return out;
}

bool LazyOp::has_inverse_witness() const {
  return static_cast<bool>(impl_->inverse_rule) ||
         (impl_->annihilator && impl_->annihilator->is_non_derogatory());
}

const std::optional<QuadPoly>& LazyOp::annihilator() const {
  return impl_->annihilator;
}

LazyOp LazyOp::with_annihilator(QuadPoly p) const {
  return LazyOp(std::make_shared<const Impl>(impl_->field, impl_->rule,
                                             impl_->inverse_rule, std::move(p)));
}

LazyOp invert(const LazyOp& op) {
  const auto& impl = *op.impl_;
  Field f = impl.field;
  std::optional<QuadPoly> inv_annih;
  if (impl.annihilator && impl.annihilator->is_non_derogatory())
    inv_annih = reciprocal(*impl.annihilator);

  LazyOp::Rule inv_rule = impl.inverse_rule;
  if (!inv_rule) {
    if (!impl.annihilator || !impl.annihilator->is_non_derogatory())
      fail("NoWitness", "operator carries no invertibility witness");
    // op^2 = tr*op - N  =>  op^{-1} = (tr*id - op)/N.
    auto [norm, trace] = norm_trace(*impl.annihilator);
    Scalar ninv = norm.inv();
    LazyOp self = op;
    inv_rule = [self, f, trace, ninv](const BasisIndex& i) {
      LinComb out = LinComb::unit(f, i) * trace;
      out -= self.apply(i);
      return out * ninv;
    };
  }
  // The inverse's own inverse is the original rule; annihilators swap to the
  // reciprocal polynomial.
  LazyOp self = op;
  LazyOp::Rule fwd_for_inverse = [self](const BasisIndex& i) {
    return self.apply(i);
  };
  return LazyOp::from_rule(f, std::move(inv_rule), std::move(fwd_for_inverse),
                           std::move(inv_annih));
}

LazyOp compose(const std::vector<LazyOp>& ops) {
  if (ops.empty()) fail("BadInput", "compose requires at least one operator");
  Field f = ops.front().field();
  for (const LazyOp& op : ops)
    if (op.field() != f) fail("ShapeMismatch", "composed operators disagree on the field");
  if (ops.size() == 1) return ops.front();

  std::vector<LazyOp> chain = ops;
  auto rule = [chain, f](const BasisIndex& i) {
    LinComb x = LinComb::unit(f, i);
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) x = it->apply(x);
    return x;
  };
  bool all_witnessed = true;
  for (const LazyOp& op : chain)
    if (!op.has_inverse_witness()) all_witnessed = false;
  if (!all_witnessed) return LazyOp::from_plain_rule(f, std::move(rule));

  std::vector<LazyOp> inverses;
  inverses.reserve(chain.size());
  for (const LazyOp& op : chain) inverses.push_back(invert(op));
  auto inv_rule = [inverses, f](const BasisIndex& i) {
    LinComb x = LinComb::unit(f, i);
    for (const LazyOp& op : inverses) x = op.apply(x);
    return x;
  };
  return LazyOp::from_rule(f, std::move(rule), std::move(inv_rule));
}

// ---------------------------------------------------------------------------
// Window checks

std::string CheckReport::str() const {
  std::ostringstream os;
  os << (pass ? "pass" : "FAIL") << " (" << checked << " checked";
  if (!failures.empty()) os << ", " << failures.size() << " failures";
  os << ')';
  for (size_t k = 0; k < failures.size() && k < 4; ++k) os << "\n  " << failures[k];
  if (failures.size() > 4) os << "\n  ...";
  return os.str();
}

CheckReport check_annihilated(const LazyOp& op, const QuadPoly& p,
                              const Window& W) {
  CheckReport rep;
  Field f = op.field();
  if (p.field() != f) fail("FieldMismatch", "annihilator field mismatch");
  for (const BasisIndex& i : W) {
    LinComb e = LinComb::unit(f, i);
    LinComb oe = op.apply(i);
    LinComb r = op.apply(oe) + oe * p.c1() + e * p.c0();
    ++rep.checked;
    if (!r.is_zero()) {
      rep.pass = false;
      rep.failures.push_back(i.str() + ": residual " + r.str());
    }
  }
  return rep;
}

CheckReport equal_on_window(const LazyOp& op1, const LazyOp& op2,
                            const Window& W) {
  CheckReport rep;
  if (op1.field() != op2.field())
    fail("ShapeMismatch", "compared operators disagree on the field");
  for (const BasisIndex& i : W) {
    LinComb d = op1.apply(i) - op2.apply(i);
    ++rep.checked;
    if (!d.is_zero()) {
      rep.pass = false;
      rep.failures.push_back(i.str() + ": difference " + d.str());
    }
  }
  return rep;
}

std::string CyclicReport::str() const {
  std::ostringstream os;
  if (independent)
    os << "independent orbit segment at depth " << depth << ", spans "
       << spanned.size() << " basis vectors";
  else
    os << "DEPENDENT orbit segment at depth " << depth;
  return os.str();
}

CyclicReport cyclic_window_cert(const LazyOp& v, const LinComb& x, int64_t N) {
  if (N < 1) fail("BadInput", "depth must be at least 1");
  CyclicReport rep;
  rep.depth = N;
  Field f = v.field();
  LazyOp vinv = invert(v);

  std::vector<LinComb> orbit;
  orbit.reserve(static_cast<size_t>(2 * N + 1));
  LinComb back = x;
  for (int64_t k = 0; k < N; ++k) back = vinv.apply(back);
  orbit.push_back(back);
  for (int64_t k = -N; k < N; ++k) orbit.push_back(v.apply(orbit.back()));

  SpanBasis span(f);
  bool independent = true;
  for (const LinComb& y : orbit)
    if (!span.insert(y)) independent = false;
  rep.independent = independent;

  std::set<BasisIndex> support;
  for (const LinComb& y : orbit)
    for (const auto& [i, c] : y.terms()) support.insert(i);
  for (const BasisIndex& i : support)
    if (span.contains(LinComb::unit(f, i))) rep.spanned.push_back(i);
  return rep;
}

std::optional<std::map<int64_t, Scalar>> express_in_orbit_basis(
    const LazyOp& v, const LinComb& x, const LinComb& target, int64_t maxN) {
  Field f = v.field();
  LazyOp vinv = invert(v);

  SpanBasis span(f);
  std::vector<int64_t> order;  // exponent of the j-th inserted vector
  LinComb fwd = x, bwd = x;

  auto solved = [&]() -> std::optional<std::map<int64_t, Scalar>> {
    auto coords = span.coords_in_inserted(target);
    if (!coords) return std::nullopt;
    std::map<int64_t, Scalar> out;
    for (size_t j = 0; j < order.size(); ++j)
      if (!(*coords)[j].is_zero()) out.emplace(order[j], (*coords)[j]);
    return out;
  };

  span.insert(x);
  order.push_back(0);
  if (auto s = solved()) return s;
  for (int64_t n = 1; n <= maxN; ++n) {
    fwd = v.apply(fwd);
    span.insert(fwd);
    order.push_back(n);
    bwd = vinv.apply(bwd);
    span.insert(bwd);
    order.push_back(-n);
    if (auto s = solved()) return s;
  }
  return std::nullopt;
}

}  // namespace invo
