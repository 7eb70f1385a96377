#include "linalg.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

namespace invo {

// --------------------------------------------------------------------- Mat

Mat::Mat(Field f, size_t rows, size_t cols)
    : f_(f), r_(rows), c_(cols), a_(rows * cols, Scalar::zero(f)) {}

Mat Mat::identity(Field f, size_t n) {
  Mat m(f, n, n);
  for (size_t i = 0; i < n; ++i) m.at(i, i) = Scalar::one(f);
  return m;
}

Mat Mat::scalar_mat(Field f, size_t n, const Scalar& c) {
  Mat m(f, n, n);
  for (size_t i = 0; i < n; ++i) m.at(i, i) = c;
  return m;
}

Mat Mat::from_rows(Field f, const std::vector<std::vector<Scalar>>& rows) {
  if (rows.empty()) return Mat(f, 0, 0);
  Mat m(f, rows.size(), rows[0].size());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.c_) fail("BadInput", "ragged matrix rows");
    for (size_t j = 0; j < m.c_; ++j) m.at(i, j) = rows[i][j];
  }
  return m;
}

Mat Mat::of(Field f, const std::vector<std::vector<long>>& rows) {
  std::vector<std::vector<Scalar>> s;
  s.reserve(rows.size());
  for (const auto& r : rows) {
    std::vector<Scalar> sr;
    sr.reserve(r.size());
    for (long v : r) sr.emplace_back(f, v);
    s.push_back(std::move(sr));
  }
  return from_rows(f, s);
}

Mat Mat::operator+(const Mat& o) const {
  if (r_ != o.r_ || c_ != o.c_) fail("BadInput", "matrix shape mismatch in +");
  Mat m = *this;
  for (size_t i = 0; i < a_.size(); ++i) m.a_[i] = m.a_[i] + o.a_[i];
  return m;
}

Mat Mat::operator-(const Mat& o) const { return *this + (-o); }

Mat Mat::operator-() const {
  Mat m = *this;
  for (auto& x : m.a_) x = -x;
  return m;
}

Mat Mat::operator*(const Mat& o) const {
  if (c_ != o.r_) fail("BadInput", "matrix shape mismatch in *");
  Mat m(f_, r_, o.c_);
  for (size_t i = 0; i < r_; ++i)
    for (size_t k = 0; k < c_; ++k) {
      const Scalar& v = at(i, k);
      if (v.is_zero()) continue;
      for (size_t j = 0; j < o.c_; ++j)
        m.at(i, j) = m.at(i, j) + v * o.at(k, j);
    }
  return m;
}

Mat Mat::operator*(const Scalar& c) const {
  Mat m = *this;
  for (auto& x : m.a_) x = x * c;
  return m;
}

Mat operator*(const Scalar& c, const Mat& m) { return m * c; }

bool Mat::operator==(const Mat& o) const {
  return r_ == o.r_ && c_ == o.c_ && f_ == o.f_ && a_ == o.a_;
}

Mat Mat::transpose() const {
  Mat m(f_, c_, r_);
  for (size_t i = 0; i < r_; ++i)
    for (size_t j = 0; j < c_; ++j) m.at(j, i) = at(i, j);
  return m;
}

Scalar Mat::trace() const {
  Scalar t = Scalar::zero(f_);
  for (size_t i = 0; i < std::min(r_, c_); ++i) t = t + at(i, i);
  return t;
}

namespace {

/// In-place row reduction to (reduced) row echelon form.
/// Returns pivot column indices; optionally tracks the determinant sign/scale.
std::vector<size_t> rref(Mat& m, Scalar* det_scale = nullptr) {
  Field f = m.field();
  if (det_scale) *det_scale = Scalar::one(f);
  std::vector<size_t> pivots;
  size_t row = 0;
  for (size_t col = 0; col < m.cols() && row < m.rows(); ++col) {
    size_t sel = row;
    while (sel < m.rows() && m.at(sel, col).is_zero()) ++sel;
    if (sel == m.rows()) continue;
    if (sel != row) {
      for (size_t j = 0; j < m.cols(); ++j) std::swap(m.at(sel, j), m.at(row, j));
      if (det_scale) *det_scale = -*det_scale;
    }
    Scalar piv = m.at(row, col);
    if (det_scale) *det_scale = *det_scale * piv;
    Scalar inv = piv.inv();
    for (size_t j = col; j < m.cols(); ++j) m.at(row, j) = m.at(row, j) * inv;
    for (size_t i = 0; i < m.rows(); ++i) {
      if (i == row || m.at(i, col).is_zero()) continue;
      Scalar c = m.at(i, col);
      for (size_t j = col; j < m.cols(); ++j)
        m.at(i, j) = m.at(i, j) - c * m.at(row, j);
    }
    pivots.push_back(col);
    ++row;
  }
  return pivots;
}

}  // namespace

Scalar Mat::det() const {
  if (!is_square()) fail("BadInput", "determinant of a non-square matrix");
  if (r_ == 0) return Scalar::one(f_);
  Mat m = *this;
  Scalar scale = Scalar::one(f_);
  auto pivots = rref(m, &scale);
  if (pivots.size() < r_) return Scalar::zero(f_);
  return scale;
}

size_t Mat::rank() const {
  Mat m = *this;
  return rref(m).size();
}

Mat Mat::inverse() const {
  if (!is_square()) fail("BadInput", "inverse of a non-square matrix");
  Mat aug(f_, r_, 2 * r_);
  for (size_t i = 0; i < r_; ++i) {
    for (size_t j = 0; j < r_; ++j) aug.at(i, j) = at(i, j);
    aug.at(i, r_ + i) = Scalar::one(f_);
  }
  auto pivots = rref(aug);
  if (pivots.size() < r_ || (r_ > 0 && pivots.back() >= r_))
    fail("Singular", "matrix is not invertible");
  Mat inv(f_, r_, r_);
  for (size_t i = 0; i < r_; ++i)
    for (size_t j = 0; j < r_; ++j) inv.at(i, j) = aug.at(i, r_ + j);
  return inv;
}

Mat Mat::pow(long k) const {
  if (!is_square()) fail("BadInput", "power of a non-square matrix");
  if (k < 0) return inverse().pow(-k);
  Mat r = identity(f_, r_), b = *this;
  unsigned long e = static_cast<unsigned long>(k);
  while (e) {
    if (e & 1) r = r * b;
    b = b * b;
    e >>= 1;
  }
  return r;
}

bool Mat::is_zero() const {
  return std::all_of(a_.begin(), a_.end(), [](const Scalar& x) { return x.is_zero(); });
}

bool Mat::is_identity() const {
  return is_square() && *this == identity(f_, r_);
}

bool Mat::is_scalar(Scalar* c_out) const {
  if (!is_square() || r_ == 0) return false;
  Scalar c = at(0, 0);
  for (size_t i = 0; i < r_; ++i)
    for (size_t j = 0; j < c_; ++j)
      if (!(at(i, j) == (i == j ? c : Scalar::zero(f_)))) return false;
  if (c_out) *c_out = c;
  return true;
}

std::optional<std::vector<Scalar>> Mat::solve(const std::vector<Scalar>& b) const {
  if (b.size() != r_) fail("BadInput", "rhs length mismatch in solve");
  Mat aug(f_, r_, c_ + 1);
  for (size_t i = 0; i < r_; ++i) {
    for (size_t j = 0; j < c_; ++j) aug.at(i, j) = at(i, j);
    aug.at(i, c_) = b[i];
  }
  auto pivots = rref(aug);
  if (!pivots.empty() && pivots.back() == c_) return std::nullopt;  // 0 = 1 row
  std::vector<Scalar> x(c_, Scalar::zero(f_));
  for (size_t i = 0; i < pivots.size(); ++i) x[pivots[i]] = aug.at(i, c_);
  return x;
}

std::vector<std::vector<Scalar>> Mat::nullspace() const {
  Mat m = *this;
  auto pivots = rref(m);
  std::vector<bool> is_pivot(c_, false);
  for (size_t p : pivots) is_pivot[p] = true;
  std::vector<std::vector<Scalar>> basis;
  for (size_t freec = 0; freec < c_; ++freec) {
    if (is_pivot[freec]) continue;
    std::vector<Scalar> v(c_, Scalar::zero(f_));
    v[freec] = Scalar::one(f_);
    for (size_t i = 0; i < pivots.size(); ++i)
      if (pivots[i] < freec) v[pivots[i]] = -m.at(i, freec);
    basis.push_back(std::move(v));
  }
  return basis;
}

std::string Mat::str() const {
  std::ostringstream out;
  out << "[";
  for (size_t i = 0; i < r_; ++i) {
    if (i) out << ",";
    out << "[";
    for (size_t j = 0; j < c_; ++j) {
      if (j) out << ",";
      out << at(i, j).str();
    }
    out << "]";
  }
  out << "]";
  return out.str();
}

// --------------------------------------------------- quadratic annihilators

bool annihilates(const Mat& A, const QuadPoly& p) {
  if (!A.is_square()) fail("BadInput", "annihilates() needs a square matrix");
  Field f = A.field();
  return (A * A + A * p.c1() + Mat::scalar_mat(f, A.rows(), p.c0())).is_zero();
}

Mat star_mat(const Mat& A, const QuadPoly& p) {
  auto [n, tr] = norm_trace(p);
  (void)n;
  return Mat::scalar_mat(A.field(), A.rows(), tr) - A;
}

Mat companion(const QuadPoly& p) {
  Field f = p.field();
  Mat m(f, 2, 2);
  m.at(0, 1) = -p.c0();
  m.at(1, 0) = Scalar::one(f);
  m.at(1, 1) = -p.c1();
  return m;
}

Mat eval_poly(const Poly& f, const Mat& A) {
  Field fd = A.field();
  Mat r(fd, A.rows(), A.rows());
  for (int i = f.degree(); i >= 0; --i) r = r * A + Mat::scalar_mat(fd, A.rows(), f.coeff(i));
  return r;
}

// ----------------------------------------------------- minimal polynomials

namespace {

std::vector<Scalar> mat_apply(const Mat& A, const std::vector<Scalar>& x) {
  std::vector<Scalar> y(A.rows(), Scalar::zero(A.field()));
  for (size_t i = 0; i < A.rows(); ++i)
    for (size_t j = 0; j < A.cols(); ++j)
      if (!A.at(i, j).is_zero()) y[i] = y[i] + A.at(i, j) * x[j];
  return y;
}

std::vector<Scalar> unit_vec(Field f, size_t n, size_t i) {
  std::vector<Scalar> v(n, Scalar::zero(f));
  v[i] = Scalar::one(f);
  return v;
}

Mat cols_to_mat(Field f, size_t n, const std::vector<std::vector<Scalar>>& cols) {
  Mat m(f, n, cols.size());
  for (size_t j = 0; j < cols.size(); ++j)
    for (size_t i = 0; i < n; ++i) m.at(i, j) = cols[j][i];
  return m;
}

}  // namespace

Poly min_poly_of_vector(const Mat& A, const std::vector<Scalar>& x) {
  Field f = A.field();
  size_t n = A.rows();
  std::vector<std::vector<Scalar>> krylov{x};
  std::vector<Scalar> cur = x;
  for (size_t d = 1; d <= n + 1; ++d) {
    cur = mat_apply(A, cur);
    auto sol = cols_to_mat(f, n, krylov).solve(cur);
    if (sol) {
      std::vector<Scalar> coeffs(d + 1, Scalar::zero(f));
      for (size_t i = 0; i < d; ++i) coeffs[i] = -(*sol)[i];
      coeffs[d] = Scalar::one(f);
      return Poly::from_coeffs(f, std::move(coeffs));
    }
    krylov.push_back(cur);
  }
  fail("Internal", "Krylov sequence did not terminate");
}

Poly min_poly(const Mat& A) {
  Field f = A.field();
  Poly result = Poly(Scalar::one(f));
  for (size_t i = 0; i < A.rows(); ++i)
    result = lcm(result, min_poly_of_vector(A, unit_vec(f, A.rows(), i)));
  return result;
}

// --------------------------------------------------- Frobenius decomposition

namespace {

/// Pairwise-coprime multiset refinement (gcd-free basis): every input is a
/// product of powers of the output elements.
std::vector<Poly> gcd_free_basis(std::vector<Poly> in) {
  std::vector<Poly> work;
  for (auto& p : in)
    if (p.degree() >= 1) work.push_back(p.monic());
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t i = 0; i < work.size() && !changed; ++i)
      for (size_t j = i + 1; j < work.size() && !changed; ++j) {
        Poly h = gcd(work[i], work[j]);
        if (h.degree() < 1) continue;
        Poly a = work[i].divmod(h).first, b = work[j].divmod(h).first;
        std::vector<Poly> next;
        for (size_t k = 0; k < work.size(); ++k)
          if (k != i && k != j) next.push_back(work[k]);
        for (const Poly& p : {a, b, h})
          if (p.degree() >= 1) next.push_back(p);
        work = std::move(next);
        changed = true;
      }
  }
  return work;
}

int valuation(Poly f, const Poly& c) {
  int v = 0;
  while (f.degree() >= c.degree()) {
    auto [q, r] = f.divmod(c);
    if (!r.is_zero()) break;
    f = q;
    ++v;
  }
  return v;
}

/// Splits lcm(f,g) = f1 * g1 with f1 | f, g1 | g and gcd(f1,g1) = 1.
std::pair<Poly, Poly> coprime_split(const Poly& f, const Poly& g) {
  Field fd = f.field();
  Poly f1 = Poly(Scalar::one(fd)), g1 = Poly(Scalar::one(fd));
  for (const Poly& c : gcd_free_basis({f, g})) {
    int vf = valuation(f, c), vg = valuation(g, c);
    if (vf >= vg) {
      for (int i = 0; i < vf; ++i) f1 = f1 * c;
    } else {
      for (int i = 0; i < vg; ++i) g1 = g1 * c;
    }
  }
  return {f1, g1};
}

void frobenius_worker(const Mat& M, const std::vector<std::vector<Scalar>>& B,
                      std::vector<FrobeniusPart>& out) {
  Field f = M.field();
  size_t m = M.rows();
  if (m == 0) return;

  // A vector of maximal order (its minimal polynomial is min_poly(M)).
  std::vector<Scalar> v = unit_vec(f, m, 0);
  Poly fv = min_poly_of_vector(M, v);
  for (size_t i = 1; i < m; ++i) {
    std::vector<Scalar> e = unit_vec(f, m, i);
    Poly ge = min_poly_of_vector(M, e);
    Poly l = lcm(fv, ge);
    if (l == fv) continue;
    auto [f1, g1] = coprime_split(fv, ge);
    std::vector<Scalar> v2 = mat_apply(eval_poly(fv.divmod(f1).first, M), v);
    std::vector<Scalar> e2 = mat_apply(eval_poly(ge.divmod(g1).first, M), e);
    for (size_t k = 0; k < m; ++k) v2[k] = v2[k] + e2[k];
    v = std::move(v2);
    fv = l;
  }
  int d = fv.degree();

  // Krylov column basis of the cyclic subspace Z(v), completed to a basis.
  std::vector<std::vector<Scalar>> cols{v};
  for (int k = 1; k < d; ++k) cols.push_back(mat_apply(M, cols.back()));
  for (size_t i = 0; i < m && cols.size() < m; ++i) {
    auto cand = unit_vec(f, m, i);
    auto test = cols;
    test.push_back(cand);
    if (cols_to_mat(f, m, test).rank() == test.size()) cols.push_back(cand);
  }
  Mat full = cols_to_mat(f, m, cols);

  // Dual functional phi with phi(M^i v) = delta_{i,d-1}, zero on the
  // completion; the stable complement is the kernel of all phi o M^k.
  Mat fullinv = full.inverse();
  std::vector<Scalar> phi(m, Scalar::zero(f));
  for (size_t j = 0; j < m; ++j) phi[j] = fullinv.at(static_cast<size_t>(d) - 1, j);
  Mat R(f, m, m);
  Mat Mt = M.transpose();
  std::vector<Scalar> row = phi;
  for (size_t k = 0; k < m; ++k) {
    for (size_t j = 0; j < m; ++j) R.at(k, j) = row[j];
    row = mat_apply(Mt, row);  // row * M
  }
  auto W = R.nullspace();

  FrobeniusPart part;
  part.degree = d;
  part.invariant = fv;
  part.generator.assign(B[0].size(), Scalar::zero(f));
  for (size_t i = 0; i < m; ++i)
    for (size_t k = 0; k < B[i].size(); ++k)
      part.generator[k] = part.generator[k] + v[i] * B[i][k];
  out.push_back(std::move(part));

  if (W.empty()) return;
  Mat N = cols_to_mat(f, m, W);
  Mat Mres(f, W.size(), W.size());
  for (size_t j = 0; j < W.size(); ++j) {
    auto img = mat_apply(M, W[j]);
    auto sol = N.solve(img);
    if (!sol) fail("Internal", "complement is not stable");
    for (size_t i = 0; i < W.size(); ++i) Mres.at(i, j) = (*sol)[i];
  }
  std::vector<std::vector<Scalar>> Bres;
  for (size_t j = 0; j < W.size(); ++j) {
    std::vector<Scalar> b(B[0].size(), Scalar::zero(f));
    for (size_t i = 0; i < m; ++i)
      for (size_t k = 0; k < b.size(); ++k) b[k] = b[k] + W[j][i] * B[i][k];
    Bres.push_back(std::move(b));
  }
  frobenius_worker(Mres, Bres, out);
}

}  // namespace

std::vector<FrobeniusPart> frobenius(const Mat& A) {
  if (!A.is_square()) fail("BadInput", "frobenius() needs a square matrix");
  if (A.rows() > 0 && A.det().is_zero())
    fail("Singular", "frobenius() requires an invertible matrix");
  std::vector<std::vector<Scalar>> B;
  for (size_t i = 0; i < A.rows(); ++i) B.push_back(unit_vec(A.field(), A.rows(), i));
  std::vector<FrobeniusPart> parts;
  frobenius_worker(A, B, parts);
  return parts;
}

std::vector<Poly> invariant_factors(const Mat& A) {
  std::vector<Poly> out;
  for (auto& p : frobenius(A)) out.push_back(p.invariant);
  return out;
}

bool similar_to_inverse(const Mat& A) {
  auto fa = invariant_factors(A);
  auto fb = invariant_factors(A.inverse());
  return fa == fb;
}

// ------------------------------------------------------ finite-rank squeeze

Mat compress_finite_rank(const FiniteRankOp& w,
                         std::vector<SparseVec>* basis_out) {
  Field f = w.field;

  // Support coordinates of all images.
  std::vector<int64_t> support;
  for (const auto& [k, img] : w.images)
    for (const auto& [j, c] : img)
      if (!c.is_zero()) support.push_back(j);
  std::sort(support.begin(), support.end());
  support.erase(std::unique(support.begin(), support.end()), support.end());
  std::map<int64_t, size_t> coord;
  for (size_t i = 0; i < support.size(); ++i) coord[support[i]] = i;
  size_t dim = support.size();

  auto densify = [&](const SparseVec& v) {
    std::vector<Scalar> d(dim, Scalar::zero(f));
    for (const auto& [j, c] : v) d[coord.at(j)] = d[coord.at(j)] + c;
    return d;
  };

  // Echelon basis of im w with elimination records over the source keys.
  std::vector<std::vector<Scalar>> ech;   // echelon vectors, pivot set
  std::vector<size_t> ech_pivot;
  std::vector<SparseVec> rec;             // ech[i] = sum rec[i][k] * w(e_k)
  auto reduce = [&](std::vector<Scalar>& v, SparseVec& r) {
    for (size_t i = 0; i < ech.size(); ++i) {
      Scalar c = v[ech_pivot[i]];
      if (c.is_zero()) continue;
      for (size_t j = 0; j < dim; ++j) v[j] = v[j] - c * ech[i][j];
      for (const auto& [k, rc] : rec[i]) {
        auto it = r.find(k);
        if (it == r.end())
          r[k] = -(c * rc);
        else
          it->second = it->second - c * rc;
      }
    }
  };

  for (const auto& [k, img] : w.images) {
    auto v = densify(img);
    SparseVec r{{k, Scalar::one(f)}};
    reduce(v, r);
    size_t piv = dim;
    for (size_t j = 0; j < dim; ++j)
      if (!v[j].is_zero()) {
        piv = j;
        break;
      }
    if (piv == dim) continue;  // dependent image
    Scalar inv = v[piv].inv();
    for (auto& x : v) x = x * inv;
    for (auto& [kk, rc] : r) rc = rc * inv;
    ech.push_back(std::move(v));
    ech_pivot.push_back(piv);
    rec.push_back(std::move(r));
  }
  size_t r_dim = ech.size();

  // Coordinates (w.r.t. the echelon basis) of w applied to each basis vector.
  auto apply_w = [&](const std::vector<Scalar>& dense_vec) {
    SparseVec out;
    for (size_t j = 0; j < dim; ++j) {
      if (dense_vec[j].is_zero()) continue;
      auto it = w.images.find(support[j]);
      if (it == w.images.end()) continue;
      for (const auto& [kk, c] : it->second) {
        auto o = out.find(kk);
        if (o == out.end())
          out[kk] = dense_vec[j] * c;
        else
          o->second = o->second + dense_vec[j] * c;
      }
    }
    return out;
  };
  auto coords_of = [&](SparseVec img) {
    auto v = densify(img);
    std::vector<Scalar> coords(r_dim, Scalar::zero(f));
    for (size_t i = 0; i < r_dim; ++i) {
      Scalar c = v[ech_pivot[i]];
      coords[i] = c;
      if (c.is_zero()) continue;
      for (size_t j = 0; j < dim; ++j) v[j] = v[j] - c * ech[i][j];
    }
    for (size_t j = 0; j < dim; ++j)
      if (!v[j].is_zero()) fail("Internal", "image escaped im w");
    return coords;
  };

  std::vector<std::vector<Scalar>> wcoords;  // w(ech[i]) in echelon coords
  for (size_t i = 0; i < r_dim; ++i) wcoords.push_back(coords_of(apply_w(ech[i])));

  // Pivot columns of span{w(ech[i])}; unit vectors at the remaining columns
  // are echelon basis vectors completing w(im w) inside im w.
  Mat T(f, r_dim, r_dim);
  for (size_t i = 0; i < r_dim; ++i)
    for (size_t j = 0; j < r_dim; ++j) T.at(i, j) = wcoords[i][j];
  Mat Tred = T;
  auto pivots = rref(Tred);
  std::vector<bool> is_pivot(r_dim, false);
  for (size_t p : pivots) is_pivot[p] = true;
  std::vector<size_t> completing;
  for (size_t j = 0; j < r_dim; ++j)
    if (!is_pivot[j]) completing.push_back(j);

  size_t total = r_dim + completing.size();
  Mat result(f, total, total);
  // Columns for the im-w part.
  for (size_t i = 0; i < r_dim; ++i)
    for (size_t j = 0; j < r_dim; ++j) result.at(j, i) = wcoords[i][j];
  // Columns for the preimage part: w(x_q) = ech[q].
  for (size_t qi = 0; qi < completing.size(); ++qi)
    result.at(completing[qi], r_dim + qi) = Scalar::one(f);

  if (basis_out) {
    basis_out->clear();
    for (size_t i = 0; i < r_dim; ++i) {
      SparseVec b;
      for (size_t j = 0; j < dim; ++j)
        if (!ech[i][j].is_zero()) b[support[j]] = ech[i][j];
      basis_out->push_back(std::move(b));
    }
    for (size_t q : completing) {
      SparseVec b;
      for (const auto& [k, c] : rec[q])
        if (!c.is_zero()) b[k] = c;
      basis_out->push_back(std::move(b));
    }
  }
  return result;
}

// ------------------------------------------------------------- random mats

Mat random_invertible(Field f, size_t n, std::mt19937_64& rng) {
  if (f.is_rational()) {
    for (;;) {
      Mat m(f, n, n);
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
          m.at(i, j) = Scalar(f, static_cast<long>(rng() % 7) - 3);
      if (!m.det().is_zero()) return m;
    }
  }
  uint32_t q = f.characteristic();
  for (;;) {
    Mat m(f, n, n);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j)
        m.at(i, j) = Scalar(f, static_cast<long>(rng() % q));
    if (!m.det().is_zero()) return m;
  }
}

Mat random_annihilated(Field f, size_t n, const QuadPoly& p,
                       std::mt19937_64& rng) {
  auto r = roots(p);
  if (!r) fail("NotSplit", "random_annihilated needs a split quadratic");
  Mat J(f, n, n);
  if (r->x == r->y) {
    size_t jordan = n >= 2 ? rng() % (n / 2 + 1) : 0;
    size_t i = 0;
    for (size_t b = 0; b < jordan; ++b) {
      J.at(i, i) = r->x;
      J.at(i, i + 1) = Scalar::one(f);
      J.at(i + 1, i + 1) = r->x;
      i += 2;
    }
    for (; i < n; ++i) J.at(i, i) = r->x;
  } else {
    size_t k = rng() % (n + 1);
    for (size_t i = 0; i < n; ++i) J.at(i, i) = i < k ? r->x : r->y;
  }
  Mat S = random_invertible(f, n, rng);
  return S * J * S.inverse();
}

}  // namespace invo
