#include "twoscale/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace twoscale {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

SparseMatrix SparseMatrix::from_triplets(int rows, int cols, std::vector<Triplet> triplets) {
  SparseMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  m.row_ptr_.assign(rows + 1, 0);
  m.cols_idx_.reserve(triplets.size());
  m.values_.reserve(triplets.size());
  std::size_t i = 0;
  for (int r = 0; r < rows; ++r) {
    while (i < triplets.size() && triplets[i].row == r) {
      const int c = triplets[i].col;
      double v = 0.0;
      while (i < triplets.size() && triplets[i].row == r && triplets[i].col == c) {
        v += triplets[i].value;
        ++i;
      }
      m.cols_idx_.push_back(c);
      m.values_.push_back(v);
    }
    m.row_ptr_[r + 1] = static_cast<int>(m.cols_idx_.size());
  }
  return m;
}

SparseMatrix SparseMatrix::weighted_sum(
    const std::vector<std::pair<double, const SparseMatrix*>>& terms) {
  std::vector<Triplet> trip;
  int rows = 0, cols = 0;
  for (const auto& [w, mat] : terms) {
    rows = std::max(rows, mat->rows());
    cols = std::max(cols, mat->cols());
    for (int r = 0; r < mat->rows(); ++r) {
      auto cs = mat->row_cols(r);
      auto vs = mat->row_values(r);
      for (std::size_t k = 0; k < cs.size(); ++k) trip.push_back({r, cs[k], w * vs[k]});
    }
  }
  return from_triplets(rows, cols, std::move(trip));
}

void SparseMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  if (static_cast<int>(x.size()) != cols_ || static_cast<int>(y.size()) != rows_)
    throw ValidationError("sparse multiply: dimension mismatch");
  for (int r = 0; r < rows_; ++r) {
    double s = 0.0;
    for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) s += values_[k] * x[cols_idx_[k]];
    y[r] = s;
  }
}

void SparseMatrix::multiply_add(std::span<const double> x, std::span<double> y, double scale) const {
  for (int r = 0; r < rows_; ++r) {
    double s = 0.0;
    for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) s += values_[k] * x[cols_idx_[k]];
    y[r] += scale * s;
  }
}

void SparseMatrix::multiply_transpose(std::span<const double> x, std::span<double> y) const {
  if (static_cast<int>(x.size()) != rows_ || static_cast<int>(y.size()) != cols_)
    throw ValidationError("sparse transpose multiply: dimension mismatch");
  std::fill(y.begin(), y.end(), 0.0);
  for (int r = 0; r < rows_; ++r)
    for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) y[cols_idx_[k]] += values_[k] * x[r];
}

double SparseMatrix::quadratic_form(std::span<const double> u, std::span<const double> v) const {
  double s = 0.0;
  for (int r = 0; r < rows_; ++r) {
    double row = 0.0;
    for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) row += values_[k] * v[cols_idx_[k]];
    s += u[r] * row;
  }
  return s;
}

std::vector<double> SparseMatrix::diagonal() const {
  std::vector<double> d(rows_, 0.0);
  for (int r = 0; r < rows_; ++r)
    for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
      if (cols_idx_[k] == r) d[r] += values_[k];
  return d;
}

std::vector<double> SparseMatrix::row_sums() const {
  std::vector<double> d(rows_, 0.0);
  for (int r = 0; r < rows_; ++r)
    for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) d[r] += values_[k];
  return d;
}

SparseMatrix SparseMatrix::with_identity_rows(const std::vector<int>& rows) const {
  std::vector<char> flag(rows_, 0);
  for (int r : rows) flag[r] = 1;
  std::vector<Triplet> trip;
  trip.reserve(values_.size());
  for (int r = 0; r < rows_; ++r) {
    if (flag[r]) {
      trip.push_back({r, r, 1.0});
      continue;
    }
    auto cs = row_cols(r);
    auto vs = row_values(r);
    for (std::size_t k = 0; k < cs.size(); ++k)
      if (!flag[cs[k]]) trip.push_back({r, cs[k], vs[k]});
  }
  return from_triplets(rows_, cols_, std::move(trip));
}

void SparseMatrix::dump_coordinate(std::ostream& os) const {
  for (int r = 0; r < rows_; ++r)
    for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
      os << r << " " << cols_idx_[k] << " " << format_full(values_[k]) << "\n";
}

bool SparseMatrix::symmetry_probe(Rng& rng, int trials, double tol) const {
  if (rows_ != cols_) return false;
  std::vector<double> u(rows_), v(rows_);
  for (int t = 0; t < trials; ++t) {
    for (auto& x : u) x = rng.uniform(-1, 1);
    for (auto& x : v) x = rng.uniform(-1, 1);
    const double uav = quadratic_form(u, v);
    const double vau = quadratic_form(v, u);
    if (std::abs(uav - vau) > tol * (1.0 + std::abs(uav))) return false;
  }
  return true;
}

CgResult cg_solve(const LinOp& op, std::span<const double> rhs, std::span<double> x,
                  const CgOptions& options) {
  const int n = static_cast<int>(rhs.size());
  const int maxit = options.max_iterations > 0
                        ? options.max_iterations
                        : static_cast<int>(10.0 * std::sqrt(static_cast<double>(n))) + 200;
  const double rhs_norm = norm2(rhs);
  if (rhs_norm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    return {0, 0.0};
  }

  std::vector<double> r(n), z(n), p(n), ap(n);
  op(x, ap);
  for (int i = 0; i < n; ++i) r[i] = rhs[i] - ap[i];

  auto precondition = [&](std::span<const double> in, std::span<double> out) {
    if (options.precondition)
      options.precondition(in, out);
    else
      std::copy(in.begin(), in.end(), out.begin());
  };

  precondition(r, z);
  p = z;
  double rz = dot(r, z);
  double res = norm2(r);

  for (int it = 0; it < maxit; ++it) {
    if (res <= options.tol * rhs_norm) return {it, res / rhs_norm};
    op(p, ap);
    const double pap = dot(p, ap);
    if (pap <= 0.0)
      throw SolveError("cg: operator is not positive definite (p^T A p = " + format_full(pap) + ")",
                       res / rhs_norm, it);
    const double alpha = rz / pap;
    for (int i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    res = norm2(r);
    if (options.on_iteration) options.on_iteration(it + 1, res);
    precondition(r, z);
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  if (res <= options.tol * rhs_norm) return {maxit, res / rhs_norm};
  throw SolveError("cg: no convergence in " + std::to_string(maxit) +
                       " iterations, relative residual " + format_full(res / rhs_norm),
                   res / rhs_norm, maxit);
}

std::vector<double> cg_solve(const SparseMatrix& a, std::span<const double> rhs,
                             const CgOptions& options) {
  std::vector<double> x(rhs.size(), 0.0);
  cg_solve([&a](std::span<const double> in, std::span<double> out) { a.multiply(in, out); }, rhs, x,
           options);
  return x;
}

void KroneckerOperator::apply(std::span<const double> x, std::span<double> y,
                              std::vector<double>* scratch) const {
  const int n1 = a->rows();
  const int n2 = b->rows();
  if (static_cast<int>(x.size()) != n1 * n2 || static_cast<int>(y.size()) != n1 * n2)
    throw ValidationError("kron apply: dimension mismatch");
  std::vector<double> local;
  std::vector<double>& w = scratch ? *scratch : local;
  w.assign(static_cast<std::size_t>(n1) * n2, 0.0);
  // w(:,i) = B x(:,i)
  for (int i = 0; i < n1; ++i)
    b->multiply(x.subspan(static_cast<std::size_t>(i) * n2, n2),
                std::span<double>(w.data() + static_cast<std::size_t>(i) * n2, n2));
  // y(:,k) = sum_i A(k,i) w(:,i)
  std::fill(y.begin(), y.end(), 0.0);
  for (int k = 0; k < n1; ++k) {
    auto cs = a->row_cols(k);
    auto vs = a->row_values(k);
    double* yk = y.data() + static_cast<std::size_t>(k) * n2;
    for (std::size_t e = 0; e < cs.size(); ++e) {
      const double* wi = w.data() + static_cast<std::size_t>(cs[e]) * n2;
      const double av = vs[e];
      for (int j = 0; j < n2; ++j) yk[j] += av * wi[j];
    }
  }
}

void kron_apply(const KroneckerOperator& k, std::span<const double> x, std::span<double> y) {
  k.apply(x, y);
}

ProfileCholesky::ProfileCholesky(const SparseMatrix& a) {
  n_ = a.rows();
  if (a.rows() != a.cols()) throw ValidationError("cholesky: matrix must be square");
  start_.assign(n_, 0);
  for (int r = 0; r < n_; ++r) {
    int first = r;
    for (int c : a.row_cols(r)) first = std::min(first, c);
    start_[r] = first;
  }
  // profile must be monotone enough for the solve loops; widen rows so that
  // start_[r] <= start_[c] never traps the update (standard envelope rule
  // needs no widening: the factor fills only within each row's envelope)
  offset_.assign(n_ + 1, 0);
  for (int r = 0; r < n_; ++r) offset_[r + 1] = offset_[r] + static_cast<std::size_t>(r - start_[r] + 1);
  data_.assign(offset_[n_], 0.0);

  auto entry = [&](int r, int c) -> double& { return data_[offset_[r] + (c - start_[r])]; };

  // scatter A's lower triangle
  for (int r = 0; r < n_; ++r) {
    auto cs = a.row_cols(r);
    auto vs = a.row_values(r);
    for (std::size_t k = 0; k < cs.size(); ++k)
      if (cs[k] <= r) entry(r, cs[k]) = vs[k];
  }

  for (int i = 0; i < n_; ++i) {
    for (int j = start_[i]; j < i; ++j) {
      double s = entry(i, j);
      const int lo = std::max(start_[i], start_[j]);
      for (int k = lo; k < j; ++k) s -= entry(i, k) * entry(j, k);
      entry(i, j) = s / entry(j, j);
    }
    double s = entry(i, i);
    for (int k = start_[i]; k < i; ++k) s -= entry(i, k) * entry(i, k);
    if (s <= 0.0)
      throw SolveError("cholesky: nonpositive pivot at row " + std::to_string(i), s, i);
    entry(i, i) = std::sqrt(s);
  }
}

void ProfileCholesky::solve(std::span<const double> b, std::span<double> x) const {
  std::copy(b.begin(), b.end(), x.begin());
  // forward: L y = b
  for (int i = 0; i < n_; ++i) {
    const double* row = data_.data() + offset_[i];
    double s = x[i];
    for (int k = start_[i]; k < i; ++k) s -= row[k - start_[i]] * x[k];
    x[i] = s / row[i - start_[i]];
  }
  // backward: L^T x = y
  for (int i = n_ - 1; i >= 0; --i) {
    const double* row = data_.data() + offset_[i];
    x[i] /= row[i - start_[i]];
    const double xi = x[i];
    for (int k = start_[i]; k < i; ++k) x[k] -= row[k - start_[i]] * xi;
  }
}

std::vector<double> ProfileCholesky::solve(std::span<const double> b) const {
  std::vector<double> x(b.size());
  solve(b, x);
  return x;
}

void BlockOperator3::apply(std::span<const double> x, std::span<double> y) const {
  std::fill(y.begin(), y.end(), 0.0);
  std::array<std::size_t, 4> off = {0, static_cast<std::size_t>(dims[0]),
                                    static_cast<std::size_t>(dims[0] + dims[1]),
                                    static_cast<std::size_t>(dims[0] + dims[1] + dims[2])};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      if (block[r][c])
        block[r][c](x.subspan(off[c], dims[c]), y.subspan(off[r], dims[r]));
}

BlockSolveResult block_solve(const BlockOperator3& op, std::span<const double> rhs, double tol,
                             int max_iterations, std::span<const double> x0) {
  const int n = op.dim();
  BlockSolveResult result;
  result.x.assign(n, 0.0);
  if (!x0.empty()) std::copy(x0.begin(), x0.end(), result.x.begin());

  CgOptions opt;
  opt.tol = tol;
  opt.max_iterations = max_iterations;
  if (op.precondition[0] || op.precondition[1] || op.precondition[2]) {
    std::array<std::size_t, 3> off = {0, static_cast<std::size_t>(op.dims[0]),
                                      static_cast<std::size_t>(op.dims[0] + op.dims[1])};
    opt.precondition = [&op, off](std::span<const double> r, std::span<double> z) {
      for (int b = 0; b < 3; ++b) {
        auto rb = r.subspan(off[b], op.dims[b]);
        auto zb = z.subspan(off[b], op.dims[b]);
        if (op.precondition[b])
          op.precondition[b](rb, zb);
        else
          std::copy(rb.begin(), rb.end(), zb.begin());
      }
    };
  }
  const CgResult cg = cg_solve(
      [&op](std::span<const double> in, std::span<double> out) { op.apply(in, out); }, rhs,
      result.x, opt);
  result.iterations = cg.iterations;
  result.relative_residual = cg.relative_residual;
  return result;
}

}  // namespace twoscale
