#pragma once

// Sparse symmetric linear algebra: CSR matrices, preconditioned conjugate
// gradients, Kronecker-structured operator application and a profile
// (skyline) Cholesky used for the block preconditioner.

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "twoscale/common.hpp"

namespace twoscale {

struct Triplet {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

class SparseMatrix {
 public:
  SparseMatrix() = default;

  // Duplicate entries are summed; columns per row end up sorted.
  static SparseMatrix from_triplets(int rows, int cols, std::vector<Triplet> triplets);

  // result = sum_i terms[i].first * (*terms[i].second); patterns may differ.
  static SparseMatrix weighted_sum(const std::vector<std::pair<double, const SparseMatrix*>>& terms);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int nnz() const { return static_cast<int>(values_.size()); }

  void multiply(std::span<const double> x, std::span<double> y) const;      // y = A x
  void multiply_add(std::span<const double> x, std::span<double> y, double scale = 1.0) const;
  void multiply_transpose(std::span<const double> x, std::span<double> y) const;

  double quadratic_form(std::span<const double> u, std::span<const double> v) const;  // u^T A v

  std::vector<double> diagonal() const;
  std::vector<double> row_sums() const;

  // Row access: spans over (column, value) arrays.
  std::span<const int> row_cols(int i) const {
    return {cols_idx_.data() + row_ptr_[i], static_cast<std::size_t>(row_ptr_[i + 1] - row_ptr_[i])};
  }
  std::span<const double> row_values(int i) const {
    return {values_.data() + row_ptr_[i], static_cast<std::size_t>(row_ptr_[i + 1] - row_ptr_[i])};
  }

  // Copy with the listed rows and columns replaced by the identity.
  SparseMatrix with_identity_rows(const std::vector<int>& rows) const;

  void dump_coordinate(std::ostream& os) const;  // "i j value" per nonzero

  // Randomized check that u^T A v == v^T A u.
  bool symmetry_probe(Rng& rng, int trials = 10, double tol = 1e-12) const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<int> row_ptr_ = {0};
  std::vector<int> cols_idx_;
  std::vector<double> values_;
};

using LinOp = std::function<void(std::span<const double>, std::span<double>)>;

struct CgOptions {
  double tol = 1e-10;       // relative residual target
  int max_iterations = 0;   // 0: 10*sqrt(dim)+200
  LinOp precondition;       // optional, z = P^{-1} r
  std::function<void(int, double)> on_iteration;  // (iteration, residual norm)
};

struct CgResult {
  int iterations = 0;
  double relative_residual = 0.0;
};

// Solves op x = rhs for symmetric positive definite op, starting from the
// contents of x. Throws SolveError (with the final residual) when the
// iteration budget is exhausted.
CgResult cg_solve(const LinOp& op, std::span<const double> rhs, std::span<double> x,
                  const CgOptions& options = {});

std::vector<double> cg_solve(const SparseMatrix& a, std::span<const double> rhs,
                             const CgOptions& options = {});

// A (x) B acting on vectors laid out micro-fastest: for the coefficient
// matrix X with X(j,i) = x[i*N2+j], (A (x) B) x = vec(B X A^T).
struct KroneckerOperator {
  const SparseMatrix* a = nullptr;  // N1 x N1 macro factor
  const SparseMatrix* b = nullptr;  // N2 x N2 micro factor

  int dim() const { return a->rows() * b->rows(); }
  void apply(std::span<const double> x, std::span<double> y, std::vector<double>* scratch = nullptr) const;
};

void kron_apply(const KroneckerOperator& k, std::span<const double> x, std::span<double> y);

// Profile (skyline) Cholesky A = L L^T for small SPD factor matrices.
// Fill stays inside the row profile, so banded FEM matrices factor cheaply.
class ProfileCholesky {
 public:
  ProfileCholesky() = default;
  explicit ProfileCholesky(const SparseMatrix& a);

  int dim() const { return n_; }
  void solve(std::span<const double> b, std::span<double> x) const;
  std::vector<double> solve(std::span<const double> b) const;

 private:
  int n_ = 0;
  std::vector<int> start_;    // first stored column per row
  std::vector<std::size_t> offset_;  // row start into data_
  std::vector<double> data_;  // packed lower triangle incl. diagonal
};

// Coupled 3-block system (a,b,c). Off-diagonal entries may be empty (zero
// blocks); preconditioners are per-block solves.
struct BlockOperator3 {
  std::array<int, 3> dims{};
  std::array<std::array<LinOp, 3>, 3> block{};       // y_r += A_rc x_c
  std::array<LinOp, 3> precondition{};               // z_r = P_r^{-1} r_r

  int dim() const { return dims[0] + dims[1] + dims[2]; }
  void apply(std::span<const double> x, std::span<double> y) const;
};

struct BlockSolveResult {
  std::vector<double> x;
  int iterations = 0;
  double relative_residual = 0.0;
};

// Preconditioned CG on the full block operator with the block-diagonal
// preconditioner assembled from the per-block solves.
BlockSolveResult block_solve(const BlockOperator3& op, std::span<const double> rhs, double tol,
                             int max_iterations = 0, std::span<const double> x0 = {});

// Small dense helpers shared by preconditioner setup and tests.
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

}  // namespace twoscale
