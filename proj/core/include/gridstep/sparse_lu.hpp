#pragma once

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridstep/system.hpp"

namespace gridstep {

enum class Singularity { None, ZeroRow, ZeroColumn, ZeroPivot };

std::string to_string(Singularity s);

struct LuDiagnostics {
  Singularity singularity = Singularity::None;
  Index index = -1;          // row or column of the original matrix
  double pivot_ratio = 0.0;  // min |U_ii| / max |U_ii|
  std::string message;

  bool singular() const { return singularity != Singularity::None; }
};

/// Raised by sparse_lu_solve; carries the same diagnosis as LuDiagnostics.
class SingularMatrixError : public std::runtime_error {
 public:
  explicit SingularMatrixError(LuDiagnostics d) : std::runtime_error(d.message), diag_(std::move(d)) {}
  const LuDiagnostics& diagnostics() const noexcept { return diag_; }

 private:
  LuDiagnostics diag_;
};

/// Sparse LU with threshold partial pivoting. The symbolic analysis (column ordering and
/// elimination tree) is kept and reused while the sparsity pattern stays the same.
class SparseLu {
 public:
  explicit SparseLu(double pivot_threshold = 1.0) : pivot_threshold_(pivot_threshold) {}

  /// Returns false on structural or numerical singularity; see diagnostics().
  bool factorize(const SparseMatrix& a);
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

  const LuDiagnostics& diagnostics() const noexcept { return diag_; }
  /// Number of symbolic analyses performed so far.
  int analyses() const noexcept { return analyses_; }

 private:
  bool same_pattern(const SparseMatrix& a) const;

  double pivot_threshold_;
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
  std::vector<SparseMatrix::StorageIndex> outer_, inner_;
  Index rows_ = -1;
  int analyses_ = 0;
  LuDiagnostics diag_;
};

/// One-shot solve of J·x = rhs. Throws SingularMatrixError with the offending index.
Eigen::VectorXd sparse_lu_solve(const SparseMatrix& j, const Eigen::VectorXd& rhs, double pivot_threshold = 1.0);

}  // namespace gridstep
