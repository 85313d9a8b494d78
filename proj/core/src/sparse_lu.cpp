#include "gridstep/sparse_lu.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

namespace gridstep {

std::string to_string(Singularity s) {
  switch (s) {
    case Singularity::None: return "none";
    case Singularity::ZeroRow: return "zero row";
    case Singularity::ZeroColumn: return "zero column";
    case Singularity::ZeroPivot: return "zero pivot";
  }
  return "?";
}

bool SparseLu::same_pattern(const SparseMatrix& a) const {
  if (a.rows() != rows_ || static_cast<std::size_t>(a.nonZeros()) != inner_.size()) return false;
  return std::equal(outer_.begin(), outer_.end(), a.outerIndexPtr()) &&
         std::equal(inner_.begin(), inner_.end(), a.innerIndexPtr());
}

bool SparseLu::factorize(const SparseMatrix& input) {
  diag_ = {};
  if (input.rows() != input.cols()) throw std::invalid_argument("sparse LU needs a square matrix");
  SparseMatrix a = input;
  a.makeCompressed();
  const Index n = a.rows();

  // Structural zeros first, so the report can name a row as well as a column.
  std::vector<char> row_hit(static_cast<std::size_t>(n), 0);
  for (Index c = 0; c < n; ++c) {
    bool col_hit = false;
    for (SparseMatrix::InnerIterator it(a, c); it; ++it) {
      if (it.value() != 0.0) {
        col_hit = true;
        row_hit[static_cast<std::size_t>(it.row())] = 1;
      }
    }
    if (!col_hit && diag_.singularity == Singularity::None) {
      diag_.singularity = Singularity::ZeroColumn;
      diag_.index = c;
    }
  }
  for (Index r = 0; r < n; ++r) {
    if (!row_hit[static_cast<std::size_t>(r)]) {
      diag_.singularity = Singularity::ZeroRow;
      diag_.index = r;
      break;
    }
  }
  if (diag_.singular()) {
    diag_.message = "singular matrix: " + to_string(diag_.singularity) + " " + std::to_string(diag_.index);
    return false;
  }

  if (!same_pattern(a)) {
    lu_.setPivotThreshold(pivot_threshold_);
    lu_.analyzePattern(a);
    ++analyses_;
    rows_ = n;
    outer_.assign(a.outerIndexPtr(), a.outerIndexPtr() + n + 1);
    inner_.assign(a.innerIndexPtr(), a.innerIndexPtr() + a.nonZeros());
  }
  lu_.factorize(a);
  if (lu_.info() != Eigen::Success) {
    diag_.singularity = Singularity::ZeroPivot;
    std::smatch m;
    const std::string msg = lu_.lastErrorMessage();
    if (std::regex_search(msg, m, std::regex("COLUMN AT (\\d+)"))) {
      // Eigen reports the 1-based column of the column-permuted matrix A·P⁻¹.
      const Index permuted = std::stol(m[1].str()) - 1;
      const auto& perm = lu_.colsPermutation().indices();
      for (Index k = 0; k < perm.size(); ++k)
        if (perm[k] == permuted) diag_.index = k;
    }
    diag_.message = "singular matrix: zero pivot at column " + std::to_string(diag_.index);
    return false;
  }

  double lo = INFINITY, hi = 0.0;
  const auto& lstore = lu_.matrixL().m_mapL;
  for (Index j = 0; j < n; ++j) {
    for (std::remove_cvref_t<decltype(lstore)>::InnerIterator it(lstore, j); it; ++it) {
      if (it.index() == j) {
        lo = std::min(lo, std::abs(it.value()));
        hi = std::max(hi, std::abs(it.value()));
        break;
      }
    }
  }
  diag_.pivot_ratio = (n == 0 || hi == 0.0) ? 1.0 : lo / hi;
  return true;
}

Eigen::VectorXd SparseLu::solve(const Eigen::VectorXd& rhs) const { return lu_.solve(rhs); }

Eigen::VectorXd sparse_lu_solve(const SparseMatrix& j, const Eigen::VectorXd& rhs, double pivot_threshold) {
  SparseLu lu(pivot_threshold);
  if (!lu.factorize(j)) throw SingularMatrixError(lu.diagnostics());
  return lu.solve(rhs);
}

}  // namespace gridstep
