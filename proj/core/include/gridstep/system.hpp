#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <memory>
#include <string>
#include <vector>

#include "gridstep/layout.hpp"

namespace gridstep {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Index = Eigen::Index;

struct ResidualJacobian {
  Eigen::VectorXd residual;
  SparseMatrix jacobian;  // compressed column storage, pattern fixed per system
};

/// Evaluator contract shared by power flow, infeasibility power flow and the OPF KKT system.
/// Rows and columns are both aligned to layout(); evaluate() is pure and thread-safe.
class EquationSystem {
 public:
  virtual ~EquationSystem() = default;

  virtual const LayoutPtr& layout() const = 0;
  virtual ResidualJacobian evaluate(const SolverState& x) const = 0;
  virtual Eigen::VectorXd residual(const SolverState& x) const { return evaluate(x).residual; }

  /// Largest α in (0, 1] such that x + α·dx stays admissible. Interior-point systems override.
  virtual double max_step(const SolverState& x, const Eigen::VectorXd& dx) const {
    (void)x;
    (void)dx;
    return 1.0;
  }

  /// Human-readable name of an equation row, used in singularity diagnostics.
  virtual std::string row_label(Index row) const;

  std::size_t size() const { return layout()->size(); }

 protected:
  /// Throws StructuralError unless x was built on a layout equal to this system's.
  void check_state(const SolverState& x) const;
};

using SystemPtr = std::shared_ptr<const EquationSystem>;

/// Collects residual and Jacobian triplets during assembly. Entries addressed to a negative
/// row or column are dropped, which is how terminals without their own rows are skipped.
/// Residual sums are carried in extended precision so the result does not depend on the
/// order in which devices are stamped.
class StampAccumulator {
 public:
  StampAccumulator() = default;
  explicit StampAccumulator(Index rows, bool with_jacobian = true)
      : residual_(ResidualSum::Zero(rows)), with_jacobian_(with_jacobian) {}

  void add_residual(Index row, double v) {
    if (row >= 0) residual_[row] += v;
  }
  void add_jacobian(Index row, Index col, double v) {
    if (row < 0 || col < 0 || !with_jacobian_) return;
    rows_.push_back(row);
    cols_.push_back(col);
    values_.push_back(v);
  }

  Eigen::VectorXd residual() const { return residual_.cast<double>(); }
  const std::vector<Index>& rows() const { return rows_; }
  const std::vector<Index>& cols() const { return cols_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t triplet_count() const { return values_.size(); }

  void reserve(std::size_t n) {
    rows_.reserve(n);
    cols_.reserve(n);
    values_.reserve(n);
  }

 private:
  using ResidualSum = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
  ResidualSum residual_;
  bool with_jacobian_ = true;
  std::vector<Index> rows_;
  std::vector<Index> cols_;
  std::vector<double> values_;
};

/// Fixed sparsity pattern recorded from one assembly pass. Later passes that emit the same
/// triplet sequence are scattered straight into the stored value array, in emission order,
/// so sums are reproducible and explicit zeros keep their slots.
class SparsePattern {
 public:
  SparsePattern() = default;
  SparsePattern(Index rows, Index cols, const std::vector<Index>& trip_rows, const std::vector<Index>& trip_cols);

  /// Throws std::logic_error if the triplet sequence differs in length from the recorded one.
  SparseMatrix fill(const std::vector<double>& values) const;
  std::size_t triplet_count() const { return slot_.size(); }
  Index nonzeros() const { return shape_.nonZeros(); }

 private:
  SparseMatrix shape_;
  std::vector<Index> slot_;
};

}  // namespace gridstep
