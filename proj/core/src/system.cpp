#include "gridstep/system.hpp"

#include <algorithm>
#include <stdexcept>

#include "gridstep/errors.hpp"

namespace gridstep {

std::string EquationSystem::row_label(Index row) const {
  auto [seg, key] = layout()->element_at(static_cast<std::size_t>(row));
  return "row " + std::to_string(row) + " (" + to_string(seg) + " " + to_string(key.kind) + " " +
         std::to_string(key.id) + ")";
}

void EquationSystem::check_state(const SolverState& x) const {
  if (!x.layout) throw StructuralError("state has no layout");
  if (x.layout != layout() && !(*x.layout == *layout()))
    throw StructuralError("state layout does not match the system layout");
  if (static_cast<std::size_t>(x.values.size()) != layout()->size())
    throw StructuralError("state length does not match the system layout");
}

SparsePattern::SparsePattern(Index rows, Index cols, const std::vector<Index>& trip_rows,
                             const std::vector<Index>& trip_cols) {
  std::vector<Eigen::Triplet<double, Index>> t;
  t.reserve(trip_rows.size());
  for (std::size_t k = 0; k < trip_rows.size(); ++k) t.emplace_back(trip_rows[k], trip_cols[k], 0.0);
  shape_.resize(rows, cols);
  shape_.setFromTriplets(t.begin(), t.end());
  shape_.makeCompressed();

  const auto* outer = shape_.outerIndexPtr();
  const auto* inner = shape_.innerIndexPtr();
  slot_.resize(trip_rows.size());
  for (std::size_t k = 0; k < trip_rows.size(); ++k) {
    const auto* begin = inner + outer[trip_cols[k]];
    const auto* end = inner + outer[trip_cols[k] + 1];
    const auto* it = std::lower_bound(begin, end, static_cast<SparseMatrix::StorageIndex>(trip_rows[k]));
    slot_[k] = it - inner;
  }
}

SparseMatrix SparsePattern::fill(const std::vector<double>& values) const {
  if (values.size() != slot_.size())
    throw std::logic_error("assembly emitted " + std::to_string(values.size()) + " Jacobian entries, pattern has " +
                           std::to_string(slot_.size()));
  SparseMatrix m = shape_;
  double* v = m.valuePtr();
  std::fill(v, v + m.nonZeros(), 0.0);
  for (std::size_t k = 0; k < slot_.size(); ++k) v[slot_[k]] += values[k];
  return m;
}

}  // namespace gridstep
