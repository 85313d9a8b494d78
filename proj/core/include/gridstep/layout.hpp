#pragma once

#include <Eigen/Core>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace gridstep {

/// Named blocks of the unknown vector.
enum class Segment : std::uint8_t { Vr, Vi, Qg, Pg, SlackRe, SlackIm, Lambda, Mu };

/// What an entry refers to: a network element for primal unknowns, or the equation /
/// inequality a multiplier belongs to.
enum class KeyKind : std::uint8_t {
  Bus,
  Generator,
  KclRe,
  KclIm,
  PinRe,
  PinIm,
  VoltageMagnitude,
  AngleReference,
  PgMin,
  PgMax,
  QgMin,
  QgMax,
  VmMin,
  VmMax,
  RampUp,
  RampDown,
  FlowFrom,
  FlowTo,
  PgFixed,
  QgFixed,
  Index,
};

struct ElementKey {
  KeyKind kind = KeyKind::Index;
  int id = 0;

  auto operator<=>(const ElementKey&) const = default;
};

std::string to_string(Segment s);
std::string to_string(KeyKind k);
std::optional<Segment> segment_from_string(const std::string& s);
std::optional<KeyKind> key_kind_from_string(const std::string& s);

/// Ordered, contiguous, non-overlapping segments; every (segment, key) pair maps to exactly
/// one position and back.
class StateLayout {
 public:
  struct SegmentInfo {
    Segment segment;
    std::size_t offset;
    std::vector<ElementKey> keys;

    std::size_t size() const noexcept { return keys.size(); }
  };

  /// Appends a segment after the existing ones. Throws StructuralError on a repeated
  /// segment or a repeated key inside the segment.
  void append(Segment segment, std::vector<ElementKey> keys);

  std::size_t size() const noexcept { return size_; }
  const std::vector<SegmentInfo>& segments() const noexcept { return segments_; }
  const SegmentInfo* find(Segment segment) const;
  bool has(Segment segment) const { return find(segment) != nullptr; }
  std::size_t offset(Segment segment) const;  // throws StructuralError if absent
  std::size_t count(Segment segment) const;   // 0 if absent

  std::optional<std::size_t> index_of(Segment segment, ElementKey key) const;
  std::pair<Segment, ElementKey> element_at(std::size_t position) const;

  bool operator==(const StateLayout& other) const;

 private:
  std::vector<SegmentInfo> segments_;
  std::map<std::pair<Segment, ElementKey>, std::size_t> index_;
  std::size_t size_ = 0;
};

using LayoutPtr = std::shared_ptr<const StateLayout>;

/// Flat unknown vector tagged with its layout.
struct SolverState {
  LayoutPtr layout;
  Eigen::VectorXd values;

  SolverState() = default;
  SolverState(LayoutPtr l, Eigen::VectorXd v);
  explicit SolverState(LayoutPtr l);

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
  bool finite() const { return values.allFinite(); }

  double get(Segment s, ElementKey k) const;
  void set(Segment s, ElementKey k, double v);
  Eigen::Ref<const Eigen::VectorXd> segment(Segment s) const;
  Eigen::Ref<Eigen::VectorXd> segment(Segment s);
};

/// Builds a state on `target`, copying every entry whose (segment, key) exists in `from`
/// and asking `fill` for the rest. Entries of `from` with no counterpart are dropped.
SolverState carry_over(const SolverState& from, const LayoutPtr& target,
                       const std::function<double(Segment, ElementKey)>& fill);

}  // namespace gridstep
