#include "gridstep/layout.hpp"

#include <array>

#include "gridstep/errors.hpp"

namespace gridstep {

namespace {

constexpr std::array<const char*, 8> kSegmentNames = {"Vr", "Vi", "Qg", "Pg", "SlackRe", "SlackIm", "Lambda", "Mu"};
constexpr std::array<const char*, 21> kKeyNames = {
    "bus",    "gen",    "kcl_re", "kcl_im", "pin_re",  "pin_im",   "vmag",     "angle_ref", "pg_min", "pg_max",
    "qg_min", "qg_max", "vm_min", "vm_max", "ramp_up", "ramp_down", "flow_from", "flow_to", "pg_fixed", "qg_fixed",  "index"};

}  // namespace

std::string to_string(Segment s) { return kSegmentNames[static_cast<std::size_t>(s)]; }
std::string to_string(KeyKind k) { return kKeyNames[static_cast<std::size_t>(k)]; }

std::optional<Segment> segment_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kSegmentNames.size(); ++i)
    if (s == kSegmentNames[i]) return static_cast<Segment>(i);
  return std::nullopt;
}

std::optional<KeyKind> key_kind_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kKeyNames.size(); ++i)
    if (s == kKeyNames[i]) return static_cast<KeyKind>(i);
  return std::nullopt;
}

void StateLayout::append(Segment segment, std::vector<ElementKey> keys) {
  if (has(segment)) throw StructuralError("layout already has segment " + to_string(segment));
  for (std::size_t i = 0; i < keys.size(); ++i) {
    auto [it, inserted] = index_.emplace(std::make_pair(segment, keys[i]), size_ + i);
    if (!inserted)
      throw StructuralError("repeated key " + to_string(keys[i].kind) + " " + std::to_string(keys[i].id) +
                            " in segment " + to_string(segment));
  }
  segments_.push_back({segment, size_, std::move(keys)});
  size_ += segments_.back().size();
}

const StateLayout::SegmentInfo* StateLayout::find(Segment segment) const {
  for (const auto& s : segments_)
    if (s.segment == segment) return &s;
  return nullptr;
}

std::size_t StateLayout::offset(Segment segment) const {
  const auto* s = find(segment);
  if (!s) throw StructuralError("layout has no segment " + to_string(segment));
  return s->offset;
}

std::size_t StateLayout::count(Segment segment) const {
  const auto* s = find(segment);
  return s ? s->size() : 0;
}

std::optional<std::size_t> StateLayout::index_of(Segment segment, ElementKey key) const {
  auto it = index_.find({segment, key});
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::pair<Segment, ElementKey> StateLayout::element_at(std::size_t position) const {
  for (const auto& s : segments_)
    if (position >= s.offset && position < s.offset + s.size()) return {s.segment, s.keys[position - s.offset]};
  throw StructuralError("position " + std::to_string(position) + " outside layout");
}

bool StateLayout::operator==(const StateLayout& other) const {
  if (size_ != other.size_ || segments_.size() != other.segments_.size()) return false;
  for (std::size_t i = 0; i < segments_.size(); ++i)
    if (segments_[i].segment != other.segments_[i].segment || segments_[i].keys != other.segments_[i].keys)
      return false;
  return true;
}

SolverState::SolverState(LayoutPtr l, Eigen::VectorXd v) : layout(std::move(l)), values(std::move(v)) {
  if (static_cast<std::size_t>(values.size()) != layout->size())
    throw StructuralError("state length " + std::to_string(values.size()) + " does not match layout length " +
                          std::to_string(layout->size()));
}

SolverState::SolverState(LayoutPtr l) : layout(std::move(l)) {
  values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout->size()));
}

double SolverState::get(Segment s, ElementKey k) const {
  auto i = layout->index_of(s, k);
  if (!i) throw StructuralError("state has no entry " + to_string(s) + "/" + to_string(k.kind) + " " + std::to_string(k.id));
  return values[static_cast<Eigen::Index>(*i)];
}

void SolverState::set(Segment s, ElementKey k, double v) {
  auto i = layout->index_of(s, k);
  if (!i) throw StructuralError("state has no entry " + to_string(s) + "/" + to_string(k.kind) + " " + std::to_string(k.id));
  values[static_cast<Eigen::Index>(*i)] = v;
}

Eigen::Ref<const Eigen::VectorXd> SolverState::segment(Segment s) const {
  const auto* info = layout->find(s);
  if (!info) return values.segment(0, 0);
  return values.segment(static_cast<Eigen::Index>(info->offset), static_cast<Eigen::Index>(info->size()));
}

Eigen::Ref<Eigen::VectorXd> SolverState::segment(Segment s) {
  const auto* info = layout->find(s);
  if (!info) return values.segment(0, 0);
  return values.segment(static_cast<Eigen::Index>(info->offset), static_cast<Eigen::Index>(info->size()));
}

SolverState carry_over(const SolverState& from, const LayoutPtr& target,
                       const std::function<double(Segment, ElementKey)>& fill) {
  SolverState out(target);
  for (const auto& seg : target->segments()) {
    for (std::size_t i = 0; i < seg.size(); ++i) {
      auto src = from.layout->index_of(seg.segment, seg.keys[i]);
      out.values[static_cast<Eigen::Index>(seg.offset + i)] =
          src ? from.values[static_cast<Eigen::Index>(*src)] : fill(seg.segment, seg.keys[i]);
    }
  }
  return out;
}

}  // namespace gridstep
