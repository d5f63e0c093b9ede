#include "pairloc/data.hpp"

#include <cmath>

namespace pairloc {

bool Box::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
         x1 < x2 && y1 < y2;
}

Dataset::Dataset(std::vector<Bag> bags, std::set<ClassId> classes)
    : bags_(std::move(bags)), classes_(std::move(classes)) {
  const bool infer_classes = classes_.empty();
  bool first = true;
  for (std::size_t b = 0; b < bags_.size(); ++b) {
    const Bag& bag = bags_[b];
    if (!index_.emplace(bag.id, b).second) {
      throw DataError("duplicate bag id '" + bag.id + "'");
    }
    if (bag.proposals.empty()) {
      throw DataError("bag '" + bag.id + "' has no proposals");
    }
    for (const ClassId& c : bag.labels) {
      if (c == kBackground) throw DataError("bag '" + bag.id + "' carries the background label");
      if (infer_classes) {
        classes_.insert(c);
      } else if (!classes_.count(c)) {
        throw DataError("bag '" + bag.id + "' has label '" + c + "' outside the class set");
      }
    }
    for (const Proposal& p : bag.proposals) {
      if (first) {
        dim_ = p.features.size();
        generic_dim_ = p.generic().size();
        first = false;
      }
      if (p.features.size() != dim_ || p.features.empty()) {
        throw DataError("bag '" + bag.id + "' has a proposal with feature dimension " +
                        std::to_string(p.features.size()) + ", expected " +
                        std::to_string(dim_));
      }
      if (p.generic().size() != generic_dim_) {
        throw DataError("bag '" + bag.id + "' has inconsistent generic feature dimension");
      }
      for (double v : p.features) {
        if (!std::isfinite(v)) throw DataError("bag '" + bag.id + "' has non-finite features");
      }
      if (p.box && !p.box->valid()) {
        throw DataError("bag '" + bag.id + "' has a degenerate or non-finite box");
      }
    }
  }
  classes_.erase(kBackground);
}

const Bag& Dataset::bag(const BagId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw DataError("unknown bag id '" + id + "'");
  return bags_[it->second];
}

std::optional<std::size_t> Dataset::index_of(const BagId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Dataset Dataset::subset(const std::vector<std::size_t>& bag_indices) const {
  std::vector<Bag> picked;
  picked.reserve(bag_indices.size());
  for (std::size_t i : bag_indices) picked.push_back(bags_.at(i));
  if (picked.empty()) {
    Dataset out;
    out.classes_ = classes_;
    out.dim_ = dim_;
    out.generic_dim_ = generic_dim_;
    return out;
  }
  return Dataset(std::move(picked), classes_);
}

bool Dataset::fully_labeled() const {
  for (const Bag& bag : bags_) {
    for (const Proposal& p : bag.proposals) {
      if (!p.gt_class) return false;
    }
  }
  return true;
}

BagSplit positive_negative_split(const Dataset& dataset, const ClassId& c) {
  if (!dataset.classes().count(c)) throw DataError("unknown class '" + c + "'");
  BagSplit split;
  for (std::size_t b = 0; b < dataset.size(); ++b) {
    (dataset.bags()[b].has_label(c) ? split.positive : split.negative).push_back(b);
  }
  return split;
}

bool is_feasible(const Selection& selection, const Dataset& dataset) {
  if (!dataset.classes().count(selection.cls)) {
    throw DataError("selection refers to unknown class '" + selection.cls + "'");
  }
  std::size_t positives = 0;
  for (const Bag& bag : dataset.bags()) {
    auto it = selection.chosen.find(bag.id);
    if (bag.has_label(selection.cls)) {
      ++positives;
      if (it == selection.chosen.end() || it->second >= bag.size()) return false;
    } else if (it != selection.chosen.end()) {
      return false;
    }
  }
  // Entries for ids the dataset does not know about.
  return selection.chosen.size() == positives;
}

int unary_label(const Selection& selection, const Bag& bag, std::size_t index) {
  auto it = selection.chosen.find(bag.id);
  return it != selection.chosen.end() && it->second == index ? 1 : 0;
}

int induced_pairwise(const Selection& selection, const Bag& bag_a, std::size_t index_a,
                     const Bag& bag_b, std::size_t index_b) {
  if (bag_a.id == bag_b.id) {
    throw DataError("pairwise labels are only defined across different bags");
  }
  return unary_label(selection, bag_a, index_a) * unary_label(selection, bag_b, index_b);
}

}  // namespace pairloc
