#include "pairloc/metrics.hpp"

#include <algorithm>

namespace pairloc {

double iou(const Box& a, const Box& b) {
  if (!a.valid() || !b.valid()) throw DataError("iou: degenerate box");
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0 || h <= 0) return 0.0;
  const double inter = w * h;
  return inter / (a.area() + b.area() - inter);
}

CorLocResult corloc(const Selections& selections, const Dataset& dataset, double threshold) {
  CorLocResult result;
  double sum = 0;
  for (const ClassId& c : dataset.classes()) {
    const BagSplit split = positive_negative_split(dataset, c);
    if (split.positive.empty()) continue;
    auto sel = selections.find(c);
    if (sel == selections.end()) throw DataError("corloc: no selection for class '" + c + "'");
    std::size_t correct = 0;
    for (std::size_t b : split.positive) {
      const Bag& bag = dataset.bags()[b];
      auto chosen = sel->second.chosen.find(bag.id);
      if (chosen == sel->second.chosen.end() || chosen->second >= bag.size()) {
        throw DataError("corloc: selection does not cover bag '" + bag.id + "'");
      }
      const auto& box = bag.proposals[chosen->second].box;
      if (!box) throw DataError("corloc: selected proposal in bag '" + bag.id + "' has no box");
      std::vector<Box> gt;
      if (auto it = bag.gt_boxes.find(c); it != bag.gt_boxes.end()) gt = it->second;
      for (const Proposal& p : bag.proposals) {
        if (p.gt_class == c && p.box) gt.push_back(*p.box);
      }
      if (gt.empty()) throw DataError("corloc: bag '" + bag.id + "' has no ground truth for '" + c + "'");
      if (std::any_of(gt.begin(), gt.end(), [&](const Box& g) { return iou(*box, g) > threshold; })) {
        ++correct;
      }
    }
    const double pct = 100.0 * static_cast<double>(correct) / static_cast<double>(split.positive.size());
    result.per_class[c] = pct;
    sum += pct;
  }
  if (!result.per_class.empty()) result.mean = sum / static_cast<double>(result.per_class.size());
  return result;
}

double selection_accuracy(const Selections& selections, const Selections& truth) {
  std::size_t total = 0, correct = 0;
  for (const auto& [c, t] : truth) {
    auto sel = selections.find(c);
    for (const auto& [bag, index] : t.chosen) {
      ++total;
      if (sel == selections.end()) continue;
      auto it = sel->second.chosen.find(bag);
      if (it != sel->second.chosen.end() && it->second == index) ++correct;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace pairloc
