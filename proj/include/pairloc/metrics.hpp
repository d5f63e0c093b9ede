#pragma once

#include <map>

#include "pairloc/data.hpp"

namespace pairloc {

/// Intersection over union of two valid boxes; throws DataError otherwise.
double iou(const Box& a, const Box& b);

struct CorLocResult {
  std::map<ClassId, double> per_class;  // percent
  double mean = 0;                      // unweighted over classes, percent
};

/// A positive bag counts as correctly localized when its selected proposal's
/// box has IoU strictly above `threshold` with a ground-truth box of the
/// class in that bag. Ground truth is the bag's gt_boxes for the class plus
/// the boxes of proposals whose gt_class is the class. Classes without
/// positive bags are left out.
CorLocResult corloc(const Selections& selections, const Dataset& dataset, double threshold);

/// Fraction of planted positives (over all classes) that are selected.
double selection_accuracy(const Selections& selections, const Selections& truth);

}  // namespace pairloc
