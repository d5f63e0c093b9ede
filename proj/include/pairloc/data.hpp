#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pairloc {

using ClassId = std::string;
using BagId = std::string;

/// Reserved label for proposals that cover no object. Never a valid class.
inline const ClassId kBackground = "__background__";

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Axis-aligned rectangle in pixel coordinates.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool valid() const;
};

/// One candidate region of an image.
///
/// `features` feed the class-specific scoring functions. `generic_features`
/// optionally carries a second block for the class-generic functions; when it
/// is empty the generic functions read `features`.
struct Proposal {
  std::vector<double> features;
  std::vector<double> generic_features;
  std::optional<Box> box;
  std::optional<ClassId> gt_class;
  bool is_full_image = false;

  const std::vector<double>& generic() const {
    return generic_features.empty() ? features : generic_features;
  }
  bool has_generic_block() const { return !generic_features.empty(); }
};

/// The proposals of one image together with its image-level labels.
struct Bag {
  BagId id;
  std::vector<Proposal> proposals;
  std::set<ClassId> labels;
  // Optional ground-truth boxes per class, used only for evaluation.
  std::map<ClassId, std::vector<Box>> gt_boxes;

  bool has_label(const ClassId& c) const { return labels.count(c) != 0; }
  std::size_t size() const { return proposals.size(); }
};

/// A set of bags sharing one feature dimension.
class Dataset {
 public:
  Dataset() = default;

  /// Validates every invariant; throws DataError on the first violation.
  /// `classes` may be empty, in which case it is the union of bag labels.
  Dataset(std::vector<Bag> bags, std::set<ClassId> classes = {});

  const std::vector<Bag>& bags() const { return bags_; }
  const std::set<ClassId>& classes() const { return classes_; }
  std::size_t dim() const { return dim_; }
  /// Dimension of the generic feature block (equals dim() when absent).
  std::size_t generic_dim() const { return generic_dim_; }
  std::size_t size() const { return bags_.size(); }
  bool empty() const { return bags_.empty(); }

  const Bag& bag(const BagId& id) const;
  std::optional<std::size_t> index_of(const BagId& id) const;

  /// A dataset made of a subset of this dataset's bags, same class set.
  Dataset subset(const std::vector<std::size_t>& bag_indices) const;

  /// True when every proposal carries gt_class.
  bool fully_labeled() const;

 private:
  std::vector<Bag> bags_;
  std::set<ClassId> classes_;
  std::map<BagId, std::size_t> index_;
  std::size_t dim_ = 0;
  std::size_t generic_dim_ = 0;
};

/// Indices into Dataset::bags() of the positive and negative bags of a class.
struct BagSplit {
  std::vector<std::size_t> positive;
  std::vector<std::size_t> negative;
};

BagSplit positive_negative_split(const Dataset& dataset, const ClassId& c);

/// One chosen proposal per positive bag of a class.
///
/// This is the canonical encoding of a feasible labeling: the unary labels
/// and the pairwise labels between positive bags are both derived from it.
struct Selection {
  ClassId cls;
  std::map<BagId, std::size_t> chosen;

  bool operator==(const Selection&) const = default;
};

using Selections = std::map<ClassId, Selection>;

/// Exactly one in-range entry per positive bag and none for negative bags.
/// Throws DataError when the class is unknown to the dataset.
bool is_feasible(const Selection& selection, const Dataset& dataset);

/// Unary pseudo label of one proposal under a selection.
int unary_label(const Selection& selection, const Bag& bag, std::size_t index);

/// Pairwise pseudo label of (bag_a[index_a], bag_b[index_b]).
/// Throws DataError when both proposals come from the same bag.
int induced_pairwise(const Selection& selection, const Bag& bag_a, std::size_t index_a,
                     const Bag& bag_b, std::size_t index_b);

}  // namespace pairloc
