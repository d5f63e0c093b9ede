#include "pairloc/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <stdexcept>

#include "pairloc/metrics.hpp"

namespace pairloc {

namespace {

constexpr double kWidth = 500, kHeight = 400;

// Pattern over n dimensions with h active entries.
using Pattern = std::vector<bool>;

using Layout = SynthLayout;

Layout layout_for(int d) {
  Layout l{};
  l.code_begin = 1;
  l.code_dims = d / 2;
  l.code_active = l.code_dims / 2;
  l.context_begin = 1 + l.code_dims;
  l.context_dims = d - 1 - l.code_dims;
  l.context_active = l.context_dims / 2;
  return l;
}

double binomial(int n, int k) {
  double r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

Pattern random_pattern(int n, int active, std::mt19937_64& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  Pattern p(static_cast<std::size_t>(n), false);
  for (int k = 0; k < active; ++k) p[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])] = true;
  return p;
}

Pattern pattern_other_than(int n, int active, const Pattern& avoid, std::mt19937_64& rng) {
  Pattern p;
  do {
    p = random_pattern(n, active, rng);
  } while (p == avoid);
  return p;
}

std::string class_name(char prefix, int k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%c%02d", prefix, k);
  return buf;
}

Box random_box(double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  const double w = (lo + (hi - lo) * u(rng)) * kWidth;
  const double h = (lo + (hi - lo) * u(rng)) * kHeight;
  const double x = u(rng) * (kWidth - w), y = u(rng) * (kHeight - h);
  return {x, y, x + w, y + h};
}

Box box_away_from(const Box& gt, std::mt19937_64& rng) {
  for (int tries = 0; tries < 10000; ++tries) {
    Box b = random_box(0.1, 0.6, rng);
    if (iou(b, gt) <= 0.3) return b;
  }
  throw std::runtime_error("synth: could not place a background box");
}

struct ClassSpec {
  ClassId name;
  Pattern code;
  std::optional<Pattern> distractor_context;
};

class Generator {
 public:
  explicit Generator(const SynthConfig& c) : c_(c), l_(layout_for(c.feature_dim)), rng_(c.seed) {}

  SynthData run() {
    const int total = c_.source_classes + c_.num_classes;
    std::vector<Pattern> codes;
    while (static_cast<int>(codes.size()) < total) {
      Pattern p = random_pattern(l_.code_dims, l_.code_active, rng_);
      if (std::find(codes.begin(), codes.end(), p) == codes.end()) codes.push_back(std::move(p));
    }
    auto specs = [&](char prefix, int count, int offset) {
      std::vector<ClassSpec> out;
      for (int k = 0; k < count; ++k) {
        out.push_back({class_name(prefix, k), codes[static_cast<std::size_t>(offset + k)], {}});
      }
      const int with = static_cast<int>(std::lround(c_.distractor_overlap * count));
      std::vector<int> order(static_cast<std::size_t>(count));
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng_);
      for (int k = 0; k < with; ++k) {
        out[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])].distractor_context =
            random_pattern(l_.context_dims, l_.context_active, rng_);
      }
      return out;
    };
    const auto source_specs = specs('s', c_.source_classes, 0);
    const auto target_specs = specs('c', c_.num_classes, c_.source_classes);

    SynthData data;
    data.source = Dataset(make_bags(source_specs, c_.source_bags_per_class, 's', nullptr));
    data.target = Dataset(make_bags(target_specs, c_.bags_per_class, 't', &data.truth));
    return data;
  }

 private:
  std::vector<double> features(double objectness, const Pattern& code, const Pattern& context) {
    std::vector<double> f(static_cast<std::size_t>(c_.feature_dim), 0.0);
    f[0] = objectness;
    for (int k = 0; k < l_.code_dims; ++k) {
      if (code[static_cast<std::size_t>(k)]) f[static_cast<std::size_t>(l_.code_begin + k)] = c_.cluster_separation;
    }
    for (int k = 0; k < l_.context_dims; ++k) {
      if (context[static_cast<std::size_t>(k)]) f[static_cast<std::size_t>(l_.context_begin + k)] = c_.cluster_separation;
    }
    if (c_.noise_sigma > 0) {
      std::normal_distribution<double> noise(0, c_.noise_sigma);
      for (double& v : f) v += noise(rng_);
    }
    return f;
  }

  std::vector<Bag> make_bags(const std::vector<ClassSpec>& specs, int per_class, char prefix,
                             Selections* truth) {
    const auto b = static_cast<std::size_t>(c_.proposals_per_bag);
    const double a = c_.cluster_separation;
    std::vector<Bag> bags;
    for (const ClassSpec& spec : specs) {
      if (truth) (*truth)[spec.name].cls = spec.name;
      for (int n = 0; n < per_class; ++n) {
        Bag bag;
        bag.id = std::string(1, prefix) + spec.name + "_" + std::to_string(n);
        bag.labels = {spec.name};
        std::vector<std::size_t> slots(b);
        std::iota(slots.begin(), slots.end(), 0);
        std::shuffle(slots.begin(), slots.end(), rng_);
        const std::size_t object = slots[0];
        const std::optional<std::size_t> distractor =
            spec.distractor_context ? std::optional<std::size_t>(slots[1]) : std::nullopt;
        const std::optional<std::size_t> full_image =
            slots.size() > (distractor ? 2u : 1u) ? std::optional<std::size_t>(slots[distractor ? 2 : 1])
                                                  : std::nullopt;
        const Box gt = random_box(0.2, 0.5, rng_);
        bag.proposals.resize(b);
        for (std::size_t i = 0; i < b; ++i) {
          Proposal& p = bag.proposals[i];
          if (i == object) {
            p.features = features(a, spec.code, random_pattern(l_.context_dims, l_.context_active, rng_));
            p.box = gt;
            p.gt_class = spec.name;
          } else if (i == distractor) {
            p.features = features(a, pattern_other_than(l_.code_dims, l_.code_active, spec.code, rng_),
                                  *spec.distractor_context);
            p.box = box_away_from(gt, rng_);
            p.gt_class = kBackground;
          } else {
            p.features = features(0, pattern_other_than(l_.code_dims, l_.code_active, spec.code, rng_),
                                  random_pattern(l_.context_dims, l_.context_active, rng_));
            p.gt_class = kBackground;
            if (i == full_image) {
              p.box = Box{0, 0, kWidth, kHeight};
              p.is_full_image = true;
            } else {
              p.box = box_away_from(gt, rng_);
            }
          }
        }
        bag.gt_boxes[spec.name] = {gt};
        if (truth) (*truth)[spec.name].chosen[bag.id] = object;
        bags.push_back(std::move(bag));
      }
    }
    return bags;
  }

  SynthConfig c_;
  Layout l_;
  std::mt19937_64 rng_;
};

}  // namespace

SynthLayout synth_layout(int feature_dim) { return layout_for(feature_dim); }

void SynthConfig::validate() const {
  if (num_classes < 1 || bags_per_class < 1 || source_classes < 0 || source_bags_per_class < 1) {
    throw std::invalid_argument("synth: class and bag counts must be positive");
  }
  if (proposals_per_bag < 2) throw std::invalid_argument("synth: proposals_per_bag must be >= 2");
  if (!(distractor_overlap >= 0 && distractor_overlap <= 1)) {
    throw std::invalid_argument("synth: distractor_overlap must lie in [0, 1]");
  }
  if (!(cluster_separation > 0) || !(noise_sigma >= 0)) {
    throw std::invalid_argument("synth: cluster_separation must be > 0 and noise_sigma >= 0");
  }
  if (feature_dim < 6) throw std::invalid_argument("synth: feature_dim must be >= 6");
  const Layout l = layout_for(feature_dim);
  // Distinct class codes, plus room for random codes that avoid each of them.
  if (binomial(l.code_dims, l.code_active) < source_classes + num_classes + 1) {
    throw std::invalid_argument("synth: feature_dim too small for the number of classes");
  }
}

SynthData generate(const SynthConfig& config) {
  config.validate();
  return Generator(config).run();
}

}  // namespace pairloc
