#include "pairloc/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string_view>
#include <unordered_map>

namespace pairloc {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using ConstVec = Eigen::Map<const VectorXd>;

ConstVec as_vec(std::span<const double> s) {
  return ConstVec(s.data(), static_cast<Eigen::Index>(s.size()));
}

VectorXd sigmoid_vec(const VectorXd& a) {
  return a.unaryExpr([](double x) { return sigmoid(x); });
}

void fill_uniform(double* data, std::size_t n, double limit, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (std::size_t i = 0; i < n; ++i) data[i] = dist(rng);
}

LinearUnary init_unary(std::size_t d, std::mt19937_64& rng) {
  LinearUnary u;
  u.weight = VectorXd::Zero(static_cast<Eigen::Index>(d));
  fill_uniform(u.weight.data(), d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  return u;
}

Embedding init_embedding(std::size_t d, std::mt19937_64& rng) {
  const auto n = static_cast<Eigen::Index>(d);
  Embedding e;
  e.w1 = MatrixXd::Zero(n, 2 * n);
  e.w2 = MatrixXd::Zero(n, 2 * n);
  e.b1 = VectorXd::Zero(n);
  e.b2 = VectorXd::Zero(n);
  const double limit = 1.0 / std::sqrt(2.0 * static_cast<double>(d));
  fill_uniform(e.w1.data(), e.w1.size(), limit, rng);
  fill_uniform(e.w2.data(), e.w2.size(), limit, rng);
  return e;
}

PairwiseHead init_head(std::size_t d, std::mt19937_64& rng) {
  PairwiseHead h;
  h.weight = VectorXd::Zero(static_cast<Eigen::Index>(d));
  fill_uniform(h.weight.data(), d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  return h;
}

void zero_like(LinearUnary& u) { u.weight.setZero(); u.bias = 0; }
void zero_like(Embedding& e) { e.w1.setZero(); e.w2.setZero(); e.b1.setZero(); e.b2.setZero(); }
void zero_like(PairwiseHead& h) { h.weight.setZero(); h.bias = 0; }

template <typename Span, typename Model>
std::vector<Span> collect_blocks(Model& m) {
  std::vector<Span> out;
  auto vec = [&](auto& v) { out.emplace_back(v.data(), static_cast<std::size_t>(v.size())); };
  auto scalar = [&](auto& s) { out.emplace_back(&s, 1); };
  auto emb = [&](auto& e) { vec(e.w1); vec(e.w2); vec(e.b1); vec(e.b2); };
  vec(m.generic_unary.weight);
  scalar(m.generic_unary.bias);
  emb(m.generic_pairwise.embedding);
  vec(m.generic_pairwise.head.weight);
  scalar(m.generic_pairwise.head.bias);
  emb(m.embedding);
  for (auto& [c, u] : m.unary) {
    vec(u.weight);
    scalar(u.bias);
    auto& h = m.heads.at(c);
    vec(h.weight);
    scalar(h.bias);
  }
  return out;
}

// Pairwise gradient accumulation for one embedding. Uses the split
// W [e, e'] = W_left e + W_right e' so each proposal is projected once.
class EmbeddingBackprop {
 public:
  EmbeddingBackprop(const Embedding& emb, std::size_t d) : emb_(emb), d_(d) {}

  std::size_t slot(const Proposal* p, std::span<const double> x) {
    auto it = slots_.find(p);
    if (it == slots_.end()) {
      it = slots_.emplace(p, features_.size()).first;
      features_.push_back(x);
    }
    return it->second;
  }

  void project() {
    const auto n = static_cast<Eigen::Index>(d_);
    const auto count = static_cast<Eigen::Index>(features_.size());
    x_.resize(n, count);
    for (Eigen::Index k = 0; k < count; ++k) x_.col(k) = as_vec(features_[static_cast<std::size_t>(k)]);
    left1_ = emb_.w1.leftCols(n) * x_;
    right1_ = emb_.w1.rightCols(n) * x_;
    left2_ = emb_.w2.leftCols(n) * x_;
    right2_ = emb_.w2.rightCols(n) * x_;
    gl1_ = MatrixXd::Zero(n, count);
    gr1_ = MatrixXd::Zero(n, count);
    gl2_ = MatrixXd::Zero(n, count);
    gr2_ = MatrixXd::Zero(n, count);
  }

  // Forward for the ordered pair (a, b); keeps activations for backward().
  const VectorXd& forward(std::size_t a, std::size_t b) {
    a_ = a;
    b_ = b;
    tanh_ = (left1_.col(a) + right1_.col(b) + emb_.b1).array().tanh().matrix();
    gate_ = sigmoid_vec(left2_.col(a) + right2_.col(b) + emb_.b2);
    out_ = tanh_.cwiseProduct(gate_) + 0.5 * (x_.col(a) + x_.col(b));
    return out_;
  }

  void backward(const VectorXd& d_out, Embedding& grad) {
    const VectorXd d_pre1 =
        d_out.cwiseProduct(gate_).cwiseProduct((1.0 - tanh_.array().square()).matrix());
    const VectorXd d_pre2 = d_out.cwiseProduct(tanh_).cwiseProduct(
        gate_.cwiseProduct((1.0 - gate_.array()).matrix()));
    grad.b1 += d_pre1;
    grad.b2 += d_pre2;
    gl1_.col(a_) += d_pre1;
    gr1_.col(b_) += d_pre1;
    gl2_.col(a_) += d_pre2;
    gr2_.col(b_) += d_pre2;
  }

  void finish(Embedding& grad) const {
    if (features_.empty()) return;
    const auto n = static_cast<Eigen::Index>(d_);
    grad.w1.leftCols(n) += gl1_ * x_.transpose();
    grad.w1.rightCols(n) += gr1_ * x_.transpose();
    grad.w2.leftCols(n) += gl2_ * x_.transpose();
    grad.w2.rightCols(n) += gr2_ * x_.transpose();
  }

 private:
  const Embedding& emb_;
  std::size_t d_;
  std::unordered_map<const Proposal*, std::size_t> slots_;
  std::vector<std::span<const double>> features_;
  MatrixXd x_, left1_, right1_, left2_, right2_, gl1_, gr1_, gl2_, gr2_;
  VectorXd tanh_, gate_, out_;
  std::size_t a_ = 0, b_ = 0;
};

}  // namespace

double LinearUnary::forward(const Eigen::Ref<const VectorXd>& e) const {
  if (e.size() != weight.size()) throw std::invalid_argument("unary forward: dimension mismatch");
  return weight.dot(e) + bias;
}

VectorXd Embedding::forward(const Eigen::Ref<const VectorXd>& e,
                            const Eigen::Ref<const VectorXd>& e2) const {
  const auto n = b1.size();
  if (e.size() != n || e2.size() != n) throw std::invalid_argument("embed: dimension mismatch");
  const VectorXd t = (w1.leftCols(n) * e + w1.rightCols(n) * e2 + b1).array().tanh().matrix();
  const VectorXd g = sigmoid_vec(w2.leftCols(n) * e + w2.rightCols(n) * e2 + b2);
  return t.cwiseProduct(g) + 0.5 * (e + e2);
}

double RelationPairwise::forward(const Eigen::Ref<const VectorXd>& e,
                                 const Eigen::Ref<const VectorXd>& e2) const {
  return head.weight.dot(embedding.forward(e, e2)) + head.bias;
}

ScoringModel model_from_parts(std::size_t dim, std::size_t generic_dim,
                              std::vector<ClassId> classes) {
  ScoringModel m;
  m.dim_ = dim;
  m.generic_dim_ = generic_dim;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  m.classes_ = std::move(classes);
  return m;
}

ScoringModel ScoringModel::initialized(std::size_t dim, std::size_t generic_dim,
                                       const std::vector<ClassId>& classes, std::uint64_t seed) {
  if (dim == 0 || generic_dim == 0) throw std::invalid_argument("model dimensions must be > 0");
  ScoringModel m = model_from_parts(dim, generic_dim, classes);
  std::mt19937_64 rng(seed);
  m.generic_unary = init_unary(generic_dim, rng);
  m.generic_pairwise.embedding = init_embedding(generic_dim, rng);
  m.generic_pairwise.head = init_head(generic_dim, rng);
  m.embedding = init_embedding(dim, rng);
  for (const ClassId& c : m.classes_) {
    if (c == kBackground) throw std::invalid_argument("background is not a class");
    m.unary[c] = init_unary(dim, rng);
    m.heads[c] = init_head(dim, rng);
  }
  return m;
}

ScoringModel ScoringModel::zeros_like(const ScoringModel& other) {
  ScoringModel m = other;
  zero_like(m.generic_unary);
  zero_like(m.generic_pairwise.embedding);
  zero_like(m.generic_pairwise.head);
  zero_like(m.embedding);
  for (auto& [c, u] : m.unary) zero_like(u);
  for (auto& [c, h] : m.heads) zero_like(h);
  return m;
}

std::span<const double> features_for(const Target& target, const Proposal& p) {
  return target ? std::span<const double>(p.features) : std::span<const double>(p.generic());
}

const LinearUnary& ScoringModel::unary_for(const Target& target) const {
  if (!target) return generic_unary;
  auto it = unary.find(*target);
  if (it == unary.end()) throw std::invalid_argument("model has no class '" + *target + "'");
  return it->second;
}

const PairwiseHead& ScoringModel::head_for(const Target& target) const {
  if (!target) return generic_pairwise.head;
  auto it = heads.find(*target);
  if (it == heads.end()) throw std::invalid_argument("model has no class '" + *target + "'");
  return it->second;
}

const Embedding& ScoringModel::embedding_for(const Target& target) const {
  return target ? embedding : generic_pairwise.embedding;
}

double ScoringModel::unary_forward(const Target& target, const Proposal& e) const {
  return unary_for(target).forward(as_vec(features_for(target, e)));
}

VectorXd ScoringModel::embed(const Target& target, const Proposal& e, const Proposal& e2) const {
  return embedding_for(target).forward(as_vec(features_for(target, e)),
                                       as_vec(features_for(target, e2)));
}

double ScoringModel::pairwise_forward(const Target& target, const Proposal& e,
                                      const Proposal& e2) const {
  const PairwiseHead& h = head_for(target);
  return h.weight.dot(embed(target, e, e2)) + h.bias;
}

std::vector<std::span<double>> ScoringModel::parameter_blocks() {
  return collect_blocks<std::span<double>>(*this);
}

std::vector<std::span<const double>> ScoringModel::parameter_blocks() const {
  return collect_blocks<std::span<const double>>(*this);
}

std::size_t ScoringModel::parameter_count() const {
  std::size_t n = 0;
  for (auto b : parameter_blocks()) n += b.size();
  return n;
}

double minibatch_loss(const ScoringModel& model, const Minibatch& batch) {
  double unary = 0, pair = 0;
  for (const UnaryTerm& t : batch.unary) {
    unary += sigmoid_ce(model.unary_forward(t.target, *t.proposal), t.label);
  }
  for (const PairTerm& t : batch.pairwise) {
    pair += sigmoid_ce(model.pairwise_forward(t.target, *t.first, *t.second), t.label);
  }
  return batch.unary_weight * unary + batch.pairwise_weight * pair;
}

namespace {

// Sigmoid cross entropy and its derivative in the logit, sharing one exp.
std::pair<double, double> ce_and_grad(double z, double y) {
  if (!(y >= 0.0 && y <= 1.0)) throw std::invalid_argument("label outside [0, 1]");
  const double e = std::exp(-std::abs(z));
  const double s = z >= 0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
  return {std::max(z, 0.0) - z * y + std::log1p(e), s - y};
}

}  // namespace

double gradients(const ScoringModel& model, const Minibatch& batch, ScoringModel& grad) {
  grad = ScoringModel::zeros_like(model);
  double loss = 0;

  for (const UnaryTerm& t : batch.unary) {
    const auto x = as_vec(features_for(t.target, *t.proposal));
    const LinearUnary& u = model.unary_for(t.target);
    const auto [l, dl] = ce_and_grad(u.forward(x), t.label);
    loss += batch.unary_weight * l;
    const double dz = batch.unary_weight * dl;
    LinearUnary& g = t.target ? grad.unary.at(*t.target) : grad.generic_unary;
    g.weight += dz * x;
    g.bias += dz;
  }

  if (batch.pairwise.empty()) return loss;

  EmbeddingBackprop specific(model.embedding, model.dim());
  EmbeddingBackprop generic(model.generic_pairwise.embedding, model.generic_dim());
  std::vector<std::pair<std::size_t, std::size_t>> slots(batch.pairwise.size());
  for (std::size_t k = 0; k < batch.pairwise.size(); ++k) {
    const PairTerm& t = batch.pairwise[k];
    if (k > 0) {
      const PairTerm& prev = batch.pairwise[k - 1];
      if (prev.first == t.first && prev.second == t.second &&
          prev.target.has_value() == t.target.has_value()) {
        slots[k] = slots[k - 1];
        continue;
      }
    }
    EmbeddingBackprop& bp = t.target ? specific : generic;
    slots[k] = {bp.slot(t.first, features_for(t.target, *t.first)),
                bp.slot(t.second, features_for(t.target, *t.second))};
  }
  specific.project();
  generic.project();

  // Per-term map lookups by class name dominate large batches otherwise.
  struct HeadRef {
    const PairwiseHead* head;
    PairwiseHead* grad;
  };
  std::unordered_map<std::string_view, HeadRef> heads;
  auto head_ref = [&](const Target& target) -> HeadRef {
    if (!target) return {&model.generic_pairwise.head, &grad.generic_pairwise.head};
    auto it = heads.find(*target);
    if (it != heads.end()) return it->second;
    const HeadRef r{&model.head_for(target), &grad.heads.at(*target)};
    heads.emplace(*target, r);
    return r;
  };

  std::size_t k = 0;
  VectorXd d_embedded;
  std::vector<std::pair<const std::string*, HeadRef>> group_heads;
  while (k < batch.pairwise.size()) {
    const PairTerm& lead = batch.pairwise[k];
    const bool is_generic = !lead.target.has_value();
    EmbeddingBackprop& bp = is_generic ? generic : specific;
    Embedding& emb_grad = is_generic ? grad.generic_pairwise.embedding : grad.embedding;
    const VectorXd& embedded = bp.forward(slots[k].first, slots[k].second);
    const auto n = embedded.size();
    const double* e = embedded.data();
    d_embedded.setZero(n);
    double* de = d_embedded.data();
    // Every following term on the same ordered pair and embedding reuses the forward pass.
    const std::size_t group_start = k;
    for (; k < batch.pairwise.size(); ++k) {
      const PairTerm& t = batch.pairwise[k];
      if (t.first != lead.first || t.second != lead.second || t.target.has_value() == is_generic) {
        break;
      }
      const std::size_t pos = k - group_start;
      if (pos >= group_heads.size()) group_heads.resize(pos + 1);
      auto& cached = group_heads[pos];
      // Consecutive pair groups usually list the classes in the same order.
      if (!cached.first || !t.target || *cached.first != *t.target) {
        cached = {t.target ? &*t.target : nullptr, head_ref(t.target)};
      }
      const auto [h, hg] = cached.second;
      const double* w = h->weight.data();
      double z = h->bias;
      for (Eigen::Index r = 0; r < n; ++r) z += w[r] * e[r];
      const auto [l, dl] = ce_and_grad(z, t.label);
      loss += batch.pairwise_weight * l;
      const double dz = batch.pairwise_weight * dl;
      double* gw = hg->weight.data();
      for (Eigen::Index r = 0; r < n; ++r) {
        gw[r] += dz * e[r];
        de[r] += dz * w[r];
      }
      hg->bias += dz;
    }
    bp.backward(d_embedded, emb_grad);
  }
  specific.finish(grad.embedding);
  generic.finish(grad.generic_pairwise.embedding);
  return loss;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0)) throw std::invalid_argument("learning_rate must be >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  if (fg_per_bag <= 0 || bg_per_bag <= 0 || bags_per_step <= 0 || classes_per_step <= 0) {
    throw std::invalid_argument("sample counts must be positive");
  }
}

void sgd_step(ScoringModel& model, const ScoringModel& grad, const TrainConfig& config,
              ScoringModel& velocity) {
  config.validate();
  auto params = model.parameter_blocks();
  auto grads = grad.parameter_blocks();
  auto vel = velocity.parameter_blocks();
  if (params.size() != grads.size() || params.size() != vel.size()) {
    throw std::invalid_argument("sgd_step: parameter shapes differ");
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size() || params[b].size() != vel[b].size()) {
      throw std::invalid_argument("sgd_step: parameter shapes differ");
    }
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      vel[b][i] = config.momentum * vel[b][i] - config.learning_rate * grads[b][i];
      params[b][i] += vel[b][i];
    }
  }
}

namespace {

struct Sample {
  std::size_t bag;    // index into the dataset
  std::size_t index;  // proposal index
};

// Draws `count` elements of `pool`: without replacement when the pool is large
// enough, with replacement otherwise.
void draw(const std::vector<std::size_t>& pool, int count, std::mt19937_64& rng,
          std::vector<std::size_t>& out) {
  if (pool.empty() || count <= 0) return;
  const auto n = static_cast<std::size_t>(count);
  if (pool.size() >= n) {
    std::vector<std::size_t> tmp = pool;
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, tmp.size() - 1);
      std::swap(tmp[i], tmp[pick(rng)]);
      out.push_back(tmp[i]);
    }
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t i = 0; i < n; ++i) out.push_back(pool[pick(rng)]);
  }
}

// Class-stratified bag draw for one step.
std::vector<std::size_t> sample_bags(const std::vector<std::vector<std::size_t>>& positives,
                                     const TrainConfig& config, std::mt19937_64& rng) {
  std::vector<std::size_t> usable;
  for (std::size_t c = 0; c < positives.size(); ++c) {
    if (!positives[c].empty()) usable.push_back(c);
  }
  std::vector<std::size_t> classes;
  draw(usable, std::min<int>(config.classes_per_step, static_cast<int>(usable.size())), rng,
       classes);
  const int per_class = std::max(1, config.bags_per_step / config.classes_per_step);
  std::vector<std::size_t> bags;
  for (std::size_t c : classes) draw(positives[c], per_class, rng, bags);
  std::sort(bags.begin(), bags.end());
  bags.erase(std::unique(bags.begin(), bags.end()), bags.end());
  return bags;
}

template <typename Foreground>
std::vector<Sample> sample_proposals(const Dataset& dataset,
                                     const std::vector<std::vector<std::size_t>>& positives,
                                     const TrainConfig& config, std::mt19937_64& rng,
                                     Foreground foreground) {
  std::vector<Sample> samples;
  for (std::size_t b : sample_bags(positives, config, rng)) {
    const Bag& bag = dataset.bags()[b];
    std::vector<std::size_t> fg = foreground(bag);
    std::vector<std::size_t> bg;
    for (std::size_t i = 0; i < bag.size(); ++i) {
      if (std::find(fg.begin(), fg.end(), i) == fg.end()) bg.push_back(i);
    }
    std::vector<std::size_t> picked;
    draw(fg, config.fg_per_bag, rng, picked);
    draw(bg, config.bg_per_bag, rng, picked);
    for (std::size_t i : picked) samples.push_back({b, i});
  }
  return samples;
}

void normalize(Minibatch& batch, double alpha) {
  batch.unary_weight = batch.unary.empty() ? 0.0 : 1.0 / static_cast<double>(batch.unary.size());
  batch.pairwise_weight =
      batch.pairwise.empty() ? 0.0 : alpha / static_cast<double>(batch.pairwise.size());
}

template <typename NextBatch>
LossTrace run_sgd(ScoringModel& model, const TrainConfig& config, NextBatch next_batch) {
  config.validate();
  LossTrace trace;
  trace.reserve(static_cast<std::size_t>(config.iterations));
  std::mt19937_64 rng(config.seed);
  ScoringModel velocity = ScoringModel::zeros_like(model);
  ScoringModel grad;
  for (int step = 0; step < config.iterations; ++step) {
    const Minibatch batch = next_batch(rng);
    if (batch.unary.empty() && batch.pairwise.empty()) break;
    trace.push_back(gradients(model, batch, grad));
    sgd_step(model, grad, config, velocity);
  }
  return trace;
}

}  // namespace

RetrainSampler::RetrainSampler(const Dataset& dataset, const Selections& selections,
                               const LossWeights& weights, const TrainConfig& config)
    : dataset_(dataset), weights_(weights), config_(config) {
  if (weights.alpha < 0) throw std::invalid_argument("alpha must be >= 0");
  config.validate();
  classes_.assign(dataset.classes().begin(), dataset.classes().end());
  for (const ClassId& c : classes_) {
    auto it = selections.find(c);
    if (it == selections.end() || !is_feasible(it->second, dataset)) {
      throw DataError("retrain: infeasible selection for class '" + c + "'");
    }
    selections_.push_back(&it->second);
    positives_.push_back(positive_negative_split(dataset, c).positive);
  }
}

Minibatch RetrainSampler::next(std::mt19937_64& rng) const {
  auto foreground = [&](const Bag& bag) {
    std::vector<std::size_t> fg;
    for (const Selection* s : selections_) {
      auto it = s->chosen.find(bag.id);
      if (it != s->chosen.end() && std::find(fg.begin(), fg.end(), it->second) == fg.end()) {
        fg.push_back(it->second);
      }
    }
    return fg;
  };
  const std::vector<Sample> samples =
      sample_proposals(dataset_, positives_, config_, rng, foreground);

  Minibatch batch;
  const std::size_t nc = classes_.size();
  std::vector<int> labels(samples.size() * nc);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const Bag& bag = dataset_.bags()[samples[s].bag];
    const Proposal* p = &bag.proposals[samples[s].index];
    for (std::size_t c = 0; c < nc; ++c) {
      labels[s * nc + c] = unary_label(*selections_[c], bag, samples[s].index);
      batch.unary.push_back({p, classes_[c], static_cast<double>(labels[s * nc + c])});
    }
  }
  if (weights_.alpha > 0) {
    batch.pairwise.reserve(samples.size() * samples.size() * nc);
    for (std::size_t a = 0; a < samples.size(); ++a) {
      for (std::size_t b = 0; b < samples.size(); ++b) {
        if (samples[a].bag == samples[b].bag) continue;
        const Proposal* pa = &dataset_.bags()[samples[a].bag].proposals[samples[a].index];
        const Proposal* pb = &dataset_.bags()[samples[b].bag].proposals[samples[b].index];
        for (std::size_t c = 0; c < nc; ++c) {
          batch.pairwise.push_back(
              {pa, pb, classes_[c], static_cast<double>(labels[a * nc + c] * labels[b * nc + c])});
        }
      }
    }
  }
  normalize(batch, weights_.alpha);
  return batch;
}

SourceSampler::SourceSampler(const Dataset& source, const LossWeights& weights,
                             const TrainConfig& config)
    : source_(source), weights_(weights), config_(config) {
  if (weights.alpha < 0) throw std::invalid_argument("alpha must be >= 0");
  config.validate();
  if (!source.fully_labeled()) {
    throw DataError("train_source: every source proposal needs a ground-truth class");
  }
  // Bags are stratified by the classes that actually appear in them.
  std::map<ClassId, std::vector<std::size_t>> by_class;
  for (std::size_t b = 0; b < source.size(); ++b) {
    std::set<ClassId> present;
    for (const Proposal& p : source.bags()[b].proposals) {
      if (*p.gt_class != kBackground) present.insert(*p.gt_class);
    }
    for (const ClassId& c : present) by_class[c].push_back(b);
  }
  for (auto& [c, bags] : by_class) positives_.push_back(std::move(bags));
  if (positives_.empty() && !source.empty()) {
    positives_.emplace_back();
    for (std::size_t b = 0; b < source.size(); ++b) positives_.back().push_back(b);
  }
}

Minibatch SourceSampler::next(std::mt19937_64& rng) const {
  auto foreground = [](const Bag& bag) {
    std::vector<std::size_t> fg;
    for (std::size_t i = 0; i < bag.size(); ++i) {
      if (*bag.proposals[i].gt_class != kBackground) fg.push_back(i);
    }
    return fg;
  };
  const std::vector<Sample> samples =
      sample_proposals(source_, positives_, config_, rng, foreground);

  Minibatch batch;
  for (const Sample& s : samples) {
    const Proposal& p = source_.bags()[s.bag].proposals[s.index];
    batch.unary.push_back({&p, kGeneric, *p.gt_class != kBackground ? 1.0 : 0.0});
  }
  if (weights_.alpha > 0) {
    for (const Sample& a : samples) {
      for (const Sample& b : samples) {
        if (a.bag == b.bag) continue;
        const Proposal& pa = source_.bags()[a.bag].proposals[a.index];
        const Proposal& pb = source_.bags()[b.bag].proposals[b.index];
        const bool related = *pa.gt_class != kBackground && *pa.gt_class == *pb.gt_class;
        batch.pairwise.push_back({&pa, &pb, kGeneric, related ? 1.0 : 0.0});
      }
    }
  }
  normalize(batch, weights_.alpha);
  return batch;
}

LossTrace retrain(ScoringModel& model, const Dataset& dataset, const Selections& selections,
                  const LossWeights& weights, const TrainConfig& config) {
  for (const ClassId& c : dataset.classes()) {
    if (!model.has_class(c)) throw std::invalid_argument("model has no class '" + c + "'");
  }
  const RetrainSampler sampler(dataset, selections, weights, config);
  return run_sgd(model, config, [&](std::mt19937_64& rng) { return sampler.next(rng); });
}

LossTrace train_source(ScoringModel& model, const Dataset& source, const LossWeights& weights,
                       const TrainConfig& config) {
  const SourceSampler sampler(source, weights, config);
  return run_sgd(model, config, [&](std::mt19937_64& rng) { return sampler.next(rng); });
}

}  // namespace pairloc
