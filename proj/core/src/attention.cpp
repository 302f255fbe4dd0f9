#include "lfr/attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "lfr/errors.hpp"
#include "lfr/rng.hpp"

namespace lfr {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_scorer(const AttentionScorer& scorer) {
  if (scorer.w1.size() != scorer.hidden * scorer.in_dim || scorer.b1.size() != scorer.hidden ||
      scorer.w2.size() != scorer.hidden)
    throw InvalidInput("attention scorer: inconsistent parameter shapes");
}

}  // namespace

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

std::vector<double> score_features(const AttentionScorer& scorer,
                                   const std::vector<Descriptor>& features) {
  check_scorer(scorer);
  std::vector<double> alphas;
  alphas.reserve(features.size());
  std::vector<double> hidden(scorer.hidden);
  for (const auto& f : features) {
    if (f.size() != scorer.in_dim) throw InvalidInput("score_features: dimension mismatch");
    for (std::size_t r = 0; r < scorer.hidden; ++r) {
      double z = scorer.b1[r];
      const double* row = scorer.w1.data() + r * scorer.in_dim;
      for (std::size_t i = 0; i < scorer.in_dim; ++i) z += row[i] * f[i];
      hidden[r] = std::max(z, 0.0);
    }
    double u = scorer.b2;
    for (std::size_t r = 0; r < scorer.hidden; ++r) u += scorer.w2[r] * hidden[r];
    alphas.push_back(softplus(u));
  }
  return alphas;
}

std::vector<double> pool_and_classify(const Classifier& classifier,
                                      const std::vector<double>& alphas,
                                      const std::vector<Descriptor>& features) {
  Descriptor pooled(classifier.dim, 0.0);
  for (std::size_t n = 0; n < features.size(); ++n)
    for (std::size_t i = 0; i < classifier.dim; ++i) pooled[i] += alphas[n] * features[n][i];
  std::vector<double> logits(classifier.n_classes, 0.0);
  for (std::size_t c = 0; c < classifier.n_classes; ++c) {
    const double* row = classifier.w.data() + c * classifier.dim;
    double s = 0.0;
    for (std::size_t i = 0; i < classifier.dim; ++i) s += row[i] * pooled[i];
    logits[c] = s;
  }
  return logits;
}

ForwardCache forward(const AttentionScorer& scorer, const Classifier& classifier,
                     const FeatureBag& bag) {
  check_scorer(scorer);
  if (classifier.w.size() != classifier.n_classes * classifier.dim ||
      classifier.dim != scorer.in_dim)
    throw InvalidInput("forward: inconsistent classifier shape");
  if (bag.features.empty()) throw InvalidInput("forward: empty bag");
  if (bag.label >= classifier.n_classes) throw InvalidInput("forward: label out of range");

  const std::size_t n = bag.features.size();
  const std::size_t d = scorer.in_dim;
  const std::size_t h = scorer.hidden;

  ForwardCache cache;
  cache.features = bag.features;
  cache.hidden_act.resize(n * h);
  cache.pre_softplus.resize(n);
  cache.alphas.resize(n);
  cache.pooled.assign(d, 0.0);

  for (std::size_t k = 0; k < n; ++k) {
    const Descriptor& f = bag.features[k];
    if (f.size() != d) throw InvalidInput("forward: descriptor dimension mismatch");
    double* act = cache.hidden_act.data() + k * h;
    for (std::size_t r = 0; r < h; ++r) {
      double z = scorer.b1[r];
      const double* row = scorer.w1.data() + r * d;
      for (std::size_t i = 0; i < d; ++i) z += row[i] * f[i];
      act[r] = std::max(z, 0.0);
    }
    double u = scorer.b2;
    for (std::size_t r = 0; r < h; ++r) u += scorer.w2[r] * act[r];
    cache.pre_softplus[k] = u;
    cache.alphas[k] = softplus(u);
    for (std::size_t i = 0; i < d; ++i) cache.pooled[i] += cache.alphas[k] * f[i];
  }

  cache.logits.assign(classifier.n_classes, 0.0);
  for (std::size_t c = 0; c < classifier.n_classes; ++c) {
    const double* row = classifier.w.data() + c * d;
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += row[i] * cache.pooled[i];
    cache.logits[c] = s;
  }

  // Cross entropy via log-sum-exp.
  const double max_logit = *std::max_element(cache.logits.begin(), cache.logits.end());
  double sum = 0.0;
  for (double y : cache.logits) sum += std::exp(y - max_logit);
  const double lse = max_logit + std::log(sum);
  cache.loss = lse - cache.logits[bag.label];
  cache.probs.resize(classifier.n_classes);
  for (std::size_t c = 0; c < classifier.n_classes; ++c)
    cache.probs[c] = std::exp(cache.logits[c] - lse);
  return cache;
}

Gradients backward(const AttentionScorer& scorer, const Classifier& classifier,
                   const ForwardCache& cache, std::size_t label) {
  const std::size_t n = cache.features.size();
  const std::size_t d = scorer.in_dim;
  const std::size_t h = scorer.hidden;
  const std::size_t m = classifier.n_classes;

  Gradients g;
  g.d_w1.assign(h * d, 0.0);
  g.d_b1.assign(h, 0.0);
  g.d_w2.assign(h, 0.0);
  g.d_b2 = 0.0;
  g.d_w.assign(m * d, 0.0);

  // dL/dy = softmax(y) - onehot(label)
  std::vector<double> dy(cache.probs);
  dy[label] -= 1.0;

  // dL/dW = dy (outer) pooled
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t i = 0; i < d; ++i) g.d_w[c * d + i] = dy[c] * cache.pooled[i];

  // dL/dpooled = W^T dy
  std::vector<double> dpooled(d, 0.0);
  for (std::size_t c = 0; c < m; ++c) {
    const double* row = classifier.w.data() + c * d;
    for (std::size_t i = 0; i < d; ++i) dpooled[i] += dy[c] * row[i];
  }

  for (std::size_t k = 0; k < n; ++k) {
    const Descriptor& f = cache.features[k];
    // dL/dalpha_k = dL/dy . W f_k = dpooled . f_k
    double dalpha = 0.0;
    for (std::size_t i = 0; i < d; ++i) dalpha += dpooled[i] * f[i];
    const double du = dalpha * sigmoid(cache.pre_softplus[k]);
    const double* act = cache.hidden_act.data() + k * h;
    g.d_b2 += du;
    for (std::size_t r = 0; r < h; ++r) {
      g.d_w2[r] += du * act[r];
      if (act[r] > 0.0) {  // rectifier gate
        const double dz = du * scorer.w2[r];
        g.d_b1[r] += dz;
        double* wrow = g.d_w1.data() + r * d;
        for (std::size_t i = 0; i < d; ++i) wrow[i] += dz * f[i];
      }
    }
  }
  return g;
}

TrainResult train_attention(const std::vector<FeatureBag>& dataset, const TrainHyper& hyper) {
  if (dataset.empty()) throw InvalidInput("train_attention: empty dataset");
  if (hyper.batch != 1) throw InvalidInput("train_attention: only batch size 1 is supported");

  std::set<std::size_t> labels;
  std::size_t max_label = 0;
  std::size_t dim = dataset.front().features.empty() ? 0 : dataset.front().features.front().size();
  for (const auto& bag : dataset) {
    if (bag.features.empty()) throw InvalidInput("train_attention: bag with no features");
    labels.insert(bag.label);
    max_label = std::max(max_label, bag.label);
    for (const auto& f : bag.features)
      if (f.size() != dim) throw InvalidInput("train_attention: descriptor dimension mismatch");
  }
  if (labels.size() < 2) throw InvalidInput("train_attention: need at least two classes");

  const std::size_t n_classes = max_label + 1;
  const std::size_t h = hyper.hidden;
  Rng rng(hyper.seed);

  TrainResult result;
  result.scorer.in_dim = dim;
  result.scorer.hidden = h;
  result.scorer.w1.resize(h * dim);
  result.scorer.b1.assign(h, 0.0);
  result.scorer.w2.resize(h);
  result.scorer.b2 = 0.0;
  result.classifier.n_classes = n_classes;
  result.classifier.dim = dim;
  result.classifier.w.resize(n_classes * dim);

  const double r1 = 1.0 / std::sqrt(static_cast<double>(dim));
  const double r2 = 1.0 / std::sqrt(static_cast<double>(h));
  for (double& w : result.scorer.w1) w = rng.uniform(-r1, r1);
  for (double& w : result.scorer.w2) w = rng.uniform(-r2, r2);
  for (double& w : result.classifier.w) w = rng.uniform(-r1, r1);

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();  // forces a shuffle on the first step

  result.loss_trace.reserve(hyper.steps);
  for (std::size_t step = 0; step < hyper.steps; ++step) {
    if (cursor >= order.size()) {
      rng.shuffle(order);
      cursor = 0;
    }
    const FeatureBag& bag = dataset[order[cursor++]];
    ForwardCache cache = forward(result.scorer, result.classifier, bag);
    result.loss_trace.push_back(cache.loss);
    if (hyper.lr == 0.0) continue;
    Gradients g = backward(result.scorer, result.classifier, cache, bag.label);
    for (std::size_t i = 0; i < result.scorer.w1.size(); ++i)
      result.scorer.w1[i] -= hyper.lr * g.d_w1[i];
    for (std::size_t i = 0; i < h; ++i) result.scorer.b1[i] -= hyper.lr * g.d_b1[i];
    for (std::size_t i = 0; i < h; ++i) result.scorer.w2[i] -= hyper.lr * g.d_w2[i];
    result.scorer.b2 -= hyper.lr * g.d_b2;
    for (std::size_t i = 0; i < result.classifier.w.size(); ++i)
      result.classifier.w[i] -= hyper.lr * g.d_w[i];
  }
  return result;
}

ImageFeatures attach_scores(const AttentionScorer& scorer, ImageFeatures image) {
  std::vector<Descriptor> descriptors;
  descriptors.reserve(image.features.size());
  for (const auto& f : image.features) descriptors.push_back(f.descriptor);
  if (!descriptors.empty()) {
    const auto alphas = score_features(scorer, descriptors);
    for (std::size_t i = 0; i < image.features.size(); ++i) image.features[i].score = alphas[i];
  }
  return image;
}

namespace {

constexpr char kCheckpointMagic[4] = {'D', 'A', 'T', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_f64(std::ofstream& out, const double* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_f64(std::ifstream& in, double* data, std::size_t n) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw FormatError("checkpoint: truncated parameter block");
}

}  // namespace

void save_checkpoint(const AttentionScorer& scorer, const Classifier& classifier,
                     const std::filesystem::path& path) {
  check_scorer(scorer);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(kCheckpointMagic, 4);
  const std::uint32_t header[4] = {kCheckpointVersion, static_cast<std::uint32_t>(scorer.in_dim),
                                   static_cast<std::uint32_t>(scorer.hidden),
                                   static_cast<std::uint32_t>(classifier.n_classes)};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  write_f64(out, scorer.w1.data(), scorer.w1.size());
  write_f64(out, scorer.b1.data(), scorer.b1.size());
  write_f64(out, scorer.w2.data(), scorer.w2.size());
  write_f64(out, &scorer.b2, 1);
  write_f64(out, classifier.w.data(), classifier.w.size());
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

std::pair<AttentionScorer, Classifier> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic");
  std::uint32_t header[4];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in) throw FormatError("checkpoint: truncated header");
  if (header[0] != kCheckpointVersion) throw VersionError("checkpoint: unsupported version");

  AttentionScorer scorer;
  scorer.in_dim = header[1];
  scorer.hidden = header[2];
  Classifier classifier;
  classifier.n_classes = header[3];
  classifier.dim = scorer.in_dim;
  scorer.w1.resize(scorer.hidden * scorer.in_dim);
  scorer.b1.resize(scorer.hidden);
  scorer.w2.resize(scorer.hidden);
  classifier.w.resize(classifier.n_classes * classifier.dim);
  read_f64(in, scorer.w1.data(), scorer.w1.size());
  read_f64(in, scorer.b1.data(), scorer.b1.size());
  read_f64(in, scorer.w2.data(), scorer.w2.size());
  read_f64(in, &scorer.b2, 1);
  read_f64(in, classifier.w.data(), classifier.w.size());
  return {std::move(scorer), std::move(classifier)};
}

}  // namespace lfr
