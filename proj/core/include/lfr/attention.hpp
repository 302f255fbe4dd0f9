#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "lfr/feature_model.hpp"

namespace lfr {

/// Two-layer per-feature scorer with a rectifier between layers and a
/// softplus output, so scores are always non-negative.
struct AttentionScorer {
  std::size_t in_dim = 0;
  std::size_t hidden = 32;
  std::vector<double> w1;  // hidden x in_dim, row-major
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // hidden
  double b2 = 0.0;
};

/// Final linear classifier over the pooled descriptor; no bias term.
struct Classifier {
  std::size_t n_classes = 0;
  std::size_t dim = 0;
  std::vector<double> w;  // n_classes x dim, row-major
};

/// A training example: the features of one image plus its class label.
struct FeatureBag {
  std::vector<Descriptor> features;
  std::size_t label = 0;
};

struct ForwardCache {
  std::vector<Descriptor> features;   // copy of the bag's descriptors
  std::vector<double> hidden_act;     // N x hidden, post-rectifier
  std::vector<double> pre_softplus;   // N
  std::vector<double> alphas;         // N
  Descriptor pooled;                  // dim
  std::vector<double> logits;         // n_classes
  std::vector<double> probs;          // n_classes
  double loss = 0.0;
};

struct Gradients {
  std::vector<double> d_w1;
  std::vector<double> d_b1;
  std::vector<double> d_w2;
  double d_b2 = 0.0;
  std::vector<double> d_w;  // classifier
};

struct TrainHyper {
  double lr = 0.25;
  std::size_t steps = 500;
  std::uint64_t seed = 1;
  std::size_t batch = 1;  // bags per step; only 1 is supported
  std::size_t hidden = 32;
};

struct TrainResult {
  AttentionScorer scorer;
  Classifier classifier;
  std::vector<double> loss_trace;  // loss before each update
};

/// ln(1 + e^x), evaluated as max(x,0) + ln(1 + e^-|x|).
double softplus(double x);

/// Per-feature attention scores; independent across features.
std::vector<double> score_features(const AttentionScorer& scorer,
                                   const std::vector<Descriptor>& features);

/// logits = W * sum_n alpha_n f_n; loss is stable cross entropy against the
/// bag's label.
ForwardCache forward(const AttentionScorer& scorer, const Classifier& classifier,
                     const FeatureBag& bag);

/// Hand-derived gradients of the cross-entropy loss with respect to every
/// scorer parameter and the classifier weights. Descriptors are inputs and
/// receive no gradient.
Gradients backward(const AttentionScorer& scorer, const Classifier& classifier,
                   const ForwardCache& cache, std::size_t label);

/// Plain SGD over seeded-shuffled bags, one bag per step; descriptors stay
/// fixed throughout. Requires at least two distinct labels.
TrainResult train_attention(const std::vector<FeatureBag>& dataset, const TrainHyper& hyper);

/// Write scorer output into each feature's score field (descriptors must
/// match the scorer input dimension).
ImageFeatures attach_scores(const AttentionScorer& scorer, ImageFeatures image);

/// Checkpoint file, magic "DATT": dims then f64 parameter blocks in
/// declaration order (w1, b1, w2, b2, W).
void save_checkpoint(const AttentionScorer& scorer, const Classifier& classifier,
                     const std::filesystem::path& path);
std::pair<AttentionScorer, Classifier> load_checkpoint(const std::filesystem::path& path);

/// sum_n alpha_n f_n followed by the classifier; exposed so the pooling
/// linearity can be checked directly.
std::vector<double> pool_and_classify(const Classifier& classifier,
                                      const std::vector<double>& alphas,
                                      const std::vector<Descriptor>& features);

}  // namespace lfr
