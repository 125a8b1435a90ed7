#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "pseudoseg/data.hpp"
#include "pseudoseg/grid.hpp"
#include "pseudoseg/model.hpp"
#include "pseudoseg/pseudoclass.hpp"
#include "pseudoseg/random.hpp"

namespace pseudoseg {

struct TrainConfig {
  double alpha = 0.5;  // weight of the self-supervised loss
  int shots = 1;
  int episodes = 2000;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double clamp_eps = 1e-7;
  std::uint64_t seed = 0;
  // When false the pseudo-class pathway is never run (the plain baseline).
  bool self_supervision = true;
  PseudoClassConfig pseudo;

  int patch_radius = 2;
  int embed_dim = 16;
  double temperature = 20.0;

  void validate() const;
};

// Mirrors the trainable fields of ModelParams.
struct Gradients {
  std::vector<double> weights;
  std::vector<double> bias;

  static Gradients zeros_like(const ModelParams& params);
  void add_scaled(const Gradients& other, double scale);
};

// Spatially averaged binary cross-entropy with p clamped to [eps, 1 - eps].
double cross_entropy_loss(const BinaryMask& gt, const ProbMask& pred, double clamp_eps);

// sup + alpha * selfsup, or sup when there is no self-supervised term.
double total_loss(double sup, std::optional<double> selfsup, double alpha);

// One prototype-comparison pathway recorded for the backward pass.
struct PathwayTrace {
  std::vector<std::size_t> support_images;  // indices into EpisodeTrace::images
  std::vector<BinaryMask> support_masks;
  std::size_t query_image = 0;
  BinaryMask target;
  PrototypePair prototypes;  // merged over shots
  ProbMask prediction;
  double loss = 0.0;
  double weight = 1.0;  // coefficient of this pathway's loss in the total
};

// Everything the backward pass needs from one episode's forward pass. Images
// are stored once; the pseudo pathway reuses the query image as both its
// support and its query.
struct EpisodeTrace {
  std::vector<Image> images;
  std::vector<FeatureMap> preactivations;
  std::vector<FeatureMap> features;
  PathwayTrace supervised;
  std::optional<PathwayTrace> self_supervised;
  double alpha = 0.0;
  double clamp_eps = 1e-7;
  double total = 0.0;
};

// Produces the pseudo mask for the self-supervised pathway from the query
// features of the current model, or nullopt to skip that pathway.
using PseudoMaskSource = std::function<std::optional<BinaryMask>(const FeatureMap&)>;

EpisodeTrace forward_episode(const ModelParams& params, std::span<const SupportExample> support,
                             const Image& query, const BinaryMask& query_mask, double alpha,
                             double clamp_eps, const PseudoMaskSource& pseudo_source = {});

// Exact reverse-mode gradient of trace.total with respect to weights and bias.
Gradients backward(const EpisodeTrace& trace, const ModelParams& params);

struct MomentumState {
  std::vector<double> weights;
  std::vector<double> bias;
};

// v <- momentum * v + g; params <- params - lr * v. Throws NumericalError on
// non-finite gradients, leaving params untouched.
void sgd_step(ModelParams& params, const Gradients& grads, double learning_rate,
              double momentum, MomentumState& state);

struct LossRecord {
  int episode = 0;
  double sup_loss = 0.0;
  std::optional<double> selfsup_loss;
  double total_loss = 0.0;
  bool pseudo_generated = false;
  bool skipped = false;  // degenerate support; no update was made
};

// One optimization step on an episode through both pathways.
LossRecord train_episode(ModelParams& params, MomentumState& state, const Episode& episode,
                         const FoldConfig& fold, const TrainConfig& config, Rng& pseudo_rng);

struct TrainResult {
  ModelParams params;
  std::vector<LossRecord> log;
};

// Episodic training on base classes. Fully determined by (dataset, fold, config).
TrainResult train(const Dataset& dataset, const FoldConfig& fold, const TrainConfig& config,
                  const std::function<void(const LossRecord&)>& on_episode = {});

// JSON lines: {episode, sup_loss, selfsup_loss, total_loss, pseudo_generated}.
void write_training_log(const std::filesystem::path& path, std::span<const LossRecord> log);

}  // namespace pseudoseg
