#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pseudoseg/grid.hpp"

namespace pseudoseg {

// Trainable state of the shared segmentation model.
//
// The extractor maps each pixel's (2r+1) x (2r+1) x 3 patch through an affine
// map to `embed_dim` channels followed by softplus. Weights are row-major
// [embed_dim][patch_size]; the patch vector is ordered (dy, dx, channel) with
// dy and dx running from -r to r.
struct ModelParams {
  int patch_radius = 2;
  int embed_dim = 16;
  double temperature = 20.0;
  std::uint64_t seed = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  int patch_size() const { return (2 * patch_radius + 1) * (2 * patch_radius + 1) * 3; }

  // Throws InvalidArgument on inconsistent sizes or non-finite values.
  void validate() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and bias.
ModelParams initialize_model(int patch_radius, int embed_dim, double temperature,
                             std::uint64_t seed);

struct Prototype {
  std::vector<double> values;
  friend bool operator==(const Prototype&, const Prototype&) = default;
};

struct PrototypePair {
  Prototype fg;
  Prototype bg;
};

struct SupportExample {
  Image image;
  BinaryMask mask;
};

constexpr double kCosineEpsilon = 1e-8;

// Edge-replicated patch vector of pixel (x, y); `out` has patch_size entries.
void gather_patch(const Image& img, int patch_radius, int x, int y, std::span<double> out);

// Affine response before the nonlinearity.
FeatureMap extract_preactivations(const Image& img, const ModelParams& params);
FeatureMap extract_features(const Image& img, const ModelParams& params);

double softplus(double u);
double sigmoid(double u);

// Masked average pooling of foreground and background. Throws
// DegenerateSupport if either side of the mask is empty.
PrototypePair make_prototypes(const FeatureMap& f, const BinaryMask& m);

// Channel-wise running mean over the inputs in sorted order: permutation
// invariant, and k identical inputs return that input exactly.
Prototype merge_prototypes(std::span<const Prototype> prototypes);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Two-way softmax over temperature-scaled cosine similarities to the
// foreground and background prototypes.
ProbMask cosine_compare(const FeatureMap& f, const Prototype& fg, const Prototype& bg,
                        double temperature);

// Prototypes from every shot, averaged, then compared against the query.
PrototypePair support_prototypes(std::span<const SupportExample> support,
                                 const ModelParams& params);
ProbMask predict(std::span<const SupportExample> support, const Image& query,
                 const ModelParams& params);

// Checkpoint: one line of JSON {patch_radius, embed_dim, temperature, seed,
// version} followed by the little-endian float64 weights then bias.
inline constexpr int kCheckpointVersion = 1;
std::string serialize_checkpoint(const ModelParams& params);
ModelParams deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace pseudoseg
