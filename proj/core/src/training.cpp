#include "pseudoseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace pseudoseg {

void TrainConfig::validate() const {
  if (!(alpha >= 0.0)) throw InvalidArgument("alpha must be >= 0");
  if (shots < 1) throw InvalidArgument("shots must be >= 1");
  if (episodes < 0) throw InvalidArgument("episodes must be >= 0");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must be in [0, 1)");
  if (!(clamp_eps > 0.0 && clamp_eps < 0.5)) throw InvalidArgument("clamp_eps must be in (0, 0.5)");
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  if (patch_radius < 0 || embed_dim < 1) throw InvalidArgument("bad extractor shape");
  pseudo.strategy.validate();
  if (pseudo.min_area < 1) throw InvalidArgument("min_area must be >= 1");
}

Gradients Gradients::zeros_like(const ModelParams& params) {
  return {std::vector<double>(params.weights.size(), 0.0),
          std::vector<double>(params.bias.size(), 0.0)};
}

void Gradients::add_scaled(const Gradients& other, double scale) {
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] += scale * other.weights[i];
  for (std::size_t i = 0; i < bias.size(); ++i) bias[i] += scale * other.bias[i];
}

double cross_entropy_loss(const BinaryMask& gt, const ProbMask& pred, double clamp_eps) {
  require_same_size(gt, pred, "cross_entropy_loss");
  if (gt.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < gt.pixel_count(); ++i) {
    const double p = std::clamp(pred[i], clamp_eps, 1.0 - clamp_eps);
    sum += gt[i] ? std::log(p) : std::log(1.0 - p);
  }
  return -sum / static_cast<double>(gt.pixel_count());
}

double total_loss(double sup, std::optional<double> selfsup, double alpha) {
  return selfsup ? sup + alpha * *selfsup : sup;
}

namespace {

std::size_t add_image(EpisodeTrace& trace, const Image& img, const ModelParams& params) {
  trace.images.push_back(img);
  FeatureMap pre = extract_preactivations(img, params);
  FeatureMap feat = pre;
  for (double& v : feat.values()) v = softplus(v);
  trace.preactivations.push_back(std::move(pre));
  trace.features.push_back(std::move(feat));
  return trace.images.size() - 1;
}

PathwayTrace run_pathway(const EpisodeTrace& trace, std::vector<std::size_t> support_images,
                         std::vector<BinaryMask> support_masks, std::size_t query_image,
                         const BinaryMask& target, const ModelParams& params, double weight,
                         double clamp_eps) {
  PathwayTrace pw;
  std::vector<Prototype> fgs, bgs;
  for (std::size_t s = 0; s < support_images.size(); ++s) {
    PrototypePair pair = make_prototypes(trace.features[support_images[s]], support_masks[s]);
    fgs.push_back(std::move(pair.fg));
    bgs.push_back(std::move(pair.bg));
  }
  pw.prototypes = {merge_prototypes(fgs), merge_prototypes(bgs)};
  pw.prediction = cosine_compare(trace.features[query_image], pw.prototypes.fg,
                                 pw.prototypes.bg, params.temperature);
  pw.loss = cross_entropy_loss(target, pw.prediction, clamp_eps);
  pw.support_images = std::move(support_images);
  pw.support_masks = std::move(support_masks);
  pw.query_image = query_image;
  pw.target = target;
  pw.weight = weight;
  return pw;
}

// Gradient of a cosine similarity with respect to both arguments, scaled by
// `upstream` and accumulated into da and db.
void cosine_backward(std::span<const double> a, std::span<const double> b, double upstream,
                     std::span<double> da, std::span<double> db) {
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (std::size_t z = 0; z < a.size(); ++z) {
    dot += a[z] * b[z];
    na2 += a[z] * a[z];
    nb2 += b[z] * b[z];
  }
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  const double denom = na * nb + kCosineEpsilon;
  const double inv = 1.0 / denom;
  const double ka = na > 0.0 ? dot * nb / (denom * denom * na) : 0.0;
  const double kb = nb > 0.0 ? dot * na / (denom * denom * nb) : 0.0;
  for (std::size_t z = 0; z < a.size(); ++z) {
    da[z] += upstream * (b[z] * inv - ka * a[z]);
    db[z] += upstream * (a[z] * inv - kb * b[z]);
  }
}

// Accumulates d(weight * loss)/d(features) for every image the pathway reads.
void pathway_backward(const PathwayTrace& pw, const EpisodeTrace& trace,
                      const ModelParams& params, std::vector<FeatureMap>& d_features) {
  const FeatureMap& q = trace.features[pw.query_image];
  FeatureMap& dq = d_features[pw.query_image];
  const auto d = static_cast<std::size_t>(q.channels());
  const double n = static_cast<double>(q.pixel_count());
  const double T = params.temperature;

  std::vector<double> d_fg(d, 0.0), d_bg(d, 0.0);
  for (std::size_t u = 0; u < q.pixel_count(); ++u) {
    const double p = pw.prediction[u];
    if (p < trace.clamp_eps || p > 1.0 - trace.clamp_eps) continue;
    // d loss / d logit for the sigmoid + cross-entropy pair.
    const double g = pw.weight * (p - static_cast<double>(pw.target[u])) / n;
    if (g == 0.0) continue;
    cosine_backward(q.pixel(u), pw.prototypes.fg.values, g * T, dq.pixel(u), d_fg);
    cosine_backward(q.pixel(u), pw.prototypes.bg.values, -g * T, dq.pixel(u), d_bg);
  }

  // Averaging over k shots spreads the prototype gradient evenly.
  const double shots = static_cast<double>(pw.support_images.size());
  for (std::size_t s = 0; s < pw.support_images.size(); ++s) {
    const FeatureMap& f = trace.features[pw.support_images[s]];
    FeatureMap& df = d_features[pw.support_images[s]];
    const BinaryMask& m = pw.support_masks[s];
    const double fg_area = static_cast<double>(mask_area(m));
    const double bg_area = static_cast<double>(m.pixel_count()) - fg_area;
    for (std::size_t u = 0; u < f.pixel_count(); ++u) {
      const auto& src = m[u] ? d_fg : d_bg;
      const double scale = 1.0 / (shots * (m[u] ? fg_area : bg_area));
      auto out = df.pixel(u);
      for (std::size_t z = 0; z < d; ++z) out[z] += src[z] * scale;
    }
  }
}

void extractor_backward(const Image& img, const FeatureMap& pre, const FeatureMap& d_features,
                        const ModelParams& params, Gradients& grads) {
  const auto d = static_cast<std::size_t>(params.embed_dim);
  const auto P = static_cast<std::size_t>(params.patch_size());
  std::vector<double> patch(P), d_pre(d);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const std::size_t u = img.pixel_index(x, y);
      const auto a = pre.pixel(u);
      const auto g = d_features.pixel(u);
      bool any = false;
      for (std::size_t z = 0; z < d; ++z) {
        d_pre[z] = g[z] * sigmoid(a[z]);
        any = any || d_pre[z] != 0.0;
      }
      if (!any) continue;
      gather_patch(img, params.patch_radius, x, y, patch);
      for (std::size_t z = 0; z < d; ++z) {
        if (d_pre[z] == 0.0) continue;
        double* row = grads.weights.data() + z * P;
        for (std::size_t j = 0; j < P; ++j) row[j] += d_pre[z] * patch[j];
        grads.bias[z] += d_pre[z];
      }
    }
  }
}

}  // namespace

EpisodeTrace forward_episode(const ModelParams& params, std::span<const SupportExample> support,
                             const Image& query, const BinaryMask& query_mask, double alpha,
                             double clamp_eps, const PseudoMaskSource& pseudo_source) {
  if (support.empty()) throw InvalidArgument("forward_episode: empty support set");
  require_same_size(query, query_mask, "forward_episode");
  EpisodeTrace trace;
  trace.alpha = alpha;
  trace.clamp_eps = clamp_eps;

  std::vector<std::size_t> support_ids;
  std::vector<BinaryMask> support_masks;
  for (const SupportExample& s : support) {
    require_same_size(s.image, s.mask, "support example");
    support_ids.push_back(add_image(trace, s.image, params));
    support_masks.push_back(s.mask);
  }
  const std::size_t query_id = add_image(trace, query, params);

  trace.supervised = run_pathway(trace, std::move(support_ids), std::move(support_masks),
                                 query_id, query_mask, params, 1.0, clamp_eps);

  if (pseudo_source) {
    if (std::optional<BinaryMask> pseudo = pseudo_source(trace.features[query_id])) {
      trace.self_supervised = run_pathway(trace, {query_id}, {*pseudo}, query_id, *pseudo,
                                          params, alpha, clamp_eps);
    }
  }

  trace.total = total_loss(
      trace.supervised.loss,
      trace.self_supervised ? std::optional<double>(trace.self_supervised->loss) : std::nullopt,
      alpha);
  return trace;
}

Gradients backward(const EpisodeTrace& trace, const ModelParams& params) {
  std::vector<FeatureMap> d_features;
  d_features.reserve(trace.features.size());
  for (const FeatureMap& f : trace.features) {
    d_features.emplace_back(f.width(), f.height(), f.channels(), 0.0);
  }

  pathway_backward(trace.supervised, trace, params, d_features);
  if (trace.self_supervised) pathway_backward(*trace.self_supervised, trace, params, d_features);

  Gradients grads = Gradients::zeros_like(params);
  for (std::size_t i = 0; i < trace.images.size(); ++i) {
    extractor_backward(trace.images[i], trace.preactivations[i], d_features[i], params, grads);
  }
  return grads;
}

void sgd_step(ModelParams& params, const Gradients& grads, double learning_rate,
              double momentum, MomentumState& state) {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(grads.weights.begin(), grads.weights.end(), finite) ||
      !std::all_of(grads.bias.begin(), grads.bias.end(), finite)) {
    throw NumericalError("non-finite gradient encountered; aborting optimization");
  }
  if (grads.weights.size() != params.weights.size() || grads.bias.size() != params.bias.size()) {
    throw InvalidArgument("sgd_step: gradient shape does not match parameters");
  }
  if (state.weights.empty()) state.weights.assign(params.weights.size(), 0.0);
  if (state.bias.empty()) state.bias.assign(params.bias.size(), 0.0);
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    state.weights[i] = momentum * state.weights[i] + grads.weights[i];
    params.weights[i] -= learning_rate * state.weights[i];
  }
  for (std::size_t i = 0; i < params.bias.size(); ++i) {
    state.bias[i] = momentum * state.bias[i] + grads.bias[i];
    params.bias[i] -= learning_rate * state.bias[i];
  }
}

LossRecord train_episode(ModelParams& params, MomentumState& state, const Episode& episode,
                         const FoldConfig& fold, const TrainConfig& config, Rng& pseudo_rng) {
  PseudoMaskSource source;
  if (config.self_supervision) {
    source = [&](const FeatureMap& query_features) -> std::optional<BinaryMask> {
      auto pseudo = generate_pseudo_episode(
          episode.query.image, episode.query_labels, episode.target_class, fold.base_classes,
          fold.novel_classes, query_features, config.pseudo, pseudo_rng);
      if (!pseudo) return std::nullopt;
      return std::move(pseudo->mask);
    };
  }

  LossRecord record;
  EpisodeTrace trace;
  try {
    trace = forward_episode(params, episode.support, episode.query.image, episode.query.mask,
                            config.alpha, config.clamp_eps, source);
  } catch (const DegenerateSupport&) {
    record.skipped = true;
    return record;
  }
  record.sup_loss = trace.supervised.loss;
  if (trace.self_supervised) {
    record.selfsup_loss = trace.self_supervised->loss;
    record.pseudo_generated = true;
  }
  record.total_loss = trace.total;

  sgd_step(params, backward(trace, params), config.learning_rate, config.momentum, state);
  return record;
}

TrainResult train(const Dataset& dataset, const FoldConfig& fold, const TrainConfig& config,
                  const std::function<void(const LossRecord&)>& on_episode) {
  config.validate();
  TrainResult result;
  result.params =
      initialize_model(config.patch_radius, config.embed_dim, config.temperature, config.seed);
  if (config.episodes == 0) return result;

  const EpisodeSampler sampler(dataset, fold, Split::Base, config.shots);
  // Separate streams keep the episode sequence independent of whether the
  // pseudo-class pathway consumes randomness.
  Rng episode_rng(derive_seed(config.seed, 1));
  Rng pseudo_rng(derive_seed(config.seed, 2));
  MomentumState state;
  result.log.reserve(config.episodes);
  for (int e = 0; e < config.episodes; ++e) {
    const Episode episode = sampler.sample(episode_rng);
    LossRecord record = train_episode(result.params, state, episode, fold, config, pseudo_rng);
    record.episode = e;
    if (on_episode) on_episode(record);
    result.log.push_back(record);
  }
  return result;
}

void write_training_log(const std::filesystem::path& path, std::span<const LossRecord> log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write training log: " + path.string());
  for (const LossRecord& r : log) {
    nlohmann::ordered_json row;
    row["episode"] = r.episode;
    row["sup_loss"] = r.sup_loss;
    row["selfsup_loss"] = r.selfsup_loss ? nlohmann::ordered_json(*r.selfsup_loss) : nlohmann::ordered_json(nullptr);
    row["total_loss"] = r.total_loss;
    row["pseudo_generated"] = r.pseudo_generated;
    if (r.skipped) row["skipped"] = true;
    out << row.dump() << '\n';
  }
  if (!out) throw DataError("failed writing training log: " + path.string());
}

}  // namespace pseudoseg
