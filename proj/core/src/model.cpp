#include "pseudoseg/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pseudoseg/random.hpp"

namespace pseudoseg {

void ModelParams::validate() const {
  if (patch_radius < 0) throw InvalidArgument("patch_radius must be >= 0");
  if (embed_dim < 1) throw InvalidArgument("embed_dim must be >= 1");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidArgument("temperature must be positive and finite");
  }
  if (weights.size() != static_cast<std::size_t>(embed_dim) * patch_size() ||
      bias.size() != static_cast<std::size_t>(embed_dim)) {
    throw InvalidArgument("model weight/bias sizes do not match patch_radius and embed_dim");
  }
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(weights.begin(), weights.end(), finite) ||
      !std::all_of(bias.begin(), bias.end(), finite)) {
    throw InvalidArgument("model parameters contain non-finite values");
  }
}

ModelParams initialize_model(int patch_radius, int embed_dim, double temperature,
                             std::uint64_t seed) {
  ModelParams p;
  p.patch_radius = patch_radius;
  p.embed_dim = embed_dim;
  p.temperature = temperature;
  p.seed = seed;
  if (patch_radius < 0 || embed_dim < 1) {
    throw InvalidArgument("initialize_model: bad patch_radius or embed_dim");
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(p.patch_size()));
  Rng rng(seed);
  p.weights.resize(static_cast<std::size_t>(embed_dim) * p.patch_size());
  for (double& w : p.weights) w = uniform_real(rng, -bound, bound);
  p.bias.resize(embed_dim);
  for (double& b : p.bias) b = uniform_real(rng, -bound, bound);
  p.validate();
  return p;
}

double softplus(double u) { return u > 0.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u)); }

double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

void gather_patch(const Image& img, int r, int x, int y, std::span<double> out) {
  const int w = img.width();
  const int h = img.height();
  std::size_t k = 0;
  for (int dy = -r; dy <= r; ++dy) {
    const int ys = std::clamp(y + dy, 0, h - 1);
    for (int dx = -r; dx <= r; ++dx) {
      const int xs = std::clamp(x + dx, 0, w - 1);
      const auto px = img.pixel(img.pixel_index(xs, ys));
      out[k++] = px[0];
      out[k++] = px[1];
      out[k++] = px[2];
    }
  }
}

namespace {

// Four partial sums; the summation order is fixed so results stay reproducible.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    s0 += a[j] * b[j];
    s1 += a[j + 1] * b[j + 1];
    s2 += a[j + 2] * b[j + 2];
    s3 += a[j + 3] * b[j + 3];
  }
  for (; j < n; ++j) s0 += a[j] * b[j];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

FeatureMap extract_preactivations(const Image& img, const ModelParams& params) {
  const auto d = static_cast<std::size_t>(params.embed_dim);
  const auto P = static_cast<std::size_t>(params.patch_size());
  // Edge-replicated copy so each patch row is a contiguous run.
  const int r = params.patch_radius;
  const int w = img.width();
  const int h = img.height();
  const int pw = w + 2 * r;
  std::vector<double> padded(static_cast<std::size_t>(pw) * (h + 2 * r) * 3);
  for (int y = 0; y < h + 2 * r; ++y) {
    const int ys = std::clamp(y - r, 0, h - 1);
    for (int x = 0; x < pw; ++x) {
      const auto px = img.pixel(img.pixel_index(std::clamp(x - r, 0, w - 1), ys));
      std::copy(px.begin(), px.end(), padded.begin() + (static_cast<std::size_t>(y) * pw + x) * 3);
    }
  }
  const auto row_len = static_cast<std::size_t>(3 * (2 * r + 1));
  std::vector<double> patch(P);
  FeatureMap out(w, h, static_cast<int>(d), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int dy = 0; dy <= 2 * r; ++dy) {
        const double* src = padded.data() + (static_cast<std::size_t>(y + dy) * pw + x) * 3;
        std::copy(src, src + row_len, patch.begin() + dy * row_len);
      }
      double* acc = out.pixel(out.pixel_index(x, y)).data();
      for (std::size_t z = 0; z < d; ++z) {
        acc[z] = params.bias[z] + dot(params.weights.data() + z * P, patch.data(), P);
      }
    }
  }
  return out;
}

FeatureMap extract_features(const Image& img, const ModelParams& params) {
  FeatureMap f = extract_preactivations(img, params);
  for (double& v : f.values()) v = softplus(v);
  return f;
}

PrototypePair make_prototypes(const FeatureMap& f, const BinaryMask& m) {
  require_same_size(f, m, "make_prototypes");
  const std::size_t area = mask_area(m);
  if (area == 0) throw DegenerateSupport("support mask has no foreground pixels");
  if (area == m.pixel_count()) throw DegenerateSupport("support mask has no background pixels");
  return {Prototype{masked_mean(f, m)}, Prototype{masked_mean(f, invert(m))}};
}

Prototype merge_prototypes(std::span<const Prototype> prototypes) {
  if (prototypes.empty()) throw InvalidArgument("merge_prototypes: empty list");
  for (const Prototype& p : prototypes) {
    if (p.values.size() != prototypes.front().values.size()) {
      throw InvalidArgument("merge_prototypes: prototype dimensions differ");
    }
  }
  // Canonical order makes the result independent of input order; the running
  // mean returns v exactly for k copies of v.
  std::vector<const std::vector<double>*> order;
  for (const Prototype& p : prototypes) order.push_back(&p.values);
  std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return *a < *b; });
  Prototype mean{*order.front()};
  for (std::size_t i = 1; i < order.size(); ++i) {
    const auto& v = *order[i];
    const double inv = 1.0 / static_cast<double>(i + 1);
    for (std::size_t z = 0; z < v.size(); ++z) mean.values[z] += (v[z] - mean.values[z]) * inv;
  }
  return mean;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t z = 0; z < a.size(); ++z) {
    dot += a[z] * b[z];
    na += a[z] * a[z];
    nb += b[z] * b[z];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb) + kCosineEpsilon);
}

ProbMask cosine_compare(const FeatureMap& f, const Prototype& fg, const Prototype& bg,
                        double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("cosine_compare: temperature must be positive");
  const auto d = static_cast<std::size_t>(f.channels());
  if (fg.values.size() != d || bg.values.size() != d) {
    throw InvalidArgument("cosine_compare: prototype dimension does not match features");
  }
  auto zero = [](const Prototype& p) {
    return std::all_of(p.values.begin(), p.values.end(), [](double v) { return v == 0.0; });
  };
  if (zero(fg) || zero(bg)) throw InvalidArgument("cosine_compare: zero-norm prototype");

  ProbMask out(f.width(), f.height(), 1, 0.0);
  for (std::size_t i = 0; i < f.pixel_count(); ++i) {
    const auto u = f.pixel(i);
    const double logit =
        temperature * (cosine_similarity(u, fg.values) - cosine_similarity(u, bg.values));
    out[i] = sigmoid(logit);
  }
  return out;
}

PrototypePair support_prototypes(std::span<const SupportExample> support,
                                 const ModelParams& params) {
  if (support.empty()) throw InvalidArgument("predict: support set is empty");
  std::vector<Prototype> fgs, bgs;
  for (const SupportExample& s : support) {
    require_same_size(s.image, s.mask, "support example");
    PrototypePair pair = make_prototypes(extract_features(s.image, params), s.mask);
    fgs.push_back(std::move(pair.fg));
    bgs.push_back(std::move(pair.bg));
  }
  return {merge_prototypes(fgs), merge_prototypes(bgs)};
}

ProbMask predict(std::span<const SupportExample> support, const Image& query,
                 const ModelParams& params) {
  const PrototypePair protos = support_prototypes(support, params);
  return cosine_compare(extract_features(query, params), protos.fg, protos.bg,
                        params.temperature);
}

namespace {

void append_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xff));
    bits >>= 8;
  }
}

double read_le(const std::string& in, std::size_t offset) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) {
    bits = (bits << 8) | static_cast<unsigned char>(in[offset + i]);
  }
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string serialize_checkpoint(const ModelParams& params) {
  params.validate();
  nlohmann::ordered_json header;
  header["patch_radius"] = params.patch_radius;
  header["embed_dim"] = params.embed_dim;
  header["temperature"] = params.temperature;
  header["seed"] = params.seed;
  header["version"] = kCheckpointVersion;
  std::string out = header.dump();
  out.push_back('\n');
  for (double w : params.weights) append_le(out, w);
  for (double b : params.bias) append_le(out, b);
  return out;
}

ModelParams deserialize_checkpoint(const std::string& bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos) throw DataError("checkpoint header missing");
  ModelParams p;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(0, newline));
    if (header.at("version").get<int>() != kCheckpointVersion) {
      throw DataError("unsupported checkpoint version");
    }
    p.patch_radius = header.at("patch_radius").get<int>();
    p.embed_dim = header.at("embed_dim").get<int>();
    p.temperature = header.at("temperature").get<double>();
    p.seed = header.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint header: ") + e.what());
  }
  if (p.patch_radius < 0 || p.embed_dim < 1) throw DataError("checkpoint has invalid shape");
  const std::size_t nw = static_cast<std::size_t>(p.embed_dim) * p.patch_size();
  const std::size_t nb = static_cast<std::size_t>(p.embed_dim);
  if (bytes.size() - newline - 1 != 8 * (nw + nb)) {
    throw DataError("checkpoint payload size does not match header");
  }
  std::size_t offset = newline + 1;
  p.weights.resize(nw);
  for (double& w : p.weights) {
    w = read_le(bytes, offset);
    offset += 8;
  }
  p.bias.resize(nb);
  for (double& b : p.bias) {
    b = read_le(bytes, offset);
    offset += 8;
  }
  try {
    p.validate();
  } catch (const InvalidArgument& e) {
    throw DataError(std::string("invalid checkpoint: ") + e.what());
  }
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  const std::string bytes = serialize_checkpoint(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return deserialize_checkpoint(buffer.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace pseudoseg
