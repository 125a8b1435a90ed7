#include "pseudoseg/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>

#include <nlohmann/json.hpp>

#include "pseudoseg/png_io.hpp"

namespace pseudoseg {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const ordered_json& doc) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

std::vector<std::int32_t> sorted_unique(std::vector<std::int32_t> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

}  // namespace

void FoldConfig::validate(const std::vector<ClassInfo>* catalog) const {
  if (base_classes.empty()) throw DataError("fold has no base classes");
  if (novel_classes.empty()) throw DataError("fold has no novel classes");
  for (const auto* set : {&base_classes, &novel_classes}) {
    if (sorted_unique(*set).size() != set->size()) throw DataError("fold lists a class twice");
  }
  for (auto c : base_classes) {
    if (std::find(novel_classes.begin(), novel_classes.end(), c) != novel_classes.end()) {
      throw DataError("fold base and novel classes overlap at class " + std::to_string(c));
    }
  }
  if (catalog) {
    for (const auto* set : {&base_classes, &novel_classes}) {
      for (auto c : *set) {
        const bool known = std::any_of(catalog->begin(), catalog->end(),
                                       [c](const ClassInfo& k) { return k.id == c; });
        if (!known) throw DataError("fold references unknown class " + std::to_string(c));
      }
    }
  }
}

FoldConfig default_fold(const std::vector<ClassInfo>& catalog, int fold, int num_folds) {
  if (num_folds < 2 || fold < 0 || fold >= num_folds) {
    throw InvalidArgument("fold index out of range");
  }
  FoldConfig cfg;
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    auto& target = static_cast<int>(i % num_folds) == fold ? cfg.novel_classes : cfg.base_classes;
    target.push_back(catalog[i].id);
  }
  cfg.validate(&catalog);
  return cfg;
}

FoldConfig read_fold(const fs::path& path) {
  const json doc = read_json_file(path);
  FoldConfig fold;
  try {
    fold.base_classes = doc.at("base_classes").get<std::vector<std::int32_t>>();
    fold.novel_classes = doc.at("novel_classes").get<std::vector<std::int32_t>>();
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  try {
    fold.validate();
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return fold;
}

void write_fold(const fs::path& path, const FoldConfig& fold) {
  ordered_json doc;
  doc["base_classes"] = fold.base_classes;
  doc["novel_classes"] = fold.novel_classes;
  write_json_file(path, doc);
}

DatasetIndex read_index(const fs::path& path) {
  const json doc = read_json_file(path);
  DatasetIndex index;
  try {
    for (const auto& c : doc.at("classes")) {
      index.classes.push_back({c.at("id").get<std::int32_t>(), c.at("name").get<std::string>()});
    }
    for (const auto& e : doc.at("entries")) {
      DatasetEntry entry;
      entry.image = e.at("image").get<std::string>();
      entry.label = e.at("label").get<std::string>();
      if (e.contains("classes")) {
        entry.classes = sorted_unique(e.at("classes").get<std::vector<std::int32_t>>());
      }
      index.entries.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return index;
}

void write_index(const fs::path& path, const DatasetIndex& index) {
  ordered_json doc;
  doc["entries"] = ordered_json::array();
  for (const auto& e : index.entries) {
    ordered_json row;
    row["image"] = e.image;
    row["label"] = e.label;
    row["classes"] = e.classes;
    doc["entries"].push_back(std::move(row));
  }
  doc["classes"] = ordered_json::array();
  for (const auto& c : index.classes) {
    ordered_json row;
    row["id"] = c.id;
    row["name"] = c.name;
    doc["classes"].push_back(std::move(row));
  }
  write_json_file(path, doc);
}

int count_classes(const LabelMap& labels) {
  return static_cast<int>(classes_present(labels).size());
}

std::vector<std::int32_t> classes_present(const LabelMap& labels) {
  std::set<std::int32_t> seen;
  for (auto v : labels.values()) {
    if (v != 0) seen.insert(v);
  }
  return {seen.begin(), seen.end()};
}

namespace {

std::map<std::int32_t, std::size_t> areas_of(const LabelMap& labels) {
  std::map<std::int32_t, std::size_t> areas;
  for (auto v : labels.values()) {
    if (v != 0) ++areas[v];
  }
  return areas;
}

}  // namespace

Dataset make_dataset(std::vector<Image> images, std::vector<LabelMap> labels,
                     std::vector<ClassInfo> catalog) {
  if (images.size() != labels.size()) {
    throw InvalidArgument("make_dataset: image and label counts differ");
  }
  Dataset ds;
  ds.index.classes = std::move(catalog);
  for (std::size_t i = 0; i < images.size(); ++i) {
    require_same_size(images[i], labels[i], "make_dataset");
    DatasetEntry entry;
    entry.classes = classes_present(labels[i]);
    for (auto c : entry.classes) {
      const bool known = std::any_of(ds.index.classes.begin(), ds.index.classes.end(),
                                     [c](const ClassInfo& k) { return k.id == c; });
      if (!known) throw DataError("label map uses unknown class " + std::to_string(c));
    }
    ds.index.entries.push_back(std::move(entry));
    ds.class_areas.push_back(areas_of(labels[i]));
  }
  ds.images = std::move(images);
  ds.labels = std::move(labels);
  return ds;
}

Dataset load_dataset(const fs::path& root) {
  const fs::path index_path = root / "index.json";
  if (!fs::exists(index_path)) throw DataError("missing dataset index: " + index_path.string());
  Dataset ds;
  ds.root = root;
  ds.index = read_index(index_path);

  std::set<std::int32_t> catalog;
  for (const auto& c : ds.index.classes) {
    if (c.id <= 0) throw DataError(index_path.string() + ": class ids must be positive");
    if (!catalog.insert(c.id).second) {
      throw DataError(index_path.string() + ": duplicate class id " + std::to_string(c.id));
    }
  }

  for (auto& entry : ds.index.entries) {
    const fs::path image_path = root / entry.image;
    const fs::path label_path = root / entry.label;
    if (!fs::exists(image_path)) throw DataError("missing image: " + image_path.string());
    if (!fs::exists(label_path)) throw DataError("missing label map: " + label_path.string());
    Image img = read_image_png(image_path);
    LabelMap labels = read_label_png(label_path);
    if (!img.same_size(labels)) {
      throw DataError("label map dimensions do not match image: " + label_path.string());
    }
    const auto present = classes_present(labels);
    for (auto c : present) {
      if (!catalog.count(c)) {
        throw DataError("unknown class id " + std::to_string(c) + " in " + label_path.string());
      }
    }
    if (entry.classes.empty()) {
      entry.classes = present;
    } else if (entry.classes != present) {
      throw DataError("index class list disagrees with label map: " + label_path.string());
    }
    ds.class_areas.push_back(areas_of(labels));
    ds.images.push_back(std::move(img));
    ds.labels.push_back(std::move(labels));
  }
  return ds;
}

EpisodeSampler::EpisodeSampler(const Dataset& dataset, const FoldConfig& fold, Split split,
                               int shots)
    : dataset_(&dataset), shots_(shots) {
  if (shots < 1) throw InvalidArgument("shots must be >= 1");
  fold.validate(&dataset.index.classes);
  std::vector<std::int32_t> classes =
      sorted_unique(split == Split::Base ? fold.base_classes : fold.novel_classes);
  for (auto c : classes) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto& areas = dataset.class_areas[i];
      const auto it = areas.find(c);
      if (it != areas.end() && it->second >= kMinEpisodeMaskArea) pool.push_back(i);
    }
    if (pool.size() >= static_cast<std::size_t>(shots) + 1) {
      eligible_.push_back(c);
      pools_.emplace(c, std::move(pool));
    }
  }
  if (eligible_.empty()) {
    throw DataError(std::string("no ") + (split == Split::Base ? "base" : "novel") +
                    " class has the " + std::to_string(shots + 1) +
                    " images needed for a " + std::to_string(shots) + "-shot episode");
  }
}

Episode EpisodeSampler::sample(Rng& rng) const {
  Episode ep;
  ep.target_class = eligible_[uniform_index(rng, eligible_.size())];
  std::vector<std::size_t> pool = pools_.at(ep.target_class);
  // Partial Fisher-Yates: the first shots+1 slots become a uniform draw.
  const std::size_t need = static_cast<std::size_t>(shots_) + 1;
  for (std::size_t i = 0; i < need; ++i) {
    const std::size_t j = i + uniform_index(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  for (std::size_t i = 0; i < need; ++i) {
    const std::size_t id = pool[i];
    SupportExample ex{dataset_->images[id], class_mask(dataset_->labels[id], ep.target_class)};
    if (i + 1 < need) {
      ep.support.push_back(std::move(ex));
      ep.support_ids.push_back(id);
    } else {
      ep.query = std::move(ex);
      ep.query_id = id;
      ep.query_labels = dataset_->labels[id];
    }
  }
  return ep;
}

Episode sample_episode(const Dataset& dataset, const FoldConfig& fold, Split split, int shots,
                       Rng& rng) {
  return EpisodeSampler(dataset, fold, split, shots).sample(rng);
}

// ---------------------------------------------------------------------------
// Synthetic dataset

void SyntheticConfig::validate() const {
  if (n_images < 1) throw InvalidArgument("n_images must be >= 1");
  if (n_classes < 8) throw InvalidArgument("n_classes must be >= 8 (4 folds x 2 novel)");
  if (max_objects < 1) throw InvalidArgument("max_objects must be >= 1");
  if (max_objects > n_classes) throw InvalidArgument("max_objects exceeds n_classes");
  if (image_size < 32) throw InvalidArgument("image_size must be >= 32");
}

namespace {

constexpr std::array<const char*, 4> kShapes = {"disk", "rectangle", "triangle", "annulus"};
constexpr std::array<const char*, 3> kTextures = {"flat", "stripes", "checker"};

struct ClassStyle {
  int shape;
  int texture;
  std::array<double, 3> color;
};

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double hh = h * 6.0;
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

ClassStyle style_of(int catalog_index, int n_classes) {
  ClassStyle s;
  s.shape = (catalog_index / 3) % 4;
  s.texture = catalog_index % 3;
  s.color = hsv_to_rgb(static_cast<double>(catalog_index) / n_classes, 0.8, 0.9);
  return s;
}

struct Placement {
  double cx, cy, radius, aspect;
  int catalog_index;
};

bool inside_shape(int shape, double dx, double dy, double r, double aspect) {
  const double dist = std::hypot(dx, dy);
  switch (shape) {
    case 0: return dist <= r;
    case 1: return std::abs(dx) <= r * std::cos(aspect) && std::abs(dy) <= r * std::sin(aspect);
    case 2: {
      // Upright triangle inscribed in the circle of radius r.
      const double top = -r, base = 0.5 * r;
      if (dy < top || dy > base) return false;
      const double half_width = (dy - top) / (base - top) * r * std::sqrt(3.0) / 2.0;
      return std::abs(dx) <= half_width;
    }
    default: return dist <= r && dist >= 0.5 * r;
  }
}

double texture_factor(int texture, int x, int y) {
  switch (texture) {
    case 1: return ((y / 3) % 2 == 0) ? 1.0 : 0.45;
    case 2: return (((x / 4) + (y / 4)) % 2 == 0) ? 1.0 : 0.45;
    default: return 1.0;
  }
}

double quantize(double v) { return std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

// Returns false when the objects could not be placed without overlap.
bool render(const SyntheticConfig& cfg, Rng& rng, Image& img, LabelMap& labels) {
  const int size = cfg.image_size;
  const int n_objects = 1 + static_cast<int>(uniform_index(rng, cfg.max_objects));

  // Distinct classes for this image.
  std::vector<int> order(cfg.n_classes);
  for (int i = 0; i < cfg.n_classes; ++i) order[i] = i;
  for (int i = 0; i < n_objects; ++i) {
    std::swap(order[i], order[i + uniform_index(rng, order.size() - i)]);
  }

  std::vector<Placement> placed;
  for (int k = 0; k < n_objects; ++k) {
    bool ok = false;
    for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
      const double r = uniform_real(rng, 0.11, 0.2) * size;
      const double cx = uniform_real(rng, r, size - 1 - r);
      const double cy = uniform_real(rng, r, size - 1 - r);
      ok = std::all_of(placed.begin(), placed.end(), [&](const Placement& p) {
        return std::hypot(p.cx - cx, p.cy - cy) >= p.radius + r + 2.0;
      });
      if (ok) {
        const double aspect = uniform_real(rng, std::numbers::pi / 6, std::numbers::pi / 3);
        placed.push_back({cx, cy, r, aspect, order[k]});
      }
    }
    if (!ok) return false;
  }

  // Background: low-saturation base colour, a smooth random wave pattern and
  // per-pixel noise.
  const auto base =
      hsv_to_rgb(uniform_unit(rng), uniform_real(rng, 0.0, 0.25), uniform_real(rng, 0.3, 0.7));
  std::array<double, 6> wave{};
  for (double& v : wave) v = uniform_unit(rng);
  img = make_image(size, size);
  labels = LabelMap(size, size, 1, 0);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double pattern =
          0.08 * std::sin(2 * std::numbers::pi * (wave[0] * x / size * 3 + wave[1])) +
          0.08 * std::sin(2 * std::numbers::pi * (wave[2] * y / size * 3 + wave[3])) +
          0.05 * std::sin(2 * std::numbers::pi * (wave[4] * (x + y) / size * 4 + wave[5]));
      for (int c = 0; c < 3; ++c) {
        img(x, y, c) = base[c] + pattern + uniform_real(rng, -0.05, 0.05);
      }
    }
  }

  for (const Placement& p : placed) {
    const ClassStyle style = style_of(p.catalog_index, cfg.n_classes);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        if (!inside_shape(style.shape, x - p.cx, y - p.cy, p.radius, p.aspect)) continue;
        const double t = texture_factor(style.texture, x, y);
        for (int c = 0; c < 3; ++c) {
          img(x, y, c) = style.color[c] * t + uniform_real(rng, -0.03, 0.03);
        }
        labels(x, y) = p.catalog_index + 1;
      }
    }
  }
  for (double& v : img.values()) v = quantize(v);

  // Every object must survive rasterization with a usable area.
  const auto areas = areas_of(labels);
  return static_cast<int>(areas.size()) == n_objects &&
         std::all_of(areas.begin(), areas.end(),
                     [](const auto& kv) { return kv.second >= kMinEpisodeMaskArea; });
}

}  // namespace

std::vector<ClassInfo> synthetic_catalog(int n_classes) {
  std::vector<ClassInfo> catalog;
  for (int i = 0; i < n_classes; ++i) {
    const ClassStyle s = style_of(i, n_classes);
    catalog.push_back({i + 1, std::string(kShapes[s.shape]) + "-" + kTextures[s.texture] + "-" +
                                  std::to_string(i)});
  }
  return catalog;
}

DatasetIndex generate_synthetic_dataset(const fs::path& out_dir, const SyntheticConfig& cfg) {
  cfg.validate();
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "labels");

  DatasetIndex index;
  index.classes = synthetic_catalog(cfg.n_classes);
  Rng rng(cfg.seed);
  for (int i = 0; i < cfg.n_images; ++i) {
    Image img;
    LabelMap labels;
    int attempts = 0;
    while (!render(cfg, rng, img, labels)) {
      if (++attempts > 1000) throw std::runtime_error("synthetic generator cannot place objects");
    }
    char name[32];
    std::snprintf(name, sizeof(name), "%04d.png", i);
    const std::string image_rel = std::string("images/") + name;
    const std::string label_rel = std::string("labels/") + name;
    write_image_png(out_dir / image_rel, img);
    write_label_png(out_dir / label_rel, labels);
    index.entries.push_back({image_rel, label_rel, classes_present(labels)});
  }
  write_index(out_dir / "index.json", index);
  return index;
}

}  // namespace pseudoseg
