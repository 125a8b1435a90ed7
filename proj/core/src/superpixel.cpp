#include "pseudoseg/superpixel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pseudoseg {
namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), size_(n, 1), internal_(n, 0.0) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  std::int32_t find(std::int32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  // Joins two roots; the larger set stays root (lower id on ties).
  std::int32_t join(std::int32_t a, std::int32_t b) {
    if (size_[a] < size_[b] || (size_[a] == size_[b] && b < a)) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return a;
  }

  std::int32_t size(std::int32_t root) const { return size_[root]; }
  double& internal(std::int32_t root) { return internal_[root]; }

 private:
  std::vector<std::int32_t> parent_;
  std::vector<std::int32_t> size_;
  std::vector<double> internal_;
};

}  // namespace

void FelzenszwalbParams::validate() const {
  if (!(scale > 0.0)) throw InvalidArgument("felzenszwalb scale must be positive");
  if (!(sigma >= 0.0)) throw InvalidArgument("felzenszwalb sigma must be non-negative");
  if (min_size < 1) throw InvalidArgument("felzenszwalb min_size must be >= 1");
}

void SlicParams::validate() const {
  if (n_segments < 1) throw InvalidArgument("slic n_segments must be >= 1");
  if (!(compactness > 0.0)) throw InvalidArgument("slic compactness must be positive");
  if (max_iterations < 1) throw InvalidArgument("slic max_iterations must be >= 1");
}

std::string to_string(SuperpixelAlgo algo) {
  switch (algo) {
    case SuperpixelAlgo::Felzenszwalb: return "felzenszwalb";
    case SuperpixelAlgo::Slic: return "slic";
    case SuperpixelAlgo::Grid: return "grid";
  }
  return "unknown";
}

SuperpixelAlgo parse_superpixel_algo(const std::string& name) {
  if (name == "felzenszwalb") return SuperpixelAlgo::Felzenszwalb;
  if (name == "slic") return SuperpixelAlgo::Slic;
  if (name == "grid") return SuperpixelAlgo::Grid;
  throw InvalidArgument("unknown superpixel algorithm: " + name);
}

std::vector<GraphEdge> build_grid_graph(const Image& rgb) {
  const int w = rgb.width();
  const int h = rgb.height();
  std::vector<GraphEdge> edges;
  edges.reserve(static_cast<std::size_t>(w) * h * 4);
  auto diff = [&](int x1, int y1, int x2, int y2) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double d = rgb(x1, y1, c) - rgb(x2, y2, c);
      s += d * d;
    }
    return std::sqrt(s);
  };
  auto id = [&](int x, int y) { return static_cast<std::int32_t>(y * w + x); };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (x < w - 1) edges.push_back({id(x, y), id(x + 1, y), diff(x, y, x + 1, y)});
      if (y < h - 1) edges.push_back({id(x, y), id(x, y + 1), diff(x, y, x, y + 1)});
      if (x < w - 1 && y < h - 1) {
        edges.push_back({id(x, y), id(x + 1, y + 1), diff(x, y, x + 1, y + 1)});
      }
      if (x < w - 1 && y > 0) {
        edges.push_back({id(x, y), id(x + 1, y - 1), diff(x, y, x + 1, y - 1)});
      }
    }
  }
  return edges;
}

SuperpixelMap relabel_compact(const Grid<std::int32_t, RegionTag>& ids) {
  SuperpixelMap out{Grid<std::int32_t, RegionTag>(ids.width(), ids.height(), 1, 0), 0};
  std::vector<std::int32_t> remap;
  for (std::size_t i = 0; i < ids.pixel_count(); ++i) {
    const auto old = static_cast<std::size_t>(ids[i]);
    if (old >= remap.size()) remap.resize(old + 1, -1);
    if (remap[old] < 0) remap[old] = out.num_regions++;
    out.region_id[i] = remap[old];
  }
  return out;
}

SuperpixelMap felzenszwalb(const Image& img, const FelzenszwalbParams& params) {
  params.validate();
  if (img.empty()) throw InvalidArgument("felzenszwalb: empty image");

  Image smoothed = params.sigma > 0.0 ? gaussian_smooth(img, params.sigma) : img;
  for (double& v : smoothed.values()) v *= 255.0;

  std::vector<GraphEdge> edges = build_grid_graph(smoothed);
  std::stable_sort(edges.begin(), edges.end(),
                   [](const GraphEdge& a, const GraphEdge& b) { return a.weight < b.weight; });

  DisjointSets sets(img.pixel_count());
  for (const GraphEdge& e : edges) {
    const std::int32_t a = sets.find(e.a);
    const std::int32_t b = sets.find(e.b);
    if (a == b) continue;
    const double ta = sets.internal(a) + params.scale / sets.size(a);
    const double tb = sets.internal(b) + params.scale / sets.size(b);
    if (e.weight <= ta && e.weight <= tb) {
      // Edges arrive in ascending order, so the joining edge is the new maximum.
      sets.internal(sets.join(a, b)) = e.weight;
    }
  }

  for (const GraphEdge& e : edges) {
    const std::int32_t a = sets.find(e.a);
    const std::int32_t b = sets.find(e.b);
    if (a != b && (sets.size(a) < params.min_size || sets.size(b) < params.min_size)) {
      sets.join(a, b);
    }
  }

  Grid<std::int32_t, RegionTag> roots(img.width(), img.height(), 1, 0);
  for (std::size_t i = 0; i < roots.pixel_count(); ++i) {
    roots[i] = sets.find(static_cast<std::int32_t>(i));
  }
  return relabel_compact(roots);
}

void srgb_to_lab(double r, double g, double b, double& L, double& A, double& B) {
  auto linear = [](double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
  };
  const double rl = linear(r), gl = linear(g), bl = linear(b);
  const double x = (0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl) / 0.95047;
  const double y = (0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl) / 1.00000;
  const double z = (0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl) / 1.08883;
  auto f = [](double t) {
    constexpr double delta = 6.0 / 29.0;
    return t > delta * delta * delta ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
  };
  const double fx = f(x), fy = f(y), fz = f(z);
  L = 116.0 * fy - 16.0;
  A = 500.0 * (fx - fy);
  B = 200.0 * (fy - fz);
}

namespace {

struct SlicCenter {
  double l, a, b, x, y;
};

// Absorbs 4-connected components smaller than min_area into the largest
// adjacent component, then relabels compactly.
SuperpixelMap enforce_connectivity(const Grid<std::int32_t, RegionTag>& labels,
                                   std::size_t min_area) {
  const int w = labels.width();
  const int h = labels.height();
  const std::size_t n = labels.pixel_count();

  // Connected components of equal labels.
  std::vector<std::int32_t> comp(n, -1);
  std::vector<std::size_t> comp_size;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < n; ++start) {
    if (comp[start] >= 0) continue;
    const auto id = static_cast<std::int32_t>(comp_size.size());
    comp_size.push_back(0);
    comp[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++comp_size[id];
      const int x = static_cast<int>(p % w);
      const int y = static_cast<int>(p / w);
      const int nx[4] = {x - 1, x + 1, x, x};
      const int ny[4] = {y, y, y - 1, y + 1};
      for (int k = 0; k < 4; ++k) {
        if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h) continue;
        const std::size_t q = labels.pixel_index(nx[k], ny[k]);
        if (comp[q] < 0 && labels[q] == labels[p]) {
          comp[q] = id;
          stack.push_back(q);
        }
      }
    }
  }

  std::vector<std::vector<std::size_t>> members(comp_size.size());
  for (std::size_t p = 0; p < n; ++p) members[comp[p]].push_back(p);

  DisjointSets merged(comp_size.size());
  std::vector<std::size_t> merged_size = comp_size;
  for (std::size_t c = 0; c < comp_size.size(); ++c) {
    const auto root = merged.find(static_cast<std::int32_t>(c));
    if (merged_size[root] >= min_area) continue;
    // Largest adjacent (merged) component, lowest root id on ties.
    std::int32_t best = -1;
    for (std::size_t p : members[root]) {
      const int x = static_cast<int>(p % w);
      const int y = static_cast<int>(p / w);
      const int nx[4] = {x - 1, x + 1, x, x};
      const int ny[4] = {y, y, y - 1, y + 1};
      for (int k = 0; k < 4; ++k) {
        if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h) continue;
        const auto other = merged.find(comp[labels.pixel_index(nx[k], ny[k])]);
        if (other == root) continue;
        if (best < 0 || merged_size[other] > merged_size[best] ||
            (merged_size[other] == merged_size[best] && other < best)) {
          best = other;
        }
      }
    }
    if (best < 0) continue;
    const std::size_t total = merged_size[root] + merged_size[best];
    const auto joined = merged.join(root, best);
    const auto absorbed = joined == root ? best : root;
    merged_size[joined] = total;
    auto& into = members[joined];
    into.insert(into.end(), members[absorbed].begin(), members[absorbed].end());
    members[absorbed].clear();
    members[absorbed].shrink_to_fit();
  }

  Grid<std::int32_t, RegionTag> out(w, h, 1, 0);
  for (std::size_t p = 0; p < n; ++p) out[p] = merged.find(comp[p]);
  return relabel_compact(out);
}

}  // namespace

SuperpixelMap slic(const Image& img, const SlicParams& params) {
  params.validate();
  const int w = img.width();
  const int h = img.height();
  const std::size_t n = img.pixel_count();
  if (n == 0) throw InvalidArgument("slic: empty image");
  if (static_cast<std::size_t>(params.n_segments) > n) {
    throw InvalidArgument("slic: n_segments exceeds pixel count");
  }

  Image lab(w, h, 3, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    srgb_to_lab(img[3 * p], img[3 * p + 1], img[3 * p + 2], lab[3 * p], lab[3 * p + 1],
                lab[3 * p + 2]);
  }

  const double step = std::sqrt(static_cast<double>(n) / params.n_segments);
  int nx = std::max(1, static_cast<int>(std::lround(w / step)));
  int ny = std::max(1, static_cast<int>(std::lround(h / step)));
  nx = std::min(nx, w);
  ny = std::min(ny, h);
  while (nx * ny > params.n_segments) {
    if (nx >= ny && nx > 1) --nx; else --ny;
  }

  auto gradient = [&](int x, int y) {
    const int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
    const int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
    double g = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double dx = lab(xr, y, c) - lab(xl, y, c);
      const double dy = lab(x, yd, c) - lab(x, yu, c);
      g += dx * dx + dy * dy;
    }
    return g;
  };

  std::vector<SlicCenter> centers;
  centers.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      int cx = std::clamp(static_cast<int>(std::floor((i + 0.5) * w / nx - 0.5)), 0, w - 1);
      int cy = std::clamp(static_cast<int>(std::floor((j + 0.5) * h / ny - 0.5)), 0, h - 1);
      int bx = cx, by = cy;
      double best = gradient(cx, cy);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int x = cx + dx, y = cy + dy;
          if (x < 0 || y < 0 || x >= w || y >= h) continue;
          const double g = gradient(x, y);
          if (g < best) {
            best = g;
            bx = x;
            by = y;
          }
        }
      }
      centers.push_back({lab(bx, by, 0), lab(bx, by, 1), lab(bx, by, 2),
                         static_cast<double>(bx), static_cast<double>(by)});
    }
  }

  const double spatial_weight = params.compactness / step;
  Grid<std::int32_t, RegionTag> assign(w, h, 1, -1);
  std::vector<double> dist(n);
  auto distance = [&](const SlicCenter& c, int x, int y) {
    double dc = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double d = lab(x, y, k) - (k == 0 ? c.l : k == 1 ? c.a : c.b);
      dc += d * d;
    }
    const double dx = x - c.x, dy = y - c.y;
    return std::sqrt(dc + (dx * dx + dy * dy) * spatial_weight * spatial_weight);
  };

  for (int iter = 0; iter < params.max_iterations; ++iter) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    std::fill(assign.values().begin(), assign.values().end(), -1);
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const SlicCenter& c = centers[k];
      const int x0 = std::max(0, static_cast<int>(std::ceil(c.x - step)));
      const int x1 = std::min(w - 1, static_cast<int>(std::floor(c.x + step)));
      const int y0 = std::max(0, static_cast<int>(std::ceil(c.y - step)));
      const int y1 = std::min(h - 1, static_cast<int>(std::floor(c.y + step)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const double d = distance(c, x, y);
          const std::size_t p = assign.pixel_index(x, y);
          if (d < dist[p]) {
            dist[p] = d;
            assign[p] = static_cast<std::int32_t>(k);
          }
        }
      }
    }
    // Pixels outside every search window fall back to a global search.
    for (std::size_t p = 0; p < n; ++p) {
      if (assign[p] >= 0) continue;
      const int x = static_cast<int>(p % w), y = static_cast<int>(p / w);
      for (std::size_t k = 0; k < centers.size(); ++k) {
        const double d = distance(centers[k], x, y);
        if (d < dist[p]) {
          dist[p] = d;
          assign[p] = static_cast<std::int32_t>(k);
        }
      }
    }

    std::vector<SlicCenter> sums(centers.size(), SlicCenter{0, 0, 0, 0, 0});
    std::vector<std::size_t> counts(centers.size(), 0);
    for (std::size_t p = 0; p < n; ++p) {
      const auto k = static_cast<std::size_t>(assign[p]);
      sums[k].l += lab[3 * p];
      sums[k].a += lab[3 * p + 1];
      sums[k].b += lab[3 * p + 2];
      sums[k].x += static_cast<double>(p % w);
      sums[k].y += static_cast<double>(p / w);
      ++counts[k];
    }
    double max_shift = 0.0;
    for (std::size_t k = 0; k < centers.size(); ++k) {
      if (counts[k] == 0) continue;
      const double inv = 1.0 / static_cast<double>(counts[k]);
      const SlicCenter next{sums[k].l * inv, sums[k].a * inv, sums[k].b * inv, sums[k].x * inv,
                            sums[k].y * inv};
      max_shift = std::max(max_shift, std::hypot(next.x - centers[k].x, next.y - centers[k].y));
      centers[k] = next;
    }
    if (max_shift < 0.5) break;
  }

  if (!params.enforce_connectivity) return relabel_compact(assign);
  const auto min_area = static_cast<std::size_t>(step * step / 4.0);
  return enforce_connectivity(assign, min_area);
}

SuperpixelMap grid_partition(int width, int height, int rows, int cols) {
  if (rows < 1 || cols < 1 || rows > height || cols > width) {
    throw InvalidArgument("grid_partition: degenerate grid " + std::to_string(rows) + "x" +
                          std::to_string(cols) + " for " + std::to_string(width) + "x" +
                          std::to_string(height) + " image");
  }
  const int cell_w = width / cols;
  const int cell_h = height / rows;
  SuperpixelMap sp{Grid<std::int32_t, RegionTag>(width, height, 1, 0), rows * cols};
  for (int y = 0; y < height; ++y) {
    const int row = std::min(y / cell_h, rows - 1);
    for (int x = 0; x < width; ++x) {
      const int col = std::min(x / cell_w, cols - 1);
      sp.region_id(x, y) = row * cols + col;
    }
  }
  return sp;
}

SuperpixelMap segment(const Image& img, const SuperpixelConfig& config) {
  switch (config.algo) {
    case SuperpixelAlgo::Felzenszwalb: return felzenszwalb(img, config.felzenszwalb);
    case SuperpixelAlgo::Slic: return slic(img, config.slic);
    case SuperpixelAlgo::Grid:
      return grid_partition(img.width(), img.height(), config.grid.rows, config.grid.cols);
  }
  throw InvalidArgument("unknown superpixel algorithm");
}

std::vector<BinaryMask> regions_to_masks(const SuperpixelMap& sp) {
  std::vector<BinaryMask> masks(sp.num_regions, make_mask(sp.width(), sp.height()));
  for (std::size_t i = 0; i < sp.region_id.pixel_count(); ++i) {
    masks[sp.region_id[i]][i] = 1;
  }
  return masks;
}

Image boundary_overlay(const Image& img, const SuperpixelMap& sp) {
  require_same_size(img, sp.region_id, "boundary_overlay");
  Image out = img;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const auto id = sp.region_id(x, y);
      const bool edge = (x + 1 < img.width() && sp.region_id(x + 1, y) != id) ||
                        (y + 1 < img.height() && sp.region_id(x, y + 1) != id);
      if (edge) {
        out(x, y, 0) = 1.0;
        out(x, y, 1) = 0.0;
        out(x, y, 2) = 0.0;
      }
    }
  }
  return out;
}

}  // namespace pseudoseg
