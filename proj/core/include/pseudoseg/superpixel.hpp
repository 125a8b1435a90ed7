#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pseudoseg/grid.hpp"

namespace pseudoseg {

// A partition of the image: region ids are exactly 0..num_regions-1.
struct SuperpixelMap {
  Grid<std::int32_t, RegionTag> region_id;
  int num_regions = 0;

  int width() const { return region_id.width(); }
  int height() const { return region_id.height(); }
};

struct FelzenszwalbParams {
  double scale = 100.0;  // threshold constant k
  double sigma = 0.8;    // pre-smoothing; 0 disables smoothing
  int min_size = 200;    // post-merge floor in pixels

  void validate() const;
};

struct SlicParams {
  int n_segments = 100;
  double compactness = 10.0;
  int max_iterations = 10;
  bool enforce_connectivity = true;  // off: raw cluster assignment

  void validate() const;
};

struct GridParams {
  int rows = 10;
  int cols = 10;
};

enum class SuperpixelAlgo { Felzenszwalb, Slic, Grid };

std::string to_string(SuperpixelAlgo algo);
SuperpixelAlgo parse_superpixel_algo(const std::string& name);

struct SuperpixelConfig {
  SuperpixelAlgo algo = SuperpixelAlgo::Felzenszwalb;
  FelzenszwalbParams felzenszwalb;
  SlicParams slic;
  GridParams grid;
};

// Graph-based segmentation on the 8-connected pixel grid.
//
// Edge weights are Euclidean RGB distances of the smoothed image rescaled to
// [0, 255]. Edges are visited in ascending weight (ties in construction
// order); components C1, C2 joined by an edge of weight w merge iff
//   w <= min(Int(C1) + scale / |C1|, Int(C2) + scale / |C2|).
// A second pass over the sorted edges merges any component below min_size.
// Region ids are assigned in first-pixel scan order.
SuperpixelMap felzenszwalb(const Image& img, const FelzenszwalbParams& params);

// The 8-connected edge list used by felzenszwalb(), in construction order.
struct GraphEdge {
  std::int32_t a;
  std::int32_t b;
  double weight;
};
std::vector<GraphEdge> build_grid_graph(const Image& scaled_rgb);

// k-means clustering in CIELAB + xy with SLIC's localized search, followed by
// connectivity enforcement (4-connected components smaller than S*S/4 are
// absorbed by their largest neighbour).
SuperpixelMap slic(const Image& img, const SlicParams& params);

// rows x cols rectangular cells; the last row and column absorb remainders.
SuperpixelMap grid_partition(int width, int height, int rows = 10, int cols = 10);

SuperpixelMap segment(const Image& img, const SuperpixelConfig& config);

// One mask per region id, in id order.
std::vector<BinaryMask> regions_to_masks(const SuperpixelMap& sp);

// Renumbers ids to 0..n-1 in first-pixel scan order.
SuperpixelMap relabel_compact(const Grid<std::int32_t, RegionTag>& ids);

// Copy of img with region boundaries (4-neighbour label changes) painted red.
Image boundary_overlay(const Image& img, const SuperpixelMap& sp);

// sRGB [0,1] to CIELAB under D65.
void srgb_to_lab(double r, double g, double b, double& L, double& A, double& B);

}  // namespace pseudoseg
