#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pseudoseg/grid.hpp"
#include "pseudoseg/model.hpp"
#include "pseudoseg/random.hpp"

namespace pseudoseg {

struct ClassInfo {
  std::int32_t id = 0;
  std::string name;
  friend bool operator==(const ClassInfo&, const ClassInfo&) = default;
};

struct DatasetEntry {
  std::string image;  // relative to the dataset root
  std::string label;
  std::vector<std::int32_t> classes;  // sorted, non-background ids present
  friend bool operator==(const DatasetEntry&, const DatasetEntry&) = default;
};

// Contents of index.json.
struct DatasetIndex {
  std::vector<DatasetEntry> entries;
  std::vector<ClassInfo> classes;
  friend bool operator==(const DatasetIndex&, const DatasetIndex&) = default;
};

struct FoldConfig {
  std::vector<std::int32_t> base_classes;
  std::vector<std::int32_t> novel_classes;

  // Throws DataError on overlap, duplicates, empty sets, or ids missing from
  // the catalog (when one is given).
  void validate(const std::vector<ClassInfo>* catalog = nullptr) const;
  friend bool operator==(const FoldConfig&, const FoldConfig&) = default;
};

// Fold `fold` of `num_folds`: novel classes are catalog positions congruent to
// fold modulo num_folds, everything else is base.
FoldConfig default_fold(const std::vector<ClassInfo>& catalog, int fold, int num_folds = 4);

FoldConfig read_fold(const std::filesystem::path& path);
void write_fold(const std::filesystem::path& path, const FoldConfig& fold);

DatasetIndex read_index(const std::filesystem::path& path);
void write_index(const std::filesystem::path& path, const DatasetIndex& index);

// An index with every image and label map loaded and validated.
struct Dataset {
  std::filesystem::path root;
  DatasetIndex index;
  std::vector<Image> images;
  std::vector<LabelMap> labels;
  std::vector<std::map<std::int32_t, std::size_t>> class_areas;  // per entry

  std::size_t size() const { return images.size(); }
};

// Reads <root>/index.json and every referenced PNG. Missing files, dimension
// mismatches and unknown class ids raise DataError naming the offending path.
Dataset load_dataset(const std::filesystem::path& root);

// Builds a Dataset from in-memory images (no files involved).
Dataset make_dataset(std::vector<Image> images, std::vector<LabelMap> labels,
                     std::vector<ClassInfo> catalog);

// Number of distinct non-background ids.
int count_classes(const LabelMap& labels);
std::vector<std::int32_t> classes_present(const LabelMap& labels);

enum class Split { Base, Novel };

struct Episode {
  std::int32_t target_class = 0;
  std::vector<SupportExample> support;
  SupportExample query;
  LabelMap query_labels;
  std::vector<std::size_t> support_ids;
  std::size_t query_id = 0;
};

// Episodes whose target mask covers fewer pixels are never produced.
inline constexpr std::size_t kMinEpisodeMaskArea = 10;

// Class-uniform, then image-uniform episode sampler for one split.
class EpisodeSampler {
 public:
  EpisodeSampler(const Dataset& dataset, const FoldConfig& fold, Split split, int shots);

  Episode sample(Rng& rng) const;
  const std::vector<std::int32_t>& eligible_classes() const { return eligible_; }

 private:
  const Dataset* dataset_;
  int shots_;
  std::vector<std::int32_t> eligible_;
  std::map<std::int32_t, std::vector<std::size_t>> pools_;
};

Episode sample_episode(const Dataset& dataset, const FoldConfig& fold, Split split, int shots,
                       Rng& rng);

struct SyntheticConfig {
  int n_images = 200;
  int n_classes = 12;
  int image_size = 64;
  int max_objects = 4;
  std::uint64_t seed = 7;

  void validate() const;
};

// Renders a seeded synthetic multi-class dataset into out_dir using the
// images/NNNN.png, labels/NNNN.png, index.json layout and returns its index.
DatasetIndex generate_synthetic_dataset(const std::filesystem::path& out_dir,
                                        const SyntheticConfig& config);

// Class catalog used by the synthetic generator.
std::vector<ClassInfo> synthetic_catalog(int n_classes);

}  // namespace pseudoseg
