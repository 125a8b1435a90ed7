#include "cli.hpp"

#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pseudoseg/ablation.hpp"
#include "pseudoseg/data.hpp"
#include "pseudoseg/evaluation.hpp"
#include "pseudoseg/model.hpp"
#include "pseudoseg/parallel.hpp"
#include "pseudoseg/png_io.hpp"
#include "pseudoseg/pseudoclass.hpp"
#include "pseudoseg/random.hpp"
#include "pseudoseg/superpixel.hpp"
#include "pseudoseg/training.hpp"

namespace pseudoseg::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kOutEnv = "PSEUDOSEG_OUT";

// Missing or contradictory flags discovered after parsing.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  int threads = 0;  // 0 = hardware concurrency
  int verbosity = 0;
  std::string out;

  int thread_count() const { return threads > 0 ? threads : default_thread_count(); }
};

void info(const Globals& g, const std::string& msg) {
  if (g.verbosity > 0) std::cerr << msg << '\n';
}

fs::path out_dir(const Globals& g) {
  std::string dir = g.out;
  if (dir.empty()) {
    if (const char* env = std::getenv(kOutEnv)) dir = env;
  }
  if (dir.empty()) throw UsageError(std::string("--out is required (or set ") + kOutEnv + ")");
  fs::create_directories(dir);
  return dir;
}

// A fold is either an index 0..3 into the default four-way split or a fold JSON file.
struct ResolvedFold {
  int id = -1;
  FoldConfig config;
};

ResolvedFold resolve_fold(const std::string& arg, const Dataset& dataset) {
  const bool numeric =
      !arg.empty() && arg.find_first_not_of("0123456789") == std::string::npos;
  if (numeric) {
    const int id = std::stoi(arg);
    return {id, default_fold(dataset.index.classes, id)};
  }
  FoldConfig fold = read_fold(arg);
  fold.validate(&dataset.index.classes);
  return {-1, fold};
}

SamplingStrategy resolve_strategy(const std::string& name, int top_k) {
  if (name == "topk") return SamplingStrategy::top_k(top_k);
  return parse_sampling_strategy(name);
}

struct SuperpixelFlags {
  std::string algo = "felzenszwalb";
  SuperpixelConfig config;

  void add(CLI::App* cmd) {
    cmd->add_option("--algo", algo, "Superpixel algorithm: felzenszwalb, slic or grid")
        ->capture_default_str();
    cmd->add_option("--scale", config.felzenszwalb.scale, "Felzenszwalb threshold constant")
        ->capture_default_str();
    cmd->add_option("--sigma", config.felzenszwalb.sigma, "Felzenszwalb pre-smoothing sigma")
        ->capture_default_str();
    cmd->add_option("--min-size", config.felzenszwalb.min_size,
                    "Felzenszwalb minimum region size in pixels")
        ->capture_default_str();
    cmd->add_option("--n-segments", config.slic.n_segments, "SLIC target segment count")
        ->capture_default_str();
    cmd->add_option("--compactness", config.slic.compactness, "SLIC compactness")
        ->capture_default_str();
    cmd->add_option("--grid-rows", config.grid.rows, "Grid partition rows")->capture_default_str();
    cmd->add_option("--grid-cols", config.grid.cols, "Grid partition columns")
        ->capture_default_str();
  }

  SuperpixelConfig resolve() const {
    SuperpixelConfig c = config;
    c.algo = parse_superpixel_algo(algo);
    return c;
  }
};

struct PseudoFlags {
  std::string policy = "base";
  std::string strategy = "topk";
  int top_k = 5;
  int min_area = 16;
  SuperpixelFlags superpixel;

  void add(CLI::App* cmd) {
    cmd->add_option("--policy", policy, "Exclusion policy: target, base or base+novel")
        ->capture_default_str();
    cmd->add_option("--strategy", strategy, "Pseudo-class sampling: topk, uniform or top<k>")
        ->capture_default_str();
    cmd->add_option("--top-k", top_k, "k for the topk strategy")->capture_default_str();
    cmd->add_option("--min-area", min_area, "Smallest refined pseudo-mask kept, in pixels")
        ->capture_default_str();
    superpixel.add(cmd);
  }

  PseudoClassConfig resolve() const {
    PseudoClassConfig c;
    c.superpixel = superpixel.resolve();
    c.policy = parse_exclusion_policy(policy);
    c.strategy = resolve_strategy(strategy, top_k);
    c.min_area = min_area;
    if (min_area < 1) throw InvalidArgument("--min-area must be >= 1");
    return c;
  }
};

struct TrainFlags {
  TrainConfig config;
  bool no_self_supervision = false;
  PseudoFlags pseudo;

  void add(CLI::App* cmd) {
    cmd->add_option("--alpha", config.alpha, "Weight of the self-supervised loss")
        ->capture_default_str();
    cmd->add_option("--shots", config.shots, "Support images per episode")->capture_default_str();
    cmd->add_option("--episodes", config.episodes, "Training episodes")->capture_default_str();
    cmd->add_option("--lr", config.learning_rate, "SGD learning rate")->capture_default_str();
    cmd->add_option("--momentum", config.momentum, "SGD momentum")->capture_default_str();
    cmd->add_option("--patch-radius", config.patch_radius, "Feature extractor patch radius")
        ->capture_default_str();
    cmd->add_option("--embed-dim", config.embed_dim, "Feature channels")->capture_default_str();
    cmd->add_option("--temperature", config.temperature, "Cosine logit temperature")
        ->capture_default_str();
    cmd->add_flag("--no-self-supervision", no_self_supervision,
                  "Train the supervised pathway only");
    pseudo.add(cmd);
  }

  TrainConfig resolve(std::uint64_t seed) const {
    TrainConfig c = config;
    c.seed = seed;
    c.self_supervision = !no_self_supervision;
    c.pseudo = pseudo.resolve();
    c.validate();
    return c;
  }
};

void write_json(const fs::path& path, const nlohmann::ordered_json& doc) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

std::vector<std::int32_t> parse_ids(const std::vector<int>& ids) {
  return {ids.begin(), ids.end()};
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Superpixel pseudo-class self-supervision for few-shot segmentation", "pseudoseg"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  // Global flags are accepted before or after the subcommand name. CLI11 cannot
  // bind one variable from two apps, so each app gets its own copy.
  struct GlobalSlot {
    Globals values;
    CLI::Option* out = nullptr;
    CLI::Option* threads = nullptr;
    CLI::Option* verbose = nullptr;
  };
  std::deque<GlobalSlot> slots;
  auto add_globals = [&slots](CLI::App* cmd) {
    GlobalSlot& s = slots.emplace_back();
    s.out = cmd->add_option("--out", s.values.out,
                            std::string("Output directory (default: $") + kOutEnv + ")");
    s.threads = cmd->add_option("--threads", s.values.threads,
                                "Worker threads for evaluation and ablation (0 = all cores)")
                    ->capture_default_str();
    s.verbose = cmd->add_flag("-v,--verbose", s.values.verbosity, "Progress messages on stderr");
  };
  add_globals(&app);

  std::optional<std::uint64_t> seed;
  auto add_seed = [&](CLI::App* cmd, bool required) {
    add_globals(cmd);
    auto* opt = cmd->add_option("--seed", seed, "Random seed");
    if (required) opt->required();
  };

  // generate-data
  SyntheticConfig synth;
  auto* gen = app.add_subcommand("generate-data", "Write the synthetic shapes dataset to --out");
  gen->add_option("--n-images", synth.n_images, "Images to generate")->capture_default_str();
  gen->add_option("--n-classes", synth.n_classes, "Object classes")->capture_default_str();
  gen->add_option("--image-size", synth.image_size, "Square image side in pixels")
      ->capture_default_str();
  gen->add_option("--max-objects", synth.max_objects, "Most objects per image")
      ->capture_default_str();
  add_seed(gen, true);

  // superpixel
  std::string image_path;
  bool overlay = false;
  SuperpixelFlags sp_flags;
  auto* sp = app.add_subcommand("superpixel", "Segment one PNG into superpixels");
  sp->add_option("--image", image_path, "Input RGB PNG")->required()->check(CLI::ExistingFile);
  sp_flags.add(sp);
  sp->add_flag("--overlay", overlay, "Also write boundary overlay PNG");
  add_seed(sp, false);

  // pseudoclass
  std::string labels_path, checkpoint_path;
  int target = 0;
  std::vector<int> base_ids, novel_ids;
  PseudoFlags pc_flags;
  auto* pc = app.add_subcommand("pseudoclass", "Select a pseudo-class in one query image");
  pc->add_option("--image", image_path, "Query RGB PNG")->required()->check(CLI::ExistingFile);
  pc->add_option("--labels", labels_path, "Query label map PNG")
      ->required()
      ->check(CLI::ExistingFile);
  pc->add_option("--target", target, "Target class id")->required();
  pc->add_option("--base", base_ids, "Base class ids")->delimiter(',');
  pc->add_option("--novel", novel_ids, "Novel class ids")->delimiter(',');
  pc->add_option("--checkpoint", checkpoint_path,
                 "Model used for activation scores (default: fresh model from --seed)")
      ->check(CLI::ExistingFile);
  pc_flags.add(pc);
  add_seed(pc, true);

  // train
  std::string data_path, fold_arg = "0";
  TrainFlags tr_flags;
  auto* tr = app.add_subcommand("train", "Episodic training on a fold's base classes");
  tr->add_option("--data", data_path, "Dataset root")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--fold", fold_arg, "Fold index 0-3 or a fold JSON file")->capture_default_str();
  tr_flags.add(tr);
  add_seed(tr, true);

  // eval
  EvalConfig eval_cfg;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a fold's novel classes");
  ev->add_option("--data", data_path, "Dataset root")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--fold", fold_arg, "Fold index 0-3 or a fold JSON file")->capture_default_str();
  ev->add_option("--checkpoint", checkpoint_path, "Trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--episodes", eval_cfg.episodes, "Evaluation episodes")->capture_default_str();
  ev->add_option("--shots", eval_cfg.shots, "Support images per episode")->capture_default_str();
  ev->add_option("--threshold", eval_cfg.threshold, "Foreground probability threshold")
      ->capture_default_str();
  add_seed(ev, true);

  // dump-embeddings
  auto* de = app.add_subcommand("dump-embeddings",
                                "Write masked-mean query embeddings of novel episodes as CSV");
  de->add_option("--data", data_path, "Dataset root")->required()->check(CLI::ExistingDirectory);
  de->add_option("--fold", fold_arg, "Fold index 0-3 or a fold JSON file")->capture_default_str();
  de->add_option("--checkpoint", checkpoint_path, "Trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  de->add_option("--episodes", eval_cfg.episodes, "Episodes to dump")->capture_default_str();
  de->add_option("--shots", eval_cfg.shots, "Support images per episode")->capture_default_str();
  add_seed(de, true);

  // ablate
  std::string axis_name;
  std::vector<std::string> axis_values;
  std::vector<int> folds = {0, 1, 2, 3};
  std::vector<std::uint64_t> seeds;
  TrainFlags ab_train;
  EvalConfig ab_eval;
  auto* ab = app.add_subcommand("ablate", "Train and evaluate one ablation axis over folds and seeds");
  ab->add_option("--axis", axis_name, "superpixel, sampling, policy, alpha or baseline")->required();
  ab->add_option("--values", axis_values, "Axis values (default: the axis' standard sweep)")
      ->delimiter(',');
  ab->add_option("--data", data_path, "Dataset root")->required()->check(CLI::ExistingDirectory);
  ab->add_option("--folds", folds, "Fold indices")->delimiter(',')->capture_default_str();
  ab->add_option("--seeds", seeds, "Seeds; each drives training and evaluation")
      ->delimiter(',')
      ->required();
  ab->add_option("--eval-episodes", ab_eval.episodes, "Evaluation episodes per run")
      ->capture_default_str();
  ab_train.add(ab);
  add_globals(ab);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  Globals g;
  for (const GlobalSlot& s : slots) {
    if (s.out->count() > 0) g.out = s.values.out;
    if (s.threads->count() > 0) g.threads = s.values.threads;
    g.verbosity += s.values.verbosity;
  }

  try {
    if (gen->parsed()) {
      synth.seed = *seed;
      synth.validate();
      const fs::path dir = out_dir(g);
      const DatasetIndex index = generate_synthetic_dataset(dir, synth);
      info(g, "wrote " + std::to_string(index.entries.size()) + " images to " + dir.string());
    } else if (sp->parsed()) {
      const fs::path dir = out_dir(g);
      const Image img = read_image_png(image_path);
      const SuperpixelMap map = segment(img, sp_flags.resolve());
      if (map.num_regions > 65535) throw InvalidArgument("too many regions for a 16-bit PNG");
      LabelMap regions(img.width(), img.height(), 1, 0);
      for (std::size_t i = 0; i < regions.pixel_count(); ++i) regions[i] = map.region_id[i];
      write_label_png(dir / "regions.png", regions, true);
      if (overlay) write_image_png(dir / "overlay.png", boundary_overlay(img, map));
      std::cout << map.num_regions << '\n';
    } else if (pc->parsed()) {
      const fs::path dir = out_dir(g);
      const Image img = read_image_png(image_path);
      const LabelMap labels = read_label_png(labels_path);
      require_same_size(img, labels, "pseudoclass inputs");
      const ModelParams params = checkpoint_path.empty()
                                     ? initialize_model(2, 16, 20.0, *seed)
                                     : load_checkpoint(checkpoint_path);
      const PseudoClassConfig config = pc_flags.resolve();
      const auto base = parse_ids(base_ids);
      const auto novel = parse_ids(novel_ids);
      Rng rng(derive_seed(*seed, 2));
      const auto episode = generate_pseudo_episode(img, labels, target, base, novel,
                                                   extract_features(img, params), config, rng);
      nlohmann::ordered_json rec;
      if (episode) {
        write_mask_png(dir / "pseudo_mask.png", episode->mask);
        rec["region_count"] = episode->region_count;
        rec["candidate_count"] = episode->candidate_count;
        rec["selected_score"] = episode->score;
        rec["selected_region"] = episode->region;
      } else {
        // No surviving candidate: report the counts without a mask.
        const auto exclusion = build_exclusion_mask(labels, target, base, novel, config.policy);
        const auto set = score_candidates(img, exclusion, extract_features(img, params), config);
        rec["region_count"] = set.region_count;
        rec["candidate_count"] = set.candidates.size();
        rec["selected_score"] = nullptr;
        rec["selected_region"] = nullptr;
      }
      write_json(dir / "pseudoclass.json", rec);
    } else if (tr->parsed()) {
      const TrainConfig cfg = tr_flags.resolve(*seed);
      const fs::path dir = out_dir(g);
      const Dataset dataset = load_dataset(data_path);
      const ResolvedFold fold = resolve_fold(fold_arg, dataset);
      const int every = std::max(1, cfg.episodes / 20);
      const TrainResult result = train(dataset, fold.config, cfg, [&](const LossRecord& r) {
        if (g.verbosity > 0 && (r.episode + 1) % every == 0) {
          std::cerr << "episode " << r.episode + 1 << "/" << cfg.episodes
                    << " sup_loss " << r.sup_loss << '\n';
        }
      });
      save_checkpoint(dir / "checkpoint.ckpt", result.params);
      write_training_log(dir / "train_log.jsonl", result.log);
    } else if (ev->parsed()) {
      const fs::path dir = out_dir(g);
      const Dataset dataset = load_dataset(data_path);
      const ResolvedFold fold = resolve_fold(fold_arg, dataset);
      const ModelParams params = load_checkpoint(checkpoint_path);
      eval_cfg.fold = fold.id;
      eval_cfg.seed = *seed;
      eval_cfg.checkpoint = fs::path(checkpoint_path).filename().string();
      const MetricsReport report = evaluate(params, dataset, fold.config, eval_cfg, g.thread_count());
      write_report(report, dir / "report");
      std::cout << "meanIoU " << report.mean_iou << '\n';
    } else if (de->parsed()) {
      const fs::path dir = out_dir(g);
      const Dataset dataset = load_dataset(data_path);
      const ResolvedFold fold = resolve_fold(fold_arg, dataset);
      const ModelParams params = load_checkpoint(checkpoint_path);
      const auto rows =
          dump_embeddings(params, dataset, fold.config, eval_cfg.shots, eval_cfg.episodes, *seed);
      write_embeddings_csv(dir / "embeddings.csv", rows);
    } else if (ab->parsed()) {
      AblationSpec spec;
      spec.axis = parse_ablation_axis(axis_name);
      spec.values = axis_values.empty() ? default_axis_values(spec.axis) : axis_values;
      spec.train = ab_train.resolve(0);
      spec.eval = ab_eval;
      spec.eval.shots = spec.train.shots;
      spec.seeds = seeds;
      spec.validate();
      const fs::path dir = out_dir(g);
      const Dataset dataset = load_dataset(data_path);
      std::vector<NamedFold> named;
      for (int f : folds) named.push_back({f, default_fold(dataset.index.classes, f)});
      info(g, "running " + std::to_string(spec.values.size() * named.size() * seeds.size()) +
                  " train/eval cells");
      const AblationTable table =
          run_ablation(spec, dataset, named, {dir / "runs", g.thread_count()});
      const std::string stem = "ablation_" + to_string(spec.axis);
      write_ablation_markdown(table, dir / (stem + ".md"));
      write_ablation_csv(table, dir / (stem + ".csv"));
      for (const AblationCell& c : table.cells) {
        if (!c.report) std::cerr << "run failed: " << c.value << " fold" << c.fold << " seed"
                                 << c.seed << ": " << c.error << '\n';
      }
    }
  } catch (const UsageError& e) {
    std::cerr << "pseudoseg: " << e.what() << '\n';
    return kUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "pseudoseg: " << e.what() << '\n';
    return kDataError;
  } catch (const DataError& e) {
    std::cerr << "pseudoseg: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "pseudoseg: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}

}  // namespace pseudoseg::cli
