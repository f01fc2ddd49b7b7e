#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcblock/image.hpp"
#include "mcblock/mctree.hpp"
#include "mcblock/mipfield.hpp"
#include "mcblock/rng.hpp"
#include "mcblock/sum_tree.hpp"

namespace mcblock {

// Ablation switches for the tree-guided strategy. All off reproduces the
// full method.
struct Ablation {
  bool no_init = false;           // start each tree as a single root leaf
  bool freeze_partition = false;  // no expansion or pruning after init
  bool uniform_selection = false; // pick leaves uniformly, not by priority
  bool pixel_metrics = false;     // evaluate per pixel, not per block
};

enum class StrategyKind { Random, Active, CoarseToFine, MCBlock };

struct Strategy {
  StrategyKind kind = StrategyKind::MCBlock;
  // Active: expired-time temperature of the per-pixel weights.
  double active_lambda = 1000.0;
  // CoarseToFine: block sides per phase, strictly decreasing, ending at 1.
  std::vector<int> coarse_sides = {8, 4, 2, 1};
  Ablation ablation;
};

std::string strategy_name(const Strategy& s);
// Accepts: random, active, coarse, mcblock, mcblock-no-init,
// mcblock-no-partition, mcblock-no-selection, mcblock-no-blockrender.
Strategy parse_strategy(const std::string& name);

struct RunConfig {
  SamplerConfig sampler;
  double learning_rate = 0.01;
  Optimizer optimizer = Optimizer::Sgd;
  InclusionRule inclusion = InclusionRule::Hard;
  std::int64_t iterations = 2000;
  std::int64_t checkpoint_every = 100;
};

struct CheckpointRow {
  std::int64_t iteration = 0;
  double mse = 0.0;
  double psnr = 0.0;
  // Atomic sampling units at this point: forest leaves for the tree
  // strategy, tiles for coarse-to-fine, pixels otherwise.
  std::int64_t leaf_count = 0;
  std::int64_t blocks_trained = 0;   // cumulative drawn blocks
  std::int64_t pixels_covered = 0;   // cumulative drawn block area
  // Wall-clock fields live in the separate timing CSV; the metrics CSV
  // stays bit-reproducible for a fixed seed.
  double wall_ms = 0.0;
  double sampler_ms = 0.0;
  double model_ms = 0.0;
  double eval_ms = 0.0;
};

struct RunMetrics {
  std::vector<CheckpointRow> rows;
  // Per image: how many drawn training blocks covered each pixel.
  std::vector<Eigen::ArrayXXd> sample_counts;
  std::int64_t blocks_trained = 0;
  std::int64_t pixels_covered = 0;
  double sampler_ms = 0.0;
  double model_ms = 0.0;
  double eval_ms = 0.0;
  double wall_ms = 0.0;
};

struct RunResult {
  RunMetrics metrics;
  std::vector<TrainState> state;    // per image
  std::optional<MCForest> forest;   // tree strategy only
};

// Trains a field per image for cfg.iterations batches drawn by the
// strategy. The tree strategy spends its first batches feeding every
// initial leaf once (shuffled, without pruning), then switches to
// select/expand/train/backpropagate. Checkpoints are recorded at iteration
// 0, every checkpoint_every iterations, and at the end.
RunResult run(const Strategy& strategy, std::span<const Image> images,
              const RunConfig& cfg, std::uint64_t seed);

// Fraction of per-iteration work spent maintaining the sampler (selection,
// expansion, backpropagation, pruning) versus sampler + model updates.
// Evaluation passes are excluded.
double measure_overhead(const RunMetrics& m);

// Uniform iid single-pixel blocks.
void random_batch(int width, int height, int n, Rng& rng,
                  std::vector<BlockRect>& out);

// Per-pixel loss * e^{O/lambda} importance weights over one image, sampled
// through a sum tree. Weights start at 1 (uniform) until a pixel is first
// trained; advance() is one iteration tick of the lazy expired-time scale.
class ActiveSampler {
 public:
  ActiveSampler(int width, int height, double lambda);
  void sample(int n, Rng& rng, std::vector<BlockRect>& out);
  void record(int x, int y, double loss);
  void advance();
  double weight(int x, int y) const;   // true-frame weight
  double stored_total() const { return tree_.total(); }

 private:
  SumTree tree_;
  int w_, h_;
  double lambda_;
  double scale_log_ = 0.0;
};

// Coarse-to-fine schedule: each phase trains tile-aligned blocks of one
// side; a phase lasts one full coverage of the image area (total tiles /
// batch size, rounded up), and the final side-1 phase runs forever.
struct CoarsePhase {
  int side = 1;
  std::int64_t first_iter = 0;  // first 1-based training iteration
};
std::vector<CoarsePhase> coarse_schedule(std::span<const int> sides,
                                         std::span<const std::int64_t> tiles_per_side,
                                         int batch_size);
int coarse_side_at(std::span<const CoarsePhase> phases,
                   std::int64_t iteration);
// One uniform tile-aligned block; edge tiles are clipped in bounds.
BlockRect coarse_tile(int width, int height, int side, std::size_t index);
std::int64_t coarse_tile_count(int width, int height, int side);

// 512x512-style benchmark image: flat background (majority of the area)
// plus checkerboard, smooth gradient, noise, and coarse checker patches at
// fixed relative positions.
Image make_composite_image(int size = 512, std::uint64_t seed = 7);
// Patch layout of the composite, for tests that need ground truth regions:
// returns {background-free rects}, scaled to the given size.
std::vector<BlockRect> composite_patches(int size);

// Overlay of leaf boundaries (red, 1px) on a base image.
Image draw_partition_overlay(const Image& base,
                             std::span<const BlockRect> leaves);
// Grayscale heatmap of per-pixel counts, sqrt-scaled by the max count.
Image counts_to_heatmap(const Eigen::ArrayXXd& counts);

// CSV emission. Deterministic metrics and wall-clock timing are separate
// files so the metrics file is byte-identical across reruns of one seed.
extern const char kMetricsCsvHeader[];
extern const char kTimingCsvHeader[];
extern const char kBenchCsvHeader[];
void write_metrics_csv(const std::string& path, const RunMetrics& m);
void write_timing_csv(const std::string& path, const RunMetrics& m);
void write_counts_csv(const std::string& path, const Eigen::ArrayXXd& counts);
Eigen::ArrayXXd read_counts_csv(const std::string& path);

struct BenchEntry {
  std::string name;
  RunMetrics metrics;
};
void write_bench_csv(const std::string& path,
                     std::span<const BenchEntry> entries);
// First iteration whose checkpoint reaches the PSNR target, or -1.
std::int64_t iterations_to_psnr(const RunMetrics& m, double target_psnr);
// Table of iterations-to-target and speedup relative to the first entry.
std::string bench_summary(std::span<const BenchEntry> entries,
                          double target_psnr);

}  // namespace mcblock
