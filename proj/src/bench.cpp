#include "mcblock/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace mcblock {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void append_double(std::string& s, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  s += buf;
}

}  // namespace

std::string strategy_name(const Strategy& s) {
  switch (s.kind) {
    case StrategyKind::Random: return "random";
    case StrategyKind::Active: return "active";
    case StrategyKind::CoarseToFine: return "coarse";
    case StrategyKind::MCBlock: break;
  }
  std::string name = "mcblock";
  if (s.ablation.no_init) name += "-no-init";
  if (s.ablation.freeze_partition) name += "-no-partition";
  if (s.ablation.uniform_selection) name += "-no-selection";
  if (s.ablation.pixel_metrics) name += "-no-blockrender";
  return name;
}

Strategy parse_strategy(const std::string& name) {
  Strategy s;
  if (name == "random") {
    s.kind = StrategyKind::Random;
  } else if (name == "active") {
    s.kind = StrategyKind::Active;
  } else if (name == "coarse") {
    s.kind = StrategyKind::CoarseToFine;
  } else if (name == "mcblock") {
    s.kind = StrategyKind::MCBlock;
  } else if (name == "mcblock-no-init") {
    s.kind = StrategyKind::MCBlock;
    s.ablation.no_init = true;
  } else if (name == "mcblock-no-partition") {
    s.kind = StrategyKind::MCBlock;
    s.ablation.freeze_partition = true;
  } else if (name == "mcblock-no-selection") {
    s.kind = StrategyKind::MCBlock;
    s.ablation.uniform_selection = true;
  } else if (name == "mcblock-no-blockrender") {
    s.kind = StrategyKind::MCBlock;
    s.ablation.pixel_metrics = true;
  } else {
    throw InvalidInput(
        "unknown strategy '" + name +
        "' (expected random, active, coarse, mcblock, mcblock-no-init, "
        "mcblock-no-partition, mcblock-no-selection, "
        "mcblock-no-blockrender)");
  }
  return s;
}

void random_batch(int width, int height, int n, Rng& rng,
                  std::vector<BlockRect>& out) {
  for (int i = 0; i < n; ++i) {
    const std::size_t p = uniform_index(rng, std::size_t(width) * height);
    out.push_back(BlockRect{int(p % width), int(p / width), 1, 1});
  }
}

ActiveSampler::ActiveSampler(int width, int height, double lambda)
    : tree_(std::size_t(width) * height), w_(width), h_(height),
      lambda_(lambda) {
  tree_.fill(1.0);
}

void ActiveSampler::advance() {
  scale_log_ += 1.0 / lambda_;
  if (scale_log_ > 50.0) {
    tree_.scale(std::exp(scale_log_));
    scale_log_ = 0.0;
  }
}

void ActiveSampler::record(int x, int y, double loss) {
  tree_.set(std::size_t(y) * w_ + x,
            std::max(loss, 0.0) * std::exp(-scale_log_));
}

double ActiveSampler::weight(int x, int y) const {
  return tree_.get(std::size_t(y) * w_ + x) * std::exp(scale_log_);
}

void ActiveSampler::sample(int n, Rng& rng, std::vector<BlockRect>& out) {
  for (int i = 0; i < n; ++i) {
    std::size_t p;
    const double total = tree_.total();
    if (total > 0.0) {
      p = tree_.sample(uniform_double(rng) * total);
    } else {
      p = uniform_index(rng, std::size_t(w_) * h_);
    }
    out.push_back(BlockRect{int(p % w_), int(p / w_), 1, 1});
  }
}

std::int64_t coarse_tile_count(int width, int height, int side) {
  return std::int64_t((width + side - 1) / side) *
         std::int64_t((height + side - 1) / side);
}

BlockRect coarse_tile(int width, int height, int side, std::size_t index) {
  const int tiles_x = (width + side - 1) / side;
  const int tx = int(index % tiles_x), ty = int(index / tiles_x);
  const int x = tx * side, y = ty * side;
  return BlockRect{x, y, std::min(side, width - x), std::min(side, height - y)};
}

std::vector<CoarsePhase> coarse_schedule(
    std::span<const int> sides, std::span<const std::int64_t> tiles_per_side,
    int batch_size) {
  if (sides.empty() || sides.back() != 1)
    throw InvalidInput("coarse schedule must end at block side 1");
  for (std::size_t i = 0; i + 1 < sides.size(); ++i)
    if (sides[i] <= sides[i + 1])
      throw InvalidInput("coarse schedule sides must strictly decrease");
  if (sides.size() != tiles_per_side.size())
    throw InvalidInput("coarse schedule: size mismatch");
  std::vector<CoarsePhase> phases;
  std::int64_t start = 1;
  for (std::size_t i = 0; i < sides.size(); ++i) {
    phases.push_back(CoarsePhase{sides[i], start});
    start += (tiles_per_side[i] + batch_size - 1) / batch_size;
  }
  return phases;
}

int coarse_side_at(std::span<const CoarsePhase> phases,
                   std::int64_t iteration) {
  int side = phases.front().side;
  for (const CoarsePhase& p : phases)
    if (iteration >= p.first_iter) side = p.side;
  return side;
}

Image make_composite_image(int size, std::uint64_t seed) {
  if (size < 16) throw InvalidInput("composite image size too small");
  Image img = Image::constant(size, size, RGB(0.42, 0.45, 0.48));
  const auto at = [&](double f) { return int(std::lround(f * size)); };

  // Fine checkerboard.
  {
    const int x0 = at(0.09), y0 = at(0.09), len = at(0.22);
    const int cell = std::max(1, size / 256);
    const RGB a(0.08, 0.08, 0.10), b(0.92, 0.90, 0.88);
    for (int y = y0; y < y0 + len; ++y)
      for (int x = x0; x < x0 + len; ++x)
        img.set_pixel(x, y, ((x / cell + y / cell) % 2 == 0) ? a : b);
  }
  // Smooth two-axis gradient.
  {
    const int x0 = at(0.56), y0 = at(0.12), len = at(0.28);
    for (int y = y0; y < y0 + len; ++y)
      for (int x = x0; x < x0 + len; ++x) {
        const double u = double(x - x0) / len, v = double(y - y0) / len;
        img.set_pixel(x, y, RGB(0.1 + 0.8 * u, 0.1 + 0.8 * v, 0.3));
      }
  }
  // Uniform noise.
  {
    Rng rng(seed);
    const int x0 = at(0.14), y0 = at(0.58), len = at(0.22);
    for (int y = y0; y < y0 + len; ++y)
      for (int x = x0; x < x0 + len; ++x)
        img.set_pixel(x, y, RGB(uniform_double(rng), uniform_double(rng),
                                uniform_double(rng)));
  }
  // Coarse checkerboard.
  {
    const int x0 = at(0.62), y0 = at(0.62), len = at(0.19);
    const int cell = std::max(1, size / 64);
    const RGB a(0.85, 0.20, 0.15), b(0.15, 0.45, 0.80);
    for (int y = y0; y < y0 + len; ++y)
      for (int x = x0; x < x0 + len; ++x)
        img.set_pixel(x, y, ((x / cell + y / cell) % 2 == 0) ? a : b);
  }
  return img;
}

std::vector<BlockRect> composite_patches(int size) {
  const auto at = [&](double f) { return int(std::lround(f * size)); };
  return {BlockRect{at(0.09), at(0.09), at(0.22), at(0.22)},
          BlockRect{at(0.56), at(0.12), at(0.28), at(0.28)},
          BlockRect{at(0.14), at(0.58), at(0.22), at(0.22)},
          BlockRect{at(0.62), at(0.62), at(0.19), at(0.19)}};
}

Image draw_partition_overlay(const Image& base,
                             std::span<const BlockRect> leaves) {
  Image out = base;
  const RGB red(1.0, 0.0, 0.0);
  for (const BlockRect& b : leaves) {
    detail::check_block(b, base.width(), base.height(), "overlay");
    for (int x = b.x; x < b.x + b.w; ++x) {
      out.set_pixel(x, b.y, red);
      out.set_pixel(x, b.y + b.h - 1, red);
    }
    for (int y = b.y; y < b.y + b.h; ++y) {
      out.set_pixel(b.x, y, red);
      out.set_pixel(b.x + b.w - 1, y, red);
    }
  }
  return out;
}

Image counts_to_heatmap(const Eigen::ArrayXXd& counts) {
  const int h = int(counts.rows()), w = int(counts.cols());
  Image out(w, h);
  const double mx = counts.maxCoeff();
  if (mx > 0.0) {
    const Eigen::ArrayXXd v = (counts / mx).sqrt();
    for (auto& p : out.channel) p = v;
  }
  return out;
}

double measure_overhead(const RunMetrics& m) {
  const double denom = m.sampler_ms + m.model_ms;
  return denom > 0.0 ? m.sampler_ms / denom : 0.0;
}

std::int64_t iterations_to_psnr(const RunMetrics& m, double target_psnr) {
  for (const CheckpointRow& r : m.rows)
    if (r.psnr >= target_psnr) return r.iteration;
  return -1;
}

// ---------------------------------------------------------------------------
// run()

namespace {

struct Drawn {
  int image = 0;
  BlockRect rect;
  MCNode* node = nullptr;  // tree strategy only
};

// Picks an image index proportionally to mass[i]; uniform on zero total.
int pick_image(std::span<const double> mass, Rng& rng) {
  double total = 0.0;
  for (double m : mass) total += m;
  if (total <= 0.0) return int(uniform_index(rng, mass.size()));
  const double r = uniform_double(rng) * total;
  double acc = 0.0;
  int pick = 0;
  for (std::size_t i = 0; i < mass.size(); ++i) {
    if (mass[i] <= 0.0) continue;
    acc += mass[i];
    pick = int(i);
    if (r < acc) break;
  }
  return pick;
}

struct Evaluator {
  std::span<const Image> images;
  bool pixel_metrics = false;

  double mse(std::span<const TrainState> state, const MCForest* forest,
             InclusionRule rule) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) {
      Image recon;
      if (forest != nullptr && !pixel_metrics) {
        std::vector<BlockRect> rects;
        const MCNode& root = *forest->tree[i].root;
        for_each_node(root, [&](const MCNode& n) {
          if (n.is_leaf()) rects.push_back(n.rect);
        });
        recon = reconstruct(state[i].field, rects, rule);
      } else {
        recon = reconstruct_pixels(state[i].field, rule);
      }
      acc += image_mse(recon, images[i]);
    }
    return acc / double(images.size());
  }
};

}  // namespace

RunResult run(const Strategy& strategy, std::span<const Image> images,
              const RunConfig& cfg, std::uint64_t seed) {
  if (images.empty()) throw InvalidInput("run: no images");
  if (cfg.iterations < 0) throw InvalidInput("run: negative iteration count");
  const int batch_size = cfg.sampler.batch_size;
  if (batch_size <= 0) throw InvalidInput("run: batch size must be positive");

  const auto wall_start = Clock::now();
  Rng rng(seed);

  RunResult result;
  std::vector<IntegralTables> tables;
  std::vector<std::int64_t> pixel_counts;
  for (const Image& img : images) {
    tables.push_back(IntegralTables::build(img));
    const BlockRect whole{0, 0, img.width(), img.height()};
    result.state.push_back(make_train_state(
        MipField::from_mean(img.width(), img.height(),
                            block_mean(tables.back(), whole)),
        cfg.learning_rate, cfg.optimizer));
    result.state.back().rule = cfg.inclusion;
    result.metrics.sample_counts.push_back(
        Eigen::ArrayXXd::Zero(img.height(), img.width()));
    pixel_counts.push_back(std::int64_t(img.width()) * img.height());
  }

  // Strategy state.
  const bool is_tree = strategy.kind == StrategyKind::MCBlock;
  std::vector<MCNode*> init_queue;
  std::size_t init_pos = 0;
  std::vector<ActiveSampler> active;
  std::vector<CoarsePhase> phases;
  if (is_tree) {
    std::vector<MCTree> trees;
    for (std::size_t i = 0; i < images.size(); ++i) {
      if (strategy.ablation.no_init) {
        MCTree tree;
        tree.image_index = int(i);
        tree.root = std::make_unique<MCNode>();
        tree.root->rect = BlockRect{0, 0, images[i].width(),
                                    images[i].height()};
        trees.push_back(std::move(tree));
      } else {
        trees.push_back(
            init_from_image(images[i], tables[i], cfg.sampler, int(i)));
      }
    }
    result.forest.emplace(make_forest(std::move(trees)));
    init_queue = collect_leaves(*result.forest);
    for (std::size_t i = init_queue.size(); i > 1; --i)
      std::swap(init_queue[i - 1], init_queue[uniform_index(rng, i)]);
  } else if (strategy.kind == StrategyKind::Active) {
    for (const Image& img : images)
      active.emplace_back(img.width(), img.height(), strategy.active_lambda);
  } else if (strategy.kind == StrategyKind::CoarseToFine) {
    std::vector<std::int64_t> tiles;
    for (int side : strategy.coarse_sides) {
      std::int64_t n = 0;
      for (const Image& img : images)
        n += coarse_tile_count(img.width(), img.height(), side);
      tiles.push_back(n);
    }
    phases = coarse_schedule(strategy.coarse_sides, tiles, batch_size);
  }

  RunMetrics& m = result.metrics;
  const Evaluator evaluator{images, strategy.ablation.pixel_metrics};
  std::int64_t coarse_side = phases.empty() ? 1 : phases.front().side;

  const auto snapshot = [&](std::int64_t iteration) {
    const auto t0 = Clock::now();
    CheckpointRow row;
    row.iteration = iteration;
    row.mse = evaluator.mse(result.state,
                            result.forest ? &*result.forest : nullptr,
                            cfg.inclusion);
    row.psnr = mse_to_psnr(row.mse);
    if (result.forest) {
      std::int64_t leaves = 0;
      for (const auto& tree : result.forest->tree)
        leaves += count_leaves(tree);
      row.leaf_count = leaves;
    } else if (strategy.kind == StrategyKind::CoarseToFine) {
      std::int64_t n = 0;
      for (const Image& img : images)
        n += coarse_tile_count(img.width(), img.height(), int(coarse_side));
      row.leaf_count = n;
    } else {
      std::int64_t n = 0;
      for (std::int64_t p : pixel_counts) n += p;
      row.leaf_count = n;
    }
    row.blocks_trained = m.blocks_trained;
    row.pixels_covered = m.pixels_covered;
    m.eval_ms += ms_since(t0);
    row.wall_ms = ms_since(wall_start);
    row.sampler_ms = m.sampler_ms;
    row.model_ms = m.model_ms;
    row.eval_ms = m.eval_ms;
    m.rows.push_back(row);
  };

  snapshot(0);

  std::vector<Drawn> batch;
  std::vector<BlockRect> rects;
  std::vector<double> mass;
  std::vector<MCNode*> uniform_pool;
  std::vector<TrainedLeaf> trained;
  std::vector<std::size_t> order;
  std::vector<double> losses;

  for (std::int64_t iter = 1; iter <= cfg.iterations; ++iter) {
    // --- draw a batch ---
    auto t0 = Clock::now();
    batch.clear();
    bool drew_init_batch = false;
    switch (strategy.kind) {
      case StrategyKind::Random: {
        mass.assign(pixel_counts.begin(), pixel_counts.end());
        for (int i = 0; i < batch_size; ++i) {
          const int im = images.size() == 1 ? 0 : pick_image(mass, rng);
          const std::size_t p = uniform_index(rng, pixel_counts[im]);
          const int w = images[im].width();
          batch.push_back(
              {im, BlockRect{int(p % w), int(p / w), 1, 1}, nullptr});
        }
        break;
      }
      case StrategyKind::Active: {
        for (auto& a : active) a.advance();
        mass.clear();
        for (const auto& a : active) mass.push_back(a.stored_total());
        rects.clear();
        for (int i = 0; i < batch_size; ++i) {
          const int im = images.size() == 1 ? 0 : pick_image(mass, rng);
          rects.clear();
          active[im].sample(1, rng, rects);
          batch.push_back({im, rects[0], nullptr});
        }
        break;
      }
      case StrategyKind::CoarseToFine: {
        coarse_side = coarse_side_at(phases, iter);
        mass.clear();
        for (const Image& img : images)
          mass.push_back(double(
              coarse_tile_count(img.width(), img.height(), int(coarse_side))));
        for (int i = 0; i < batch_size; ++i) {
          const int im = images.size() == 1 ? 0 : pick_image(mass, rng);
          const std::int64_t tiles = coarse_tile_count(
              images[im].width(), images[im].height(), int(coarse_side));
          batch.push_back(
              {im,
               coarse_tile(images[im].width(), images[im].height(),
                           int(coarse_side), uniform_index(rng, tiles)),
               nullptr});
        }
        break;
      }
      case StrategyKind::MCBlock: {
        MCForest& forest = *result.forest;
        if (init_pos < init_queue.size()) {
          drew_init_batch = true;
          const std::size_t end =
              std::min(init_pos + std::size_t(batch_size), init_queue.size());
          for (; init_pos < end; ++init_pos) {
            MCNode* n = init_queue[init_pos];
            batch.push_back({int(n->tree_index), n->rect, n});
          }
        } else if (strategy.ablation.uniform_selection) {
          // Same probability for every leaf; expansion dynamics unchanged.
          uniform_pool = collect_leaves(forest);
          std::unordered_set<const MCNode*> members;
          for (int i = 0; i < batch_size; ++i) {
            MCNode* chosen = nullptr;
            MCNode* last = nullptr;
            for (int attempt = 0; attempt <= 8; ++attempt) {
              const std::size_t k = uniform_index(rng, uniform_pool.size());
              MCNode* leaf = uniform_pool[k];
              last = leaf;
              if (members.count(leaf)) continue;
              if (!strategy.ablation.freeze_partition) {
                chosen = expand(forest, *leaf, cfg.sampler, rng);
                uniform_pool[k] = chosen;  // keep the pool on live leaves
              } else {
                chosen = leaf;
              }
              break;
            }
            if (chosen == nullptr) chosen = last;
            members.insert(chosen);
            batch.push_back({int(chosen->tree_index), chosen->rect, chosen});
          }
        } else if (strategy.ablation.freeze_partition) {
          for (MCNode* n : select_leaves(forest, batch_size, rng))
            batch.push_back({int(n->tree_index), n->rect, n});
        } else {
          for (MCNode* n : form_batch(forest, cfg.sampler, rng))
            batch.push_back({int(n->tree_index), n->rect, n});
        }
        break;
      }
    }
    m.sampler_ms += ms_since(t0);

    // --- model update, grouped per image ---
    t0 = Clock::now();
    losses.assign(batch.size(), 0.0);
    for (std::size_t im = 0; im < images.size(); ++im) {
      order.clear();
      rects.clear();
      for (std::size_t k = 0; k < batch.size(); ++k)
        if (batch[k].image == int(im)) {
          order.push_back(k);
          rects.push_back(batch[k].rect);
        }
      if (rects.empty()) continue;
      const std::vector<double> group =
          train_step(result.state[im], images[im], tables[im], rects);
      for (std::size_t j = 0; j < order.size(); ++j)
        losses[order[j]] = group[j];
    }
    m.model_ms += ms_since(t0);

    // --- propagate measured losses back into the sampler ---
    t0 = Clock::now();
    if (is_tree) {
      trained.clear();
      for (std::size_t k = 0; k < batch.size(); ++k)
        trained.push_back({batch[k].node, losses[k]});
      const bool prune =
          !strategy.ablation.freeze_partition && !drew_init_batch;
      backpropagate(*result.forest, trained, tables, cfg.sampler, prune);
    } else if (strategy.kind == StrategyKind::Active) {
      for (std::size_t k = 0; k < batch.size(); ++k)
        active[batch[k].image].record(batch[k].rect.x, batch[k].rect.y,
                                      losses[k]);
    }
    m.sampler_ms += ms_since(t0);

    // --- bookkeeping (untimed) ---
    for (const Drawn& d : batch) {
      m.sample_counts[d.image]
          .block(d.rect.y, d.rect.x, d.rect.h, d.rect.w) += 1.0;
      m.pixels_covered += d.rect.area();
    }
    m.blocks_trained += std::int64_t(batch.size());

    if (iter % cfg.checkpoint_every == 0 || iter == cfg.iterations)
      snapshot(iter);
  }

  m.wall_ms = ms_since(wall_start);
  return result;
}

// ---------------------------------------------------------------------------
// CSV

const char kMetricsCsvHeader[] =
    "iteration,mse,psnr,leaf_count,blocks_trained,pixels_covered";
const char kTimingCsvHeader[] =
    "iteration,wall_ms,sampler_ms,model_ms,eval_ms,overhead_fraction";
const char kBenchCsvHeader[] =
    "strategy,iteration,mse,psnr,leaf_count,blocks_trained,pixels_covered";

namespace {

void append_metrics_row(std::string& out, const CheckpointRow& r) {
  out += std::to_string(r.iteration);
  out += ',';
  append_double(out, r.mse);
  out += ',';
  append_double(out, r.psnr);
  out += ',';
  out += std::to_string(r.leaf_count);
  out += ',';
  out += std::to_string(r.blocks_trained);
  out += ',';
  out += std::to_string(r.pixels_covered);
  out += '\n';
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << body;
  if (!os) throw IoError("short write to '" + path + "'");
}

}  // namespace

void write_metrics_csv(const std::string& path, const RunMetrics& m) {
  std::string out = kMetricsCsvHeader;
  out += '\n';
  for (const CheckpointRow& r : m.rows) append_metrics_row(out, r);
  write_text(path, out);
}

void write_timing_csv(const std::string& path, const RunMetrics& m) {
  std::string out = kTimingCsvHeader;
  out += '\n';
  for (const CheckpointRow& r : m.rows) {
    out += std::to_string(r.iteration);
    out += ',';
    append_double(out, r.wall_ms);
    out += ',';
    append_double(out, r.sampler_ms);
    out += ',';
    append_double(out, r.model_ms);
    out += ',';
    append_double(out, r.eval_ms);
    out += ',';
    const double denom = r.sampler_ms + r.model_ms;
    append_double(out, denom > 0.0 ? r.sampler_ms / denom : 0.0);
    out += '\n';
  }
  write_text(path, out);
}

void write_counts_csv(const std::string& path, const Eigen::ArrayXXd& counts) {
  std::string out;
  for (Eigen::Index y = 0; y < counts.rows(); ++y) {
    for (Eigen::Index x = 0; x < counts.cols(); ++x) {
      if (x) out += ',';
      out += std::to_string(std::int64_t(counts(y, x)));
    }
    out += '\n';
  }
  write_text(path, out);
}

Eigen::ArrayXXd read_counts_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw IoError("counts csv: ragged rows in '" + path + "'");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("counts csv: empty file '" + path + "'");
  Eigen::ArrayXXd counts(rows.size(), rows.front().size());
  for (std::size_t y = 0; y < rows.size(); ++y)
    for (std::size_t x = 0; x < rows[y].size(); ++x)
      counts(y, x) = rows[y][x];
  return counts;
}

void write_bench_csv(const std::string& path,
                     std::span<const BenchEntry> entries) {
  std::string out = kBenchCsvHeader;
  out += '\n';
  for (const BenchEntry& e : entries)
    for (const CheckpointRow& r : e.metrics.rows) {
      out += e.name;
      out += ',';
      append_metrics_row(out, r);
    }
  write_text(path, out);
}

std::string bench_summary(std::span<const BenchEntry> entries,
                          double target_psnr) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-28s %18s %12s\n", "strategy",
                "iters_to_target", "speedup");
  out += buf;
  const std::int64_t ref =
      entries.empty() ? -1 : iterations_to_psnr(entries[0].metrics,
                                                target_psnr);
  for (const BenchEntry& e : entries) {
    const std::int64_t it = iterations_to_psnr(e.metrics, target_psnr);
    std::string iters = it < 0 ? "-" : std::to_string(it);
    std::string speedup = "-";
    if (it > 0 && ref > 0) {
      std::snprintf(buf, sizeof buf, "%.3f", double(ref) / double(it));
      speedup = buf;
    }
    std::snprintf(buf, sizeof buf, "%-28s %18s %12s\n", e.name.c_str(),
                  iters.c_str(), speedup.c_str());
    out += buf;
  }
  return out;
}

}  // namespace mcblock
