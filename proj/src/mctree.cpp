#include "mcblock/mctree.hpp"

#include <cmath>

namespace mcblock {

namespace {

// Rebase the lazy scale once the pending multiplier reaches e^50, keeping
// stored magnitudes in a comfortable floating-point range.
constexpr double kRebaseLogThreshold = 50.0;
// Re-draw budget when a batch draw collides with an existing member.
constexpr int kDuplicateRetries = 8;
// Cadence (in iterations) of the exact leaf-statistics recomputation that
// bounds incremental drift.
constexpr std::int64_t kLeafStatsRefreshEvery = 1000;
// Cap on recycled child arrays kept per size class.
constexpr std::size_t kSparePoolCap = 4096;

void recompute_from_children(MCNode& node) {
  double loss_sum = 0.0, uct_sum = 0.0;
  for (int i = 0; i < node.child_count; ++i) {
    const MCNode& c = node.children[i];
    loss_sum += c.loss;
    node.child_uct[i] = c.stored_uct;
    uct_sum += c.stored_uct;
  }
  node.loss = loss_sum / double(node.child_count);
  node.stored_uct = uct_sum;
}

void refresh_leaf_stats(MCForest& forest) {
  double sum = 0.0;
  std::int64_t count = 0;
  for (auto& tree : forest.tree)
    for_each_node(*tree.root, [&](MCNode& n) {
      if (n.is_leaf()) {
        sum += n.loss;
        ++count;
      }
    });
  forest.leaf_loss_sum = sum;
  forest.leaf_count = count;
}

void rebase_scale(MCForest& forest) {
  const double factor = std::exp(forest.scale_log);
  for (auto& tree : forest.tree)
    for_each_node(*tree.root, [&](MCNode& n) {
      n.stored_uct *= factor;
      for (int i = 0; i < n.child_count; ++i) n.child_uct[i] *= factor;
    });
  forest.scale_log = 0.0;
}

}  // namespace

MCTree init_from_image(const Image& img, const IntegralTables& tables,
                       const SamplerConfig& cfg, int image_index) {
  if (img.width() <= 0 || img.height() <= 0)
    throw InvalidInput("init_from_image: empty image");
  if (img.width() != tables.width || img.height() != tables.height)
    throw InvalidInput("init_from_image: tables do not match image size");

  struct Entry {
    BlockRect rect;
    std::int32_t first_child = 0;
    std::int16_t child_count = 0;
    bool collapsed = false;
  };

  // Lay out the full split hierarchy level by level.
  std::vector<std::vector<Entry>> levels;
  levels.push_back({Entry{BlockRect{0, 0, img.width(), img.height()}}});
  while (true) {
    std::vector<Entry> next;
    for (Entry& e : levels.back()) {
      const RectSplit s = split_rect(e.rect, cfg.min_block_side);
      e.first_child = std::int32_t(next.size());
      e.child_count = std::int16_t(s.count);
      for (int i = 0; i < s.count; ++i) next.push_back(Entry{s.rect[i]});
    }
    if (next.empty()) break;
    levels.push_back(std::move(next));
  }

  // Merge upward: a block collapses to a leaf when its whole subtree has
  // collapsed and its color variance is under the threshold.
  for (auto& level : levels)
    for (Entry& e : level) e.collapsed = e.child_count == 0;
  for (int d = int(levels.size()) - 2; d >= 0; --d) {
    auto& level = levels[d];
    const auto& below = levels[d + 1];
    for (Entry& e : level) {
      if (e.child_count == 0) continue;
      bool all = true;
      for (int i = 0; i < e.child_count && all; ++i)
        all = below[e.first_child + i].collapsed;
      e.collapsed = all && block_variance(tables, e.rect) < cfg.eps_init;
    }
  }

  // Materialize the surviving structure.
  const std::function<void(MCNode&, int, std::size_t, MCNode*)> fill =
      [&](MCNode& node, int d, std::size_t i, MCNode* parent) {
        const Entry& e = levels[d][i];
        node.rect = e.rect;
        node.parent = parent;
        node.depth = std::uint16_t(d);
        node.tree_index = std::uint32_t(image_index);
        if (e.collapsed) return;
        node.children = std::make_unique<MCNode[]>(e.child_count);
        node.child_count = std::uint16_t(e.child_count);
        for (int k = 0; k < e.child_count; ++k)
          fill(node.children[k], d + 1, std::size_t(e.first_child) + k, &node);
      };

  MCTree tree;
  tree.image_index = image_index;
  tree.root = std::make_unique<MCNode>();
  fill(*tree.root, 0, 0, nullptr);
  return tree;
}

MCForest make_forest(std::vector<MCTree> trees) {
  MCForest forest;
  forest.tree = std::move(trees);
  for (std::size_t t = 0; t < forest.tree.size(); ++t)
    for_each_node(*forest.tree[t].root, [&](MCNode& n) {
      n.tree_index = std::uint32_t(t);
      for (int i = 0; i < n.child_count; ++i)
        n.child_uct[i] = n.children[i].stored_uct;
    });
  refresh_leaf_stats(forest);
  return forest;
}

double node_uct(const MCForest& forest, const MCNode& node) {
  return node.stored_uct * std::exp(forest.scale_log);
}

double leaf_uct(const MCForest& forest, const MCNode& leaf) {
  if (!leaf.is_leaf()) throw InvalidInput("leaf_uct: node is not a leaf");
  return node_uct(forest, leaf);
}

bool try_prune(MCForest& forest, MCNode& node, const IntegralTables& tables,
               const SamplerConfig& cfg) {
  if (node.child_count == 0) return false;
  double loss_sum = 0.0, uct_sum = 0.0;
  for (int i = 0; i < node.child_count; ++i) {
    const MCNode& c = node.children[i];
    if (!c.is_leaf()) return false;
    loss_sum += c.loss;
    uct_sum += c.stored_uct;
  }
  const double merged_loss = loss_sum / double(node.child_count);
  const double mean = forest.mean_leaf_loss();
  const bool loss_ok =
      merged_loss == 0.0 || (mean > 0.0 && merged_loss < cfg.eps_loss * mean);
  if (!loss_ok) return false;
  if (node.cached_variance < 0.0)
    node.cached_variance = block_variance(tables, node.rect);
  if (node.cached_variance >= cfg.eps_color) return false;

  forest.leaf_loss_sum += merged_loss - loss_sum;
  forest.leaf_count += 1 - node.child_count;
  node.loss = merged_loss;
  node.stored_uct = uct_sum;
  if (node.parent != nullptr) {
    MCNode* p = node.parent;
    p->child_uct[&node - p->children.get()] = node.stored_uct;
  }
  for (int i = 0; i < node.child_count; ++i) node.children[i].pruned = true;
  forest.graveyard.push_back({std::move(node.children), node.child_count});
  node.child_count = 0;
  return true;
}

void backpropagate(MCForest& forest, std::span<const TrainedLeaf> trained,
                   std::span<const IntegralTables> tables,
                   const SamplerConfig& cfg, bool prune) {
  // One tick of expired time: every priority in the forest grows by
  // e^{1/lambda}, paid for by advancing the shared scale.
  forest.current_iter += 1;
  forest.scale_log += 1.0 / cfg.lambda;
  if (forest.scale_log > kRebaseLogThreshold) rebase_scale(forest);
  const double inv_scale = std::exp(-forest.scale_log);

  for (const TrainedLeaf& t : trained) {
    MCNode* n = t.node;
    if (n == nullptr || n->pruned || !n->is_leaf())
      throw StaleHandle("backpropagate: trained node is not a live leaf");
    if (n->tree_index >= tables.size())
      throw InvalidInput("backpropagate: missing tables for tree");
    if (t.loss < 0.0)
      throw InvalidInput("backpropagate: negative loss");
    forest.leaf_loss_sum += t.loss - n->loss;
    n->loss = t.loss;
    n->stored_uct = t.loss * double(n->rect.area()) * inv_scale;
    n->last_trained_iter = forest.current_iter;
  }

  // Mark the union of root paths once; a node already stamped this call
  // implies its whole ancestor chain is stamped too.
  const std::uint32_t epoch = ++forest.dirty_counter;
  auto& buckets = forest.dirty_by_depth;
  for (const TrainedLeaf& t : trained) {
    for (MCNode* node = t.node->parent;
         node != nullptr && node->dirty_epoch != epoch; node = node->parent) {
      node->dirty_epoch = epoch;
      if (buckets.size() <= node->depth) buckets.resize(node->depth + 1);
      buckets[node->depth].push_back(node);
    }
  }

  // Deepest first, so every node is recomputed after all of its marked
  // descendants and a cascade of prunes can ripple toward the root. A
  // marked node cannot have been merged away yet: only its (shallower,
  // later-processed) parent could do that.
  for (std::size_t d = buckets.size(); d-- > 0;) {
    for (MCNode* node : buckets[d]) {
      recompute_from_children(*node);
      if (prune) try_prune(forest, *node, tables[node->tree_index], cfg);
    }
    buckets[d].clear();
  }

  if (forest.current_iter % kLeafStatsRefreshEvery == 0)
    refresh_leaf_stats(forest);

  // Dead child arrays become spare capacity for future expansions.
  for (auto& g : forest.graveyard) {
    auto& pool = forest.spare[g.count == 4 ? 1 : 0];
    if (pool.size() < kSparePoolCap) pool.push_back(std::move(g.nodes));
  }
  forest.graveyard.clear();
}

namespace {

MCNode* descend(MCNode* node, Rng& rng) {
  while (!node->is_leaf()) {
    // An internal node's stored priority is exactly the sum over its
    // children (recomputed on every update), so no second scan is needed;
    // the last positive child absorbs any expansion-time rounding slack.
    const double total = node->stored_uct;
    MCNode* pick = nullptr;
    if (total <= 0.0) {
      pick = node->child(int(uniform_index(rng, node->child_count)));
    } else {
      const double r = uniform_double(rng) * total;
      double acc = 0.0;
      int last_positive = node->child_count - 1;
      for (int i = 0; i < node->child_count; ++i) {
        const double m = node->child_uct[i];
        if (m <= 0.0) continue;
        acc += m;
        last_positive = i;
        if (r < acc) break;
      }
      pick = node->child(last_positive);
    }
    node = pick;
  }
  return node;
}

}  // namespace

MCNode* select_leaf(MCForest& forest, Rng& rng) {
  if (forest.tree.empty()) throw InvalidInput("select_leaf: empty forest");
  double total = 0.0;
  for (const auto& tree : forest.tree) total += tree.root->stored_uct;
  if (total <= 0.0) {
    // Perfect fit everywhere: fall back to uniform over leaves.
    std::vector<MCNode*> leaves = collect_leaves(forest);
    return leaves[uniform_index(rng, leaves.size())];
  }
  const double r = uniform_double(rng) * total;
  double acc = 0.0;
  MCNode* root = nullptr;
  for (const auto& tree : forest.tree) {
    const double m = tree.root->stored_uct;
    if (m <= 0.0) continue;
    acc += m;
    root = tree.root.get();
    if (r < acc) break;
  }
  return descend(root, rng);
}

std::vector<MCNode*> select_leaves(MCForest& forest, std::size_t n, Rng& rng) {
  std::vector<MCNode*> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(select_leaf(forest, rng));
  return out;
}

MCNode* expand(MCForest& forest, MCNode& leaf, const SamplerConfig& cfg,
               Rng& rng) {
  if (leaf.pruned || !leaf.is_leaf())
    throw StaleHandle("expand: node is not a live leaf");
  const RectSplit s = split_rect(leaf.rect, cfg.min_block_side);
  if (s.count == 0) return &leaf;

  std::unique_ptr<MCNode[]> children;
  auto& pool = forest.spare[s.count == 4 ? 1 : 0];
  if (!pool.empty()) {
    children = std::move(pool.back());
    pool.pop_back();
  } else {
    children = std::make_unique<MCNode[]>(s.count);
  }
  const double parent_area = double(leaf.rect.area());
  for (int i = 0; i < s.count; ++i) {
    MCNode& c = children[i];
    // Recycled arrays held leaves, so c.children is null and c.child_count
    // zero; the scalar fields still need a full reset.
    c.rect = s.rect[i];
    c.loss = leaf.loss;
    c.stored_uct = leaf.stored_uct * (double(c.rect.area()) / parent_area);
    c.last_trained_iter = leaf.last_trained_iter;
    c.parent = &leaf;
    c.depth = std::uint16_t(leaf.depth + 1);
    c.tree_index = leaf.tree_index;
    c.pruned = false;
    c.in_batch = false;
    c.dirty_epoch = 0;
    c.cached_variance = -1.0;
    leaf.child_uct[i] = c.stored_uct;
  }
  leaf.children = std::move(children);
  leaf.child_count = std::uint16_t(s.count);
  forest.leaf_loss_sum += leaf.loss * double(s.count - 1);
  forest.leaf_count += s.count - 1;
  return leaf.child(int(uniform_index(rng, std::size_t(s.count))));
}

std::vector<MCNode*> form_batch(MCForest& forest, const SamplerConfig& cfg,
                                Rng& rng) {
  std::vector<MCNode*> batch;
  batch.reserve(cfg.batch_size);
  for (int slot = 0; slot < cfg.batch_size; ++slot) {
    MCNode* chosen = nullptr;
    MCNode* last = nullptr;
    for (int attempt = 0; attempt <= kDuplicateRetries; ++attempt) {
      MCNode* leaf = select_leaf(forest, rng);
      last = leaf;
      // A leaf already in the batch must not be expanded (that would turn
      // a batch member into an internal node); treat it as a collision.
      if (leaf->in_batch) continue;
      chosen = expand(forest, *leaf, cfg, rng);
      break;
    }
    if (chosen == nullptr) chosen = last;  // accept the duplicate
    chosen->in_batch = true;
    batch.push_back(chosen);
  }
  for (MCNode* n : batch) n->in_batch = false;
  return batch;
}

void for_each_node(MCNode& node, const std::function<void(MCNode&)>& fn) {
  fn(node);
  for (int i = 0; i < node.child_count; ++i) for_each_node(node.children[i], fn);
}

void for_each_node(const MCNode& node,
                   const std::function<void(const MCNode&)>& fn) {
  fn(node);
  for (int i = 0; i < node.child_count; ++i) {
    const MCNode& child = node.children[i];
    for_each_node(child, fn);
  }
}

std::vector<MCNode*> collect_leaves(MCTree& tree) {
  std::vector<MCNode*> out;
  for_each_node(*tree.root, [&](MCNode& n) {
    if (n.is_leaf()) out.push_back(&n);
  });
  return out;
}

std::vector<MCNode*> collect_leaves(MCForest& forest) {
  std::vector<MCNode*> out;
  for (auto& tree : forest.tree) {
    auto leaves = collect_leaves(tree);
    out.insert(out.end(), leaves.begin(), leaves.end());
  }
  return out;
}

std::int64_t count_nodes(const MCTree& tree) {
  std::int64_t n = 0;
  const MCNode& root = *tree.root;
  for_each_node(root, [&](const MCNode&) { ++n; });
  return n;
}

std::int64_t count_leaves(const MCTree& tree) {
  std::int64_t n = 0;
  const MCNode& root = *tree.root;
  for_each_node(root, [&](const MCNode& node) {
    if (node.is_leaf()) ++n;
  });
  return n;
}

}  // namespace mcblock
