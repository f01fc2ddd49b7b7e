#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "mcblock/block_rect.hpp"
#include "mcblock/errors.hpp"
#include "mcblock/image.hpp"
#include "mcblock/rng.hpp"

namespace mcblock {

struct SamplerConfig {
  // Expired-time temperature: an untrained block's priority grows by
  // e^{1/lambda} per iteration. 1000 measured fastest-to-target on the
  // composite benchmark across seeds (sweep: 500..20000).
  double lambda = 1000.0;
  // Merge threshold on block color variance during tree initialization.
  double eps_init = 1e-3;
  // Prune when node loss falls below eps_loss times the mean leaf loss...
  double eps_loss = 1e-2;
  // ...and the block color variance is below eps_color.
  double eps_color = 1e-4;
  int min_block_side = 1;
  int batch_size = 1024;
};

// One block of the partition. A node is a leaf (child_count == 0) or has
// its children in one contiguous array, count 4, or 2 for degenerate
// single-axis splits. Nodes are heap-stable: pointers stay valid until the
// node is pruned away.
//
// Priorities use a lazy shared scale. The true priority of any node is
//   uct(node) = stored_uct * e^{forest.scale_log}
// which for a leaf trained O iterations ago equals loss * e^{O/lambda} *
// area. backpropagate advances scale_log instead of touching every node,
// and writes fresh values pre-divided by the current scale.
struct MCNode {
  // The first 64 bytes are exactly the fields the per-iteration walks
  // touch: a descend step reads the mirrored child priorities, the count,
  // and the children pointer; backpropagate's ancestor-marking pass reads
  // parent, depth, and the epoch stamp. child_uct[i] mirrors
  // children[i].stored_uct and is refreshed wherever a child's priority
  // changes. The alignas keeps that hot region inside one cache line for
  // every element of a child array.
  std::array<double, 4> child_uct{};
  std::unique_ptr<MCNode[]> children;
  std::uint16_t child_count = 0;
  std::uint16_t depth = 0;  // root is 0
  // Scratch stamp so one backpropagate call touches each ancestor once.
  std::uint32_t dirty_epoch = 0;
  MCNode* parent = nullptr;
  double stored_uct = 0.0;

  double loss = 0.0;
  BlockRect rect;
  std::int64_t last_trained_iter = 0;
  // Block color variance is a function of the rect alone; computed on
  // first prune check, negative while unknown.
  double cached_variance = -1.0;
  std::uint32_t tree_index = 0;
  // Tombstone: set when the node is pruned away mid-backpropagate. The
  // memory stays valid until the call returns so stale batch entries can
  // be detected instead of dangling.
  bool pruned = false;
  bool in_batch = false;  // scratch flag owned by form_batch

  bool is_leaf() const { return child_count == 0; }
  MCNode* child(int i) { return &children[i]; }
  const MCNode* child(int i) const { return &children[i]; }

  MCNode() = default;
  MCNode(const MCNode&) = delete;
  MCNode& operator=(const MCNode&) = delete;
};

struct MCTree {
  std::unique_ptr<MCNode> root;
  int image_index = 0;
};

// A set of block trees, one per training image, plus the shared lazy
// priority scale and running leaf-loss statistics.
struct MCForest {
  std::vector<MCTree> tree;
  double scale_log = 0.0;
  std::int64_t current_iter = 0;
  double leaf_loss_sum = 0.0;
  std::int64_t leaf_count = 0;

  double mean_leaf_loss() const {
    return leaf_count > 0 ? leaf_loss_sum / double(leaf_count) : 0.0;
  }

  // Holds subtrees pruned during the current backpropagate call; the
  // memory stays live until the call finishes so stale handles stay
  // detectable, then moves to the spare pools below for reuse.
  struct Grave {
    std::unique_ptr<MCNode[]> nodes;
    std::uint16_t count = 0;
  };
  std::vector<Grave> graveyard;

  // Recycled child arrays ([0] holds pairs, [1] holds quads); expansion
  // draws from these before touching the allocator.
  std::array<std::vector<std::unique_ptr<MCNode[]>>, 2> spare;

  // backpropagate scratch, kept here to avoid per-call allocation: the
  // epoch counter matching MCNode::dirty_epoch and per-depth buckets of
  // ancestors awaiting recomputation.
  std::uint32_t dirty_counter = 0;
  std::vector<std::vector<MCNode*>> dirty_by_depth;
};

struct TrainedLeaf {
  MCNode* node = nullptr;
  double loss = 0.0;
};

// Builds the initial tree for an image bottom-up: every pixel starts as a
// leaf and sibling groups merge into their parent while all of them are
// leaves and the parent block's color variance stays below eps_init. The
// recursion grid matches split_rect, so later expansions refine the same
// hierarchy. Runs until the root block is formed.
MCTree init_from_image(const Image& img, const IntegralTables& tables,
                       const SamplerConfig& cfg, int image_index = 0);

// Assembles trees into a forest: stamps node tree indices from positions
// and computes the leaf statistics.
MCForest make_forest(std::vector<MCTree> trees);

// True (unscaled-frame) priority of any node.
double node_uct(const MCForest& forest, const MCNode& node);

// True priority of a leaf: loss * e^{O/lambda} * area with O the number of
// backpropagate calls since the leaf was last trained.
double leaf_uct(const MCForest& forest, const MCNode& leaf);

// Applies one iteration of measured losses. Advances the forest clock (all
// priorities scale up by e^{1/lambda}), writes each trained leaf's loss and
// fresh priority loss * area, then recomputes every ancestor on the paths
// to the roots: internal priority is the sum over children, internal loss
// the mean over children. With prune enabled each recomputed ancestor is
// offered to try_prune. Entries must be live leaves (else StaleHandle);
// duplicates are allowed. All node handles are invalidated by the call.
void backpropagate(MCForest& forest, std::span<const TrainedLeaf> trained,
                   std::span<const IntegralTables> tables,
                   const SamplerConfig& cfg, bool prune = true);

// Merges node's children back into it when all children are leaves, the
// children's mean loss is below eps_loss * mean leaf loss (a zero loss
// always passes), and the block color variance is below eps_color. On a
// merge the node keeps the children's mean loss and summed priority.
// Returns whether it fired.
bool try_prune(MCForest& forest, MCNode& node, const IntegralTables& tables,
               const SamplerConfig& cfg);

// Walks from a root to one leaf, choosing each step proportionally to
// child priority; the root is chosen proportionally to root priority, so a
// leaf is reached with probability uct(leaf) / total. If every root has
// zero priority, falls back to uniform over all leaves. Performs no
// mutation.
MCNode* select_leaf(MCForest& forest, Rng& rng);
std::vector<MCNode*> select_leaves(MCForest& forest, std::size_t n, Rng& rng);

// Splits a leaf in place (axes longer than min_block_side halve; at
// minimum size the leaf is returned unchanged). Children inherit the
// parent's loss and last-trained iteration, and take the parent's priority
// scaled by area share, so the parent's priority and the tiling are
// conserved. Returns one of the new children uniformly at random.
MCNode* expand(MCForest& forest, MCNode& leaf, const SamplerConfig& cfg,
               Rng& rng);

// Draws a training batch of cfg.batch_size blocks: select a leaf, expand
// it, keep the returned child. A draw that lands on a block already in the
// batch is retried up to 8 times, then accepted as a duplicate (without
// re-expanding, so batch members always stay current leaves).
std::vector<MCNode*> form_batch(MCForest& forest, const SamplerConfig& cfg,
                                Rng& rng);

// Traversal helpers.
void for_each_node(MCNode& node, const std::function<void(MCNode&)>& fn);
void for_each_node(const MCNode& node,
                   const std::function<void(const MCNode&)>& fn);
std::vector<MCNode*> collect_leaves(MCTree& tree);
std::vector<MCNode*> collect_leaves(MCForest& forest);
std::int64_t count_nodes(const MCTree& tree);
std::int64_t count_leaves(const MCTree& tree);

}  // namespace mcblock
