#pragma once

#include <string>

#include "mcblock/mctree.hpp"
#include "mcblock/mipfield.hpp"

namespace mcblock {

// Forest checkpoints are versioned JSON: per tree a flat preorder node
// array with child indices; priorities are stored together with the
// forest's scale_log, so a reload reproduces true priorities exactly.
// Layout details in docs/formats.md.
void save_forest(const MCForest& forest, const std::string& path);
MCForest load_forest(const std::string& path);

// Field checkpoints are versioned little-endian binary: header with
// extent and level resolutions, then per level per channel the row-major
// cell data as float64. Layout details in docs/formats.md.
void save_field(const MipField& field, const std::string& path);
MipField load_field(const std::string& path);

}  // namespace mcblock
