#include "mcblock/checkpoint.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace mcblock {

namespace {

using nlohmann::json;

constexpr int kForestVersion = 1;
constexpr char kFieldMagic[4] = {'M', 'C', 'F', 'D'};
constexpr std::uint32_t kFieldVersion = 1;

void flatten(const MCNode& node, json& nodes) {
  const std::size_t my_index = nodes.size();
  nodes.push_back(json{{"rect", {node.rect.x, node.rect.y, node.rect.w,
                                 node.rect.h}},
                       {"loss", node.loss},
                       {"uct", node.stored_uct},
                       {"trained", node.last_trained_iter},
                       {"children", json::array()}});
  for (int i = 0; i < node.child_count; ++i) {
    nodes[my_index]["children"].push_back(nodes.size());
    flatten(node.children[i], nodes);
  }
}

// Rebuilds a subtree from the flat node array; `used` guards against
// cyclic or shared indices in a corrupt file.
void unflatten(const json& nodes, std::size_t index, MCNode& out,
               MCNode* parent, std::vector<bool>& used) {
  if (index >= nodes.size() || used[index])
    throw IoError("forest checkpoint: bad node index");
  used[index] = true;
  const json& n = nodes.at(index);
  const auto& r = n.at("rect");
  out.rect = BlockRect{r.at(0).get<int>(), r.at(1).get<int>(),
                       r.at(2).get<int>(), r.at(3).get<int>()};
  out.loss = n.at("loss").get<double>();
  out.stored_uct = n.at("uct").get<double>();
  out.last_trained_iter = n.at("trained").get<std::int64_t>();
  out.parent = parent;
  out.depth = parent == nullptr ? 0 : std::uint16_t(parent->depth + 1);
  if (out.loss < 0.0 || out.stored_uct < 0.0 || out.rect.w <= 0 ||
      out.rect.h <= 0)
    throw IoError("forest checkpoint: invalid node values");
  const auto& kids = n.at("children");
  if (!(kids.size() == 0 || kids.size() == 2 || kids.size() == 4))
    throw IoError("forest checkpoint: invalid child count");
  if (kids.empty()) return;
  out.children = std::make_unique<MCNode[]>(kids.size());
  out.child_count = std::uint16_t(kids.size());
  std::int64_t child_area = 0;
  for (std::size_t i = 0; i < kids.size(); ++i) {
    MCNode& c = out.children[i];
    unflatten(nodes, kids.at(i).get<std::size_t>(), c, &out, used);
    if (c.rect.x < out.rect.x || c.rect.y < out.rect.y ||
        c.rect.x + c.rect.w > out.rect.x + out.rect.w ||
        c.rect.y + c.rect.h > out.rect.y + out.rect.h)
      throw IoError("forest checkpoint: child outside parent");
    child_area += c.rect.area();
  }
  if (child_area != out.rect.area())
    throw IoError("forest checkpoint: children do not tile parent");
}

template <typename T>
void write_raw(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_raw(std::ifstream& is, const char* what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw IoError(std::string("field checkpoint: truncated ") + what);
  return v;
}

}  // namespace

void save_forest(const MCForest& forest, const std::string& path) {
  json doc{{"format", "mcforest"},
           {"version", kForestVersion},
           {"scale_log", forest.scale_log},
           {"current_iter", forest.current_iter},
           {"trees", json::array()}};
  for (const auto& tree : forest.tree) {
    json nodes = json::array();
    flatten(*tree.root, nodes);
    doc["trees"].push_back(
        json{{"image_index", tree.image_index}, {"nodes", std::move(nodes)}});
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << doc.dump(1, '\t') << '\n';
  if (!os) throw IoError("short write to '" + path + "'");
}

MCForest load_forest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  json doc;
  try {
    is >> doc;
  } catch (const json::exception& e) {
    throw IoError("forest checkpoint: parse error in '" + path + "': " +
                  e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "mcforest")
      throw IoError("forest checkpoint: wrong format tag in '" + path + "'");
    if (doc.at("version").get<int>() != kForestVersion)
      throw IoError("forest checkpoint: unsupported version in '" + path +
                    "'");
    std::vector<MCTree> trees;
    for (const json& jt : doc.at("trees")) {
      const json& nodes = jt.at("nodes");
      if (nodes.empty()) throw IoError("forest checkpoint: empty tree");
      MCTree tree;
      tree.image_index = jt.at("image_index").get<int>();
      tree.root = std::make_unique<MCNode>();
      std::vector<bool> used(nodes.size(), false);
      unflatten(nodes, 0, *tree.root, nullptr, used);
      trees.push_back(std::move(tree));
    }
    MCForest forest = make_forest(std::move(trees));
    forest.scale_log = doc.at("scale_log").get<double>();
    forest.current_iter = doc.at("current_iter").get<std::int64_t>();
    return forest;
  } catch (const json::exception& e) {
    throw IoError("forest checkpoint: missing field in '" + path + "': " +
                  e.what());
  }
}

void save_field(const MipField& field, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(kFieldMagic, sizeof kFieldMagic);
  write_raw(os, kFieldVersion);
  write_raw(os, std::uint32_t(field.width));
  write_raw(os, std::uint32_t(field.height));
  write_raw(os, std::uint32_t(field.level.size()));
  for (const auto& lv : field.level) {
    write_raw(os, std::uint32_t(lv.rows()));
    write_raw(os, std::uint32_t(lv.cols()));
    write_raw(os, std::uint32_t(lv.side));
    for (const auto& plane : lv.cell)
      for (int r = 0; r < lv.rows(); ++r)
        for (int c = 0; c < lv.cols(); ++c) write_raw(os, double(plane(r, c)));
  }
  if (!os) throw IoError("short write to '" + path + "'");
}

MipField load_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kFieldMagic, 4) != 0)
    throw IoError("field checkpoint: bad magic in '" + path + "'");
  if (read_raw<std::uint32_t>(is, "version") != kFieldVersion)
    throw IoError("field checkpoint: unsupported version in '" + path + "'");
  const auto width = read_raw<std::uint32_t>(is, "width");
  const auto height = read_raw<std::uint32_t>(is, "height");
  const auto nlevels = read_raw<std::uint32_t>(is, "level count");
  if (width == 0 || height == 0 || nlevels == 0 || nlevels > 64)
    throw IoError("field checkpoint: invalid header in '" + path + "'");
  MipField field = MipField::zeros(int(width), int(height));
  if (field.level.size() != nlevels)
    throw IoError("field checkpoint: level count mismatch in '" + path + "'");
  for (auto& lv : field.level) {
    const auto rows = read_raw<std::uint32_t>(is, "level rows");
    const auto cols = read_raw<std::uint32_t>(is, "level cols");
    const auto side = read_raw<std::uint32_t>(is, "level side");
    if (int(rows) != lv.rows() || int(cols) != lv.cols() ||
        int(side) != lv.side)
      throw IoError("field checkpoint: level shape mismatch in '" + path +
                    "'");
    for (auto& plane : lv.cell)
      for (int r = 0; r < lv.rows(); ++r)
        for (int c = 0; c < lv.cols(); ++c)
          plane(r, c) = read_raw<double>(is, "cell data");
  }
  return field;
}

}  // namespace mcblock
