// Command-line front end: train a field on one or more images, compare
// sampling strategies, or render artifacts from saved checkpoints.
#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <type_traits>
#include <vector>

#include <CLI11.hpp>

#include "mcblock/bench.hpp"
#include "mcblock/checkpoint.hpp"
#include "mcblock/image_io.hpp"

namespace fs = std::filesystem;
using namespace mcblock;

namespace {

Image resolve_image(const std::string& spec) {
  if (spec == "composite") return make_composite_image();
  if (spec.rfind("composite:", 0) == 0) {
    int size = 0;
    try {
      size = std::stoi(spec.substr(10));
    } catch (const std::exception&) {
      throw InvalidInput("bad composite size in '" + spec + "'");
    }
    return make_composite_image(size);
  }
  return load_image(spec);
}

std::vector<Image> resolve_images(const std::vector<std::string>& specs) {
  std::vector<Image> images;
  for (const std::string& s : specs) images.push_back(resolve_image(s));
  return images;
}

struct TrainArgs {
  std::vector<std::string> images;
  std::string strategy = "mcblock";
  std::string out_dir = "out";
  std::string optimizer = "adam";
  std::string inclusion = "hard";
  std::string config_path;
  std::int64_t iterations = 2000;
  std::int64_t checkpoint_every = 100;
  int batch_size = 1024;
  int min_block_side = 1;
  std::uint64_t seed = 1;
  double lambda = 1000.0;
  double eps_init = 1e-3;
  double eps_loss = 1e-2;
  double eps_color = 1e-4;
  double learning_rate = 0.01;
};

void add_train_options(CLI::App& sub, TrainArgs& a) {
  // Required, but enforced after --config files are merged in.
  sub.add_option("--image", a.images,
                 "image file, 'composite', or 'composite:SIZE'");
  sub.add_option("--iterations", a.iterations, "training iterations")
      ->check(CLI::NonNegativeNumber);
  sub.add_option("--batch-size", a.batch_size, "blocks per iteration")
      ->check(CLI::PositiveNumber);
  sub.add_option("--checkpoint-every", a.checkpoint_every,
                 "iterations between metric rows")
      ->check(CLI::PositiveNumber);
  sub.add_option("--seed", a.seed, "RNG seed");
  sub.add_option("--lambda", a.lambda, "priority decay time constant");
  sub.add_option("--eps-init", a.eps_init, "initial merge variance bound");
  sub.add_option("--eps-loss", a.eps_loss, "prune loss ratio bound");
  sub.add_option("--eps-color", a.eps_color, "prune color variance bound");
  sub.add_option("--min-block-side", a.min_block_side,
                 "block axes at or below this stop splitting")
      ->check(CLI::PositiveNumber);
  sub.add_option("--lr", a.learning_rate, "learning rate");
  sub.add_option("--optimizer", a.optimizer, "sgd or adam")
      ->check(CLI::IsMember({"sgd", "adam"}));
  sub.add_option("--inclusion", a.inclusion,
                 "mip level inclusion rule: hard or smooth")
      ->check(CLI::IsMember({"hard", "smooth"}));
  sub.add_option("--out", a.out_dir, "output directory")
      ->envname("MCBLOCK_OUT");
  sub.add_option("--config", a.config_path,
                 "key=value file with these options; flags take precedence");
}

// --- config files -----------------------------------------------------------
// One table drives both directions: config_used.cfg is written from it, and
// --config files are applied through it, so the echo of one run always
// reproduces that run. Command-line flags beat config values.

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::int64_t parse_int(const std::string& v, const std::string& ctx) {
  try {
    std::size_t pos = 0;
    const long long r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw InvalidInput(ctx + ": bad integer '" + v + "'");
  }
}

double parse_double(const std::string& v, const std::string& ctx) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw InvalidInput(ctx + ": bad number '" + v + "'");
  }
}

struct ConfigKey {
  std::string key;
  const char* flag;  // matching CLI option, for the flags-win rule
  std::function<void(const std::string&, const std::string& ctx)> set;
  std::function<std::vector<std::string>()> echo;
};

std::vector<ConfigKey> config_keys(TrainArgs& a, bool with_strategy) {
  const auto quoted = [](const std::string& s) { return '"' + s + '"'; };
  std::vector<ConfigKey> keys;
  keys.push_back(
      {"image", "--image",
       [&a](const std::string& v, const std::string&) { a.images.push_back(v); },
       [&a, quoted] {
         std::vector<std::string> out;
         for (const std::string& s : a.images) out.push_back(quoted(s));
         return out;
       }});
  if (with_strategy)
    keys.push_back({"strategy", "--strategy",
                    [&a](const std::string& v, const std::string&) {
                      a.strategy = v;
                    },
                    [&a, quoted] {
                      return std::vector<std::string>{quoted(a.strategy)};
                    }});
  const auto int_key = [&keys](const char* key, const char* flag, auto& dst,
                               std::int64_t lo) {
    keys.push_back({key, flag,
                    [&dst, lo](const std::string& v, const std::string& ctx) {
                      const std::int64_t r = parse_int(v, ctx);
                      if (r < lo)
                        throw InvalidInput(ctx + ": value " + v +
                                           " below minimum " +
                                           std::to_string(lo));
                      dst = static_cast<std::remove_reference_t<decltype(dst)>>(r);
                    },
                    [&dst] {
                      return std::vector<std::string>{
                          std::to_string(std::int64_t(dst))};
                    }});
  };
  const auto double_key = [&keys](const char* key, const char* flag,
                                  double& dst) {
    keys.push_back({key, flag,
                    [&dst](const std::string& v, const std::string& ctx) {
                      dst = parse_double(v, ctx);
                    },
                    [&dst] { return std::vector<std::string>{fmt_double(dst)}; }});
  };
  int_key("iterations", "--iterations", a.iterations, 0);
  int_key("batch-size", "--batch-size", a.batch_size, 1);
  int_key("checkpoint-every", "--checkpoint-every", a.checkpoint_every, 1);
  keys.push_back({"seed", "--seed",
                  [&a](const std::string& v, const std::string& ctx) {
                    try {
                      std::size_t pos = 0;
                      a.seed = std::stoull(v, &pos);
                      if (pos != v.size()) throw std::invalid_argument(v);
                    } catch (const std::exception&) {
                      throw InvalidInput(ctx + ": bad seed '" + v + "'");
                    }
                  },
                  [&a] {
                    return std::vector<std::string>{std::to_string(a.seed)};
                  }});
  double_key("lambda", "--lambda", a.lambda);
  double_key("eps-init", "--eps-init", a.eps_init);
  double_key("eps-loss", "--eps-loss", a.eps_loss);
  double_key("eps-color", "--eps-color", a.eps_color);
  int_key("min-block-side", "--min-block-side", a.min_block_side, 1);
  double_key("lr", "--lr", a.learning_rate);
  const auto choice_key = [&keys, quoted](const char* key, const char* flag,
                                          std::string& dst,
                                          std::vector<std::string> allowed) {
    keys.push_back(
        {key, flag,
         [&dst, allowed](const std::string& v, const std::string& ctx) {
           if (std::find(allowed.begin(), allowed.end(), v) == allowed.end())
             throw InvalidInput(ctx + ": '" + v + "' is not a valid value");
           dst = v;
         },
         [&dst, quoted] { return std::vector<std::string>{quoted(dst)}; }});
  };
  choice_key("optimizer", "--optimizer", a.optimizer, {"sgd", "adam"});
  choice_key("inclusion", "--inclusion", a.inclusion, {"hard", "smooth"});
  keys.push_back({"out", "--out",
                  [&a](const std::string& v, const std::string&) {
                    a.out_dir = v;
                  },
                  [&a, quoted] {
                    return std::vector<std::string>{quoted(a.out_dir)};
                  }});
  return keys;
}

void apply_config(const CLI::App& sub, const std::string& path,
                  const std::vector<ConfigKey>& keys) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
      line.pop_back();
    std::size_t start = line.find_first_not_of(' ');
    if (start == std::string::npos) continue;
    line = line.substr(start);
    if (line[0] == '#' || line[0] == '[') continue;

    const std::string ctx = path + ":" + std::to_string(lineno);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidInput(ctx + ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && key.back() == ' ') key.pop_back();
    if (!value.empty() && value.front() == ' ') value = value.substr(1);
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);

    const auto it =
        std::find_if(keys.begin(), keys.end(),
                     [&key](const ConfigKey& k) { return k.key == key; });
    if (it == keys.end())
      throw InvalidInput(ctx + ": unknown key '" + key + "'");
    if (sub.count(it->flag) > 0) continue;  // command line wins
    it->set(value, ctx);
  }
}

void write_config_echo(const std::vector<ConfigKey>& keys,
                       const fs::path& dir) {
  std::ofstream os(dir / "config_used.cfg", std::ios::binary);
  for (const ConfigKey& k : keys)
    for (const std::string& v : k.echo()) os << k.key << '=' << v << '\n';
}

RunConfig make_run_config(const TrainArgs& a) {
  RunConfig cfg;
  cfg.sampler.lambda = a.lambda;
  cfg.sampler.eps_init = a.eps_init;
  cfg.sampler.eps_loss = a.eps_loss;
  cfg.sampler.eps_color = a.eps_color;
  cfg.sampler.min_block_side = a.min_block_side;
  cfg.sampler.batch_size = a.batch_size;
  cfg.learning_rate = a.learning_rate;
  cfg.optimizer = a.optimizer == "adam" ? Optimizer::Adam : Optimizer::Sgd;
  cfg.inclusion =
      a.inclusion == "smooth" ? InclusionRule::Smooth : InclusionRule::Hard;
  cfg.iterations = a.iterations;
  cfg.checkpoint_every = a.checkpoint_every;
  return cfg;
}

void write_run_artifacts(const fs::path& dir,
                         const std::vector<Image>& images,
                         const RunConfig& cfg, RunResult& result) {
  fs::create_directories(dir);
  write_metrics_csv((dir / "metrics.csv").string(), result.metrics);
  write_timing_csv((dir / "timing.csv").string(), result.metrics);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string tag = std::to_string(i);
    write_counts_csv((dir / ("sample_counts_" + tag + ".csv")).string(),
                     result.metrics.sample_counts[i]);
    save_png(counts_to_heatmap(result.metrics.sample_counts[i]),
             (dir / ("heatmap_" + tag + ".png")).string());
    save_png(reconstruct_pixels(result.state[i].field, cfg.inclusion),
             (dir / ("recon_pixel_" + tag + ".png")).string());
    save_field(result.state[i].field, (dir / ("field_" + tag + ".bin")).string());
    if (result.forest) {
      std::vector<BlockRect> rects;
      for (MCNode* n : collect_leaves(result.forest->tree[i]))
        rects.push_back(n->rect);
      save_png(reconstruct(result.state[i].field, rects, cfg.inclusion),
               (dir / ("recon_block_" + tag + ".png")).string());
      save_png(draw_partition_overlay(images[i], rects),
               (dir / ("partition_" + tag + ".png")).string());
    }
  }
  if (result.forest)
    save_forest(*result.forest, (dir / "forest.json").string());
}

int cmd_train(const CLI::App& sub, TrainArgs& a) {
  const std::vector<ConfigKey> keys = config_keys(a, true);
  if (!a.config_path.empty()) apply_config(sub, a.config_path, keys);
  if (a.images.empty()) throw InvalidInput("--image is required");

  const Strategy strategy = parse_strategy(a.strategy);
  const std::vector<Image> images = resolve_images(a.images);
  const RunConfig cfg = make_run_config(a);
  RunResult result = run(strategy, images, cfg, a.seed);

  const fs::path dir(a.out_dir);
  write_run_artifacts(dir, images, cfg, result);
  write_config_echo(keys, dir);

  const CheckpointRow& last = result.metrics.rows.back();
  std::printf("%s: %lld iterations, mse %.6g, psnr %.2f dB, %.0f ms "
              "(sampler share %.3f)\n",
              strategy_name(strategy).c_str(),
              static_cast<long long>(last.iteration), last.mse, last.psnr,
              result.metrics.wall_ms, measure_overhead(result.metrics));
  return 0;
}

int cmd_bench(const CLI::App& sub, TrainArgs& a,
              std::vector<std::string>& strategy_names, double& target_psnr) {
  std::vector<ConfigKey> keys = config_keys(a, false);
  keys.push_back({"strategies", "--strategies",
                  [&strategy_names](const std::string& v, const std::string&) {
                    strategy_names.clear();
                    std::size_t from = 0;
                    while (from <= v.size()) {
                      const std::size_t to = v.find(',', from);
                      if (to == std::string::npos) {
                        strategy_names.push_back(v.substr(from));
                        break;
                      }
                      strategy_names.push_back(v.substr(from, to - from));
                      from = to + 1;
                    }
                  },
                  [&strategy_names] {
                    std::string joined;
                    for (const std::string& s : strategy_names) {
                      if (!joined.empty()) joined += ',';
                      joined += s;
                    }
                    return std::vector<std::string>{'"' + joined + '"'};
                  }});
  keys.push_back({"target-psnr", "--target-psnr",
                  [&target_psnr](const std::string& v, const std::string& ctx) {
                    target_psnr = parse_double(v, ctx);
                  },
                  [&target_psnr] {
                    return std::vector<std::string>{fmt_double(target_psnr)};
                  }});
  if (!a.config_path.empty()) apply_config(sub, a.config_path, keys);
  if (a.images.empty()) throw InvalidInput("--image is required");

  const std::vector<Image> images = resolve_images(a.images);
  const RunConfig cfg = make_run_config(a);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);

  std::vector<BenchEntry> entries;
  for (const std::string& name : strategy_names) {
    Strategy strategy = parse_strategy(name);
    strategy.active_lambda = a.lambda;
    RunResult result = run(strategy, images, cfg, a.seed);
    std::printf("%s: final psnr %.2f dB, %.0f ms\n", name.c_str(),
                result.metrics.rows.back().psnr, result.metrics.wall_ms);
    entries.push_back(BenchEntry{name, std::move(result.metrics)});
  }

  write_bench_csv((dir / "bench.csv").string(), entries);
  const std::string summary = bench_summary(entries, target_psnr);
  std::ofstream(dir / "summary.txt", std::ios::binary) << summary;
  write_config_echo(keys, dir);
  std::fputs(summary.c_str(), stdout);
  return 0;
}

int cmd_visualize(const std::string& forest_path,
                  const std::vector<std::string>& field_paths,
                  const std::vector<std::string>& counts_paths,
                  const std::vector<std::string>& image_specs,
                  const std::string& inclusion, const std::string& out_dir) {
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  const InclusionRule rule =
      inclusion == "smooth" ? InclusionRule::Smooth : InclusionRule::Hard;

  for (std::size_t i = 0; i < counts_paths.size(); ++i)
    save_png(counts_to_heatmap(read_counts_csv(counts_paths[i])),
             (dir / ("heatmap_" + std::to_string(i) + ".png")).string());

  if (forest_path.empty() && field_paths.empty()) return 0;
  if (forest_path.empty() || field_paths.empty())
    throw InvalidInput("visualize needs both --forest and --field");

  const MCForest forest = load_forest(forest_path);
  if (forest.tree.size() != field_paths.size())
    throw InvalidInput("field count does not match trees in forest");
  const std::vector<Image> images = resolve_images(image_specs);
  if (!images.empty() && images.size() != field_paths.size())
    throw InvalidInput("image count does not match trees in forest");

  for (std::size_t i = 0; i < field_paths.size(); ++i) {
    const std::string tag = std::to_string(i);
    const MipField field = load_field(field_paths[i]);
    std::vector<BlockRect> rects;
    const MCNode& root = *forest.tree[i].root;
    for_each_node(root, [&](const MCNode& n) {
      if (n.is_leaf()) rects.push_back(n.rect);
    });
    // reconstruct() rejects partitions that do not tile the image exactly.
    const Image block_recon = reconstruct(field, rects, rule);
    save_png(block_recon, (dir / ("recon_block_" + tag + ".png")).string());
    save_png(reconstruct_pixels(field, rule),
             (dir / ("recon_pixel_" + tag + ".png")).string());
    const Image& base = images.empty() ? block_recon : images[i];
    save_png(draw_partition_overlay(base, rects),
             (dir / ("partition_" + tag + ".png")).string());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynamic-resolution block sampling for image fitting"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "fit a field to images");
  add_train_options(*train, train_args);
  train->add_option("--strategy", train_args.strategy,
                    "random, active, coarse, mcblock, or an mcblock-no-* "
                    "variant");

  TrainArgs bench_args;
  std::vector<std::string> bench_strategies = {"random", "active", "coarse",
                                               "mcblock"};
  double target_psnr = 30.0;
  CLI::App* bench =
      app.add_subcommand("bench", "compare sampling strategies");
  add_train_options(*bench, bench_args);
  bench->add_option("--strategies", bench_strategies,
                    "strategies to compare; the first is the speedup "
                    "reference")
      ->delimiter(',');
  bench->add_option("--target-psnr", target_psnr,
                    "psnr threshold for the iteration-count comparison");

  std::string viz_forest, viz_out = "out", viz_inclusion = "hard";
  std::vector<std::string> viz_fields, viz_counts, viz_images;
  CLI::App* viz =
      app.add_subcommand("visualize", "render artifacts from checkpoints");
  viz->add_option("--forest", viz_forest, "forest.json from a train run");
  viz->add_option("--field", viz_fields, "field_i.bin files, tree order");
  viz->add_option("--counts", viz_counts, "sample_counts_i.csv files");
  viz->add_option("--image", viz_images,
                  "overlay base images (defaults to the block render)");
  viz->add_option("--inclusion", viz_inclusion, "hard or smooth")
      ->check(CLI::IsMember({"hard", "smooth"}));
  viz->add_option("--out", viz_out, "output directory")
      ->envname("MCBLOCK_OUT");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(*train, train_args);
    if (bench->parsed())
      return cmd_bench(*bench, bench_args, bench_strategies, target_psnr);
    return cmd_visualize(viz_forest, viz_fields, viz_counts, viz_images,
                         viz_inclusion, viz_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
