// Command-line front end: run, cluster, gradcheck, ingest-movielens.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "siita/gradcheck.hpp"
#include "siita/siita.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> overrides;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
  cmd->add_option("--config", flags.config_path, "flat key = value config file");
  for (const auto& key : siita::RunConfig::keys())
    cmd->add_option_function<std::string>("--" + key, [&flags, key](const std::string& v) { flags.overrides[key] = v; },
                                          "overrides config key '" + key + "'");
}

siita::RunConfig resolve(const ConfigFlags& flags) {
  siita::RunConfig cfg;
  if (!flags.config_path.empty()) cfg = siita::load_config(flags.config_path);
  for (const auto& key : siita::RunConfig::keys())
    if (auto it = flags.overrides.find(key); it != flags.overrides.end()) cfg.set(key, it->second);
  return cfg;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const siita::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const siita::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const siita::ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return kData;
  } catch (const siita::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kData;
  }
}

std::vector<siita::Index> parse_dims(const std::string& key, const std::string& s) {
  return siita::detail::parse_list<siita::Index>(key, s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inductive Tucker completion for multi-aspect streaming tensors"};
  app.set_version_flag("--version", siita::kVersion);
  app.require_subcommand(1);

  ConfigFlags run_flags, cluster_flags;
  auto* run = app.add_subcommand("run", "train over a growth plan and report test RMSE");
  add_config_flags(run, run_flags);

  auto* cluster = app.add_subcommand("cluster", "nonnegative factorization with per-step cluster purity");
  add_config_flags(cluster, cluster_flags);

  std::string gc_dims = "4,3,3", gc_ranks = "2,2,2", gc_features;
  std::uint64_t gc_seed = 1;
  double gc_density = 1.0;
  bool gc_corrupt = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "verify gradients against finite differences and a dense oracle");
  gradcheck->add_option("--dims", gc_dims, "tensor dims, comma separated");
  gradcheck->add_option("--ranks", gc_ranks, "Tucker ranks, comma separated");
  gradcheck->add_option("--features", gc_features, "side-info column counts (default: dims)");
  gradcheck->add_option("--seed", gc_seed);
  gradcheck->add_option("--density", gc_density, "fraction of observed entries");
  gradcheck->add_flag("--corrupt", gc_corrupt, "perturb the kernel gradient (negative control)");

  std::string ml_ratings, ml_items, ml_out = "movielens";
  std::int64_t ml_offset = 0;
  auto* ingest = app.add_subcommand("ingest-movielens", "convert MovieLens 100K u.data/u.item into tensor and side files");
  ingest->add_option("--ratings", ml_ratings, "u.data path")->required();
  ingest->add_option("--items", ml_items, "u.item path (genre side information)");
  ingest->add_option("--out", ml_out, "output directory");
  ingest->add_option("--week-offset", ml_offset, "seconds added before week binning");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (*run) return guarded([&] {
    siita::cmd_run(resolve(run_flags), std::cout);
    return kOk;
  });

  if (*cluster) return guarded([&] {
    siita::cmd_cluster(resolve(cluster_flags), std::cout);
    return kOk;
  });

  if (*gradcheck) return guarded([&] {
    const auto dims = parse_dims("dims", gc_dims);
    const auto ranks = parse_dims("ranks", gc_ranks);
    auto features = gc_features.empty() ? dims : parse_dims("features", gc_features);
    if (dims.size() < 2 || ranks.size() != dims.size() || features.size() != dims.size())
      throw siita::ConfigError("dims, ranks and features must have the same length (>= 2)");
    for (auto r : ranks)
      if (r == 0) throw siita::ConfigError("ranks: every rank must be >= 1");
    for (std::size_t k = 0; k < dims.size(); ++k)
      if (features[k] == 0 || features[k] > dims[k]) throw siita::ConfigError("features: must lie in [1, dims]");
    const auto rep = siita::gradcheck(dims, ranks, features, gc_seed, gc_density, {}, gc_corrupt);
    std::printf("max relative error vs finite differences: %.3e (threshold %.0e)\n", rep.max_rel_error_fd,
                siita::kFiniteDifferenceTolerance);
    std::printf("max absolute error vs Kronecker oracle:   %.3e (threshold %.0e)\n", rep.max_abs_error_kron,
                siita::kKroneckerTolerance);
    std::printf("%s\n", rep.passed() ? "PASS" : "FAIL");
    return rep.passed() ? kOk : kNumerical;
  });

  if (*ingest) return guarded([&] {
    const auto ml = siita::movielens_ingest(ml_ratings, ml_offset);
    const std::filesystem::path dir(ml_out);
    std::filesystem::create_directories(dir);
    const auto& shape = ml.dataset.tensor.shape();
    siita::save_tensor(ml.dataset.tensor, (dir / "ratings.tns").string());
    std::string item_side = "identity:" + std::to_string(shape[1]);
    if (!ml_items.empty()) {
      const auto genres = siita::movielens_genres(ml_items, ml.item_ids);
      siita::save_side_info_mm(genres.side, (dir / "genre.mtx").string());
      std::ofstream labels(dir / "labels.csv");
      for (std::size_t i = 0; i < genres.labels.size(); ++i)
        for (int g : genres.labels[i]) labels << i << ',' << g << '\n';
      item_side = (dir / "genre.mtx").string();
      std::cout << "genre matrix: " << genres.side.rows() << " x " << genres.side.cols() << "\n";
    }
    std::ofstream conf(dir / "movielens.conf");
    conf << "tensor = " << (dir / "ratings.tns").string() << "\n"
         << "dims = " << shape[0] << ',' << shape[1] << ',' << shape[2] << "\n"
         << "side = identity:" << shape[0] << ',' << item_side << ",identity:" << shape[2] << "\n"
         << "start = 19,34,2\nstep = 19,34,1\nranks = 3,3,3\nmissing_pct = 0.2\n";
    std::cout << "tensor: " << shape.str() << ", " << ml.dataset.tensor.nnz() << " ratings\n";
    return kOk;
  });
  return kUsage;
}
