#include "corrnet/io.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "corrnet/experiments.hpp"
#include "corrnet/rng.hpp"
#include "doctest.h"

using namespace corrnet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
  auto dir = fs::temp_directory_path() / (std::string("corrnet_test_") + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

#ifdef CORRNET_CLI_PATH
int run_cli(const std::string& args) {
  std::string cmd = std::string(CORRNET_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}
#endif

}  // namespace

TEST_CASE("blobs: round-trip and length checking") {
  auto dir = temp_dir("blobs");
  std::vector<double> data = {1.5, -2.25, 3.0e-12, 7.75};
  write_f64_blob(dir / "x.f64", data.data(), data.size());
  auto back = read_f64_blob(dir / "x.f64", 4);
  CHECK(back == data);
  CHECK_THROWS_AS(read_f64_blob(dir / "x.f64", 5), IoError);

  std::vector<std::int64_t> ints = {-1, 0, 1, 1234567890123};
  write_i64_blob(dir / "y.i64", ints.data(), ints.size());
  CHECK(read_i64_blob(dir / "y.i64", 4) == ints);
}

TEST_CASE("grids: save/load round-trips for manifold and group grids") {
  auto dir = temp_dir("grids");

  GridOptions opt;
  opt.radial_measure = RadialMeasure::ScaleInvariant;
  auto grid = build_grid(HomogeneousSpace::product_s2_rplus(), {4, 5}, opt);
  Json entry = save_grid(grid, dir, "g1");
  auto back = load_grid(dir, entry);
  REQUIRE(back.size() == grid.size());
  CHECK(back.space_kind == grid.space_kind);
  CHECK(back.options.radial_measure == RadialMeasure::ScaleInvariant);
  CHECK((back.weights - grid.weights).cwiseAbs().maxCoeff() == 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i)
    CHECK((back.points[i].coords - grid.points[i].coords).norm() == 0.0);

  auto so3s = haar_grid(GroupKind::SO3xScale, {3, 2, 2, 3});
  Json gentry = save_grid(so3s, dir, "g2");
  auto gback = load_grid(dir, gentry);
  REQUIRE(gback.size() == so3s.size());
  for (std::size_t i = 0; i < so3s.size(); ++i) {
    CHECK((gback.elements[i].rotation - so3s.elements[i].rotation).cwiseAbs().maxCoeff() ==
          0.0);
    CHECK(gback.elements[i].scale == so3s.elements[i].scale);
  }
}

TEST_CASE("datasets: p3 and volume round-trips preserve every bit") {
  auto dir = temp_dir("datasets");

  GridOptions gopt;
  gopt.seed = 3;
  auto grid = std::make_shared<QuadratureGrid>(build_grid(HomogeneousSpace::spd3(), {32}, gopt));
  P3DatasetSpec spec;
  spec.n_per_class = 8;
  spec.seed = 5;
  auto ds = make_p3_dataset(spec, grid);
  save_p3_dataset(ds, dir / "p3", Json{{"note", "test"}});
  auto back = load_p3_dataset(dir / "p3");
  CHECK((back.values - ds.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.labels == ds.labels);
  CHECK(dataset_kind(dir / "p3") == "p3");

  VolumeDatasetSpec vspec;
  vspec.n_per_class = 3;
  vspec.lattice = {4, 4, 4};
  vspec.sphere_order = 2;
  vspec.radial_order = 2;
  vspec.seed = 9;
  auto vds = make_synthetic_volumes(vspec);
  save_volume_dataset(vds, dir / "vol", Json::object());
  auto vback = load_volume_dataset(dir / "vol");
  CHECK((vback.values - vds.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK(vback.labels == vds.labels);
  CHECK(vback.roi_of_voxel == vds.roi_of_voxel);
  CHECK(vback.rois.size() == vds.rois.size());
  CHECK(dataset_kind(dir / "vol") == "volumes");

  CHECK_THROWS_AS(load_p3_dataset(dir / "vol"), UsageError);
}

TEST_CASE("checkpoints: restored state reproduces predictions exactly") {
  auto dir = temp_dir("ckpt");

  GridOptions gopt;
  gopt.seed = 3;
  auto grid = std::make_shared<QuadratureGrid>(build_grid(HomogeneousSpace::spd3(), {24}, gopt));
  P3DatasetSpec dspec;
  dspec.n_per_class = 10;
  dspec.seed = 7;
  auto ds = make_p3_dataset(dspec, grid);

  P3ExperimentParams params;
  params.group_points = 8;
  params.channels = {1, 3, 3};
  params.anchors_manifold = 4;
  params.anchors_group = 3;
  params.train.epochs = 3;
  params.train.batch_size = 5;

  auto net = build_p3_network(ds, params, 77);
  TrainConfig config = params.train;
  config.seed = 13;
  train_p3(*net, ds.values, ds.labels, nullptr, nullptr, config);
  net->calibrate_batch_norm(ds.values);
  Eigen::MatrixXd before = net->forward(ds.values, false);

  Json manifest = p3_params_to_json(params);
  manifest["net_seed"] = 77;
  save_checkpoint(dir, manifest, full_state(*net));

  auto fresh = build_p3_network(ds, params, 77);
  load_checkpoint(dir, full_state(*fresh));
  Eigen::MatrixXd after = fresh->forward(ds.values, false);
  CHECK((before - after).cwiseAbs().maxCoeff() == 0.0);

  // shape mismatch is refused
  P3ExperimentParams other = params;
  other.channels = {1, 4, 3};
  auto wrong = build_p3_network(ds, other, 77);
  CHECK_THROWS_AS(load_checkpoint(dir, full_state(*wrong)), IoError);
}

TEST_CASE("metrics tsv and config hashing are stable") {
  auto dir = temp_dir("metrics");
  std::vector<EpochMetrics> metrics(2);
  metrics[0] = {0, 0.1, 0.6931471805599453, 0.5, 0.5};
  metrics[1] = {1, 0.1, 0.25, 0.975, 0.95};
  write_metrics_tsv(dir / "m.tsv", metrics);
  write_metrics_tsv(dir / "m2.tsv", metrics);
  CHECK(slurp(dir / "m.tsv") == slurp(dir / "m2.tsv"));
  CHECK(slurp(dir / "m.tsv").find("0.97499999999999998") != std::string::npos);

  Json a = {{"b", 1}, {"a", 2}};
  Json b = {{"a", 2}, {"b", 1}};
  CHECK(config_hash(a) == config_hash(b));  // key order canonicalized
  Json c = {{"a", 2}, {"b", 2}};
  CHECK(config_hash(a) != config_hash(c));

  CHECK_THROWS_AS(reject_unknown_keys(Json{{"zzz", 1}}, {"a", "b"}, "top"), UsageError);
}

#ifdef CORRNET_CLI_PATH

TEST_CASE("cli: gen-data idempotence contract and config validation") {
  auto dir = temp_dir("cli");
  {
    std::ofstream cfg(dir / "gen.json");
    cfg << R"({"experiment":"gen-data","seed":3,
               "data":{"kind":"p3","n_per_class":4,"grid_points":16}})";
  }
  std::string base = "gen-data --config " + (dir / "gen.json").string() + " --out " +
                     (dir / "ds").string();
  CHECK(run_cli(base) == 0);
  CHECK(run_cli(base) == 2);             // refuses to overwrite
  CHECK(run_cli(base + " --force") == 0);

  {
    std::ofstream cfg(dir / "bad.json");
    cfg << R"({"experiment":"gen-data","data":{"kind":"p3","sigma":-1.0}})";
  }
  CHECK(run_cli("gen-data --config " + (dir / "bad.json").string() + " --out " +
                (dir / "ds2").string()) == 2);

  {
    std::ofstream cfg(dir / "unknown.json");
    cfg << R"({"experiment":"gen-data","data":{"kind":"p3"},"surprise":1})";
  }
  CHECK(run_cli("gen-data --config " + (dir / "unknown.json").string() + " --out " +
                (dir / "ds3").string()) == 2);

  // missing dataset -> I/O error
  {
    std::ofstream cfg(dir / "train.json");
    cfg << R"({"experiment":"p3-classify","data":{"path":"nowhere"},
               "train":{"epochs":1}})";
  }
  CHECK(run_cli("train --config " + (dir / "train.json").string() + " --out " +
                (dir / "run").string()) == 3);
}

TEST_CASE("cli: train determinism produces byte-identical metrics") {
  auto dir = temp_dir("cli_det");
  {
    std::ofstream cfg(dir / "gen.json");
    cfg << R"({"experiment":"gen-data","seed":4,
               "data":{"kind":"p3","n_per_class":10,"grid_points":24}})";
  }
  REQUIRE(run_cli("gen-data --config " + (dir / "gen.json").string() + " --out " +
                  (dir / "ds").string()) == 0);
  {
    std::ofstream cfg(dir / "train.json");
    cfg << R"({"experiment":"p3-classify","seed":5,"data":{"path":"../ds"},
               "network":{"kind":"p3","group_points":8,"channels":[1,3,3],
                          "anchors_manifold":4,"anchors_group":3},
               "train":{"epochs":2,"batch_size":5}})";
  }
  std::string cmd = "train --config " + (dir / "train.json").string();
  REQUIRE(run_cli(cmd + " --out " + (dir / "r1").string()) == 0);
  REQUIRE(run_cli(cmd + " --out " + (dir / "r2").string()) == 0);
  CHECK(slurp(dir / "r1" / "metrics.tsv") == slurp(dir / "r2" / "metrics.tsv"));
  CHECK(slurp(dir / "r1" / "checkpoint" / "state.f64") ==
        slurp(dir / "r2" / "checkpoint" / "state.f64"));
}

#endif  // CORRNET_CLI_PATH
