// corrnet - command-line front end: dataset generation, training, evaluation,
// verification, permutation testing, and the Fourier-dual transform.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <string>

#include "CLI11.hpp"

#include "corrnet/experiments.hpp"
#include "corrnet/rng.hpp"
#include "corrnet/verify.hpp"

namespace fs = std::filesystem;
using namespace corrnet;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool force = false;
  int folds = 0;
  bool break_equivariance = false;
};

Json load_config(const CommonArgs& args, const std::string& expected_command) {
  Json config = read_json(args.config_path);
  reject_unknown_keys(config,
                      {"experiment", "seed", "out", "data", "network", "train", "permtest",
                       "eap", "checkpoint"},
                      "config");
  if (!config.contains("experiment"))
    throw UsageError("config is missing the 'experiment' field");
  const auto kind = config["experiment"].get<std::string>();

  bool ok = false;
  if (expected_command == "gen-data") ok = (kind == "gen-data");
  if (expected_command == "train" || expected_command == "eval")
    ok = (kind == "p3-classify" || kind == "synthetic-dmri-classify");
  if (expected_command == "verify") ok = (kind == "verify");
  if (expected_command == "permtest") ok = (kind == "permtest");
  if (expected_command == "eap") ok = (kind == "eap");
  if (!ok)
    throw UsageError("config experiment '" + kind + "' does not fit the '" +
                     expected_command + "' subcommand");
  return config;
}

std::uint64_t effective_seed(const CommonArgs& args, const Json& config) {
  if (args.seed_given) return args.seed;
  return config.value("seed", std::uint64_t(0));
}

fs::path out_root(const CommonArgs& args, const Json& config) {
  std::string out = args.out_dir;
  if (out.empty()) out = config.value("out", std::string("."));
  fs::create_directories(out);
  return out;
}

fs::path resolve(const fs::path& root, const std::string& path) {
  fs::path p(path);
  return p.is_absolute() ? p : root / p;
}

double now_unix() {
  return std::chrono::duration<double>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void write_run_manifest(const fs::path& root, const std::string& command,
                        const Json& config, const Json& final_metrics,
                        const std::vector<std::string>& outputs, double started) {
  Json manifest;
  manifest["artifact_version"] = "0.1.0";
  manifest["command"] = command;
  manifest["config"] = config;
  manifest["config_hash"] = config_hash(config);
  manifest["outputs"] = outputs;
  manifest["final_metrics"] = final_metrics;
  manifest["started_unix"] = started;
  manifest["finished_unix"] = now_unix();
  write_json_atomic(root / "run_manifest.json", manifest);
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const CommonArgs& args) {
  const double started = now_unix();
  Json config = load_config(args, "gen-data");
  const auto seed = effective_seed(args, config);
  fs::path root = out_root(args, config);

  if (fs::exists(root / "manifest.json") && !args.force)
    throw UsageError("dataset already exists at " + root.string() +
                     " (use --force to overwrite)");

  if (!config.contains("data")) throw UsageError("gen-data config needs a 'data' section");
  Json data = config["data"];
  const auto kind = data.value("kind", std::string());
  Json meta;
  meta["config"] = config;
  meta["config_hash"] = config_hash(config);
  meta["seed"] = seed;

  Json final_metrics;
  if (kind == "p3") {
    reject_unknown_keys(data,
                        {"kind", "n_per_class", "perturbation", "sigma", "grid_points",
                         "grid_sigma", "grid_seed", "m2_log_eigenvalues"},
                        "data");
    P3DatasetSpec spec;
    spec.n_per_class = data.value("n_per_class", 500);
    spec.perturbation = data.value("perturbation", 0.2);
    spec.sigma = data.value("sigma", 1.0);
    if (spec.sigma <= 0.0) throw UsageError("data.sigma must be positive");
    if (spec.perturbation < 0.0) throw UsageError("data.perturbation must be nonnegative");
    if (data.contains("m2_log_eigenvalues")) {
      auto eig = data["m2_log_eigenvalues"].get<std::vector<double>>();
      if (eig.size() != 3) throw UsageError("data.m2_log_eigenvalues needs 3 entries");
      spec.m2 = Eigen::Vector3d(std::exp(eig[0]), std::exp(eig[1]), std::exp(eig[2]))
                    .asDiagonal();
    }
    spec.seed = seed_for("p3-data", seed);

    GridOptions gopt;
    gopt.seed = data.value("grid_seed", std::uint64_t(101));
    gopt.spd_sigma = data.value("grid_sigma", 1.2);
    auto grid = std::make_shared<QuadratureGrid>(
        build_grid(HomogeneousSpace::spd3(), {data.value("grid_points", 128)}, gopt));
    auto ds = make_p3_dataset(spec, grid);
    save_p3_dataset(ds, root, meta);
    final_metrics["n_samples"] = ds.labels.size();
  } else if (kind == "volumes") {
    reject_unknown_keys(data,
                        {"kind", "n_per_class", "lattice", "sphere_order", "radial_order",
                         "radial_measure", "noise", "variant_angle", "variant_shift",
                         "variant_gain"},
                        "data");
    VolumeDatasetSpec spec;
    spec.n_per_class = data.value("n_per_class", 50);
    if (data.contains("lattice")) {
      auto lat = data["lattice"].get<std::vector<int>>();
      if (lat.size() != 3) throw UsageError("data.lattice needs 3 entries");
      spec.lattice = {lat[0], lat[1], lat[2]};
    }
    spec.sphere_order = data.value("sphere_order", 4);
    spec.radial_order = data.value("radial_order", 3);
    if (data.contains("radial_measure"))
      spec.radial_measure =
          radial_measure_from_string(data["radial_measure"].get<std::string>());
    spec.noise = data.value("noise", 0.0);
    if (spec.noise < 0.0) throw UsageError("data.noise must be nonnegative");
    spec.variant_angle = data.value("variant_angle", 1.2);
    spec.variant_shift = data.value("variant_shift", 0.25);
    spec.variant_gain = data.value("variant_gain", 1.25);
    spec.seed = seed_for("volume-data", seed);
    auto ds = make_synthetic_volumes(spec);
    save_volume_dataset(ds, root, meta);
    final_metrics["n_samples"] = ds.labels.size();
  } else {
    throw UsageError("data.kind must be 'p3' or 'volumes'");
  }

  write_run_manifest(root, "gen-data", config, final_metrics, {"manifest.json"}, started);
  std::printf("dataset written to %s\n", root.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_train(const CommonArgs& args) {
  const double started = now_unix();
  Json config = load_config(args, "train");
  const auto seed = effective_seed(args, config);
  fs::path root = out_root(args, config);
  const auto kind = config["experiment"].get<std::string>();

  if (!config.contains("data") || !config["data"].contains("path"))
    throw UsageError("train config needs data.path");
  reject_unknown_keys(config["data"], {"path"}, "data");
  fs::path data_dir = resolve(root, config["data"]["path"].get<std::string>());
  if (!fs::exists(data_dir / "manifest.json"))
    throw IoError("no dataset at " + data_dir.string());

  Json network = config.value("network", Json());
  Json train = config.value("train", Json());
  Json final_metrics;
  std::vector<std::string> outputs;

  if (kind == "p3-classify") {
    if (dataset_kind(data_dir) != "p3")
      throw UsageError("p3-classify expects a p3 dataset");
    auto ds = load_p3_dataset(data_dir);
    auto params = p3_params_from_json(network, train);
    params.train.seed = seed;

    if (args.folds >= 2) {
      auto cv = p3_cross_validate(ds, params, args.folds, seed);
      Json folds = Json::array();
      for (const auto& f : cv.folds)
        folds.push_back(
            {{"fold", f.fold}, {"train_acc", f.train_acc}, {"test_acc", f.test_acc}});
      final_metrics = {{"folds", folds},
                       {"mean_train_acc", cv.mean_train},
                       {"sd_train_acc", cv.sd_train},
                       {"mean_test_acc", cv.mean_test},
                       {"sd_test_acc", cv.sd_test}};
      write_json_atomic(root / "cv_summary.json", final_metrics);
      outputs.push_back("cv_summary.json");
      for (std::size_t f = 0; f < cv.fold_metrics.size(); ++f) {
        auto name = "metrics_fold" + std::to_string(f) + ".tsv";
        write_metrics_tsv(root / name, cv.fold_metrics[f]);
        outputs.push_back(name);
      }
      std::printf("%d-fold CV: mean train %.4f +- %.4f, mean test %.4f +- %.4f\n",
                  args.folds, cv.mean_train, cv.sd_train, cv.mean_test, cv.sd_test);
    } else {
      auto out = p3_train_single(ds, params, 0.2, seed);
      write_metrics_tsv(root / "metrics.tsv", out.metrics);
      outputs.push_back("metrics.tsv");

      Json ckpt = p3_params_to_json(params);
      ckpt["network_kind"] = "p3";
      ckpt["net_seed"] = seed_for("single-net", seed);
      ckpt["dataset_hash"] = config_hash(read_json(data_dir / "manifest.json"));
      ckpt["epochs_run"] = out.metrics.size();
      save_checkpoint(root / "checkpoint", ckpt, full_state(*out.net));
      outputs.push_back("checkpoint/manifest.json");

      final_metrics = {{"train_acc", out.train_acc}, {"test_acc", out.test_acc}};
      std::printf("train acc %.4f, test acc %.4f\n", out.train_acc, out.test_acc);
    }
  } else {
    if (dataset_kind(data_dir) != "volumes")
      throw UsageError("synthetic-dmri-classify expects a volumes dataset");
    auto ds = load_volume_dataset(data_dir);
    auto params = volume_params_from_json(network, train);
    params.train.seed = seed;

    if (args.folds >= 2) throw UsageError("cross-validation is only wired for p3-classify");

    // deterministic holdout split
    const std::size_t n = ds.labels.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng("volume-split", seed);
    rng.shuffle(order.begin(), order.end());
    const auto n_test = std::max<std::size_t>(1, n / 5);

    auto subset = [&](std::size_t lo, std::size_t hi) {
      VolumeDataset part;
      part.grid = ds.grid;
      part.lattice = ds.lattice;
      part.rois = ds.rois;
      part.roi_of_voxel = ds.roi_of_voxel;
      part.values.resize(ds.values.rows(), static_cast<Eigen::Index>(hi - lo));
      for (std::size_t i = lo; i < hi; ++i) {
        part.values.col(static_cast<Eigen::Index>(i - lo)) =
            ds.values.col(static_cast<Eigen::Index>(order[i]));
        part.labels.push_back(ds.labels[order[i]]);
      }
      return part;
    };
    auto test_ds = subset(0, n_test);
    auto train_ds = subset(n_test, n);

    auto out = volume_train(train_ds, &test_ds, params, seed);
    write_metrics_tsv(root / "metrics.tsv", out.metrics);
    outputs.push_back("metrics.tsv");

    Json ckpt = volume_params_to_json(params);
    ckpt["network_kind"] = "volume";
    ckpt["net_seed"] = seed_for("volume-net", seed);
    ckpt["dataset_hash"] = config_hash(read_json(data_dir / "manifest.json"));
    ckpt["epochs_run"] = out.metrics.size();
    save_checkpoint(root / "checkpoint", ckpt, full_state(*out.net));
    outputs.push_back("checkpoint/manifest.json");

    final_metrics = {{"train_acc", out.train_acc}, {"test_acc", out.test_acc}};
    std::printf("train acc %.4f, test acc %.4f\n", out.train_acc, out.test_acc);
  }

  write_run_manifest(root, "train", config, final_metrics, outputs, started);
  return 0;
}

// ---------------------------------------------------------------------------

std::unique_ptr<P3Network> restore_p3(const fs::path& ckpt_dir, const P3Dataset& ds) {
  Json manifest = read_json(ckpt_dir / "manifest.json");
  auto params = p3_params_from_json(manifest.at("network"), manifest.at("train"));
  auto net = build_p3_network(ds, params, manifest.at("net_seed").get<std::uint64_t>());
  load_checkpoint(ckpt_dir, full_state(*net));
  return net;
}

std::unique_ptr<VolumeNetwork> restore_volume(const fs::path& ckpt_dir,
                                              const VolumeDataset& ds) {
  Json manifest = read_json(ckpt_dir / "manifest.json");
  auto params = volume_params_from_json(manifest.at("network"), manifest.at("train"));
  auto net = build_volume_network(ds, params, manifest.at("net_seed").get<std::uint64_t>());
  load_checkpoint(ckpt_dir, full_state(*net));
  return net;
}

int cmd_eval(const CommonArgs& args) {
  const double started = now_unix();
  Json config = load_config(args, "eval");
  fs::path root = out_root(args, config);
  const auto kind = config["experiment"].get<std::string>();

  if (!config.contains("data") || !config["data"].contains("path"))
    throw UsageError("eval config needs data.path");
  if (!config.contains("checkpoint")) throw UsageError("eval config needs a checkpoint path");
  fs::path data_dir = resolve(root, config["data"]["path"].get<std::string>());
  fs::path ckpt_dir = resolve(root, config["checkpoint"].get<std::string>());
  if (!fs::exists(ckpt_dir / "manifest.json"))
    throw IoError("no checkpoint at " + ckpt_dir.string());

  double acc = 0.0;
  if (kind == "p3-classify") {
    auto ds = load_p3_dataset(data_dir);
    auto net = restore_p3(ckpt_dir, ds);
    acc = evaluate_p3(*net, ds.values, ds.labels);
  } else {
    auto ds = load_volume_dataset(data_dir);
    auto net = restore_volume(ckpt_dir, ds);
    std::vector<Eigen::MatrixXd> roi_x;
    for (std::size_t r = 0; r < ds.rois.size(); ++r) roi_x.push_back(ds.roi_block(r));
    acc = evaluate_volume(*net, roi_x, ds.labels);
  }

  Json final_metrics = {{"accuracy", acc}};
  write_json_atomic(root / "eval.json", final_metrics);
  write_run_manifest(root, "eval", config, final_metrics, {"eval.json"}, started);
  std::printf("accuracy %.4f\n", acc);
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_verify(const CommonArgs& args) {
  const double started = now_unix();
  Json config = load_config(args, "verify");
  fs::path root = out_root(args, config);

  VerifyOptions options;
  options.seed = effective_seed(args, config);
  if (options.seed == 0) options.seed = 7;
  options.break_equivariance = args.break_equivariance;

  auto results = run_verification(options);
  std::string report = verification_report(results);
  std::fputs(report.c_str(), stdout);
  write_text_atomic(root / "verify_report.txt", report);

  Json final_metrics;
  final_metrics["n_checks"] = results.size();
  final_metrics["all_passed"] = all_passed(results);
  write_run_manifest(root, "verify", config, final_metrics, {"verify_report.txt"}, started);
  return all_passed(results) ? 0 : 1;
}

// ---------------------------------------------------------------------------

int cmd_permtest(const CommonArgs& args) {
  const double started = now_unix();
  Json config = load_config(args, "permtest");
  const auto seed = effective_seed(args, config);
  fs::path root = out_root(args, config);

  if (!config.contains("data") || !config["data"].contains("path"))
    throw UsageError("permtest config needs data.path");
  if (!config.contains("checkpoint"))
    throw UsageError("permtest config needs a checkpoint path");
  fs::path data_dir = resolve(root, config["data"]["path"].get<std::string>());
  fs::path ckpt_dir = resolve(root, config["checkpoint"].get<std::string>());
  if (!fs::exists(ckpt_dir / "manifest.json"))
    throw IoError("no checkpoint at " + ckpt_dir.string());

  int n_perm = 50000;
  if (config.contains("permtest")) {
    reject_unknown_keys(config["permtest"], {"n_perm"}, "permtest");
    n_perm = config["permtest"].value("n_perm", n_perm);
  }

  auto ds = load_volume_dataset(data_dir);
  auto net = restore_volume(ckpt_dir, ds);
  auto rows = volume_permutation_tests(*net, ds, n_perm, seed);
  std::string table = permtest_table_tsv(rows);
  std::fputs(table.c_str(), stdout);
  write_text_atomic(root / "permtest.tsv", table);

  Json final_metrics;
  final_metrics["n_tests"] = rows.size();
  final_metrics["n_perm"] = n_perm;
  write_run_manifest(root, "permtest", config, final_metrics, {"permtest.tsv"}, started);
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_eap(const CommonArgs& args) {
  const double started = now_unix();
  Json config = load_config(args, "eap");
  fs::path root = out_root(args, config);

  if (!config.contains("data") || !config["data"].contains("path"))
    throw UsageError("eap config needs data.path");
  fs::path data_dir = resolve(root, config["data"]["path"].get<std::string>());
  if (!fs::exists(data_dir / "manifest.json"))
    throw IoError("no dataset at " + data_dir.string());

  int sphere_order = 4, radial_order = 3;
  RadialMeasure measure = RadialMeasure::ScaleInvariant;
  if (config.contains("eap")) {
    reject_unknown_keys(config["eap"], {"sphere_order", "radial_order", "radial_measure"},
                        "eap");
    sphere_order = config["eap"].value("sphere_order", sphere_order);
    radial_order = config["eap"].value("radial_order", radial_order);
    if (config["eap"].contains("radial_measure"))
      measure = radial_measure_from_string(config["eap"]["radial_measure"].get<std::string>());
  }

  auto ds = load_volume_dataset(data_dir);
  GridOptions gopt;
  gopt.radial_measure = measure;
  auto r_grid = std::make_shared<QuadratureGrid>(
      build_grid(HomogeneousSpace::product_s2_rplus(), {sphere_order, radial_order}, gopt));

  VolumeDataset out = ds;
  const auto nq = static_cast<Eigen::Index>(ds.grid->size());
  const auto nr = static_cast<Eigen::Index>(r_grid->size());
  out.grid = r_grid;
  out.values.resize(static_cast<Eigen::Index>(ds.n_voxels()) * nr, ds.values.cols());
  for (Eigen::Index s = 0; s < ds.values.cols(); ++s) {
    for (int v = 0; v < ds.n_voxels(); ++v) {
      SampledFunction f;
      f.grid = ds.grid;
      f.values = ds.values.col(s).segment(v * nq, nq).transpose();
      out.values.col(s).segment(v * nr, nr) = eap_transform(f, r_grid).values.transpose();
    }
  }

  Json meta;
  meta["mode"] = "EAP";
  meta["source_dataset_hash"] = config_hash(read_json(data_dir / "manifest.json"));
  meta["config"] = config;
  fs::path out_dir = root / "eap_dataset";
  if (fs::exists(out_dir / "manifest.json") && !args.force)
    throw UsageError("dataset already exists at " + out_dir.string() +
                     " (use --force to overwrite)");
  save_volume_dataset(out, out_dir, meta);

  Json final_metrics = {{"n_samples", out.labels.size()}};
  write_run_manifest(root, "eap", config, final_metrics, {"eap_dataset/manifest.json"},
                     started);
  std::printf("EAP dataset written to %s\n", out_dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"correlation networks on Riemannian homogeneous spaces"};
  app.require_subcommand(1);

  CommonArgs args;
  auto add_common = [&](CLI::App* cmd, bool with_force, bool with_folds, bool with_break) {
    cmd->add_option("--config", args.config_path, "configuration file (JSON)")->required();
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "seed override")->each([&](const std::string&) {
      args.seed_given = true;
    });
    if (with_force) cmd->add_flag("--force", args.force, "overwrite existing outputs");
    if (with_folds) cmd->add_option("--folds", args.folds, "k-fold cross-validation");
    if (with_break)
      cmd->add_flag("--break-equivariance", args.break_equivariance,
                    "negative control: interpolate translated masks");
  };

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common(gen, true, false, false);
  auto* train = app.add_subcommand("train", "train a classifier");
  add_common(train, true, true, false);
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  add_common(eval, false, false, false);
  auto* verify = app.add_subcommand("verify", "run the numerical invariant suite");
  add_common(verify, false, false, true);
  auto* permtest = app.add_subcommand("permtest", "per-ROI permutation tests");
  add_common(permtest, false, false, false);
  auto* eap = app.add_subcommand("eap", "Fourier-dual transform of a signal dataset");
  add_common(eap, true, false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(args);
    if (train->parsed()) return cmd_train(args);
    if (eval->parsed()) return cmd_eval(args);
    if (verify->parsed()) return cmd_verify(args);
    if (permtest->parsed()) return cmd_permtest(args);
    if (eap->parsed()) return cmd_eap(args);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "check failure: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
  return 2;
}
