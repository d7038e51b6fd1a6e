#include "corrnet/experiments.hpp"

#include <cmath>
#include <numeric>

#include "corrnet/rng.hpp"
#include "corrnet/stats.hpp"

namespace corrnet {

namespace {

struct SplitStats {
  double mean = 0.0, sd = 0.0;
};

SplitStats mean_sd(const std::vector<double>& xs) {
  SplitStats s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  for (double x : xs) s.sd += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(s.sd / static_cast<double>(xs.size()));
  return s;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed,
                                          const char* label) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t(0));
  Rng rng(label, seed);
  rng.shuffle(idx.begin(), idx.end());
  return idx;
}

}  // namespace

// ---------------------------------------------------------------------------
// P3 experiment
// ---------------------------------------------------------------------------

Json p3_params_to_json(const P3ExperimentParams& p) {
  Json network = {{"kind", "p3"},
                  {"grid_points", p.grid_points},
                  {"grid_sigma", p.grid_sigma},
                  {"grid_seed", p.grid_seed},
                  {"group_points", p.group_points},
                  {"gl_epsilon", p.gl_epsilon},
                  {"group_seed", p.group_seed},
                  {"channels", p.channels},
                  {"anchors_manifold", p.anchors_manifold},
                  {"anchors_group", p.anchors_group},
                  {"tau_manifold", p.tau_manifold},
                  {"tau_group", p.tau_group},
                  {"h_relu_mode", to_string(p.relu_mode)}};
  Json train = {{"learning_rate", p.train.learning_rate},
                {"decay_factor", p.train.decay_factor},
                {"decay_every", p.train.decay_every},
                {"epochs", p.train.epochs},
                {"batch_size", p.train.batch_size}};
  return {{"network", network}, {"train", train}};
}

namespace {

TrainConfig train_from_json(const Json& train) {
  TrainConfig c;
  if (train.is_null()) return c;
  reject_unknown_keys(
      train, {"learning_rate", "decay_factor", "decay_every", "epochs", "batch_size"},
      "train");
  c.learning_rate = train.value("learning_rate", c.learning_rate);
  c.decay_factor = train.value("decay_factor", c.decay_factor);
  c.decay_every = train.value("decay_every", c.decay_every);
  c.epochs = train.value("epochs", c.epochs);
  c.batch_size = train.value("batch_size", c.batch_size);
  return c;
}

}  // namespace

P3ExperimentParams p3_params_from_json(const Json& network, const Json& train) {
  P3ExperimentParams p;
  if (!network.is_null()) {
    reject_unknown_keys(network,
                        {"kind", "grid_points", "grid_sigma", "grid_seed", "group_points",
                         "gl_epsilon", "group_seed", "channels", "anchors_manifold",
                         "anchors_group", "tau_manifold", "tau_group", "h_relu_mode"},
                        "network");
    p.grid_points = network.value("grid_points", p.grid_points);
    p.grid_sigma = network.value("grid_sigma", p.grid_sigma);
    p.grid_seed = network.value("grid_seed", p.grid_seed);
    p.group_points = network.value("group_points", p.group_points);
    p.gl_epsilon = network.value("gl_epsilon", p.gl_epsilon);
    p.group_seed = network.value("group_seed", p.group_seed);
    p.channels = network.value("channels", p.channels);
    p.anchors_manifold = network.value("anchors_manifold", p.anchors_manifold);
    p.anchors_group = network.value("anchors_group", p.anchors_group);
    p.tau_manifold = network.value("tau_manifold", p.tau_manifold);
    p.tau_group = network.value("tau_group", p.tau_group);
    if (network.contains("h_relu_mode"))
      p.relu_mode = h_relu_mode_from_string(network["h_relu_mode"].get<std::string>());
  }
  p.train = train_from_json(train);
  const int epochs_default = P3ExperimentParams().train.epochs;
  if (train.is_null() || !train.contains("epochs")) p.train.epochs = epochs_default;
  const int batch_default = P3ExperimentParams().train.batch_size;
  if (train.is_null() || !train.contains("batch_size")) p.train.batch_size = batch_default;
  return p;
}

std::unique_ptr<P3Network> build_p3_network(const P3Dataset& ds,
                                            const P3ExperimentParams& params,
                                            std::uint64_t net_seed) {
  P3NetSpec spec;
  spec.signal_grid = ds.grid;
  GridOptions gopt;
  gopt.seed = params.group_seed;
  gopt.gl_epsilon = params.gl_epsilon;
  spec.group_grid =
      std::make_shared<QuadratureGrid>(haar_grid(GroupKind::GL3, {params.group_points}, gopt));
  spec.channels = params.channels;
  spec.anchors_manifold = params.anchors_manifold;
  spec.anchors_group = params.anchors_group;
  spec.tau_manifold = params.tau_manifold;
  spec.tau_group = params.tau_group;
  spec.relu_mode = params.relu_mode;
  spec.seed = net_seed;
  return std::make_unique<P3Network>(spec);
}

namespace {

void gather_p3(const P3Dataset& ds, const std::vector<std::size_t>& idx, Eigen::MatrixXd& x,
               std::vector<int>& y) {
  x.resize(ds.values.rows(), static_cast<Eigen::Index>(idx.size()));
  y.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    x.col(static_cast<Eigen::Index>(i)) = ds.values.col(static_cast<Eigen::Index>(idx[i]));
    y[i] = ds.labels[idx[i]];
  }
}

}  // namespace

CvResult p3_cross_validate(const P3Dataset& ds, const P3ExperimentParams& params, int folds,
                           std::uint64_t seed) {
  if (folds < 2) throw InvalidArgument("p3_cross_validate: need at least 2 folds");
  const std::size_t n = ds.labels.size();
  auto order = shuffled_indices(n, seed, "cv-folds");

  CvResult result;
  std::vector<double> train_accs, test_accs;
  for (int fold = 0; fold < folds; ++fold) {
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < n; ++i)
      (static_cast<int>(i % static_cast<std::size_t>(folds)) == fold ? test_idx : train_idx)
          .push_back(order[i]);

    Eigen::MatrixXd x_train, x_test;
    std::vector<int> y_train, y_test;
    gather_p3(ds, train_idx, x_train, y_train);
    gather_p3(ds, test_idx, x_test, y_test);

    auto net = build_p3_network(ds, params, seed_for("fold-net", seed + fold));
    TrainConfig config = params.train;
    config.seed = seed_for("fold-train", seed + fold);
    auto metrics = train_p3(*net, x_train, y_train, nullptr, nullptr, config);
    net->calibrate_batch_norm(x_train);

    FoldResult fr;
    fr.fold = fold;
    fr.train_acc = evaluate_p3(*net, x_train, y_train);
    fr.test_acc = evaluate_p3(*net, x_test, y_test);
    result.folds.push_back(fr);
    result.fold_metrics.push_back(std::move(metrics));
    train_accs.push_back(fr.train_acc);
    test_accs.push_back(fr.test_acc);
  }
  auto ts = mean_sd(train_accs);
  auto vs = mean_sd(test_accs);
  result.mean_train = ts.mean;
  result.sd_train = ts.sd;
  result.mean_test = vs.mean;
  result.sd_test = vs.sd;
  return result;
}

P3TrainOutput p3_train_single(const P3Dataset& ds, const P3ExperimentParams& params,
                              double holdout_fraction, std::uint64_t seed) {
  const std::size_t n = ds.labels.size();
  auto order = shuffled_indices(n, seed, "single-split");
  auto n_test = static_cast<std::size_t>(std::max(1.0, holdout_fraction * n));
  if (n_test >= n) throw InvalidArgument("p3_train_single: holdout leaves no training data");

  std::vector<std::size_t> test_idx(order.begin(), order.begin() + n_test);
  std::vector<std::size_t> train_idx(order.begin() + n_test, order.end());

  Eigen::MatrixXd x_train, x_test;
  std::vector<int> y_train, y_test;
  gather_p3(ds, train_idx, x_train, y_train);
  gather_p3(ds, test_idx, x_test, y_test);

  P3TrainOutput out;
  out.net = build_p3_network(ds, params, seed_for("single-net", seed));
  TrainConfig config = params.train;
  config.seed = seed_for("single-train", seed);
  out.metrics = train_p3(*out.net, x_train, y_train, &x_test, &y_test, config);
  out.net->calibrate_batch_norm(x_train);
  out.train_acc = evaluate_p3(*out.net, x_train, y_train);
  out.test_acc = evaluate_p3(*out.net, x_test, y_test);
  return out;
}

// ---------------------------------------------------------------------------
// Volume experiment
// ---------------------------------------------------------------------------

Json volume_params_to_json(const VolumeExperimentParams& p) {
  Json network = {{"kind", "volume"},
                  {"so3_resolution", p.so3_resolution},
                  {"scale_nodes", p.scale_nodes},
                  {"scale_log_half_range", p.scale_log_half_range},
                  {"intra_channels", p.intra_channels},
                  {"conv_channels", p.conv_channels},
                  {"anchors_manifold", p.anchors_manifold},
                  {"anchors_group", p.anchors_group},
                  {"tau_manifold", p.tau_manifold},
                  {"tau_group", p.tau_group},
                  {"h_relu_mode", to_string(p.relu_mode)},
                  {"intra_only", p.intra_only}};
  Json train = {{"learning_rate", p.train.learning_rate},
                {"decay_factor", p.train.decay_factor},
                {"decay_every", p.train.decay_every},
                {"epochs", p.train.epochs},
                {"batch_size", p.train.batch_size}};
  return {{"network", network}, {"train", train}};
}

VolumeExperimentParams volume_params_from_json(const Json& network, const Json& train) {
  VolumeExperimentParams p;
  if (!network.is_null()) {
    reject_unknown_keys(network,
                        {"kind", "so3_resolution", "scale_nodes", "scale_log_half_range",
                         "intra_channels", "conv_channels", "anchors_manifold",
                         "anchors_group", "tau_manifold", "tau_group", "h_relu_mode",
                         "intra_only"},
                        "network");
    p.so3_resolution = network.value("so3_resolution", p.so3_resolution);
    p.scale_nodes = network.value("scale_nodes", p.scale_nodes);
    p.scale_log_half_range = network.value("scale_log_half_range", p.scale_log_half_range);
    p.intra_channels = network.value("intra_channels", p.intra_channels);
    p.conv_channels = network.value("conv_channels", p.conv_channels);
    p.anchors_manifold = network.value("anchors_manifold", p.anchors_manifold);
    p.anchors_group = network.value("anchors_group", p.anchors_group);
    p.tau_manifold = network.value("tau_manifold", p.tau_manifold);
    p.tau_group = network.value("tau_group", p.tau_group);
    if (network.contains("h_relu_mode"))
      p.relu_mode = h_relu_mode_from_string(network["h_relu_mode"].get<std::string>());
    p.intra_only = network.value("intra_only", p.intra_only);
  }
  p.train = train_from_json(train);
  if (train.is_null() || !train.contains("epochs"))
    p.train.epochs = VolumeExperimentParams().train.epochs;
  if (train.is_null() || !train.contains("batch_size"))
    p.train.batch_size = VolumeExperimentParams().train.batch_size;
  return p;
}

std::unique_ptr<VolumeNetwork> build_volume_network(const VolumeDataset& ds,
                                                    const VolumeExperimentParams& params,
                                                    std::uint64_t net_seed) {
  VolumeNetSpec spec;
  spec.lattice = ds.lattice;
  spec.rois = ds.rois;
  spec.signal_grid = ds.grid;
  GridOptions gopt;
  gopt.scale_log_half_range = params.scale_log_half_range;
  std::vector<int> res = params.so3_resolution;
  res.push_back(params.scale_nodes);
  spec.group_grid = std::make_shared<QuadratureGrid>(haar_grid(GroupKind::SO3xScale, res, gopt));
  spec.intra_channels = params.intra_channels;
  spec.anchors_manifold = params.anchors_manifold;
  spec.anchors_group = params.anchors_group;
  spec.tau_manifold = params.tau_manifold;
  spec.tau_group = params.tau_group;
  spec.relu_mode = params.relu_mode;
  spec.intra_only = params.intra_only;
  spec.conv_channels = params.conv_channels;
  spec.seed = net_seed;
  return std::make_unique<VolumeNetwork>(spec);
}

VolumeTrainOutput volume_train(const VolumeDataset& train_ds, const VolumeDataset* eval_ds,
                               const VolumeExperimentParams& params, std::uint64_t seed) {
  VolumeTrainOutput out;
  out.net = build_volume_network(train_ds, params, seed_for("volume-net", seed));

  std::vector<Eigen::MatrixXd> roi_x, roi_x_eval;
  for (std::size_t r = 0; r < train_ds.rois.size(); ++r) roi_x.push_back(train_ds.roi_block(r));
  if (eval_ds)
    for (std::size_t r = 0; r < eval_ds->rois.size(); ++r)
      roi_x_eval.push_back(eval_ds->roi_block(r));

  TrainConfig config = params.train;
  config.seed = seed_for("volume-train", seed);

  // Epoch-at-a-time training with an early stop once the model has fit the
  // training set (accuracy 1 and near-zero loss for two consecutive epochs).
  TrainConfig one = config;
  one.epochs = 1;
  one.decay_every = 0;  // the decayed rate is injected per epoch below
  int saturated = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    one.learning_rate = lr_at(config, epoch);
    one.seed = seed_for("volume-epoch-" + std::to_string(epoch), config.seed);
    auto em = train_volume(*out.net, roi_x, train_ds.labels,
                           eval_ds ? &roi_x_eval : nullptr,
                           eval_ds ? &eval_ds->labels : nullptr, one);
    em[0].epoch = epoch;
    em[0].lr = lr_at(config, epoch);
    out.metrics.push_back(em[0]);
    if (em[0].train_acc >= 1.0 && em[0].train_loss < 0.02)
      ++saturated;
    else
      saturated = 0;
    if (saturated >= 2) break;
  }
  out.net->calibrate_batch_norm(roi_x);
  out.train_acc = evaluate_volume(*out.net, roi_x, train_ds.labels);
  if (eval_ds) out.test_acc = evaluate_volume(*out.net, roi_x_eval, eval_ds->labels);
  return out;
}

double sign_test_p(int wins, int n) {
  if (wins < 0 || wins > n) throw InvalidArgument("sign_test_p: wins out of range");
  double p = 0.0;
  for (int k = wins; k <= n; ++k) {
    double logc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    p += std::exp(logc - n * std::log(2.0));
  }
  return std::min(p, 1.0);
}

ComparisonResult volume_model_comparison(const VolumeDatasetSpec& base_data,
                                         const VolumeExperimentParams& params, int n_seeds,
                                         std::uint64_t seed) {
  ComparisonResult result;
  for (int s = 0; s < n_seeds; ++s) {
    VolumeDatasetSpec train_spec = base_data;
    train_spec.seed = seed_for("comparison-train-data", seed + s);
    VolumeDatasetSpec test_spec = base_data;
    test_spec.n_per_class = std::max(10, base_data.n_per_class / 2);
    test_spec.seed = seed_for("comparison-test-data", seed + s);

    auto train_ds = make_synthetic_volumes(train_spec);
    auto test_ds = make_synthetic_volumes(test_spec);

    VolumeExperimentParams full = params;
    full.intra_only = false;
    auto full_out = volume_train(train_ds, &test_ds, full, seed + s);
    result.full_train_acc.push_back(full_out.train_acc);
    result.full_test_acc.push_back(full_out.test_acc);

    VolumeExperimentParams intra = params;
    intra.intra_only = true;
    auto intra_out = volume_train(train_ds, &test_ds, intra, seed + s);
    result.intra_train_acc.push_back(intra_out.train_acc);
    result.intra_test_acc.push_back(intra_out.test_acc);

    if (full_out.test_acc > intra_out.test_acc) ++result.wins;
  }
  result.sign_test_p = sign_test_p(result.wins, n_seeds);
  return result;
}

// ---------------------------------------------------------------------------
// Permutation-test pipeline
// ---------------------------------------------------------------------------

std::vector<FeatureTable> extract_volume_features(VolumeNetwork& net,
                                                  const VolumeDataset& ds,
                                                  const std::string& stage) {
  if (stage != "intra" && stage != "inter")
    throw InvalidArgument("extract_volume_features: stage must be 'intra' or 'inter'");
  if (stage == "inter" && !net.has_conv())
    throw InvalidArgument("extract_volume_features: network has no inter-voxel stack");

  const std::size_t n = ds.labels.size();
  const std::size_t n_rois = ds.rois.size();
  std::vector<Eigen::MatrixXd> roi_x;
  for (std::size_t r = 0; r < n_rois; ++r) roi_x.push_back(ds.roi_block(r));

  std::vector<FeatureTable> tables(n_rois);
  const std::size_t chunk = 32;
  for (std::size_t start = 0; start < n; start += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(start + chunk, n); ++i) idx.push_back(i);
    std::vector<Eigen::MatrixXd> batch;
    for (std::size_t r = 0; r < n_rois; ++r)
      batch.push_back(gather_sample_columns(roi_x[r], ds.rois[r].volume(), idx));
    net.forward(batch, false);

    for (std::size_t r = 0; r < n_rois; ++r) {
      Eigen::MatrixXd feats;
      if (stage == "intra") {
        // (channels) x (batch * voxels) -> one row per subject
        const auto& h = net.intra_features()[r];
        const int v = ds.rois[r].volume();
        const auto ch = h.rows();
        feats.resize(static_cast<Eigen::Index>(idx.size()), ch * v);
        for (std::size_t b = 0; b < idx.size(); ++b)
          for (int vx = 0; vx < v; ++vx)
            for (Eigen::Index c = 0; c < ch; ++c)
              feats(static_cast<Eigen::Index>(b), c * v + vx) =
                  h(c, static_cast<Eigen::Index>(b) * v + vx);
      } else {
        feats = net.inter_features()[r].transpose();
      }
      if (tables[r].x.size() == 0) {
        tables[r].x.resize(static_cast<Eigen::Index>(n), feats.cols());
      }
      tables[r].x.middleRows(static_cast<Eigen::Index>(start), feats.rows()) = feats;
    }
  }
  for (std::size_t r = 0; r < n_rois; ++r) tables[r].groups = ds.labels;
  return tables;
}

std::vector<PermTestRow> volume_permutation_tests(VolumeNetwork& net,
                                                  const VolumeDataset& ds, int n_perm,
                                                  std::uint64_t seed) {
  std::vector<PermTestRow> rows;
  std::vector<std::string> stages = {"intra"};
  if (net.has_conv()) stages.push_back("inter");
  for (const auto& stage : stages) {
    auto tables = extract_volume_features(net, ds, stage);
    for (std::size_t r = 0; r < tables.size(); ++r) {
      auto test_seed = seed_for("permtest-" + stage + "-roi-" + std::to_string(r), seed);
      auto result = permutation_test(tables[r], n_perm, test_seed);
      PermTestRow row;
      row.stage = stage;
      row.roi = static_cast<int>(r);
      row.t2 = result.t2;
      row.p = result.p;
      row.n_perm = n_perm;
      row.seed = test_seed;
      rows.push_back(row);
    }
  }
  return rows;
}

std::string permtest_table_tsv(const std::vector<PermTestRow>& rows) {
  std::string text = "stage\troi\tt2\tp\tn_perm\tseed\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%s\t%d\t%.17g\t%.17g\t%d\t%llu\n", r.stage.c_str(),
                  r.roi, r.t2, r.p, r.n_perm, static_cast<unsigned long long>(r.seed));
    text += line;
  }
  return text;
}

}  // namespace corrnet
