#pragma once

#include <memory>
#include <string>
#include <vector>

#include "corrnet/io.hpp"
#include "corrnet/stats.hpp"

namespace corrnet {

// ---------------------------------------------------------------------------
// SPD(3) classification experiment
// ---------------------------------------------------------------------------

struct P3ExperimentParams {
  int grid_points = 128;
  double grid_sigma = 1.2;
  std::uint64_t grid_seed = 101;
  int group_points = 48;
  double gl_epsilon = 0.2;
  std::uint64_t group_seed = 202;
  std::vector<int> channels = {1, 8, 8};
  int anchors_manifold = 8;
  int anchors_group = 8;
  double tau_manifold = 0.9;
  double tau_group = 0.8;
  HReluMode relu_mode = HReluMode::Value;
  TrainConfig train;

  P3ExperimentParams() {
    train.epochs = 40;
    train.batch_size = 32;
  }
};

Json p3_params_to_json(const P3ExperimentParams& p);
P3ExperimentParams p3_params_from_json(const Json& network, const Json& train);

/// Fresh network per the params; grids are rebuilt from the dataset's grid
/// plus the seeded group element set.
std::unique_ptr<P3Network> build_p3_network(const P3Dataset& ds,
                                            const P3ExperimentParams& params,
                                            std::uint64_t net_seed);

struct FoldResult {
  int fold = 0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

struct CvResult {
  std::vector<FoldResult> folds;
  double mean_train = 0.0, sd_train = 0.0;
  double mean_test = 0.0, sd_test = 0.0;
  std::vector<std::vector<EpochMetrics>> fold_metrics;
};

/// Deterministic k-fold cross-validation (fold k holds out every k-th index
/// of a seeded shuffle); accuracies from inference-mode evaluation.
CvResult p3_cross_validate(const P3Dataset& ds, const P3ExperimentParams& params, int folds,
                           std::uint64_t seed);

struct P3TrainOutput {
  std::unique_ptr<P3Network> net;
  std::vector<EpochMetrics> metrics;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

/// Single seeded holdout split (default 80/20).
P3TrainOutput p3_train_single(const P3Dataset& ds, const P3ExperimentParams& params,
                              double holdout_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Volumetric classification experiment
// ---------------------------------------------------------------------------

struct VolumeExperimentParams {
  std::vector<int> so3_resolution = {3, 2, 2};
  int scale_nodes = 2;
  double scale_log_half_range = 0.3;
  std::vector<int> intra_channels = {1, 5, 10, 15};
  std::vector<int> conv_channels = {20, 25};
  int anchors_manifold = 6;
  int anchors_group = 5;
  double tau_manifold = 0.6;
  double tau_group = 0.7;
  HReluMode relu_mode = HReluMode::Value;
  bool intra_only = false;
  TrainConfig train;

  VolumeExperimentParams() {
    train.epochs = 50;
    train.batch_size = 16;
  }
};

Json volume_params_to_json(const VolumeExperimentParams& p);
VolumeExperimentParams volume_params_from_json(const Json& network, const Json& train);

std::unique_ptr<VolumeNetwork> build_volume_network(const VolumeDataset& ds,
                                                    const VolumeExperimentParams& params,
                                                    std::uint64_t net_seed);

struct VolumeTrainOutput {
  std::unique_ptr<VolumeNetwork> net;
  std::vector<EpochMetrics> metrics;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

/// Trains on `train_ds`, evaluating on `eval_ds` when given. Stops early once
/// the training accuracy holds at 1.0 with a near-zero loss.
VolumeTrainOutput volume_train(const VolumeDataset& train_ds, const VolumeDataset* eval_ds,
                               const VolumeExperimentParams& params, std::uint64_t seed);

struct ComparisonResult {
  std::vector<double> full_train_acc, full_test_acc;
  std::vector<double> intra_train_acc, intra_test_acc;
  int wins = 0;             // seeds where the full model beats the intra-only one
  double sign_test_p = 1.0; // one-sided
};

/// Full architecture vs the intra-only + FC head variant across seeds, on
/// freshly generated volume datasets (train/test pairs per seed).
ComparisonResult volume_model_comparison(const VolumeDatasetSpec& base_data,
                                         const VolumeExperimentParams& params, int n_seeds,
                                         std::uint64_t seed);

/// One-sided sign test: probability of >= wins successes in n fair coin flips.
double sign_test_p(int wins, int n);

// ---------------------------------------------------------------------------
// Permutation-test pipeline
// ---------------------------------------------------------------------------

struct PermTestRow {
  std::string stage;  // "intra" or "inter"
  int roi = 0;
  double t2 = 0.0;
  double p = 1.0;
  int n_perm = 0;
  std::uint64_t seed = 0;
};

/// Per-subject feature tables tapped from the network (inference mode):
/// stage "intra" flattens the grid-averaged intra features over the ROI's
/// voxels, stage "inter" flattens the last convolution output.
std::vector<FeatureTable> extract_volume_features(VolumeNetwork& net,
                                                  const VolumeDataset& ds,
                                                  const std::string& stage);

std::vector<PermTestRow> volume_permutation_tests(VolumeNetwork& net,
                                                  const VolumeDataset& ds, int n_perm,
                                                  std::uint64_t seed);

std::string permtest_table_tsv(const std::vector<PermTestRow>& rows);

}  // namespace corrnet
