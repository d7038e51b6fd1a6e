#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include "corrnet/correlation.hpp"

namespace corrnet {

class Rng;

struct TrainConfig {
  double learning_rate = 0.1;
  double decay_factor = 0.1;
  int decay_every = 30;
  int epochs = 50;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

enum class HReluMode { Value, DomainWarp };
const char* to_string(HReluMode mode);
HReluMode h_relu_mode_from_string(const std::string& s);

/// Lie-algebra ReLU on a group function. Value mode clips the function
/// values; domain-warp mode moves each grid element to exp(max(0, log h))
/// and leaves values attached to the warped elements (downstream masks are
/// evaluable anywhere, so no resampling happens).
GroupFunction h_relu(const GroupFunction& f, HReluMode mode);

/// The element-wise warp exp(componentwise-ReLU(log h)) applied to a grid.
GridPtr warp_grid_relu(const GridPtr& grid);

/// Numerically stable log-softmax per column.
Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits);
/// Mean negative log-likelihood.
double nll_loss(const Eigen::MatrixXd& logp, const std::vector<int>& labels);
/// Gradient of the mean NLL with respect to the logits: (softmax - onehot)/B.
Eigen::MatrixXd nll_loss_grad(const Eigen::MatrixXd& logp, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Layers. Data layout: column per item, rows = per-item features
// (channel-major: feature (c, i) of an n-point field sits at row c*n + i).
// ---------------------------------------------------------------------------

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Eigen::MatrixXd forward(const Eigen::MatrixXd& x, bool training) = 0;
  virtual Eigen::MatrixXd backward(const Eigen::MatrixXd& grad_out) = 0;
  virtual std::vector<Eigen::MatrixXd*> params() { return {}; }
  virtual std::vector<Eigen::MatrixXd*> grads() { return {}; }
  virtual const char* name() const = 0;
};

struct CorrLayerOptions {
  int anchors = 8;
  double tau = 0.6;
  double anchor_spread = 0.7;  // radial / tangent extent of the seeded anchors
  bool bias = false;
};

/// Trainable correlation layer. The bump tensor
///   T_k(j, i) = w_i exp(-d^2(g_j^-1 z_i, a_k) / (2 tau^2))
/// is fixed at construction (anchors are seeded, only coefficients train),
/// so forward and backward reduce to dense products; the gradient in the
/// coefficients is the correlation adjoint.
class CorrLayer : public Layer {
 public:
  CorrLayer(GridPtr in_grid, GridPtr out_grid, int channels_in, int channels_out,
            const CorrLayerOptions& options, Rng& rng);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, bool training) override;
  Eigen::MatrixXd backward(const Eigen::MatrixXd& grad_out) override;
  std::vector<Eigen::MatrixXd*> params() override;
  std::vector<Eigen::MatrixXd*> grads() override;
  const char* name() const override { return "corr"; }

  /// The layer as a closed-form mask (for verification against corr_*).
  BumpMask as_mask() const;
  const GridPtr& out_grid() const { return out_grid_; }

 private:
  GridPtr in_grid_, out_grid_;
  int cin_, cout_, k_;
  bool bias_enabled_;
  BumpMask mask_;                     // holds anchors / tau / live coefficients
  std::vector<Eigen::MatrixXd> t_;    // K matrices, out elements x in points
  Eigen::MatrixXd coeff_grad_;
  Eigen::MatrixXd bias_, bias_grad_;  // cout x 1
  Eigen::MatrixXd p_cache_;           // (cin K) x (m items)
};

class ReluLayer : public Layer {
 public:
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, bool training) override;
  Eigen::MatrixXd backward(const Eigen::MatrixXd& grad_out) override;
  const char* name() const override { return "relu"; }

 private:
  Eigen::ArrayXXd active_;
};

/// Per-channel normalization over (items x points), with trainable affine
/// terms and running statistics for inference (momentum 0.1, eps 1e-5).
class BatchNormLayer : public Layer {
 public:
  BatchNormLayer(int channels, int points);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, bool training) override;
  Eigen::MatrixXd backward(const Eigen::MatrixXd& grad_out) override;
  std::vector<Eigen::MatrixXd*> params() override;
  std::vector<Eigen::MatrixXd*> grads() override;
  const char* name() const override { return "batch_norm"; }

  const Eigen::MatrixXd& running_mean() const { return run_mean_; }
  const Eigen::MatrixXd& running_var() const { return run_var_; }
  Eigen::MatrixXd& running_mean() { return run_mean_; }
  Eigen::MatrixXd& running_var() { return run_var_; }
  double& momentum() { return momentum_; }

 private:
  int c_, n_;
  double momentum_ = 0.1, eps_ = 1e-5;
  Eigen::MatrixXd gamma_, beta_, gamma_grad_, beta_grad_;
  Eigen::MatrixXd run_mean_, run_var_;
  Eigen::MatrixXd xhat_;
  Eigen::VectorXd inv_std_;
  bool training_cached_ = false;
};

/// Quadrature-weighted mean over grid points, per channel.
class GridAverageLayer : public Layer {
 public:
  GridAverageLayer(int channels, const Eigen::VectorXd& weights);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, bool training) override;
  Eigen::MatrixXd backward(const Eigen::MatrixXd& grad_out) override;
  const char* name() const override { return "grid_average"; }

 private:
  int c_;
  Eigen::VectorXd w_;  // normalized
};

/// Valid-region 3D cross-correlation over a voxel lattice.
class Conv3dLayer : public Layer {
 public:
  Conv3dLayer(int channels_in, int channels_out, std::array<int, 3> dims,
              std::array<int, 3> kernel, Rng& rng);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, bool training) override;
  Eigen::MatrixXd backward(const Eigen::MatrixXd& grad_out) override;
  std::vector<Eigen::MatrixXd*> params() override;
  std::vector<Eigen::MatrixXd*> grads() override;
  const char* name() const override { return "conv3d"; }

  std::array<int, 3> out_dims() const;

 private:
  int cin_, cout_;
  std::array<int, 3> dims_, k_;
  Eigen::MatrixXd kernel_, kernel_grad_;  // cout x (cin kx ky kz)
  Eigen::MatrixXd bias_, bias_grad_;
  Eigen::MatrixXd x_cache_;
};

class MaxPool3dLayer : public Layer {
 public:
  MaxPool3dLayer(int channels, std::array<int, 3> dims, std::array<int, 3> window,
                 int stride);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, bool training) override;
  Eigen::MatrixXd backward(const Eigen::MatrixXd& grad_out) override;
  const char* name() const override { return "max_pool3d"; }

  std::array<int, 3> out_dims() const;

 private:
  int c_, stride_;
  std::array<int, 3> dims_, w_;
  Eigen::MatrixXi argmax_;
  Eigen::Index in_rows_ = 0;
};

class FullyConnectedLayer : public Layer {
 public:
  FullyConnectedLayer(int in, int out, Rng& rng);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, bool training) override;
  Eigen::MatrixXd backward(const Eigen::MatrixXd& grad_out) override;
  std::vector<Eigen::MatrixXd*> params() override;
  std::vector<Eigen::MatrixXd*> grads() override;
  const char* name() const override { return "fully_connected"; }

 private:
  Eigen::MatrixXd w_, w_grad_, b_, b_grad_;
  Eigen::MatrixXd x_cache_;
};

/// Plain layer pipeline with parameter enumeration.
class Sequential {
 public:
  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  Eigen::MatrixXd forward(Eigen::MatrixXd x, bool training);
  Eigen::MatrixXd backward(Eigen::MatrixXd grad);
  std::vector<Eigen::MatrixXd*> params();
  std::vector<Eigen::MatrixXd*> grads();
  std::vector<Layer*> layers();

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

double lr_at(const TrainConfig& config, int epoch);

/// p <- p - lr(epoch) g. Throws NonFiniteGradient on non-finite gradients.
void sgd_step(const std::vector<Eigen::MatrixXd*>& params,
              const std::vector<Eigen::MatrixXd*>& grads, const TrainConfig& config,
              int epoch);

std::int64_t count_params(const std::vector<Eigen::MatrixXd*>& params);

// ---------------------------------------------------------------------------
// Concrete classifiers
// ---------------------------------------------------------------------------

struct P3NetSpec {
  GridPtr signal_grid;   // SPD3 Monte Carlo grid
  GridPtr group_grid;    // GL(3) element set
  std::vector<int> channels = {1, 8, 8};
  int anchors_manifold = 8;
  int anchors_group = 8;
  double tau_manifold = 0.9;
  double tau_group = 0.8;
  HReluMode relu_mode = HReluMode::Value;
  int n_classes = 2;
  std::uint64_t seed = 0;
};

/// Correlation classifier on SPD(3) signals:
/// Corr -> ReLU -> Corr -> ReLU -> FC over the flattened group samples.
class P3Network {
 public:
  explicit P3Network(const P3NetSpec& spec);

  /// batch: points x B single-channel signal values; returns logits.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& batch, bool training);
  void backward(const Eigen::MatrixXd& dlogits);
  /// One full training-mode pass with batch-norm momentum 1, pinning the
  /// running statistics to the exact statistics of `batch`.
  void calibrate_batch_norm(const Eigen::MatrixXd& batch);
  std::vector<Eigen::MatrixXd*> params() { return net_.params(); }
  std::vector<Eigen::MatrixXd*> grads() { return net_.grads(); }
  Sequential& layers() { return net_; }
  const P3NetSpec& spec() const { return spec_; }

 private:
  P3NetSpec spec_;
  Sequential net_;
};

struct RoiBox {
  int x0 = 0, y0 = 0, z0 = 0;
  int nx = 1, ny = 1, nz = 1;
  int volume() const { return nx * ny * nz; }
};

struct VolumeNetSpec {
  std::array<int, 3> lattice = {8, 8, 8};
  std::vector<RoiBox> rois;
  GridPtr signal_grid;  // per-voxel manifold grid
  GridPtr group_grid;   // intra-voxel correlation grid
  std::vector<int> intra_channels = {1, 5, 10, 15};
  int anchors_manifold = 8;
  int anchors_group = 6;
  double tau_manifold = 0.6;
  double tau_group = 0.7;
  HReluMode relu_mode = HReluMode::Value;
  bool intra_only = false;         // skip the inter-voxel convolution stack
  std::vector<int> conv_channels = {20, 25};
  int n_classes = 2;
  std::uint64_t seed = 0;
};

/// Volumetric classifier: a per-ROI intra-voxel correlation stack with
/// weights shared across the ROI's voxels, batch norm after each correlation,
/// grid averaging, then per-ROI 3D convolutions (or a direct fully connected
/// head in intra-only mode), and a shared softmax classifier.
class VolumeNetwork {
 public:
  explicit VolumeNetwork(const VolumeNetSpec& spec);

  /// One input block per ROI, laid out (cin * points) x (B * roi_voxels),
  /// item index b * V + v. Returns logits (n_classes x B).
  Eigen::MatrixXd forward(const std::vector<Eigen::MatrixXd>& roi_inputs, bool training);
  void backward(const Eigen::MatrixXd& dlogits);
  void calibrate_batch_norm(const std::vector<Eigen::MatrixXd>& roi_inputs);

  std::vector<Eigen::MatrixXd*> params();
  std::vector<Eigen::MatrixXd*> grads();
  const VolumeNetSpec& spec() const { return spec_; }
  Sequential& intra_stack(std::size_t roi) { return intra_[roi]; }
  bool has_conv() const { return !conv_.empty(); }
  Sequential& conv_stack(std::size_t roi) { return conv_[roi]; }

  /// Per-ROI feature taps for the permutation tests: the grid-averaged output
  /// of the last intra correlation (stage "intra") or the flattened output of
  /// the last convolution stack (stage "inter"), from the most recent forward.
  const std::vector<Eigen::MatrixXd>& intra_features() const { return intra_features_; }
  const std::vector<Eigen::MatrixXd>& inter_features() const { return inter_features_; }

 private:
  VolumeNetSpec spec_;
  std::vector<Sequential> intra_;  // per ROI
  std::vector<Sequential> conv_;   // per ROI (empty when intra_only)
  Sequential head_;                // FC over concatenated ROI features
  std::vector<int> feature_dims_;  // per-ROI feature size entering the head
  int batch_cached_ = 0;
  std::vector<Eigen::MatrixXd> intra_features_, inter_features_;
};

/// Exact count of trainable scalars.
std::int64_t count_params(P3Network& net);
std::int64_t count_params(VolumeNetwork& net);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double eval_acc = std::numeric_limits<double>::quiet_NaN();
};

/// Mini-batch SGD with step decay; deterministic given config.seed (shuffle
/// stream, initialization owned by the network). Batches aggregate gradients
/// by mean; the last partial batch is included.
std::vector<EpochMetrics> train_p3(P3Network& net, const Eigen::MatrixXd& x,
                                   const std::vector<int>& y, const Eigen::MatrixXd* x_eval,
                                   const std::vector<int>* y_eval, const TrainConfig& config);

/// Fraction of argmax-correct predictions.
double evaluate_p3(P3Network& net, const Eigen::MatrixXd& x, const std::vector<int>& y);

/// roi_x[r] holds every sample's ROI block, (cin * points) x (N * roi_voxels).
std::vector<EpochMetrics> train_volume(VolumeNetwork& net,
                                       const std::vector<Eigen::MatrixXd>& roi_x,
                                       const std::vector<int>& y,
                                       const std::vector<Eigen::MatrixXd>* roi_x_eval,
                                       const std::vector<int>* y_eval,
                                       const TrainConfig& config);

double evaluate_volume(VolumeNetwork& net, const std::vector<Eigen::MatrixXd>& roi_x,
                       const std::vector<int>& y);

/// Column-gather of sample blocks (V columns per sample) for a batch.
Eigen::MatrixXd gather_sample_columns(const Eigen::MatrixXd& all, int voxels_per_sample,
                                      const std::vector<std::size_t>& samples);

}  // namespace corrnet
