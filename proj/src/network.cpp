#include "corrnet/network.hpp"

#include <cmath>
#include <string>

#include "corrnet/rng.hpp"

namespace corrnet {

namespace {

using StrideXd = Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>;

Eigen::MatrixXd glorot(int rows, int cols, int fan_in, int fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-limit, limit);
  return m;
}

}  // namespace

const char* to_string(HReluMode mode) {
  return mode == HReluMode::Value ? "value" : "domain_warp";
}

HReluMode h_relu_mode_from_string(const std::string& s) {
  if (s == "value") return HReluMode::Value;
  if (s == "domain_warp") return HReluMode::DomainWarp;
  throw InvalidArgument("unknown H-ReLU mode: " + s);
}

GridPtr warp_grid_relu(const GridPtr& grid) {
  if (!grid || grid->domain != QuadratureGrid::Domain::Group)
    throw InvalidArgument("warp_grid_relu: need a group grid");
  auto warped = std::make_shared<QuadratureGrid>(*grid);
  for (auto& h : warped->elements) {
    Eigen::VectorXd v = group_log(h);  // LogBranchError propagates to the caller
    h = group_exp(v.cwiseMax(0.0), h.kind);
  }
  return warped;
}

GroupFunction h_relu(const GroupFunction& f, HReluMode mode) {
  GroupFunction out;
  if (mode == HReluMode::Value) {
    out.grid = f.grid;
    out.values = f.values.cwiseMax(0.0);
  } else {
    out.grid = warp_grid_relu(f.grid);
    out.values = f.values;
  }
  return out;
}

Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    double m = logits.col(j).maxCoeff();
    double lse = std::log((logits.col(j).array() - m).exp().sum());
    out.col(j) = logits.col(j).array() - m - lse;
  }
  return out;
}

double nll_loss(const Eigen::MatrixXd& logp, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logp.cols())
    throw InvalidArgument("nll_loss: label count mismatch");
  double loss = 0.0;
  for (Eigen::Index j = 0; j < logp.cols(); ++j) {
    int y = labels[static_cast<std::size_t>(j)];
    if (y < 0 || y >= logp.rows()) throw InvalidArgument("nll_loss: label out of range");
    loss -= logp(y, j);
  }
  return loss / static_cast<double>(logp.cols());
}

Eigen::MatrixXd nll_loss_grad(const Eigen::MatrixXd& logp, const std::vector<int>& labels) {
  Eigen::MatrixXd g = logp.array().exp();
  for (Eigen::Index j = 0; j < logp.cols(); ++j)
    g(labels[static_cast<std::size_t>(j)], j) -= 1.0;
  return g / static_cast<double>(logp.cols());
}

// ---------------------------------------------------------------------------
// CorrLayer
// ---------------------------------------------------------------------------

CorrLayer::CorrLayer(GridPtr in_grid, GridPtr out_grid, int channels_in, int channels_out,
                     const CorrLayerOptions& options, Rng& rng)
    : in_grid_(std::move(in_grid)),
      out_grid_(std::move(out_grid)),
      cin_(channels_in),
      cout_(channels_out),
      k_(options.anchors),
      bias_enabled_(options.bias) {
  if (!in_grid_ || !out_grid_ || out_grid_->domain != QuadratureGrid::Domain::Group)
    throw InvalidArgument("CorrLayer: need an input grid and a group output grid");

  Eigen::MatrixXd coeffs =
      glorot(cout_, cin_ * k_, cin_ * k_, cout_, rng);
  if (in_grid_->domain == QuadratureGrid::Domain::Manifold) {
    auto space = HomogeneousSpace::of(in_grid_->space_kind);
    if (space.group_kind != out_grid_->group_kind)
      throw InvalidArgument("CorrLayer: output grid group does not act on the input space");
    mask_ = make_manifold_mask(space,
                               random_anchors(space, k_, rng, options.anchor_spread,
                                              options.anchor_spread),
                               options.tau, std::move(coeffs));
  } else {
    if (in_grid_->group_kind != out_grid_->group_kind)
      throw InvalidArgument("CorrLayer: input and output group kinds differ");
    mask_ = make_group_mask(in_grid_->group_kind,
                            random_group_anchors(in_grid_->group_kind, k_, rng,
                                                 options.anchor_spread),
                            options.tau, std::move(coeffs));
  }

  // Fixed bump tensor: T_k(j, i) = w_i exp(-d^2(z_i, g_j a_k) / (2 tau^2)).
  const auto m = static_cast<Eigen::Index>(out_grid_->size());
  const auto n = static_cast<Eigen::Index>(in_grid_->size());
  t_.assign(static_cast<std::size_t>(k_), Eigen::MatrixXd(m, n));
  const bool manifold_in = (in_grid_->domain == QuadratureGrid::Domain::Manifold);
  for (Eigen::Index j = 0; j < m; ++j) {
    BumpMask translated = pushforward(out_grid_->elements[static_cast<std::size_t>(j)], mask_);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd b =
          manifold_in
              ? translated.bump_values(in_grid_->points[static_cast<std::size_t>(i)])
              : translated.bump_values(in_grid_->elements[static_cast<std::size_t>(i)]);
      for (int kk = 0; kk < k_; ++kk) t_[static_cast<std::size_t>(kk)](j, i) = in_grid_->weights(i) * b(kk);
    }
  }

  coeff_grad_ = Eigen::MatrixXd::Zero(cout_, cin_ * k_);
  bias_ = Eigen::MatrixXd::Zero(bias_enabled_ ? cout_ : 0, 1);
  bias_grad_ = bias_;
}

Eigen::MatrixXd CorrLayer::forward(const Eigen::MatrixXd& x, bool) {
  const auto m = static_cast<Eigen::Index>(out_grid_->size());
  const auto n = static_cast<Eigen::Index>(in_grid_->size());
  const Eigen::Index items = x.cols();
  if (x.rows() != static_cast<Eigen::Index>(cin_) * n)
    throw InvalidArgument("CorrLayer: input row count mismatch");

  p_cache_.resize(static_cast<Eigen::Index>(cin_) * k_, m * items);
  for (int ci = 0; ci < cin_; ++ci) {
    auto f_ci = x.middleRows(static_cast<Eigen::Index>(ci) * n, n);
    for (int kk = 0; kk < k_; ++kk) {
      Eigen::MatrixXd pk = t_[static_cast<std::size_t>(kk)] * f_ci;  // m x items
      p_cache_.row(static_cast<Eigen::Index>(ci) * k_ + kk) =
          Eigen::Map<const Eigen::RowVectorXd>(pk.data(), m * items);
    }
  }

  Eigen::MatrixXd out_flat = mask_.coefficients * p_cache_;  // cout x (m items)
  Eigen::MatrixXd out(static_cast<Eigen::Index>(cout_) * m, items);
  for (int co = 0; co < cout_; ++co) {
    Eigen::Map<const Eigen::MatrixXd, 0, StrideXd> view(
        out_flat.data() + co, m, items, StrideXd(m * cout_, cout_));
    out.middleRows(static_cast<Eigen::Index>(co) * m, m) = view;
    if (bias_enabled_) out.middleRows(static_cast<Eigen::Index>(co) * m, m).array() += bias_(co, 0);
  }
  return out;
}

Eigen::MatrixXd CorrLayer::backward(const Eigen::MatrixXd& grad_out) {
  const auto m = static_cast<Eigen::Index>(out_grid_->size());
  const auto n = static_cast<Eigen::Index>(in_grid_->size());
  const Eigen::Index items = grad_out.cols();

  Eigen::MatrixXd gflat(cout_, m * items);
  for (int co = 0; co < cout_; ++co) {
    Eigen::Map<Eigen::MatrixXd, 0, StrideXd> view(gflat.data() + co, m, items,
                                                  StrideXd(m * cout_, cout_));
    view = grad_out.middleRows(static_cast<Eigen::Index>(co) * m, m);
    if (bias_enabled_)
      bias_grad_(co, 0) = grad_out.middleRows(static_cast<Eigen::Index>(co) * m, m).sum();
  }

  coeff_grad_ = gflat * p_cache_.transpose();

  Eigen::MatrixXd dp = mask_.coefficients.transpose() * gflat;  // (cin K) x (m items)
  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cin_) * n, items);
  const Eigen::Index dp_rows = dp.rows();
  for (int ci = 0; ci < cin_; ++ci) {
    for (int kk = 0; kk < k_; ++kk) {
      Eigen::Map<const Eigen::MatrixXd, 0, StrideXd> dpk(
          dp.data() + static_cast<Eigen::Index>(ci) * k_ + kk, m, items,
          StrideXd(m * dp_rows, dp_rows));
      dx.middleRows(static_cast<Eigen::Index>(ci) * n, n).noalias() +=
          t_[static_cast<std::size_t>(kk)].transpose() * dpk;
    }
  }
  return dx;
}

std::vector<Eigen::MatrixXd*> CorrLayer::params() {
  std::vector<Eigen::MatrixXd*> p{&mask_.coefficients};
  if (bias_enabled_) p.push_back(&bias_);
  return p;
}

std::vector<Eigen::MatrixXd*> CorrLayer::grads() {
  std::vector<Eigen::MatrixXd*> g{&coeff_grad_};
  if (bias_enabled_) g.push_back(&bias_grad_);
  return g;
}

BumpMask CorrLayer::as_mask() const { return mask_; }

// ---------------------------------------------------------------------------
// ReLU / BatchNorm / GridAverage
// ---------------------------------------------------------------------------

Eigen::MatrixXd ReluLayer::forward(const Eigen::MatrixXd& x, bool) {
  active_ = (x.array() > 0.0).cast<double>();
  return x.cwiseMax(0.0);
}

Eigen::MatrixXd ReluLayer::backward(const Eigen::MatrixXd& grad_out) {
  return (grad_out.array() * active_).matrix();
}

BatchNormLayer::BatchNormLayer(int channels, int points) : c_(channels), n_(points) {
  gamma_ = Eigen::MatrixXd::Ones(c_, 1);
  beta_ = Eigen::MatrixXd::Zero(c_, 1);
  gamma_grad_ = Eigen::MatrixXd::Zero(c_, 1);
  beta_grad_ = Eigen::MatrixXd::Zero(c_, 1);
  run_mean_ = Eigen::MatrixXd::Zero(c_, 1);
  run_var_ = Eigen::MatrixXd::Ones(c_, 1);
}

Eigen::MatrixXd BatchNormLayer::forward(const Eigen::MatrixXd& x, bool training) {
  if (x.rows() != static_cast<Eigen::Index>(c_) * n_)
    throw InvalidArgument("BatchNormLayer: input row count mismatch");
  training_cached_ = training;
  Eigen::MatrixXd out(x.rows(), x.cols());
  if (training) {
    xhat_.resize(x.rows(), x.cols());
    inv_std_.resize(c_);
    const double count = static_cast<double>(n_) * static_cast<double>(x.cols());
    for (int c = 0; c < c_; ++c) {
      auto block = x.middleRows(static_cast<Eigen::Index>(c) * n_, n_);
      double mean = block.sum() / count;
      double var = (block.array() - mean).square().sum() / count;
      double inv = 1.0 / std::sqrt(var + eps_);
      inv_std_(c) = inv;
      xhat_.middleRows(static_cast<Eigen::Index>(c) * n_, n_) = (block.array() - mean) * inv;
      out.middleRows(static_cast<Eigen::Index>(c) * n_, n_) =
          gamma_(c, 0) * xhat_.middleRows(static_cast<Eigen::Index>(c) * n_, n_).array() +
          beta_(c, 0);
      run_mean_(c, 0) = (1.0 - momentum_) * run_mean_(c, 0) + momentum_ * mean;
      run_var_(c, 0) = (1.0 - momentum_) * run_var_(c, 0) + momentum_ * var;
    }
  } else {
    for (int c = 0; c < c_; ++c) {
      double inv = 1.0 / std::sqrt(run_var_(c, 0) + eps_);
      out.middleRows(static_cast<Eigen::Index>(c) * n_, n_) =
          gamma_(c, 0) * ((x.middleRows(static_cast<Eigen::Index>(c) * n_, n_).array() -
                           run_mean_(c, 0)) *
                          inv) +
          beta_(c, 0);
    }
  }
  return out;
}

Eigen::MatrixXd BatchNormLayer::backward(const Eigen::MatrixXd& grad_out) {
  if (!training_cached_)
    throw InvalidArgument("BatchNormLayer: backward without a training-mode forward");
  Eigen::MatrixXd dx(grad_out.rows(), grad_out.cols());
  const double count = static_cast<double>(n_) * static_cast<double>(grad_out.cols());
  for (int c = 0; c < c_; ++c) {
    auto g = grad_out.middleRows(static_cast<Eigen::Index>(c) * n_, n_);
    auto xh = xhat_.middleRows(static_cast<Eigen::Index>(c) * n_, n_);
    double sum_g = g.sum();
    double sum_gx = (g.array() * xh.array()).sum();
    gamma_grad_(c, 0) = sum_gx;
    beta_grad_(c, 0) = sum_g;
    dx.middleRows(static_cast<Eigen::Index>(c) * n_, n_) =
        (gamma_(c, 0) * inv_std_(c) / count) *
        (count * g.array() - sum_g - xh.array() * sum_gx);
  }
  return dx;
}

std::vector<Eigen::MatrixXd*> BatchNormLayer::params() { return {&gamma_, &beta_}; }
std::vector<Eigen::MatrixXd*> BatchNormLayer::grads() { return {&gamma_grad_, &beta_grad_}; }

GridAverageLayer::GridAverageLayer(int channels, const Eigen::VectorXd& weights)
    : c_(channels), w_(weights / weights.sum()) {}

Eigen::MatrixXd GridAverageLayer::forward(const Eigen::MatrixXd& x, bool) {
  const Eigen::Index n = w_.size();
  if (x.rows() != static_cast<Eigen::Index>(c_) * n)
    throw InvalidArgument("GridAverageLayer: input row count mismatch");
  Eigen::MatrixXd out(c_, x.cols());
  for (int c = 0; c < c_; ++c)
    out.row(c) = w_.transpose() * x.middleRows(static_cast<Eigen::Index>(c) * n, n);
  return out;
}

Eigen::MatrixXd GridAverageLayer::backward(const Eigen::MatrixXd& grad_out) {
  const Eigen::Index n = w_.size();
  Eigen::MatrixXd dx(static_cast<Eigen::Index>(c_) * n, grad_out.cols());
  for (int c = 0; c < c_; ++c)
    dx.middleRows(static_cast<Eigen::Index>(c) * n, n) = w_ * grad_out.row(c);
  return dx;
}

// ---------------------------------------------------------------------------
// Conv3d / MaxPool3d / FullyConnected
// ---------------------------------------------------------------------------

namespace {
inline Eigen::Index vox_index(int c, int x, int y, int z, const std::array<int, 3>& d) {
  return ((static_cast<Eigen::Index>(c) * d[0] + x) * d[1] + y) * d[2] + z;
}
}  // namespace

Conv3dLayer::Conv3dLayer(int channels_in, int channels_out, std::array<int, 3> dims,
                         std::array<int, 3> kernel, Rng& rng)
    : cin_(channels_in), cout_(channels_out), dims_(dims), k_(kernel) {
  for (int a = 0; a < 3; ++a)
    if (dims_[a] < k_[a]) throw InvalidArgument("Conv3dLayer: lattice smaller than kernel");
  const int kvol = k_[0] * k_[1] * k_[2];
  kernel_ = glorot(cout_, cin_ * kvol, cin_ * kvol, cout_ * kvol, rng);
  kernel_grad_ = Eigen::MatrixXd::Zero(cout_, cin_ * kvol);
  bias_ = Eigen::MatrixXd::Zero(cout_, 1);
  bias_grad_ = bias_;
}

std::array<int, 3> Conv3dLayer::out_dims() const {
  return {dims_[0] - k_[0] + 1, dims_[1] - k_[1] + 1, dims_[2] - k_[2] + 1};
}

Eigen::MatrixXd Conv3dLayer::forward(const Eigen::MatrixXd& x, bool) {
  const auto od = out_dims();
  if (x.rows() != vox_index(cin_, 0, 0, 0, dims_))
    throw InvalidArgument("Conv3dLayer: input row count mismatch");
  x_cache_ = x;
  Eigen::MatrixXd out(vox_index(cout_, 0, 0, 0, od), x.cols());
  for (Eigen::Index it = 0; it < x.cols(); ++it) {
    for (int co = 0; co < cout_; ++co)
      for (int ox = 0; ox < od[0]; ++ox)
        for (int oy = 0; oy < od[1]; ++oy)
          for (int oz = 0; oz < od[2]; ++oz) {
            double acc = bias_(co, 0);
            for (int ci = 0; ci < cin_; ++ci)
              for (int a = 0; a < k_[0]; ++a)
                for (int b = 0; b < k_[1]; ++b)
                  for (int c = 0; c < k_[2]; ++c)
                    acc += kernel_(co, ((ci * k_[0] + a) * k_[1] + b) * k_[2] + c) *
                           x(vox_index(ci, ox + a, oy + b, oz + c, dims_), it);
            out(vox_index(co, ox, oy, oz, od), it) = acc;
          }
  }
  return out;
}

Eigen::MatrixXd Conv3dLayer::backward(const Eigen::MatrixXd& grad_out) {
  const auto od = out_dims();
  kernel_grad_.setZero();
  bias_grad_.setZero();
  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(x_cache_.rows(), x_cache_.cols());
  for (Eigen::Index it = 0; it < grad_out.cols(); ++it) {
    for (int co = 0; co < cout_; ++co)
      for (int ox = 0; ox < od[0]; ++ox)
        for (int oy = 0; oy < od[1]; ++oy)
          for (int oz = 0; oz < od[2]; ++oz) {
            double g = grad_out(vox_index(co, ox, oy, oz, od), it);
            bias_grad_(co, 0) += g;
            for (int ci = 0; ci < cin_; ++ci)
              for (int a = 0; a < k_[0]; ++a)
                for (int b = 0; b < k_[1]; ++b)
                  for (int c = 0; c < k_[2]; ++c) {
                    const int kcol = ((ci * k_[0] + a) * k_[1] + b) * k_[2] + c;
                    const Eigen::Index xrow = vox_index(ci, ox + a, oy + b, oz + c, dims_);
                    kernel_grad_(co, kcol) += g * x_cache_(xrow, it);
                    dx(xrow, it) += g * kernel_(co, kcol);
                  }
          }
  }
  return dx;
}

std::vector<Eigen::MatrixXd*> Conv3dLayer::params() { return {&kernel_, &bias_}; }
std::vector<Eigen::MatrixXd*> Conv3dLayer::grads() { return {&kernel_grad_, &bias_grad_}; }

MaxPool3dLayer::MaxPool3dLayer(int channels, std::array<int, 3> dims,
                               std::array<int, 3> window, int stride)
    : c_(channels), stride_(stride), dims_(dims), w_(window) {
  for (int a = 0; a < 3; ++a)
    if (dims_[a] < w_[a]) throw InvalidArgument("MaxPool3dLayer: lattice smaller than window");
  if (stride_ < 1) throw InvalidArgument("MaxPool3dLayer: stride must be >= 1");
}

std::array<int, 3> MaxPool3dLayer::out_dims() const {
  return {(dims_[0] - w_[0]) / stride_ + 1, (dims_[1] - w_[1]) / stride_ + 1,
          (dims_[2] - w_[2]) / stride_ + 1};
}

Eigen::MatrixXd MaxPool3dLayer::forward(const Eigen::MatrixXd& x, bool) {
  const auto od = out_dims();
  in_rows_ = x.rows();
  Eigen::MatrixXd out(vox_index(c_, 0, 0, 0, od), x.cols());
  argmax_.resize(out.rows(), out.cols());
  for (Eigen::Index it = 0; it < x.cols(); ++it) {
    for (int c = 0; c < c_; ++c)
      for (int ox = 0; ox < od[0]; ++ox)
        for (int oy = 0; oy < od[1]; ++oy)
          for (int oz = 0; oz < od[2]; ++oz) {
            double best = -std::numeric_limits<double>::infinity();
            Eigen::Index best_row = 0;
            for (int a = 0; a < w_[0]; ++a)
              for (int b = 0; b < w_[1]; ++b)
                for (int d = 0; d < w_[2]; ++d) {
                  Eigen::Index row = vox_index(c, ox * stride_ + a, oy * stride_ + b,
                                               oz * stride_ + d, dims_);
                  if (x(row, it) > best) {
                    best = x(row, it);
                    best_row = row;
                  }
                }
            Eigen::Index orow = vox_index(c, ox, oy, oz, od);
            out(orow, it) = best;
            argmax_(orow, it) = static_cast<int>(best_row);
          }
  }
  return out;
}

Eigen::MatrixXd MaxPool3dLayer::backward(const Eigen::MatrixXd& grad_out) {
  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(in_rows_, grad_out.cols());
  for (Eigen::Index it = 0; it < grad_out.cols(); ++it)
    for (Eigen::Index r = 0; r < grad_out.rows(); ++r)
      dx(argmax_(r, it), it) += grad_out(r, it);
  return dx;
}

FullyConnectedLayer::FullyConnectedLayer(int in, int out, Rng& rng) {
  w_ = glorot(out, in, in, out, rng);
  w_grad_ = Eigen::MatrixXd::Zero(out, in);
  b_ = Eigen::MatrixXd::Zero(out, 1);
  b_grad_ = b_;
}

Eigen::MatrixXd FullyConnectedLayer::forward(const Eigen::MatrixXd& x, bool) {
  x_cache_ = x;
  return (w_ * x).colwise() + b_.col(0);
}

Eigen::MatrixXd FullyConnectedLayer::backward(const Eigen::MatrixXd& grad_out) {
  w_grad_ = grad_out * x_cache_.transpose();
  b_grad_ = grad_out.rowwise().sum();
  return w_.transpose() * grad_out;
}

std::vector<Eigen::MatrixXd*> FullyConnectedLayer::params() { return {&w_, &b_}; }
std::vector<Eigen::MatrixXd*> FullyConnectedLayer::grads() { return {&w_grad_, &b_grad_}; }

// ---------------------------------------------------------------------------
// Sequential
// ---------------------------------------------------------------------------

Eigen::MatrixXd Sequential::forward(Eigen::MatrixXd x, bool training) {
  for (auto& l : layers_) x = l->forward(x, training);
  return x;
}

Eigen::MatrixXd Sequential::backward(Eigen::MatrixXd grad) {
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) grad = (*it)->backward(grad);
  return grad;
}

std::vector<Eigen::MatrixXd*> Sequential::params() {
  std::vector<Eigen::MatrixXd*> out;
  for (auto& l : layers_)
    for (auto* p : l->params()) out.push_back(p);
  return out;
}

std::vector<Eigen::MatrixXd*> Sequential::grads() {
  std::vector<Eigen::MatrixXd*> out;
  for (auto& l : layers_)
    for (auto* g : l->grads()) out.push_back(g);
  return out;
}

std::vector<Layer*> Sequential::layers() {
  std::vector<Layer*> out;
  for (auto& l : layers_) out.push_back(l.get());
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

double lr_at(const TrainConfig& config, int epoch) {
  if (config.learning_rate <= 0.0) throw InvalidArgument("learning rate must be positive");
  if (config.decay_factor <= 0.0 || config.decay_factor > 1.0)
    throw InvalidArgument("decay factor must lie in (0, 1]");
  int steps = config.decay_every > 0 ? epoch / config.decay_every : 0;
  return config.learning_rate * std::pow(config.decay_factor, steps);
}

void sgd_step(const std::vector<Eigen::MatrixXd*>& params,
              const std::vector<Eigen::MatrixXd*>& grads, const TrainConfig& config,
              int epoch) {
  if (params.size() != grads.size())
    throw InvalidArgument("sgd_step: parameter/gradient count mismatch");
  const double lr = lr_at(config, epoch);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i]->rows() || params[i]->cols() != grads[i]->cols())
      throw InvalidArgument("sgd_step: parameter/gradient shape mismatch");
    if (!grads[i]->allFinite())
      throw NonFiniteGradient("sgd_step: non-finite gradient in block " + std::to_string(i));
    *params[i] -= lr * *grads[i];
  }
}

std::int64_t count_params(const std::vector<Eigen::MatrixXd*>& params) {
  std::int64_t n = 0;
  for (const auto* p : params) n += static_cast<std::int64_t>(p->size());
  return n;
}

// ---------------------------------------------------------------------------
// P3Network
// ---------------------------------------------------------------------------

P3Network::P3Network(const P3NetSpec& spec) : spec_(spec) {
  if (spec_.channels.size() != 3) throw InvalidArgument("P3Network: channel ladder must have 3 entries");
  Rng rng("p3-network", spec_.seed);
  const auto m = static_cast<int>(spec_.group_grid->size());

  // batch norm after each correlation keeps feature scales trainable
  CorrLayerOptions o1;
  o1.anchors = spec_.anchors_manifold;
  o1.tau = spec_.tau_manifold;
  net_.add(std::make_unique<CorrLayer>(spec_.signal_grid, spec_.group_grid,
                                       spec_.channels[0], spec_.channels[1], o1, rng));
  net_.add(std::make_unique<BatchNormLayer>(spec_.channels[1], m));
  GridPtr corr2_in = spec_.group_grid;
  if (spec_.relu_mode == HReluMode::Value) {
    net_.add(std::make_unique<ReluLayer>());
  } else {
    corr2_in = warp_grid_relu(spec_.group_grid);
  }

  CorrLayerOptions o2;
  o2.anchors = spec_.anchors_group;
  o2.tau = spec_.tau_group;
  o2.anchor_spread = 0.5;
  net_.add(std::make_unique<CorrLayer>(corr2_in, spec_.group_grid, spec_.channels[1],
                                       spec_.channels[2], o2, rng));
  net_.add(std::make_unique<BatchNormLayer>(spec_.channels[2], m));
  if (spec_.relu_mode == HReluMode::Value) net_.add(std::make_unique<ReluLayer>());
  // domain-warp before a fully connected head leaves the values unchanged

  net_.add(std::make_unique<FullyConnectedLayer>(spec_.channels[2] * m, spec_.n_classes, rng));
}

Eigen::MatrixXd P3Network::forward(const Eigen::MatrixXd& batch, bool training) {
  return net_.forward(batch, training);
}

void P3Network::backward(const Eigen::MatrixXd& dlogits) { net_.backward(dlogits); }

namespace {

// Swap batch-norm momenta to 1, run one training-mode forward, restore.
template <typename ForwardFn>
void calibrate_stacks(const std::vector<Sequential*>& stacks, ForwardFn&& forward) {
  std::vector<std::pair<BatchNormLayer*, double>> saved;
  for (auto* stack : stacks)
    for (auto* layer : stack->layers())
      if (auto* bn = dynamic_cast<BatchNormLayer*>(layer)) {
        saved.emplace_back(bn, bn->momentum());
        bn->momentum() = 1.0;
      }
  forward();
  for (auto& [bn, m] : saved) bn->momentum() = m;
}

}  // namespace

void P3Network::calibrate_batch_norm(const Eigen::MatrixXd& batch) {
  calibrate_stacks({&net_}, [&]() { net_.forward(batch, true); });
}

// ---------------------------------------------------------------------------
// VolumeNetwork
// ---------------------------------------------------------------------------

VolumeNetwork::VolumeNetwork(const VolumeNetSpec& spec) : spec_(spec) {
  if (spec_.rois.empty()) throw InvalidArgument("VolumeNetwork: no ROIs");
  if (spec_.intra_channels.size() < 2)
    throw InvalidArgument("VolumeNetwork: need at least one correlation layer");
  for (const auto& roi : spec_.rois) {
    if (roi.x0 < 0 || roi.y0 < 0 || roi.z0 < 0 || roi.x0 + roi.nx > spec_.lattice[0] ||
        roi.y0 + roi.ny > spec_.lattice[1] || roi.z0 + roi.nz > spec_.lattice[2])
      throw InvalidArgument("VolumeNetwork: ROI outside the lattice");
  }

  const auto m = static_cast<int>(spec_.group_grid->size());
  const int n_corr = static_cast<int>(spec_.intra_channels.size()) - 1;
  intra_features_.resize(spec_.rois.size());
  inter_features_.resize(spec_.rois.size());

  for (std::size_t r = 0; r < spec_.rois.size(); ++r) {
    Rng rng("volume-network-roi-" + std::to_string(r), spec_.seed);
    Sequential stack;
    GridPtr in_grid = spec_.signal_grid;
    for (int s = 0; s < n_corr; ++s) {
      CorrLayerOptions o;
      o.anchors = (s == 0) ? spec_.anchors_manifold : spec_.anchors_group;
      o.tau = (s == 0) ? spec_.tau_manifold : spec_.tau_group;
      if (s > 0) o.anchor_spread = 0.5;
      stack.add(std::make_unique<CorrLayer>(in_grid, spec_.group_grid,
                                            spec_.intra_channels[s],
                                            spec_.intra_channels[s + 1], o, rng));
      stack.add(std::make_unique<BatchNormLayer>(spec_.intra_channels[s + 1], m));
      if (s + 1 < n_corr) {
        if (spec_.relu_mode == HReluMode::Value) {
          stack.add(std::make_unique<ReluLayer>());
          in_grid = spec_.group_grid;
        } else {
          in_grid = warp_grid_relu(spec_.group_grid);
        }
      }
    }
    stack.add(std::make_unique<GridAverageLayer>(spec_.intra_channels.back(),
                                                 spec_.group_grid->weights));
    intra_.push_back(std::move(stack));

    const int ch = spec_.intra_channels.back();
    const auto& roi = spec_.rois[r];
    if (spec_.intra_only) {
      feature_dims_.push_back(ch * roi.volume());
    } else {
      Sequential conv;
      std::array<int, 3> dims = {roi.nx, roi.ny, roi.nz};
      int cin = ch;
      for (std::size_t s = 0; s < spec_.conv_channels.size(); ++s) {
        auto layer = std::make_unique<Conv3dLayer>(cin, spec_.conv_channels[s], dims,
                                                   std::array<int, 3>{2, 2, 2}, rng);
        dims = layer->out_dims();
        cin = spec_.conv_channels[s];
        conv.add(std::move(layer));
        conv.add(std::make_unique<BatchNormLayer>(cin, dims[0] * dims[1] * dims[2]));
        conv.add(std::make_unique<ReluLayer>());
        if (s + 1 < spec_.conv_channels.size()) {
          auto pool = std::make_unique<MaxPool3dLayer>(cin, dims, std::array<int, 3>{2, 2, 2}, 1);
          dims = pool->out_dims();
          conv.add(std::move(pool));
        }
      }
      feature_dims_.push_back(cin * dims[0] * dims[1] * dims[2]);
      conv_.push_back(std::move(conv));
    }
  }

  int total = 0;
  for (int d : feature_dims_) total += d;
  Rng rng_head("volume-network-head", spec_.seed);
  head_.add(std::make_unique<FullyConnectedLayer>(total, spec_.n_classes, rng_head));
}

Eigen::MatrixXd VolumeNetwork::forward(const std::vector<Eigen::MatrixXd>& roi_inputs,
                                       bool training) {
  if (roi_inputs.size() != spec_.rois.size())
    throw InvalidArgument("VolumeNetwork: wrong ROI input count");
  const int v0 = spec_.rois[0].volume();
  if (roi_inputs[0].cols() % v0 != 0)
    throw InvalidArgument("VolumeNetwork: item count is not a multiple of ROI voxels");
  const Eigen::Index batch = roi_inputs[0].cols() / v0;
  batch_cached_ = static_cast<int>(batch);

  int total = 0;
  for (int d : feature_dims_) total += d;
  Eigen::MatrixXd feats(total, batch);
  int off = 0;
  for (std::size_t r = 0; r < spec_.rois.size(); ++r) {
    const int v = spec_.rois[r].volume();
    const int ch = spec_.intra_channels.back();
    Eigen::MatrixXd h = intra_[r].forward(roi_inputs[r], training);  // ch x (batch v)
    intra_features_[r] = h;

    Eigen::MatrixXd vol(static_cast<Eigen::Index>(ch) * v, batch);
    for (int c = 0; c < ch; ++c)
      for (int vx = 0; vx < v; ++vx)
        for (Eigen::Index b = 0; b < batch; ++b)
          vol(static_cast<Eigen::Index>(c) * v + vx, b) = h(c, b * v + vx);

    Eigen::MatrixXd f;
    if (spec_.intra_only) {
      f = vol;
    } else {
      f = conv_[r].forward(vol, training);
      inter_features_[r] = f;
    }
    feats.middleRows(off, feature_dims_[static_cast<std::size_t>(r)]) = f;
    off += feature_dims_[static_cast<std::size_t>(r)];
  }
  return head_.forward(feats, training);
}

void VolumeNetwork::backward(const Eigen::MatrixXd& dlogits) {
  Eigen::MatrixXd dfeats = head_.backward(dlogits);
  const Eigen::Index batch = batch_cached_;
  int off = 0;
  for (std::size_t r = 0; r < spec_.rois.size(); ++r) {
    const int v = spec_.rois[r].volume();
    const int ch = spec_.intra_channels.back();
    Eigen::MatrixXd df = dfeats.middleRows(off, feature_dims_[r]);
    off += feature_dims_[r];

    Eigen::MatrixXd dvol = spec_.intra_only ? std::move(df) : conv_[r].backward(df);

    Eigen::MatrixXd dh(ch, batch * v);
    for (int c = 0; c < ch; ++c)
      for (int vx = 0; vx < v; ++vx)
        for (Eigen::Index b = 0; b < batch; ++b)
          dh(c, b * v + vx) = dvol(static_cast<Eigen::Index>(c) * v + vx, b);

    intra_[r].backward(dh);
  }
}

void VolumeNetwork::calibrate_batch_norm(const std::vector<Eigen::MatrixXd>& roi_inputs) {
  std::vector<Sequential*> stacks;
  for (auto& s : intra_) stacks.push_back(&s);
  for (auto& s : conv_) stacks.push_back(&s);
  calibrate_stacks(stacks, [&]() { forward(roi_inputs, true); });
}

std::vector<Eigen::MatrixXd*> VolumeNetwork::params() {
  std::vector<Eigen::MatrixXd*> out;
  for (auto& s : intra_)
    for (auto* p : s.params()) out.push_back(p);
  for (auto& s : conv_)
    for (auto* p : s.params()) out.push_back(p);
  for (auto* p : head_.params()) out.push_back(p);
  return out;
}

std::vector<Eigen::MatrixXd*> VolumeNetwork::grads() {
  std::vector<Eigen::MatrixXd*> out;
  for (auto& s : intra_)
    for (auto* g : s.grads()) out.push_back(g);
  for (auto& s : conv_)
    for (auto* g : s.grads()) out.push_back(g);
  for (auto* g : head_.grads()) out.push_back(g);
  return out;
}

std::int64_t count_params(P3Network& net) { return count_params(net.params()); }
std::int64_t count_params(VolumeNetwork& net) { return count_params(net.params()); }

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

Eigen::MatrixXd gather_sample_columns(const Eigen::MatrixXd& all, int voxels_per_sample,
                                      const std::vector<std::size_t>& samples) {
  Eigen::MatrixXd out(all.rows(),
                      static_cast<Eigen::Index>(samples.size()) * voxels_per_sample);
  for (std::size_t s = 0; s < samples.size(); ++s)
    out.middleCols(static_cast<Eigen::Index>(s) * voxels_per_sample, voxels_per_sample) =
        all.middleCols(static_cast<Eigen::Index>(samples[s]) * voxels_per_sample,
                       voxels_per_sample);
  return out;
}

namespace {

std::vector<std::size_t> batch_of(const std::vector<std::size_t>& order, std::size_t start,
                                  std::size_t batch_size) {
  std::vector<std::size_t> idx;
  for (std::size_t i = start; i < std::min(start + batch_size, order.size()); ++i)
    idx.push_back(order[i]);
  return idx;
}

int argmax_col(const Eigen::MatrixXd& m, Eigen::Index j) {
  Eigen::Index best = 0;
  m.col(j).maxCoeff(&best);
  return static_cast<int>(best);
}

// One generic epoch driver over closures that map a batch of sample indices
// to logits (forward) and push the loss gradient back (backward).
template <typename ForwardFn, typename BackwardFn, typename EvalFn>
std::vector<EpochMetrics> run_training(std::size_t n_samples, const std::vector<int>& y,
                                       ForwardFn&& forward, BackwardFn&& backward,
                                       EvalFn&& eval_fn, bool has_eval,
                                       const std::vector<Eigen::MatrixXd*>& params,
                                       const std::vector<Eigen::MatrixXd*>& grads,
                                       const TrainConfig& config) {
  if (n_samples == 0) throw InvalidArgument("train: empty dataset");
  if (config.batch_size < 1) throw InvalidArgument("train: batch size must be >= 1");
  for (int label : y)
    if (label < 0) throw InvalidArgument("train: negative label");

  Rng shuffle_rng("train-shuffle", config.seed);
  std::vector<std::size_t> order(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) order[i] = i;

  std::vector<EpochMetrics> metrics;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n_samples;
         start += static_cast<std::size_t>(config.batch_size)) {
      auto idx = batch_of(order, start, static_cast<std::size_t>(config.batch_size));
      std::vector<int> labels(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = y[idx[i]];

      Eigen::MatrixXd logits = forward(idx, true);
      Eigen::MatrixXd logp = log_softmax(logits);
      loss_sum += nll_loss(logp, labels) * static_cast<double>(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i)
        if (argmax_col(logp, static_cast<Eigen::Index>(i)) == labels[i]) ++correct;

      backward(nll_loss_grad(logp, labels));
      sgd_step(params, grads, config, epoch);
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.lr = lr_at(config, epoch);
    em.train_loss = loss_sum / static_cast<double>(n_samples);
    em.train_acc = static_cast<double>(correct) / static_cast<double>(n_samples);
    if (has_eval) em.eval_acc = eval_fn();
    metrics.push_back(em);
  }
  return metrics;
}

}  // namespace

std::vector<EpochMetrics> train_p3(P3Network& net, const Eigen::MatrixXd& x,
                                   const std::vector<int>& y, const Eigen::MatrixXd* x_eval,
                                   const std::vector<int>* y_eval, const TrainConfig& config) {
  if (x.cols() != static_cast<Eigen::Index>(y.size()))
    throw InvalidArgument("train_p3: label count mismatch");
  auto params = net.params();
  auto grads = net.grads();
  auto forward = [&](const std::vector<std::size_t>& idx, bool training) {
    Eigen::MatrixXd batch(x.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i)
      batch.col(static_cast<Eigen::Index>(i)) = x.col(static_cast<Eigen::Index>(idx[i]));
    return net.forward(batch, training);
  };
  auto backward = [&](const Eigen::MatrixXd& dlogits) { net.backward(dlogits); };
  auto eval_fn = [&]() { return x_eval ? evaluate_p3(net, *x_eval, *y_eval) : 0.0; };
  return run_training(y.size(), y, forward, backward, eval_fn, x_eval != nullptr, params,
                      grads, config);
}

double evaluate_p3(P3Network& net, const Eigen::MatrixXd& x, const std::vector<int>& y) {
  if (y.empty()) throw InvalidArgument("evaluate_p3: empty dataset");
  std::size_t correct = 0;
  const Eigen::Index chunk = 256;
  for (Eigen::Index start = 0; start < x.cols(); start += chunk) {
    Eigen::Index len = std::min(chunk, x.cols() - start);
    Eigen::MatrixXd logits = net.forward(x.middleCols(start, len), false);
    for (Eigen::Index j = 0; j < len; ++j)
      if (argmax_col(logits, j) == y[static_cast<std::size_t>(start + j)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(y.size());
}

std::vector<EpochMetrics> train_volume(VolumeNetwork& net,
                                       const std::vector<Eigen::MatrixXd>& roi_x,
                                       const std::vector<int>& y,
                                       const std::vector<Eigen::MatrixXd>* roi_x_eval,
                                       const std::vector<int>* y_eval,
                                       const TrainConfig& config) {
  auto params = net.params();
  auto grads = net.grads();
  const auto& rois = net.spec().rois;
  auto forward = [&](const std::vector<std::size_t>& idx, bool training) {
    std::vector<Eigen::MatrixXd> batch;
    for (std::size_t r = 0; r < roi_x.size(); ++r)
      batch.push_back(gather_sample_columns(roi_x[r], rois[r].volume(), idx));
    return net.forward(batch, training);
  };
  auto backward = [&](const Eigen::MatrixXd& dlogits) { net.backward(dlogits); };
  auto eval_fn = [&]() {
    return roi_x_eval ? evaluate_volume(net, *roi_x_eval, *y_eval) : 0.0;
  };
  return run_training(y.size(), y, forward, backward, eval_fn, roi_x_eval != nullptr,
                      params, grads, config);
}

double evaluate_volume(VolumeNetwork& net, const std::vector<Eigen::MatrixXd>& roi_x,
                       const std::vector<int>& y) {
  if (y.empty()) throw InvalidArgument("evaluate_volume: empty dataset");
  const auto& rois = net.spec().rois;
  std::size_t correct = 0;
  const std::size_t chunk = 64;
  for (std::size_t start = 0; start < y.size(); start += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(start + chunk, y.size()); ++i) idx.push_back(i);
    std::vector<Eigen::MatrixXd> batch;
    for (std::size_t r = 0; r < roi_x.size(); ++r)
      batch.push_back(gather_sample_columns(roi_x[r], rois[r].volume(), idx));
    Eigen::MatrixXd logits = net.forward(batch, false);
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (argmax_col(logits, static_cast<Eigen::Index>(i)) == y[idx[i]]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(y.size());
}

}  // namespace corrnet
