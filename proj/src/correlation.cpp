#include "corrnet/correlation.hpp"

#include <cmath>

#include "corrnet/rng.hpp"

namespace corrnet {

namespace {

// Shared core of corr_manifold / corr_group. For each output element g_j the
// mask anchors are translated by g_j (isometry: d(g_j^-1 z, a) = d(z, g_j a)),
// bump values are tabulated on the input nodes and contracted with f against
// the quadrature weights. Accumulation over grid points is in fixed index
// order.
Eigen::MatrixXd corr_core(const Eigen::MatrixXd& values, const QuadratureGrid& in_grid,
                          const BumpMask& w, const std::vector<GroupElement>& elements) {
  const auto n = static_cast<Eigen::Index>(in_grid.size());
  const int cin = w.channels_in();
  const int cout = w.channels_out();
  const int k = w.n_anchors();
  if (values.cols() != n) throw InvalidArgument("corr: signal/grid size mismatch");
  if (values.rows() != cin) throw InvalidArgument("corr: mask expects a different channel count");

  const bool manifold_in = (in_grid.domain == QuadratureGrid::Domain::Manifold);
  Eigen::MatrixXd out(cout, static_cast<Eigen::Index>(elements.size()));
  Eigen::MatrixXd bumps(n, k);
  Eigen::VectorXd contracted(static_cast<Eigen::Index>(cin) * k);

  for (std::size_t j = 0; j < elements.size(); ++j) {
    const BumpMask translated = pushforward(elements[j], w);
    for (Eigen::Index i = 0; i < n; ++i) {
      bumps.row(i) = manifold_in ? translated.bump_values(in_grid.points[i]).transpose()
                                 : translated.bump_values(in_grid.elements[i]).transpose();
    }
    // contracted(ci*K + k') = sum_i w_i f(ci, i) bump_k'(g_j^-1 x_i)
    Eigen::MatrixXd m = values * in_grid.weights.asDiagonal() * bumps;  // cin x k
    for (int ci = 0; ci < cin; ++ci)
      for (int kk = 0; kk < k; ++kk) contracted(ci * k + kk) = m(ci, kk);
    out.col(static_cast<Eigen::Index>(j)) = w.coefficients * contracted;
  }
  return out;
}

void require_group_grid(const GridPtr& grid, GroupKind kind, const char* who) {
  if (!grid || grid->domain != QuadratureGrid::Domain::Group)
    throw InvalidArgument(std::string(who) + ": output grid must be a group grid");
  if (grid->group_kind != kind)
    throw InvalidArgument(std::string(who) + ": output grid group kind mismatch");
}

}  // namespace

GroupFunction corr_manifold(const SampledFunction& f, const BumpMask& w, GridPtr out_grid) {
  if (!f.grid || f.grid->domain != QuadratureGrid::Domain::Manifold)
    throw InvalidArgument("corr_manifold: signal must live on a manifold grid");
  if (w.on_group) throw InvalidArgument("corr_manifold: mask must be anchored on the manifold");
  if (w.space.kind != f.grid->space_kind)
    throw InvalidArgument("corr_manifold: mask and signal live on different spaces");
  require_group_grid(out_grid, w.space.group_kind, "corr_manifold");

  GroupFunction out;
  out.grid = out_grid;
  out.values = corr_core(f.values, *f.grid, w, out_grid->elements);
  return out;
}

Eigen::MatrixXd corr_manifold_at(const SampledFunction& f, const BumpMask& w,
                                 const std::vector<GroupElement>& elements) {
  if (!f.grid || f.grid->domain != QuadratureGrid::Domain::Manifold)
    throw InvalidArgument("corr_manifold_at: signal must live on a manifold grid");
  return corr_core(f.values, *f.grid, w, elements);
}

GroupFunction corr_group(const GroupFunction& f, const BumpMask& w, GridPtr out_grid) {
  if (!f.grid || f.grid->domain != QuadratureGrid::Domain::Group)
    throw InvalidArgument("corr_group: signal must live on a group grid");
  if (!w.on_group) throw InvalidArgument("corr_group: mask must be anchored on the group");
  if (w.group_kind != f.grid->group_kind)
    throw InvalidArgument("corr_group: mask and signal live on different groups");
  require_group_grid(out_grid, w.group_kind, "corr_group");

  GroupFunction out;
  out.grid = out_grid;
  out.values = corr_core(f.values, *f.grid, w, out_grid->elements);
  return out;
}

Eigen::MatrixXd corr_group_at(const GroupFunction& f, const BumpMask& w,
                              const std::vector<GroupElement>& elements) {
  if (!f.grid || f.grid->domain != QuadratureGrid::Domain::Group)
    throw InvalidArgument("corr_group_at: signal must live on a group grid");
  return corr_core(f.values, *f.grid, w, elements);
}

double equivariance_residual(const SampledFunction& f, const BumpMask& w,
                             const GroupElement& g, GridPtr out_grid,
                             const BasisSet& fit_basis) {
  SampledFunction moved = pushforward(g, f, fit_basis);
  GroupFunction lhs = corr_manifold(moved, w, out_grid);

  GroupElement ginv = inverse(g);
  std::vector<GroupElement> translated;
  translated.reserve(out_grid->size());
  for (const auto& gj : out_grid->elements) translated.push_back(compose(ginv, gj));
  Eigen::MatrixXd rhs = corr_manifold_at(f, w, translated);

  return (lhs.values - rhs).cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Theorem-1 mask identification
// ---------------------------------------------------------------------------

namespace {

SampledFunction random_signal(GridPtr grid, Rng& rng) {
  SampledFunction f;
  f.grid = grid;
  f.values.resize(1, static_cast<Eigen::Index>(grid->size()));
  for (Eigen::Index i = 0; i < f.values.cols(); ++i) f.values(0, i) = rng.normal();
  return f;
}

}  // namespace

MaskIdentification identify_mask(const LinearSystem& F, GridPtr in_grid,
                                 const IdentifyOptions& options) {
  if (!in_grid) throw InvalidArgument("identify_mask: missing input grid");
  const auto n = static_cast<Eigen::Index>(in_grid->size());

  MaskIdentification id;
  id.in_grid = in_grid;

  // Impulse responses. The first response fixes the output grid.
  std::vector<Eigen::VectorXd> responses(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    GroupFunction resp = F(delta_at(static_cast<std::size_t>(i), in_grid));
    if (resp.channels() != 1)
      throw InvalidArgument("identify_mask: expected a single-channel system");
    if (!resp.values.allFinite())
      throw InvalidArgument("identify_mask: non-finite impulse response");
    if (i == 0) {
      id.out_grid = resp.grid;
    } else if (resp.grid->size() != id.out_grid->size()) {
      throw InvalidArgument("identify_mask: system output grid is not fixed");
    }
    responses[static_cast<std::size_t>(i)] = resp.values.row(0).transpose();
  }

  Eigen::Index identity_index = -1;
  const GroupElement e = GroupElement::identity(id.out_grid->group_kind);
  for (std::size_t j = 0; j < id.out_grid->size(); ++j) {
    if (group_distance(e, id.out_grid->elements[j]) < 1e-9) {
      identity_index = static_cast<Eigen::Index>(j);
      break;
    }
  }
  if (identity_index < 0)
    throw InvalidArgument(
        "identify_mask: the system's output grid does not contain the identity");

  id.mask_on_grid.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) id.mask_on_grid(i) = responses[i](identity_index);

  if (options.full_sweep) {
    Eigen::MatrixXd table(static_cast<Eigen::Index>(id.out_grid->size()), n);
    for (Eigen::Index i = 0; i < n; ++i) table.col(i) = responses[i];
    id.translate_table = std::move(table);
  }

  // Linearity and Eq.-(3) reconstruction residuals on random probes.
  Rng rng("identify-probes", options.seed);
  double lin = 0.0, rec = 0.0;
  for (int p = 0; p < options.n_probes; ++p) {
    SampledFunction f1 = random_signal(in_grid, rng);
    SampledFunction f2 = random_signal(in_grid, rng);
    double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
    SampledFunction combo;
    combo.grid = in_grid;
    combo.values = a * f1.values + b * f2.values;
    GroupFunction fc = F(combo), r1 = F(f1), r2 = F(f2);
    lin = std::max(lin,
                   (fc.values - a * r1.values - b * r2.values).cwiseAbs().maxCoeff());

    // Reconstruction through the tabulated translates.
    Eigen::VectorXd weighted = in_grid->weights.cwiseProduct(f1.values.row(0).transpose());
    if (options.full_sweep) {
      Eigen::VectorXd rebuilt = *id.translate_table * weighted;
      rec = std::max(rec, (r1.values.row(0).transpose() - rebuilt).cwiseAbs().maxCoeff());
    } else {
      double at_e = id.mask_on_grid.dot(weighted);
      rec = std::max(rec, std::abs(r1.values(0, identity_index) - at_e));
    }
  }
  id.linearity_residual = lin;
  id.equivariance_residual = rec;
  return id;
}

GroupFunction apply_identified(const MaskIdentification& id, const SampledFunction& f) {
  if (!id.translate_table)
    throw InvalidArgument("apply_identified: identification lacks the full translate table");
  if (!f.grid || f.grid->size() != id.in_grid->size())
    throw InvalidArgument("apply_identified: signal grid mismatch");
  GroupFunction out;
  out.grid = id.out_grid;
  out.values.resize(f.values.rows(), id.translate_table->rows());
  for (Eigen::Index c = 0; c < f.values.rows(); ++c) {
    Eigen::VectorXd weighted = f.grid->weights.cwiseProduct(f.values.row(c).transpose());
    out.values.row(c) = (*id.translate_table * weighted).transpose();
  }
  return out;
}

}  // namespace corrnet
