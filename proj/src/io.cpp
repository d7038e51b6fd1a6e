#include "corrnet/io.hpp"

#include <cstdio>
#include <fstream>

namespace corrnet {

namespace fs = std::filesystem;

namespace {

void rename_over(const fs::path& tmp, const fs::path& path) {
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed for " + path.string() + ": " + ec.message());
}

// Serialization is raw host doubles; the artifact format is little-endian.
static_assert(sizeof(double) == 8 && sizeof(std::int64_t) == 8);

void check_little_endian() {
  const std::uint16_t probe = 1;
  if (*reinterpret_cast<const std::uint8_t*>(&probe) != 1)
    throw IoError("this build only writes blobs on little-endian hosts");
}

}  // namespace

void write_text_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  rename_over(tmp, path);
}

void write_json_atomic(const fs::path& path, const Json& j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

Json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw UsageError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void write_f64_blob(const fs::path& path, const double* data, std::size_t count) {
  check_little_endian();
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(count * sizeof(double)));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  rename_over(tmp, path);
}

std::vector<double> read_f64_blob(const fs::path& path, std::size_t expected) {
  check_little_endian();
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path.string());
  auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != expected * sizeof(double))
    throw IoError("blob " + path.string() + " has " + std::to_string(bytes) +
                  " bytes, expected " + std::to_string(expected * sizeof(double)));
  std::vector<double> out(expected);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw IoError("read failed for " + path.string());
  return out;
}

void write_i64_blob(const fs::path& path, const std::int64_t* data, std::size_t count) {
  check_little_endian();
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(count * sizeof(std::int64_t)));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  rename_over(tmp, path);
}

std::vector<std::int64_t> read_i64_blob(const fs::path& path, std::size_t expected) {
  check_little_endian();
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path.string());
  auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != expected * sizeof(std::int64_t))
    throw IoError("blob " + path.string() + " has " + std::to_string(bytes) +
                  " bytes, expected " + std::to_string(expected * sizeof(std::int64_t)));
  std::vector<std::int64_t> out(expected);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw IoError("read failed for " + path.string());
  return out;
}

std::string config_hash(const Json& j) {
  std::string dump = j.dump();  // nlohmann keeps object keys sorted
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void reject_unknown_keys(const Json& j, const std::vector<std::string>& allowed,
                         const std::string& where) {
  if (!j.is_object()) throw UsageError("config section '" + where + "' must be an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const auto& k : allowed)
      if (item.key() == k) known = true;
    if (!known) throw UsageError("unknown key '" + item.key() + "' in " + where);
  }
}

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

namespace {

int element_dim(GroupKind kind) {
  switch (kind) {
    case GroupKind::SO3: return 9;
    case GroupKind::PositiveScale: return 1;
    case GroupKind::SO3xScale: return 10;
    case GroupKind::GL3: return 9;
  }
  return 0;
}

}  // namespace

Json save_grid(const QuadratureGrid& grid, const fs::path& dir, const std::string& prefix) {
  Json entry;
  const bool manifold = grid.domain == QuadratureGrid::Domain::Manifold;
  entry["domain"] = manifold ? "manifold" : "group";
  if (manifold)
    entry["space"] = to_string(grid.space_kind);
  else
    entry["group"] = to_string(grid.group_kind);
  entry["resolution"] = grid.resolution;
  entry["radial_measure"] = to_string(grid.options.radial_measure);
  entry["seed"] = grid.options.seed;
  entry["spd_sigma"] = grid.options.spd_sigma;
  entry["gl_epsilon"] = grid.options.gl_epsilon;
  entry["scale_log_half_range"] = grid.options.scale_log_half_range;
  entry["n_points"] = grid.size();

  const auto n = grid.size();
  std::vector<double> flat;
  int dim;
  if (manifold) {
    dim = coord_dim(grid.space_kind);
    flat.reserve(n * static_cast<std::size_t>(dim));
    for (const auto& p : grid.points)
      for (int d = 0; d < dim; ++d) flat.push_back(p.coords(d));
  } else {
    dim = element_dim(grid.group_kind);
    flat.reserve(n * static_cast<std::size_t>(dim));
    for (const auto& e : grid.elements) {
      switch (grid.group_kind) {
        case GroupKind::SO3:
          for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) flat.push_back(e.rotation(r, c));
          break;
        case GroupKind::PositiveScale:
          flat.push_back(e.scale);
          break;
        case GroupKind::SO3xScale:
          for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) flat.push_back(e.rotation(r, c));
          flat.push_back(e.scale);
          break;
        case GroupKind::GL3:
          for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) flat.push_back(e.gl(r, c));
          break;
      }
    }
  }
  entry["point_dim"] = dim;
  entry["points_blob"] = prefix + "_points.f64";
  entry["weights_blob"] = prefix + "_weights.f64";
  write_f64_blob(dir / (prefix + "_points.f64"), flat.data(), flat.size());
  write_f64_blob(dir / (prefix + "_weights.f64"), grid.weights.data(),
                 static_cast<std::size_t>(grid.weights.size()));
  return entry;
}

QuadratureGrid load_grid(const fs::path& dir, const Json& entry) {
  QuadratureGrid grid;
  const bool manifold = entry.at("domain").get<std::string>() == "manifold";
  grid.domain = manifold ? QuadratureGrid::Domain::Manifold : QuadratureGrid::Domain::Group;
  if (manifold)
    grid.space_kind = space_kind_from_string(entry.at("space").get<std::string>());
  else
    grid.group_kind = group_kind_from_string(entry.at("group").get<std::string>());
  grid.resolution = entry.at("resolution").get<std::vector<int>>();
  grid.options.radial_measure =
      radial_measure_from_string(entry.at("radial_measure").get<std::string>());
  grid.options.seed = entry.at("seed").get<std::uint64_t>();
  grid.options.spd_sigma = entry.at("spd_sigma").get<double>();
  grid.options.gl_epsilon = entry.at("gl_epsilon").get<double>();
  grid.options.scale_log_half_range = entry.at("scale_log_half_range").get<double>();

  const auto n = entry.at("n_points").get<std::size_t>();
  const int dim = entry.at("point_dim").get<int>();
  auto flat = read_f64_blob(dir / entry.at("points_blob").get<std::string>(),
                            n * static_cast<std::size_t>(dim));
  auto weights = read_f64_blob(dir / entry.at("weights_blob").get<std::string>(), n);
  grid.weights = Eigen::Map<Eigen::VectorXd>(weights.data(), static_cast<Eigen::Index>(n));

  for (std::size_t i = 0; i < n; ++i) {
    const double* at = flat.data() + i * static_cast<std::size_t>(dim);
    if (manifold) {
      ManifoldPoint p;
      p.coords = Eigen::Map<const Eigen::VectorXd>(at, dim);
      grid.points.push_back(std::move(p));
    } else {
      GroupElement e = GroupElement::identity(grid.group_kind);
      switch (grid.group_kind) {
        case GroupKind::SO3:
          e.rotation = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(at);
          break;
        case GroupKind::PositiveScale:
          e.scale = at[0];
          break;
        case GroupKind::SO3xScale:
          e.rotation = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(at);
          e.scale = at[9];
          break;
        case GroupKind::GL3:
          e.gl = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(at);
          break;
      }
      grid.elements.push_back(std::move(e));
    }
  }
  return grid;
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

namespace {

void write_labels(const fs::path& dir, const std::vector<int>& labels) {
  std::vector<std::int64_t> wide(labels.begin(), labels.end());
  write_i64_blob(dir / "labels.i64", wide.data(), wide.size());
}

std::vector<int> read_labels(const fs::path& dir, std::size_t n) {
  auto wide = read_i64_blob(dir / "labels.i64", n);
  return std::vector<int>(wide.begin(), wide.end());
}

}  // namespace

void save_p3_dataset(const P3Dataset& ds, const fs::path& dir, Json meta) {
  fs::create_directories(dir);
  Json manifest;
  manifest["format_version"] = 1;
  manifest["kind"] = "p3";
  manifest["n_samples"] = ds.labels.size();
  manifest["grid"] = save_grid(*ds.grid, dir, "grid");
  manifest["values_blob"] = "values.f64";
  manifest["values_rows"] = ds.values.rows();
  manifest["values_cols"] = ds.values.cols();
  manifest["meta"] = std::move(meta);
  write_f64_blob(dir / "values.f64", ds.values.data(),
                 static_cast<std::size_t>(ds.values.size()));
  write_labels(dir, ds.labels);
  write_json_atomic(dir / "manifest.json", manifest);
}

P3Dataset load_p3_dataset(const fs::path& dir) {
  Json manifest = read_json(dir / "manifest.json");
  if (manifest.at("kind").get<std::string>() != "p3")
    throw UsageError("dataset at " + dir.string() + " is not a p3 dataset");
  P3Dataset ds;
  ds.grid = std::make_shared<QuadratureGrid>(load_grid(dir, manifest.at("grid")));
  const auto rows = manifest.at("values_rows").get<Eigen::Index>();
  const auto cols = manifest.at("values_cols").get<Eigen::Index>();
  auto values = read_f64_blob(dir / manifest.at("values_blob").get<std::string>(),
                              static_cast<std::size_t>(rows * cols));
  ds.values = Eigen::Map<Eigen::MatrixXd>(values.data(), rows, cols);
  ds.labels = read_labels(dir, manifest.at("n_samples").get<std::size_t>());
  return ds;
}

void save_volume_dataset(const VolumeDataset& ds, const fs::path& dir, Json meta) {
  fs::create_directories(dir);
  Json manifest;
  manifest["format_version"] = 1;
  manifest["kind"] = "volumes";
  manifest["n_samples"] = ds.labels.size();
  manifest["lattice"] = ds.lattice;
  Json rois = Json::array();
  for (const auto& r : ds.rois)
    rois.push_back({{"x0", r.x0},
                    {"y0", r.y0},
                    {"z0", r.z0},
                    {"nx", r.nx},
                    {"ny", r.ny},
                    {"nz", r.nz}});
  manifest["rois"] = rois;
  manifest["grid"] = save_grid(*ds.grid, dir, "grid");
  manifest["values_blob"] = "values.f64";
  manifest["values_rows"] = ds.values.rows();
  manifest["values_cols"] = ds.values.cols();
  manifest["roi_of_voxel_blob"] = "roi_of_voxel.i64";
  manifest["meta"] = std::move(meta);
  write_f64_blob(dir / "values.f64", ds.values.data(),
                 static_cast<std::size_t>(ds.values.size()));
  std::vector<std::int64_t> rov(ds.roi_of_voxel.begin(), ds.roi_of_voxel.end());
  write_i64_blob(dir / "roi_of_voxel.i64", rov.data(), rov.size());
  write_labels(dir, ds.labels);
  write_json_atomic(dir / "manifest.json", manifest);
}

VolumeDataset load_volume_dataset(const fs::path& dir) {
  Json manifest = read_json(dir / "manifest.json");
  if (manifest.at("kind").get<std::string>() != "volumes")
    throw UsageError("dataset at " + dir.string() + " is not a volumes dataset");
  VolumeDataset ds;
  ds.grid = std::make_shared<QuadratureGrid>(load_grid(dir, manifest.at("grid")));
  auto lattice = manifest.at("lattice").get<std::vector<int>>();
  ds.lattice = {lattice.at(0), lattice.at(1), lattice.at(2)};
  for (const auto& r : manifest.at("rois")) {
    RoiBox box;
    box.x0 = r.at("x0").get<int>();
    box.y0 = r.at("y0").get<int>();
    box.z0 = r.at("z0").get<int>();
    box.nx = r.at("nx").get<int>();
    box.ny = r.at("ny").get<int>();
    box.nz = r.at("nz").get<int>();
    ds.rois.push_back(box);
  }
  const auto rows = manifest.at("values_rows").get<Eigen::Index>();
  const auto cols = manifest.at("values_cols").get<Eigen::Index>();
  auto values = read_f64_blob(dir / manifest.at("values_blob").get<std::string>(),
                              static_cast<std::size_t>(rows * cols));
  ds.values = Eigen::Map<Eigen::MatrixXd>(values.data(), rows, cols);
  auto rov = read_i64_blob(dir / manifest.at("roi_of_voxel_blob").get<std::string>(),
                           static_cast<std::size_t>(ds.n_voxels()));
  ds.roi_of_voxel.assign(rov.begin(), rov.end());
  ds.labels = read_labels(dir, manifest.at("n_samples").get<std::size_t>());
  return ds;
}

std::string dataset_kind(const fs::path& dir) {
  return read_json(dir / "manifest.json").at("kind").get<std::string>();
}

// ---------------------------------------------------------------------------
// Checkpoints and metrics
// ---------------------------------------------------------------------------

void save_checkpoint(const fs::path& dir, const Json& manifest,
                     const std::vector<Eigen::MatrixXd*>& state) {
  fs::create_directories(dir);
  std::vector<double> flat;
  Json shapes = Json::array();
  for (const auto* block : state) {
    shapes.push_back({{"rows", block->rows()}, {"cols", block->cols()}});
    flat.insert(flat.end(), block->data(), block->data() + block->size());
  }
  Json full = manifest;
  full["state_shapes"] = shapes;
  full["state_blob"] = "state.f64";
  full["state_count"] = flat.size();
  write_f64_blob(dir / "state.f64", flat.data(), flat.size());
  write_json_atomic(dir / "manifest.json", full);
}

Json load_checkpoint(const fs::path& dir, const std::vector<Eigen::MatrixXd*>& state) {
  Json manifest = read_json(dir / "manifest.json");
  auto shapes = manifest.at("state_shapes");
  if (shapes.size() != state.size())
    throw IoError("checkpoint has " + std::to_string(shapes.size()) +
                  " state blocks, expected " + std::to_string(state.size()));
  auto flat = read_f64_blob(dir / manifest.at("state_blob").get<std::string>(),
                            manifest.at("state_count").get<std::size_t>());
  std::size_t off = 0;
  for (std::size_t b = 0; b < state.size(); ++b) {
    const auto rows = shapes[b].at("rows").get<Eigen::Index>();
    const auto cols = shapes[b].at("cols").get<Eigen::Index>();
    if (rows != state[b]->rows() || cols != state[b]->cols())
      throw IoError("checkpoint state block " + std::to_string(b) + " shape mismatch");
    std::copy(
        flat.begin() + static_cast<std::ptrdiff_t>(off),
        flat.begin() + static_cast<std::ptrdiff_t>(off + static_cast<std::size_t>(
                                                             state[b]->size())),
        state[b]->data());
    off += static_cast<std::size_t>(state[b]->size());
  }
  return manifest;
}

void write_metrics_tsv(const fs::path& path, const std::vector<EpochMetrics>& metrics) {
  std::string text = "epoch\tlr\ttrain_loss\ttrain_acc\teval_acc\n";
  char line[256];
  for (const auto& m : metrics) {
    std::snprintf(line, sizeof(line), "%d\t%.17g\t%.17g\t%.17g\t%.17g\n", m.epoch, m.lr,
                  m.train_loss, m.train_acc, m.eval_acc);
    text += line;
  }
  write_text_atomic(path, text);
}

std::vector<Eigen::MatrixXd*> batch_norm_state(Sequential& net) {
  std::vector<Eigen::MatrixXd*> out;
  for (auto* layer : net.layers()) {
    if (auto* bn = dynamic_cast<BatchNormLayer*>(layer)) {
      out.push_back(&bn->running_mean());
      out.push_back(&bn->running_var());
    }
  }
  return out;
}

std::vector<Eigen::MatrixXd*> full_state(P3Network& net) {
  auto out = net.params();
  for (auto* m : batch_norm_state(net.layers())) out.push_back(m);
  return out;
}

std::vector<Eigen::MatrixXd*> full_state(VolumeNetwork& net) {
  auto out = net.params();
  for (std::size_t r = 0; r < net.spec().rois.size(); ++r) {
    for (auto* m : batch_norm_state(net.intra_stack(r))) out.push_back(m);
    if (net.has_conv())
      for (auto* m : batch_norm_state(net.conv_stack(r))) out.push_back(m);
  }
  return out;
}

}  // namespace corrnet
