#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "corrnet/datagen.hpp"
#include "corrnet/network.hpp"

namespace corrnet {

using Json = nlohmann::json;

// Every artifact on disk is a human-readable JSON manifest plus raw
// little-endian float64 / int64 blobs referenced by file name and
// length-checked on load. All writes go through a temp file and rename.

void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_json_atomic(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);

void write_f64_blob(const std::filesystem::path& path, const double* data, std::size_t count);
std::vector<double> read_f64_blob(const std::filesystem::path& path, std::size_t expected);
void write_i64_blob(const std::filesystem::path& path, const std::int64_t* data,
                    std::size_t count);
std::vector<std::int64_t> read_i64_blob(const std::filesystem::path& path,
                                        std::size_t expected);

/// FNV-1a hash of the canonical (sorted-key) dump, hex-encoded.
std::string config_hash(const Json& j);

/// Fails on any key not in `allowed` (strict config validation).
void reject_unknown_keys(const Json& j, const std::vector<std::string>& allowed,
                         const std::string& where);

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

/// Writes `<prefix>_points.f64` and `<prefix>_weights.f64` next to the
/// manifest entry it returns (kind, resolution, options, blob names).
Json save_grid(const QuadratureGrid& grid, const std::filesystem::path& dir,
               const std::string& prefix);
QuadratureGrid load_grid(const std::filesystem::path& dir, const Json& entry);

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

void save_p3_dataset(const P3Dataset& ds, const std::filesystem::path& dir, Json meta);
P3Dataset load_p3_dataset(const std::filesystem::path& dir);

void save_volume_dataset(const VolumeDataset& ds, const std::filesystem::path& dir,
                         Json meta);
VolumeDataset load_volume_dataset(const std::filesystem::path& dir);

/// "p3" or "volumes", read from the dataset manifest.
std::string dataset_kind(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Checkpoints and metrics
// ---------------------------------------------------------------------------

/// Flattens parameter blocks (and batch-norm running statistics) to one blob.
void save_checkpoint(const std::filesystem::path& dir, const Json& manifest,
                     const std::vector<Eigen::MatrixXd*>& state);
/// Loads the manifest and restores `state` in place (shape-checked).
Json load_checkpoint(const std::filesystem::path& dir,
                     const std::vector<Eigen::MatrixXd*>& state);

/// One record per epoch: epoch, lr, train_loss, train_acc, eval_acc. Fixed
/// %.17g formatting, no timestamps, so identical runs are byte-identical.
void write_metrics_tsv(const std::filesystem::path& path,
                       const std::vector<EpochMetrics>& metrics);

/// Network batch-norm running statistics, in layer order (empty when none).
std::vector<Eigen::MatrixXd*> batch_norm_state(Sequential& net);
std::vector<Eigen::MatrixXd*> full_state(P3Network& net);
std::vector<Eigen::MatrixXd*> full_state(VolumeNetwork& net);

}  // namespace corrnet
