#pragma once

#include "s2fpn/model.hpp"
#include "s2fpn/sparse.hpp"
#include "s2fpn/train.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace s2fpn {

// ------------------------------------------------------- tensor container
//
// "S2TN" | u32 version | u64 entry count | entries...
// entry: u32 name length | UTF-8 name | u8 dtype | u32 ndim | u64 dims[ndim] |
//        row-major payload. All integers and payload little-endian.

inline constexpr std::uint32_t kTensorContainerVersion = 1;
inline constexpr std::uint32_t kSparseContainerVersion = 1;

enum class DType : std::uint8_t { f32 = 1, f64 = 2, i64 = 3, u8 = 4 };

std::size_t dtype_size(DType t);

struct TensorEntry {
    std::string name;
    DType dtype = DType::f64;
    std::vector<std::uint64_t> dims;
    std::vector<std::uint8_t> bytes; // little-endian payload

    std::uint64_t element_count() const;

    static TensorEntry f64(std::string name, std::vector<std::uint64_t> dims, std::span<const double> v);
    static TensorEntry f32(std::string name, std::vector<std::uint64_t> dims, std::span<const double> v);
    static TensorEntry i64(std::string name, std::vector<std::uint64_t> dims,
                           std::span<const std::int64_t> v);
    static TensorEntry text(std::string name, const std::string& s);

    /// Widening conversion of f32/f64/i64/u8 payloads.
    std::vector<double> to_f64() const;
    /// Integer payloads only (i64, u8).
    std::vector<std::int64_t> to_i64() const;
    std::string to_text() const;

    friend bool operator==(const TensorEntry&, const TensorEntry&) = default;
};

class TensorContainer {
public:
    /// Throws InputError on a duplicate name.
    void add(TensorEntry entry);
    const TensorEntry* find(const std::string& name) const;
    /// Throws IoError when missing.
    const TensorEntry& at(const std::string& name) const;
    const std::vector<TensorEntry>& entries() const { return entries_; }

    friend bool operator==(const TensorContainer&, const TensorContainer&) = default;

private:
    std::vector<TensorEntry> entries_;
};

std::vector<std::uint8_t> encode(const TensorContainer& c);
TensorContainer decode_tensor_container(std::span<const std::uint8_t> bytes);
void write_tensor_container(const TensorContainer& c, const std::filesystem::path& path);
TensorContainer read_tensor_container(const std::filesystem::path& path);

// ------------------------------------------------------- sparse container
//
// "S2SP" | u32 version | u64 rows | u64 cols | u64 nnz | u64 row_offsets[rows+1] |
// u64 col_indices[nnz] | f64 values[nnz]; little-endian.

std::vector<std::uint8_t> encode(const SparseOperator& op);
SparseOperator decode_sparse_container(std::span<const std::uint8_t> bytes);
void write_sparse_container(const SparseOperator& op, const std::filesystem::path& path);
SparseOperator read_sparse_container(const std::filesystem::path& path);

/// Mesh as a tensor container: "vertices" (n x 3, f64), "faces" (F x 3, i64),
/// "parent_edges" (n x 2, i64, -1 where absent).
TensorContainer mesh_container(const IcoMesh& mesh);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// --------------------------------------------------------------- JSON

nlohmann::json to_json(const ResampleSpec& r);
ResampleSpec resample_from_json(const nlohmann::json& j, const ResampleSpec& defaults = {});
nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j, const ModelSpec& defaults = {});
nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& defaults = {});
/// class_names may be empty (entries are then keyed "class<k>").
nlohmann::json to_json(const MetricReport& r, const std::vector<std::string>& class_names = {});
nlohmann::json to_json(const EpochRecord& r);

struct ExperimentConfig {
    ModelSpec model;
    TrainConfig train;
};

/// {"model": {...}, "train": {...}, "resample": {...}}; unknown keys rejected.
ExperimentConfig experiment_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);

/// Full-scale Stanford 2D-3D-S experiment for the given minimum level.
ExperimentConfig stanford_experiment(int min_level);
/// Desk-scale synthetic-cap experiment (L3:5, base 8).
ExperimentConfig desk_experiment();

// --------------------------------------------------------- checkpoints

struct Checkpoint {
    ModelSpec spec;
    ModelState state;
};

/// One entry per parameter array (named as the parameter) plus "__manifest__"
/// holding the model spec and layer names/shapes as JSON text.
void save_checkpoint(const Model& model, const std::filesystem::path& path, DType dtype = DType::f64);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ------------------------------------------------------------ manifests

struct DatasetManifest {
    int schema_version = 1;
    int level = 5;
    int n_classes = 0;
    std::vector<std::string> channel_names;
    std::vector<std::string> class_names;
    std::map<std::string, std::vector<std::filesystem::path>> splits;
    std::vector<double> class_weights;
    std::filesystem::path base_dir;

    std::filesystem::path resolve(const std::filesystem::path& p) const;
};

/// Validates structure and that every referenced sample file exists.
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);

/// Loads every sample of a split. Rejects samples whose vertex count does not
/// match the manifest level, or whose channels/labels disagree with it.
Dataset load_split(const DatasetManifest& m, const std::string& split);

/// Writes samples as "<prefix>_<index>.s2tn" files under dir; returns paths
/// relative to dir.
std::vector<std::filesystem::path> write_samples(const Dataset& data, const std::filesystem::path& dir,
                                                 const std::string& prefix);

/// Class names of the 13-class Stanford 2D-3D-S task, in report order.
const std::vector<std::string>& stanford_class_names();

} // namespace s2fpn
