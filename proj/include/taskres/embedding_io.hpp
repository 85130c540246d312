#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "taskres/matrix.hpp"

namespace taskres {

/// Embeddings with one integer class label per row.
struct LabeledEmbeddings {
    Matrix embeddings;
    std::vector<std::int32_t> labels;
};

struct SplitInfo {
    std::string embeddings_file;
    std::string labels_file;
    std::size_t rows = 0;
};

struct BundleManifest {
    std::size_t dim = 0;
    std::size_t num_classes = 0;
    std::vector<std::string> class_names;
    double temperature = 0.01;  // CLIP's learned logit scale is ~100, i.e. τ ~ 0.01
    std::map<std::string, SplitInfo> splits;
};

/// A base classifier plus labeled embedding splits, as stored on disk:
/// manifest.json, base.f32, <split>.f32, <split>.labels.u32. Payloads are
/// headerless little-endian float32 / uint32, row-major; shapes live in the
/// manifest.
struct Bundle {
    BundleManifest manifest;
    Matrix base;  // num_classes × dim
    std::map<std::string, LabeledEmbeddings> splits;
};

/// Raw validated read: payload floats are widened to double bit-exactly, no
/// normalization. Throws IoError on missing/short files, ValidationError on
/// manifest/payload mismatches, non-finite values, or out-of-range labels.
Bundle read_bundle(const std::filesystem::path& dir);

/// Validates invariants, then writes manifest.json plus payload files.
/// Round trip through read_bundle reproduces the float payloads bit-exactly.
void write_bundle(const std::filesystem::path& dir, const Bundle& bundle);

/// read_bundle + L2 normalization of the base classifier and every split's
/// embeddings. This is the loader the training/eval pipeline uses: with all
/// rows on the unit sphere, cosine similarity reduces to a dot product.
Bundle load_bundle_normalized(const std::filesystem::path& dir);

/// Row-wise L2 normalization. Throws NumericError if any row norm <= 1e-12.
Matrix l2_normalize(const Matrix& m);

void validate_bundle(const Bundle& bundle);

/// FNV-1a 64-bit, used for payload fingerprints in run manifests and the
/// frozen-base contract checks.
std::uint64_t fnv1a(const void* data, std::size_t size);
std::uint64_t fnv1a_file(const std::filesystem::path& path);
std::uint64_t hash_matrix(const Matrix& m);

/// Little-endian raw array I/O shared by bundles and parameter sidecars.
std::vector<float> read_f32_file(const std::filesystem::path& path, std::size_t count);
void write_f32_file(const std::filesystem::path& path, const std::vector<float>& values);
std::vector<double> read_f64_file(const std::filesystem::path& path, std::size_t count);
void write_f64_file(const std::filesystem::path& path, const std::vector<double>& values);
std::vector<std::uint32_t> read_u32_file(const std::filesystem::path& path, std::size_t count);
void write_u32_file(const std::filesystem::path& path, const std::vector<std::uint32_t>& values);

}  // namespace taskres
