#include "taskres/embedding_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "taskres/errors.hpp"

namespace taskres {

namespace {

using nlohmann::json;

constexpr double kZeroNormTolerance = 1e-12;

std::vector<std::uint8_t> read_all_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(size);
    if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!in) throw IoError("short read on " + path.string());
    return bytes;
}

void write_all_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    if (!bytes.empty()) {
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
    }
    if (!out) throw IoError("write failed on " + path.string());
}

std::uint32_t load_u32_le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void store_u32_le(std::uint8_t* p, std::uint32_t v) {
    p[0] = static_cast<std::uint8_t>(v);
    p[1] = static_cast<std::uint8_t>(v >> 8);
    p[2] = static_cast<std::uint8_t>(v >> 16);
    p[3] = static_cast<std::uint8_t>(v >> 24);
}

std::uint64_t load_u64_le(const std::uint8_t* p) {
    return static_cast<std::uint64_t>(load_u32_le(p)) |
           (static_cast<std::uint64_t>(load_u32_le(p + 4)) << 32);
}

void store_u64_le(std::uint8_t* p, std::uint64_t v) {
    store_u32_le(p, static_cast<std::uint32_t>(v));
    store_u32_le(p + 4, static_cast<std::uint32_t>(v >> 32));
}

void check_payload_size(const std::filesystem::path& path, std::size_t actual,
                        std::size_t expected) {
    if (actual != expected) {
        throw ValidationError("payload " + path.string() + " holds " + std::to_string(actual) +
                              " bytes, manifest expects " + std::to_string(expected));
    }
}

Matrix read_matrix_f32(const std::filesystem::path& path, std::size_t rows, std::size_t cols) {
    const std::vector<float> values = read_f32_file(path, rows * cols);
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < values.size(); ++i) m.data[i] = static_cast<double>(values[i]);
    return m;
}

void write_matrix_f32(const std::filesystem::path& path, const Matrix& m) {
    std::vector<float> values(m.data.size());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<float>(m.data[i]);
    write_f32_file(path, values);
}

}  // namespace

std::vector<float> read_f32_file(const std::filesystem::path& path, std::size_t count) {
    const auto bytes = read_all_bytes(path);
    check_payload_size(path, bytes.size(), count * 4);
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t u = load_u32_le(bytes.data() + i * 4);
        float f;
        std::memcpy(&f, &u, 4);
        values[i] = f;
    }
    return values;
}

void write_f32_file(const std::filesystem::path& path, const std::vector<float>& values) {
    std::vector<std::uint8_t> bytes(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint32_t u;
        std::memcpy(&u, &values[i], 4);
        store_u32_le(bytes.data() + i * 4, u);
    }
    write_all_bytes(path, bytes);
}

std::vector<double> read_f64_file(const std::filesystem::path& path, std::size_t count) {
    const auto bytes = read_all_bytes(path);
    check_payload_size(path, bytes.size(), count * 8);
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t u = load_u64_le(bytes.data() + i * 8);
        double d;
        std::memcpy(&d, &u, 8);
        values[i] = d;
    }
    return values;
}

void write_f64_file(const std::filesystem::path& path, const std::vector<double>& values) {
    std::vector<std::uint8_t> bytes(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t u;
        std::memcpy(&u, &values[i], 8);
        store_u64_le(bytes.data() + i * 8, u);
    }
    write_all_bytes(path, bytes);
}

std::vector<std::uint32_t> read_u32_file(const std::filesystem::path& path, std::size_t count) {
    const auto bytes = read_all_bytes(path);
    check_payload_size(path, bytes.size(), count * 4);
    std::vector<std::uint32_t> values(count);
    for (std::size_t i = 0; i < count; ++i) values[i] = load_u32_le(bytes.data() + i * 4);
    return values;
}

void write_u32_file(const std::filesystem::path& path, const std::vector<std::uint32_t>& values) {
    std::vector<std::uint8_t> bytes(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) store_u32_le(bytes.data() + i * 4, values[i]);
    write_all_bytes(path, bytes);
}

void validate_bundle(const Bundle& bundle) {
    const auto& mf = bundle.manifest;
    if (mf.num_classes < 1) throw ValidationError("manifest: num_classes must be >= 1");
    if (mf.dim < 2) throw ValidationError("manifest: dim must be >= 2");
    if (mf.class_names.size() != mf.num_classes) {
        throw ValidationError("manifest: class_names length " +
                              std::to_string(mf.class_names.size()) + " != num_classes " +
                              std::to_string(mf.num_classes));
    }
    if (!(mf.temperature > 0.0)) throw ValidationError("manifest: temperature must be > 0");

    if (bundle.base.rows != mf.num_classes || bundle.base.cols != mf.dim) {
        throw ValidationError("base classifier is " + std::to_string(bundle.base.rows) + "x" +
                              std::to_string(bundle.base.cols) + ", manifest says " +
                              std::to_string(mf.num_classes) + "x" + std::to_string(mf.dim));
    }
    if (!all_finite(bundle.base)) throw ValidationError("base classifier has non-finite values");

    for (const auto& [name, split] : bundle.splits) {
        const auto it = mf.splits.find(name);
        if (it == mf.splits.end()) throw ValidationError("split '" + name + "' missing from manifest");
        const auto& emb = split.embeddings;
        if (emb.rows != it->second.rows || emb.cols != mf.dim) {
            throw ValidationError("split '" + name + "' is " + std::to_string(emb.rows) + "x" +
                                  std::to_string(emb.cols) + ", manifest says " +
                                  std::to_string(it->second.rows) + "x" + std::to_string(mf.dim));
        }
        if (!all_finite(emb)) throw ValidationError("split '" + name + "' has non-finite values");
        if (split.labels.size() != emb.rows) {
            throw ValidationError("split '" + name + "' has " + std::to_string(split.labels.size()) +
                                  " labels for " + std::to_string(emb.rows) + " rows");
        }
        for (std::size_t i = 0; i < split.labels.size(); ++i) {
            const std::int32_t label = split.labels[i];
            if (label < 0 || static_cast<std::size_t>(label) >= mf.num_classes) {
                throw ValidationError("split '" + name + "' row " + std::to_string(i) +
                                      " has label " + std::to_string(label) + ", valid range is [0, " +
                                      std::to_string(mf.num_classes) + ")");
            }
        }
    }
    for (const auto& [name, info] : mf.splits) {
        (void)info;
        if (!bundle.splits.count(name)) {
            throw ValidationError("manifest lists split '" + name + "' but bundle has no data for it");
        }
    }
}

Bundle read_bundle(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open " + manifest_path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("manifest.json parse error: " + std::string(e.what()));
    }

    Bundle bundle;
    try {
        bundle.manifest.dim = j.at("dim").get<std::size_t>();
        bundle.manifest.num_classes = j.at("num_classes").get<std::size_t>();
        bundle.manifest.class_names = j.at("class_names").get<std::vector<std::string>>();
        bundle.manifest.temperature = j.at("temperature").get<double>();
        for (const auto& [name, sj] : j.at("splits").items()) {
            SplitInfo info;
            info.embeddings_file = sj.at("embeddings").get<std::string>();
            info.labels_file = sj.at("labels").get<std::string>();
            info.rows = sj.at("rows").get<std::size_t>();
            bundle.manifest.splits[name] = info;
        }
    } catch (const json::exception& e) {
        throw ValidationError("manifest.json schema error: " + std::string(e.what()));
    }

    const auto& mf = bundle.manifest;
    bundle.base = read_matrix_f32(dir / "base.f32", mf.num_classes, mf.dim);
    for (const auto& [name, info] : mf.splits) {
        LabeledEmbeddings split;
        split.embeddings = read_matrix_f32(dir / info.embeddings_file, info.rows, mf.dim);
        const auto raw_labels = read_u32_file(dir / info.labels_file, info.rows);
        split.labels.reserve(raw_labels.size());
        for (std::uint32_t v : raw_labels) split.labels.push_back(static_cast<std::int32_t>(v));
        bundle.splits[name] = std::move(split);
    }

    validate_bundle(bundle);
    return bundle;
}

void write_bundle(const std::filesystem::path& dir, const Bundle& bundle) {
    validate_bundle(bundle);

    std::filesystem::create_directories(dir);
    const auto& mf = bundle.manifest;

    json j;
    j["dim"] = mf.dim;
    j["num_classes"] = mf.num_classes;
    j["class_names"] = mf.class_names;
    j["temperature"] = mf.temperature;
    json splits = json::object();
    for (const auto& [name, info] : mf.splits) {
        splits[name] = {{"embeddings", info.embeddings_file},
                        {"labels", info.labels_file},
                        {"rows", info.rows}};
    }
    j["splits"] = splits;

    {
        std::ofstream out(dir / "manifest.json");
        if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
        out << j.dump(2) << "\n";
    }

    write_matrix_f32(dir / "base.f32", bundle.base);
    for (const auto& [name, info] : mf.splits) {
        const auto& split = bundle.splits.at(name);
        write_matrix_f32(dir / info.embeddings_file, split.embeddings);
        std::vector<std::uint32_t> raw_labels(split.labels.size());
        for (std::size_t i = 0; i < raw_labels.size(); ++i) {
            raw_labels[i] = static_cast<std::uint32_t>(split.labels[i]);
        }
        write_u32_file(dir / info.labels_file, raw_labels);
    }
}

Matrix l2_normalize(const Matrix& m) {
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double norm = norm2(m.row(i));
        if (norm <= kZeroNormTolerance) {
            throw NumericError("l2_normalize: row " + std::to_string(i) + " has norm " +
                               std::to_string(norm));
        }
        auto row = out.row(i);
        for (double& v : row) v /= norm;
    }
    return out;
}

Bundle load_bundle_normalized(const std::filesystem::path& dir) {
    Bundle bundle = read_bundle(dir);
    bundle.base = l2_normalize(bundle.base);
    for (auto& [name, split] : bundle.splits) {
        (void)name;
        split.embeddings = l2_normalize(split.embeddings);
    }
    return bundle;
}

std::uint64_t fnv1a(const void* data, std::size_t size) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::uint64_t fnv1a_file(const std::filesystem::path& path) {
    const auto bytes = read_all_bytes(path);
    return fnv1a(bytes.data(), bytes.size());
}

std::uint64_t hash_matrix(const Matrix& m) {
    return fnv1a(m.data.data(), m.data.size() * sizeof(double));
}

}  // namespace taskres
