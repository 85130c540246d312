#include "taskres/synth.hpp"

#include <cmath>
#include <string>

#include "taskres/errors.hpp"
#include "taskres/rng.hpp"

namespace taskres {

namespace {

void normalize_row_inplace(std::span<double> row) {
    const double norm = norm2(row);
    if (norm <= 1e-12) throw NumericError("synth: degenerate zero-norm draw");
    for (double& v : row) v /= norm;
}

Matrix draw_images(const Matrix& directions, std::size_t per_class, double noise,
                   SplitMix64& stream) {
    const std::size_t num_classes = directions.rows;
    const std::size_t dim = directions.cols;
    Matrix images(num_classes * per_class, dim);
    std::size_t row = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
        const auto dir = directions.row(k);
        for (std::size_t i = 0; i < per_class; ++i, ++row) {
            auto out = images.row(row);
            for (std::size_t j = 0; j < dim; ++j) {
                out[j] = dir[j] + noise * stream.next_gaussian();
            }
            normalize_row_inplace(out);
        }
    }
    return images;
}

std::vector<std::int32_t> class_labels(std::size_t num_classes, std::size_t per_class) {
    std::vector<std::int32_t> labels;
    labels.reserve(num_classes * per_class);
    for (std::size_t k = 0; k < num_classes; ++k) {
        labels.insert(labels.end(), per_class, static_cast<std::int32_t>(k));
    }
    return labels;
}

}  // namespace

Bundle generate(const SynthSpec& spec) {
    if (spec.num_classes < 2) throw ValidationError("synth: num_classes must be >= 2");
    if (spec.dim < 2) throw ValidationError("synth: dim must be >= 2");
    if (spec.train_per_class < 1 || spec.test_per_class < 1) {
        throw ValidationError("synth: per-class counts must be >= 1");
    }
    if (spec.shift < 0.0 || spec.sample_noise < 0.0) {
        throw ValidationError("synth: shift and sample_noise must be >= 0");
    }
    if (!(spec.temperature > 0.0)) throw ValidationError("synth: temperature must be > 0");

    auto directions_stream = SplitMix64::stream(spec.seed, kSynthStreamDirections);
    auto base_stream = SplitMix64::stream(spec.seed, kSynthStreamBaseNoise);
    auto train_stream = SplitMix64::stream(spec.seed, kSynthStreamTrainNoise);
    auto test_stream = SplitMix64::stream(spec.seed, kSynthStreamTestNoise);

    Matrix directions(spec.num_classes, spec.dim);
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
        auto row = directions.row(k);
        for (double& v : row) v = directions_stream.next_gaussian();
        normalize_row_inplace(row);
    }

    // Base noise is always drawn so the stream layout does not depend on the
    // shift value; shift = 0 copies the true directions exactly. The shift
    // scales a unit-norm perturbation direction, so it acts as an angular
    // scale (angle ≈ atan(shift)) independent of D; sample_noise below is a
    // per-coordinate spread instead.
    Matrix base(spec.num_classes, spec.dim);
    std::vector<double> perturbation(spec.dim);
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
        const auto dir = directions.row(k);
        auto row = base.row(k);
        for (std::size_t j = 0; j < spec.dim; ++j) {
            perturbation[j] = base_stream.next_gaussian();
        }
        if (spec.shift == 0.0) {
            std::copy(dir.begin(), dir.end(), row.begin());
            continue;
        }
        normalize_row_inplace(perturbation);
        for (std::size_t j = 0; j < spec.dim; ++j) {
            row[j] = dir[j] + spec.shift * perturbation[j];
        }
        normalize_row_inplace(row);
    }

    Bundle bundle;
    bundle.manifest.dim = spec.dim;
    bundle.manifest.num_classes = spec.num_classes;
    bundle.manifest.temperature = spec.temperature;
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
        bundle.manifest.class_names.push_back("class_" + std::to_string(k));
    }
    bundle.base = std::move(base);

    LabeledEmbeddings train;
    train.embeddings = draw_images(directions, spec.train_per_class, spec.sample_noise, train_stream);
    train.labels = class_labels(spec.num_classes, spec.train_per_class);
    bundle.manifest.splits["train"] =
        SplitInfo{"train.f32", "train.labels.u32", train.embeddings.rows};
    bundle.splits["train"] = std::move(train);

    LabeledEmbeddings test;
    test.embeddings = draw_images(directions, spec.test_per_class, spec.sample_noise, test_stream);
    test.labels = class_labels(spec.num_classes, spec.test_per_class);
    bundle.manifest.splits["test"] = SplitInfo{"test.f32", "test.labels.u32", test.embeddings.rows};
    bundle.splits["test"] = std::move(test);

    validate_bundle(bundle);
    return bundle;
}

std::vector<Bundle> difficulty_ladder(const SynthSpec& base_spec, std::span<const double> shifts) {
    if (shifts.empty()) throw ValidationError("difficulty_ladder: no shifts given");
    for (std::size_t i = 0; i < shifts.size(); ++i) {
        if (shifts[i] < 0.0) throw ValidationError("difficulty_ladder: shifts must be >= 0");
        if (i > 0 && shifts[i] <= shifts[i - 1]) {
            throw ValidationError("difficulty_ladder: shifts must be strictly increasing");
        }
    }
    std::vector<Bundle> bundles;
    bundles.reserve(shifts.size());
    for (double shift : shifts) {
        SynthSpec spec = base_spec;
        spec.shift = shift;
        bundles.push_back(generate(spec));
    }
    return bundles;
}

}  // namespace taskres
