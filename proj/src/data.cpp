#include "splitkit/data.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "splitkit/digest.hpp"
#include "splitkit/errors.hpp"
#include "splitkit/rng.hpp"

namespace splitkit {

std::size_t Dataset::samples() const {
    return images.rank() == 0 ? 0 : images.dim(0);
}

TensorSpec Dataset::input_spec() const {
    if (images.rank() < 2) {
        throw ShapeError("dataset images need a batch dimension plus sample "
                         "dimensions");
    }
    std::vector<std::size_t> shape(images.shape().begin() + 1,
                                   images.shape().end());
    return TensorSpec{shape, images.dtype()};
}

void Dataset::validate() const {
    if (samples() == 0) throw InvalidArgument("dataset is empty");
    if (labels.size() != samples()) {
        throw InvalidArgument("dataset has " + std::to_string(samples()) +
                              " images but " + std::to_string(labels.size()) +
                              " labels");
    }
    if (task.num_classes < 2) {
        throw InvalidArgument("task needs at least 2 classes");
    }
    for (int label : labels) {
        if (label < 0 ||
            static_cast<std::size_t>(label) >= task.num_classes) {
            throw InvalidArgument("label " + std::to_string(label) +
                                  " outside task range of " +
                                  std::to_string(task.num_classes));
        }
    }
}

namespace {

void draw_block(Tensor& images, std::size_t sample, std::size_t size,
                std::size_t top, std::size_t left, std::size_t extent,
                double value) {
    double* img = images.data() + sample * size * size;
    for (std::size_t r = top; r < top + extent && r < size; ++r) {
        for (std::size_t c = left; c < left + extent && c < size; ++c) {
            img[r * size + c] = value;
        }
    }
}

std::vector<int> balanced_labels(std::size_t n, std::size_t classes,
                                 Rng& rng) {
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = static_cast<int>(i % classes);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = labels[order[i]];
    return out;
}

std::string synthetic_params_string(const SyntheticParams& p) {
    std::ostringstream os;
    os << "n=" << p.n << ";user_classes=" << p.user_classes
       << ";attribute=" << p.attribute << ";decodability=" << p.decodability
       << ";image_size=" << p.image_size << ";overlap=" << (p.overlap ? 1 : 0);
    return os.str();
}

}  // namespace

PairedDatasets generate_synthetic(std::uint64_t seed,
                                  const SyntheticParams& params) {
    if (params.n < 200) {
        throw InvalidArgument("synthetic generator needs n >= 200");
    }
    if (params.user_classes < 2 || params.user_classes > 16) {
        throw InvalidArgument("user_classes must lie in [2, 16]");
    }
    if (params.attribute != "corner_glyph" && params.attribute != "stripe") {
        throw InvalidArgument("unknown attacker attribute: " +
                              params.attribute);
    }
    if (params.decodability > 1.0 || params.decodability < 0.0) {
        throw InvalidArgument("decodability must lie in [0, 1]");
    }
    if (params.decodability < 0.5) {
        throw InvalidArgument(
            "unattainable decodability: a probe cannot be driven below 0.5");
    }
    const std::size_t size = params.image_size;
    if (size < 20) {
        throw InvalidArgument("image_size must be at least 20");
    }

    Rng rng(derive_seed(seed, "synthetic"));
    Rng label_rng_u(derive_seed(seed, "labels_user"));
    Rng label_rng_a(derive_seed(seed, "labels_attacker"));

    const std::vector<int> user_labels =
        balanced_labels(params.n, params.user_classes, label_rng_u);
    const std::vector<int> attacker_labels =
        balanced_labels(params.n, 2, label_rng_a);

    Tensor images(TensorSpec{{params.n, 1, size, size}, Dtype::Uint8});

    // User glyph: a bright 5x5 block on a 4x4 grid inside the central
    // region.  The attribute zone is the top-left corner (disjoint from the
    // central region) unless overlap is requested.
    const std::size_t grid = 4;
    const std::size_t block = 5;
    const std::size_t margin = 8;
    const std::size_t span = size - 2 * margin - block;
    const std::size_t glyph_size = 5;

    for (std::size_t i = 0; i < params.n; ++i) {
        double* img = images.data() + i * size * size;
        for (std::size_t p = 0; p < size * size; ++p) {
            img[p] = std::floor(rng.uniform(0.0, 40.0));
        }

        const int uc = user_labels[i];
        const std::size_t gr = static_cast<std::size_t>(uc) / grid;
        const std::size_t gc = static_cast<std::size_t>(uc) % grid;
        const std::ptrdiff_t jr = static_cast<std::ptrdiff_t>(
                                      rng.uniform_int(3)) -
                                  1;
        const std::ptrdiff_t jc = static_cast<std::ptrdiff_t>(
                                      rng.uniform_int(3)) -
                                  1;
        const std::size_t top = static_cast<std::size_t>(
            static_cast<std::ptrdiff_t>(margin + gr * span / (grid - 1)) + jr);
        const std::size_t left = static_cast<std::size_t>(
            static_cast<std::ptrdiff_t>(margin + gc * span / (grid - 1)) + jc);
        const double amplitude = std::floor(rng.uniform(180.0, 230.0));
        draw_block(images, i, size, top, left, block, amplitude);

        // Rendered attribute agrees with the attacker label with
        // probability decodability.
        const bool flip = rng.uniform() >= params.decodability;
        const int rendered = flip ? 1 - attacker_labels[i]
                                  : attacker_labels[i];
        const double glyph_value = std::floor(rng.uniform(200.0, 240.0));
        const std::size_t zone_top = params.overlap ? margin + 2 : 1;
        const std::size_t zone_left = params.overlap ? margin + 2 : 1;
        if (params.attribute == "corner_glyph") {
            if (rendered == 1) {
                draw_block(images, i, size, zone_top, zone_left, glyph_size,
                           glyph_value);
            }
        } else {  // stripe: horizontal (0) vs vertical (1) bar
            if (rendered == 1) {
                for (std::size_t r = 0; r < glyph_size; ++r) {
                    img[(zone_top + r) * size + zone_left + glyph_size / 2] =
                        glyph_value;
                }
            } else {
                for (std::size_t c = 0; c < glyph_size; ++c) {
                    img[(zone_top + glyph_size / 2) * size + zone_left + c] =
                        glyph_value;
                }
            }
        }
    }

    SourceInfo source;
    source.kind = "synthetic";
    source.seed = seed;
    source.params = synthetic_params_string(params);

    PairedDatasets out;
    out.user = Dataset{"synthetic_user", images, user_labels,
                       TaskSpec{TaskKind::User, params.user_classes,
                                "glyph position classification"},
                       source};
    out.attacker =
        Dataset{"synthetic_attacker", images, attacker_labels,
                TaskSpec{TaskKind::Attacker, 2,
                         "incidental attribute (" + params.attribute + ")"},
                source};
    out.user.validate();
    out.attacker.validate();
    return out;
}

double linear_probe_accuracy(const Dataset& dataset, std::uint64_t seed) {
    dataset.validate();
    if (dataset.task.num_classes != 2) {
        throw InvalidArgument("linear probe expects a binary task");
    }
    const std::size_t n = dataset.samples();
    const std::size_t dim = dataset.images.numel() / n;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, "probe_split"));
    rng.shuffle(order);
    const std::size_t train_n = n - n / 5;

    const double scale = dataset.images.dtype() == Dtype::Uint8 ? 255.0 : 1.0;
    Eigen::MatrixXd x(train_n, dim + 1);
    Eigen::VectorXd y(train_n);
    for (std::size_t i = 0; i < train_n; ++i) {
        const double* img = dataset.images.data() + order[i] * dim;
        for (std::size_t j = 0; j < dim; ++j) x(i, j) = img[j] / scale;
        x(i, dim) = 1.0;
        y(i) = dataset.labels[order[i]] == 1 ? 1.0 : -1.0;
    }

    Eigen::MatrixXd gram = x.transpose() * x;
    gram.diagonal().array() += 1e-3 * static_cast<double>(train_n);
    Eigen::VectorXd w = gram.ldlt().solve(x.transpose() * y);

    std::size_t correct = 0;
    const std::size_t val_n = n - train_n;
    for (std::size_t i = train_n; i < n; ++i) {
        const double* img = dataset.images.data() + order[i] * dim;
        double score = w(dim);
        for (std::size_t j = 0; j < dim; ++j) score += w(j) * img[j] / scale;
        const int pred = score >= 0.0 ? 1 : 0;
        if (pred == dataset.labels[order[i]]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(val_n);
}

double label_correlation(const std::vector<int>& a,
                         const std::vector<int>& b) {
    if (a.size() != b.size() || a.empty()) {
        throw InvalidArgument("correlation needs equal nonempty sequences");
    }
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va == 0.0 || vb == 0.0) {
        throw NumericError("correlation undefined for constant labels");
    }
    return cov / std::sqrt(va * vb);
}

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be_u32(std::istream& in, const std::string& context) {
    std::uint8_t buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in) throw FormatError("idx: truncated " + context);
    return (std::uint32_t{buf[0]} << 24) | (std::uint32_t{buf[1]} << 16) |
           (std::uint32_t{buf[2]} << 8) | std::uint32_t{buf[3]};
}

void write_be_u32(std::ostream& out, std::uint32_t v) {
    const std::uint8_t buf[4] = {
        static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
        static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
    out.write(reinterpret_cast<const char*>(buf), 4);
}

std::vector<std::uint8_t> read_payload(std::istream& in, std::size_t count,
                                       const std::string& context) {
    std::vector<std::uint8_t> data(count);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in.gcount()) != count) {
        throw FormatError("idx: payload shorter than declared in " + context);
    }
    return data;
}

}  // namespace

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path, const TaskSpec& task) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw Error("cannot open idx images: " + images_path);
    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw Error("cannot open idx labels: " + labels_path);

    if (read_be_u32(imgs, "image magic") != kImagesMagic) {
        throw FormatError("idx: bad image magic in " + images_path);
    }
    const std::size_t n = read_be_u32(imgs, "image count");
    const std::size_t rows = read_be_u32(imgs, "image rows");
    const std::size_t cols = read_be_u32(imgs, "image cols");
    if (n == 0 || rows == 0 || cols == 0) {
        throw FormatError("idx: zero dimension in " + images_path);
    }
    auto image_bytes = read_payload(imgs, n * rows * cols, images_path);

    if (read_be_u32(labs, "label magic") != kLabelsMagic) {
        throw FormatError("idx: bad label magic in " + labels_path);
    }
    const std::size_t label_n = read_be_u32(labs, "label count");
    if (label_n != n) {
        throw FormatError("idx: " + std::to_string(n) + " images vs " +
                          std::to_string(label_n) + " labels");
    }
    auto label_bytes = read_payload(labs, label_n, labels_path);

    Dataset out;
    out.name = "idx";
    out.images = Tensor(TensorSpec{{n, 1, rows, cols}, Dtype::Uint8});
    for (std::size_t i = 0; i < image_bytes.size(); ++i) {
        out.images[i] = image_bytes[i];
    }
    out.labels.assign(label_bytes.begin(), label_bytes.end());
    out.task = task;
    out.source.kind = "idx";
    out.source.images_digest = sha256_hex(image_bytes);
    out.source.labels_digest = sha256_hex(label_bytes);
    out.validate();
    return out;
}

void save_idx(const Dataset& dataset, const std::string& images_path,
              const std::string& labels_path) {
    dataset.validate();
    const auto& shape = dataset.images.shape();
    if (shape.size() != 4 || shape[1] != 1) {
        throw InvalidArgument(
            "idx export expects n x 1 x rows x cols uint8 images");
    }

    std::ofstream imgs(images_path, std::ios::binary | std::ios::trunc);
    if (!imgs) throw Error("cannot open idx images for writing");
    write_be_u32(imgs, kImagesMagic);
    write_be_u32(imgs, static_cast<std::uint32_t>(shape[0]));
    write_be_u32(imgs, static_cast<std::uint32_t>(shape[2]));
    write_be_u32(imgs, static_cast<std::uint32_t>(shape[3]));
    const auto bytes = dataset.images.to_bytes();
    imgs.write(reinterpret_cast<const char*>(bytes.data()),
               static_cast<std::streamsize>(bytes.size()));

    std::ofstream labs(labels_path, std::ios::binary | std::ios::trunc);
    if (!labs) throw Error("cannot open idx labels for writing");
    write_be_u32(labs, kLabelsMagic);
    write_be_u32(labs, static_cast<std::uint32_t>(dataset.labels.size()));
    for (int label : dataset.labels) {
        const auto byte = static_cast<std::uint8_t>(label);
        labs.write(reinterpret_cast<const char*>(&byte), 1);
    }
}

Dataset subset(const Dataset& dataset,
               const std::vector<std::size_t>& indices) {
    const std::size_t dim = dataset.images.numel() / dataset.samples();
    std::vector<std::size_t> shape = dataset.images.shape();
    shape[0] = indices.size();
    Dataset out;
    out.name = dataset.name;
    out.images = Tensor(TensorSpec{shape, dataset.images.dtype()});
    out.labels.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const double* src = dataset.images.data() + indices[i] * dim;
        std::copy(src, src + dim, out.images.data() + i * dim);
        out.labels.push_back(dataset.labels[indices[i]]);
    }
    out.task = dataset.task;
    out.source = dataset.source;
    return out;
}

TrainValSplit split_train_val(const Dataset& dataset, double val_fraction,
                              std::uint64_t seed) {
    dataset.validate();
    if (val_fraction <= 0.0 || val_fraction >= 0.5) {
        throw InvalidArgument("val_fraction must lie in (0, 0.5)");
    }

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < dataset.samples(); ++i) {
        by_class[dataset.labels[i]].push_back(i);
    }
    for (const auto& [label, members] : by_class) {
        if (members.size() < 2) {
            throw InvalidArgument("class " + std::to_string(label) +
                                  " has fewer than 2 samples");
        }
    }

    Rng rng(derive_seed(seed, "train_val_split"));
    std::vector<std::size_t> train_idx, val_idx;
    for (auto& [label, members] : by_class) {
        rng.shuffle(members);
        const auto val_count = static_cast<std::size_t>(std::llround(
            static_cast<double>(members.size()) * val_fraction));
        const std::size_t clamped =
            std::min(std::max<std::size_t>(val_count, 1), members.size() - 1);
        for (std::size_t i = 0; i < members.size(); ++i) {
            (i < clamped ? val_idx : train_idx).push_back(members[i]);
        }
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());

    TrainValSplit split{subset(dataset, train_idx), subset(dataset, val_idx)};
    split.train.name = dataset.name + "_train";
    split.val.name = dataset.name + "_val";
    return split;
}

Tensor assemble_batch(const Dataset& dataset,
                      const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw InvalidArgument("empty batch request");
    const std::size_t dim = dataset.images.numel() / dataset.samples();
    std::vector<std::size_t> shape = dataset.images.shape();
    shape[0] = indices.size();
    Tensor batch(TensorSpec{shape, Dtype::Float64});
    const double scale = dataset.images.dtype() == Dtype::Uint8 ? 255.0 : 1.0;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= dataset.samples()) {
            throw InvalidArgument("batch index out of range");
        }
        const double* src = dataset.images.data() + indices[i] * dim;
        double* dst = batch.data() + i * dim;
        for (std::size_t j = 0; j < dim; ++j) dst[j] = src[j] / scale;
    }
    return batch;
}

std::vector<int> gather_labels(const Dataset& dataset,
                               const std::vector<std::size_t>& indices) {
    std::vector<int> out;
    out.reserve(indices.size());
    for (auto idx : indices) out.push_back(dataset.labels[idx]);
    return out;
}

}  // namespace splitkit
