#include "ftlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace ftlab {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::uint32_t read_be32(std::istream& is, const char* what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) fail(std::string(what) + ": truncated header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

// 5x7 glyph bitmaps for digits 0-9, rows top to bottom.
constexpr const char* kDigitGlyphs[10][7] = {
    {"01110", "10001", "10011", "10101", "11001", "10001", "01110"},
    {"00100", "01100", "00100", "00100", "00100", "00100", "01110"},
    {"01110", "10001", "00001", "00010", "00100", "01000", "11111"},
    {"11111", "00010", "00100", "00010", "00001", "10001", "01110"},
    {"00010", "00110", "01010", "10010", "11111", "00010", "00010"},
    {"11111", "10000", "11110", "00001", "00001", "10001", "01110"},
    {"00110", "01000", "10000", "11110", "10001", "10001", "01110"},
    {"11111", "00001", "00010", "00100", "01000", "01000", "01000"},
    {"01110", "10001", "10001", "01110", "10001", "10001", "01110"},
    {"01110", "10001", "10001", "01111", "00001", "00010", "01100"},
};

}  // namespace

std::vector<std::size_t> LabeledDataset::image_shape() const {
    if (images.ndim() != 4) fail("dataset: images must be [count x C x H x W]");
    return {images.extent(1), images.extent(2), images.extent(3)};
}

void LabeledDataset::validate() const {
    if (images.ndim() != 4) fail("dataset: images must be [count x C x H x W]");
    if (images.extent(0) != labels.size()) fail("dataset: image/label count mismatch");
    std::vector<std::size_t> per_class(n_classes, 0);
    for (int label : labels) {
        if (label < 0 || static_cast<std::size_t>(label) >= n_classes)
            fail("dataset: label out of range");
        ++per_class[static_cast<std::size_t>(label)];
    }
    for (std::size_t c = 0; c < n_classes; ++c)
        if (per_class[c] == 0) fail("dataset: class " + std::to_string(c) + " has no examples");
}

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) fail("load_idx: cannot open '" + images_path + "'");
    if (read_be32(imgs, "load_idx images") != 0x00000803u)
        fail("load_idx: bad magic in '" + images_path + "'");
    const std::uint32_t count = read_be32(imgs, "load_idx images");
    const std::uint32_t rows = read_be32(imgs, "load_idx images");
    const std::uint32_t cols = read_be32(imgs, "load_idx images");
    std::vector<unsigned char> pixels(static_cast<std::size_t>(count) * rows * cols);
    imgs.read(reinterpret_cast<char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
    if (imgs.gcount() != static_cast<std::streamsize>(pixels.size()))
        fail("load_idx: truncated payload in '" + images_path + "'");

    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) fail("load_idx: cannot open '" + labels_path + "'");
    if (read_be32(labs, "load_idx labels") != 0x00000801u)
        fail("load_idx: bad magic in '" + labels_path + "'");
    const std::uint32_t label_count = read_be32(labs, "load_idx labels");
    if (label_count != count)
        fail("load_idx: count mismatch between '" + images_path + "' and '" + labels_path + "'");
    std::vector<unsigned char> raw(label_count);
    labs.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (labs.gcount() != static_cast<std::streamsize>(raw.size()))
        fail("load_idx: truncated payload in '" + labels_path + "'");

    // Dense label ids in ascending order of the raw values present.
    std::map<unsigned char, int> remap;
    for (unsigned char v : raw) remap.emplace(v, 0);
    int next = 0;
    for (auto& [value, id] : remap) id = next++;

    LabeledDataset ds;
    ds.images = Tensor({count, 1, rows, cols});
    for (std::size_t i = 0; i < pixels.size(); ++i)
        ds.images[i] = static_cast<double>(pixels[i]) / 255.0;
    ds.labels.reserve(label_count);
    for (unsigned char v : raw) ds.labels.push_back(remap[v]);
    ds.n_classes = remap.size();
    ds.validate();
    return ds;
}

void save_idx(const LabeledDataset& ds, const std::string& images_path,
              const std::string& labels_path) {
    if (ds.images.extent(1) != 1) fail("save_idx: only single-channel data is supported");
    std::ofstream imgs(images_path, std::ios::binary);
    if (!imgs) fail("save_idx: cannot open '" + images_path + "'");
    write_be32(imgs, 0x00000803u);
    write_be32(imgs, static_cast<std::uint32_t>(ds.size()));
    write_be32(imgs, static_cast<std::uint32_t>(ds.images.extent(2)));
    write_be32(imgs, static_cast<std::uint32_t>(ds.images.extent(3)));
    for (std::size_t i = 0; i < ds.images.numel(); ++i) {
        const double v = std::clamp(ds.images[i], 0.0, 1.0);
        const unsigned char b = static_cast<unsigned char>(std::lround(v * 255.0));
        imgs.write(reinterpret_cast<const char*>(&b), 1);
    }
    std::ofstream labs(labels_path, std::ios::binary);
    if (!labs) fail("save_idx: cannot open '" + labels_path + "'");
    write_be32(labs, 0x00000801u);
    write_be32(labs, static_cast<std::uint32_t>(ds.size()));
    for (int label : ds.labels) {
        const unsigned char b = static_cast<unsigned char>(label);
        labs.write(reinterpret_cast<const char*>(&b), 1);
    }
}

LabeledDataset synth_blobs(std::size_t n_classes, std::size_t per_class, std::size_t image_size,
                           std::uint64_t seed, double separation) {
    if (n_classes < 2) fail("synth_blobs: need at least 2 classes");
    Rng rng(seed);
    const double cx = static_cast<double>(image_size) / 2.0;
    const double ring = static_cast<double>(image_size) * 0.32;
    // Bump radius chosen from the ring spacing so adjacent centers sit at
    // least `separation` radii apart.
    const double spacing = 2.0 * ring * std::sin(3.141592653589793 / static_cast<double>(n_classes));
    const double sigma = std::min(spacing / separation, static_cast<double>(image_size) / 6.0);

    LabeledDataset ds;
    ds.n_classes = n_classes;
    ds.images = Tensor({n_classes * per_class, 1, image_size, image_size});
    std::size_t idx = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        const double angle = 2.0 * 3.141592653589793 * static_cast<double>(c) /
                             static_cast<double>(n_classes);
        const double bx = cx + ring * std::cos(angle);
        const double by = cx + ring * std::sin(angle);
        for (std::size_t e = 0; e < per_class; ++e, ++idx) {
            const double jx = bx + rng.uniform(-1.0, 1.0);
            const double jy = by + rng.uniform(-1.0, 1.0);
            const double amp = rng.uniform(0.8, 1.0);
            double* img = ds.images.data() + idx * image_size * image_size;
            for (std::size_t y = 0; y < image_size; ++y)
                for (std::size_t x = 0; x < image_size; ++x) {
                    const double dx = static_cast<double>(x) - jx;
                    const double dy = static_cast<double>(y) - jy;
                    double v = amp * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                    v += rng.normal(0.0, 0.05);
                    img[y * image_size + x] = std::clamp(v, 0.0, 1.0);
                }
            ds.labels.push_back(static_cast<int>(c));
        }
    }
    ds.validate();
    return ds;
}

LabeledDataset synth_digits(const std::vector<int>& digits, std::size_t per_class,
                            std::size_t image_size, std::uint64_t seed) {
    if (digits.size() < 2) fail("synth_digits: need at least 2 digits");
    for (int d : digits)
        if (d < 0 || d > 9) fail("synth_digits: digit out of range");
    Rng rng(seed);
    LabeledDataset ds;
    ds.n_classes = digits.size();
    ds.images = Tensor({digits.size() * per_class, 1, image_size, image_size});
    std::size_t idx = 0;
    for (std::size_t c = 0; c < digits.size(); ++c) {
        const auto& glyph = kDigitGlyphs[digits[c]];
        for (std::size_t e = 0; e < per_class; ++e, ++idx) {
            const double scale = rng.uniform(2.0, 3.2);
            const double gw = 5.0 * scale, gh = 7.0 * scale;
            const double max_x = static_cast<double>(image_size) - gw - 2.0;
            const double max_y = static_cast<double>(image_size) - gh - 2.0;
            const double ox = rng.uniform(2.0, std::max(2.1, max_x));
            const double oy = rng.uniform(2.0, std::max(2.1, max_y));
            const double ink = rng.uniform(0.6, 1.0);
            const double noise_sd = rng.uniform(0.08, 0.18);
            double* img = ds.images.data() + idx * image_size * image_size;
            for (std::size_t y = 0; y < image_size; ++y)
                for (std::size_t x = 0; x < image_size; ++x) {
                    double v = 0.0;
                    const double gx = (static_cast<double>(x) - ox) / scale;
                    const double gy = (static_cast<double>(y) - oy) / scale;
                    if (gx >= 0.0 && gx < 5.0 && gy >= 0.0 && gy < 7.0) {
                        const int col = static_cast<int>(gx);
                        const int row = static_cast<int>(gy);
                        if (glyph[row][col] == '1') v = ink;
                    }
                    v += rng.normal(0.0, noise_sd);
                    img[y * image_size + x] = std::clamp(v, 0.0, 1.0);
                }
            ds.labels.push_back(static_cast<int>(c));
        }
    }
    ds.validate();
    return ds;
}

LabeledDataset subset(const LabeledDataset& ds, const std::vector<std::size_t>& indices) {
    const auto cshape = ds.image_shape();
    const std::size_t per = cshape[0] * cshape[1] * cshape[2];
    LabeledDataset out;
    out.n_classes = ds.n_classes;
    out.images = Tensor({indices.size(), cshape[0], cshape[1], cshape[2]});
    out.labels.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t src = indices[i];
        if (src >= ds.size()) fail("subset: index out of range");
        std::memcpy(out.images.data() + i * per, ds.images.data() + src * per,
                    per * sizeof(double));
        out.labels.push_back(ds.labels[src]);
    }
    return out;
}

Split stratified_split(const LabeledDataset& ds, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) fail("stratified_split: fraction must be in (0,1)");
    Rng rng(seed);
    std::vector<std::vector<std::size_t>> by_class(ds.n_classes);
    for (std::size_t i = 0; i < ds.size(); ++i)
        by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    std::vector<std::size_t> train_idx, holdout_idx;
    for (std::size_t c = 0; c < ds.n_classes; ++c) {
        auto& idx = by_class[c];
        rng.shuffle(idx);
        const auto take = static_cast<std::size_t>(
            std::floor(fraction * static_cast<double>(idx.size()) + 0.5));
        if (take >= idx.size())
            fail("stratified_split: class " + std::to_string(c) +
                 " is smaller than the required holdout");
        holdout_idx.insert(holdout_idx.end(), idx.begin(), idx.begin() + take);
        train_idx.insert(train_idx.end(), idx.begin() + take, idx.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(holdout_idx.begin(), holdout_idx.end());
    return {subset(ds, train_idx), subset(ds, holdout_idx)};
}

BatchSampler::BatchSampler(const LabeledDataset& ds, std::size_t batch_size, SamplerMode mode,
                           std::uint64_t seed)
    : ds_(ds), batch_size_(batch_size), mode_(mode), rng_(seed) {
    if (batch_size_ == 0) fail("sampler: batch size must be positive");
    if (batch_size_ > ds.size()) fail("sampler: batch size exceeds dataset size");
    if (mode_ == SamplerMode::Balanced) {
        if (batch_size_ % ds.n_classes != 0)
            fail("sampler: balanced mode requires batch size to be a multiple of the class count");
        by_class_.resize(ds.n_classes);
        for (std::size_t i = 0; i < ds.size(); ++i)
            by_class_[static_cast<std::size_t>(ds.labels[i])].push_back(i);
        const std::size_t per = batch_size_ / ds.n_classes;
        for (const auto& idx : by_class_)
            if (idx.size() < per) fail("sampler: a class is smaller than its per-batch share");
    }
    start_epoch();
}

void BatchSampler::start_epoch() {
    if (mode_ == SamplerMode::Balanced) {
        for (auto& idx : by_class_) rng_.shuffle(idx);
    } else {
        order_.resize(ds_.size());
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
        rng_.shuffle(order_);
    }
    cursor_ = 0;
}

std::size_t BatchSampler::batches_per_epoch() const {
    if (mode_ == SamplerMode::Balanced) {
        const std::size_t per = batch_size_ / ds_.n_classes;
        std::size_t batches = by_class_[0].size() / per;
        for (const auto& idx : by_class_) batches = std::min(batches, idx.size() / per);
        return batches;
    }
    return ds_.size() / batch_size_;
}

Batch BatchSampler::next() {
    if (cursor_ >= batches_per_epoch()) {
        ++epoch_;
        start_epoch();
    }
    std::vector<std::size_t> indices;
    indices.reserve(batch_size_);
    if (mode_ == SamplerMode::Balanced) {
        const std::size_t per = batch_size_ / ds_.n_classes;
        for (const auto& idx : by_class_)
            for (std::size_t i = 0; i < per; ++i) indices.push_back(idx[cursor_ * per + i]);
    } else {
        for (std::size_t i = 0; i < batch_size_; ++i)
            indices.push_back(order_[cursor_ * batch_size_ + i]);
    }
    ++cursor_;
    return make_batch(ds_, indices);
}

Batch make_batch(const LabeledDataset& ds, const std::vector<std::size_t>& indices) {
    LabeledDataset gathered = subset(ds, indices);
    Batch batch;
    batch.images = std::move(gathered.images);
    batch.labels = std::move(gathered.labels);
    batch.one_hot = one_hot(batch.labels, ds.n_classes);
    return batch;
}

Tensor hflip_augment(const Tensor& images, double probability, std::uint64_t seed) {
    if (images.ndim() != 4) fail("hflip_augment: expected [M x C x H x W]");
    Rng rng(seed);
    Tensor out = images;
    const std::size_t m = images.extent(0), c = images.extent(1), h = images.extent(2),
                      w = images.extent(3);
    for (std::size_t im = 0; im < m; ++im) {
        if (rng.uniform() >= probability) continue;
        for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t y = 0; y < h; ++y) {
                double* row = out.data() + ((im * c + ic) * h + y) * w;
                std::reverse(row, row + w);
            }
    }
    return out;
}

Tensor one_hot(const std::vector<int>& labels, std::size_t n_classes) {
    Tensor out({labels.size(), n_classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= n_classes)
            fail("one_hot: label out of range");
        out.at(i, static_cast<std::size_t>(label)) = 1.0;
    }
    return out;
}

}  // namespace ftlab
