#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ftlab/rng.hpp"
#include "ftlab/tensor.hpp"

namespace ftlab {

/// Images scaled to [0,1] as [count x C x H x W] with integer labels in
/// [0, n_classes). Immutable after construction.
struct LabeledDataset {
    Tensor images;
    std::vector<int> labels;
    std::size_t n_classes = 0;

    std::size_t size() const { return labels.size(); }
    std::vector<std::size_t> image_shape() const;  // {C, H, W}
    void validate() const;
};

/// Reads the big-endian IDX pair (0x00000803 images, 0x00000801 labels).
/// Pixel bytes are scaled by 1/255. Labels are remapped to [0, n) in
/// ascending order of the distinct values present.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Writes a dataset back out as an IDX pair (inverse of load_idx for
/// single-channel data).
void save_idx(const LabeledDataset& ds, const std::string& images_path,
              const std::string& labels_path);

/// Class-conditional Gaussian bumps at class-specific positions.
/// `separation` is the minimum center distance in units of the bump radius;
/// at 2 or more the classes are linearly separable in pixel space.
LabeledDataset synth_blobs(std::size_t n_classes, std::size_t per_class, std::size_t image_size,
                           std::uint64_t seed, double separation = 3.0);

/// Deterministic handwritten-digit stand-in: a 5x7 glyph per digit rendered
/// with random scale, offset, stroke intensity and additive noise. `digits`
/// selects which glyphs appear; labels are their indices in that list.
LabeledDataset synth_digits(const std::vector<int>& digits, std::size_t per_class,
                            std::size_t image_size, std::uint64_t seed);

/// Keeps the listed indices, preserving order.
LabeledDataset subset(const LabeledDataset& ds, const std::vector<std::size_t>& indices);

struct Split {
    LabeledDataset train;
    LabeledDataset holdout;
};

/// Per-class holdout of round(fraction * class_size) examples, seeded.
Split stratified_split(const LabeledDataset& ds, double fraction, std::uint64_t seed);

struct Batch {
    Tensor images;   // [M x C x H x W]
    Tensor one_hot;  // [M x N]
    std::vector<int> labels;
};

enum class SamplerMode { Balanced, Shuffled };

/// Seeded batch iterator. Balanced mode requires M to be a multiple of the
/// class count and emits exactly M/N examples per class per batch; an epoch
/// visits every index at most once (trailing partial batches are dropped).
class BatchSampler {
public:
    BatchSampler(const LabeledDataset& ds, std::size_t batch_size, SamplerMode mode,
                 std::uint64_t seed);

    Batch next();
    std::size_t batches_per_epoch() const;
    std::size_t epoch() const { return epoch_; }

private:
    void start_epoch();

    const LabeledDataset& ds_;
    std::size_t batch_size_;
    SamplerMode mode_;
    Rng rng_;
    std::vector<std::vector<std::size_t>> by_class_;  // balanced mode
    std::vector<std::size_t> order_;                  // shuffled mode
    std::size_t cursor_ = 0;
    std::size_t epoch_ = 0;
};

Batch make_batch(const LabeledDataset& ds, const std::vector<std::size_t>& indices);

/// Mirrors each selected image along the width axis; each example flips
/// independently with the given probability. Applying the same seed twice
/// restores the original tensor.
Tensor hflip_augment(const Tensor& images, double probability, std::uint64_t seed);

Tensor one_hot(const std::vector<int>& labels, std::size_t n_classes);

}  // namespace ftlab
