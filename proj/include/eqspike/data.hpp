#pragma once

#include "eqspike/dynamics.hpp"

#include <string>
#include <vector>

namespace eqspike {

/** A labeled image (or point) set. Images are stored as {N, C, H, W} in
 * [0,1] (synthetic point sets as {N, D}); normalization statistics are fit
 * on the training split and reused elsewhere. */
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  Index num_classes = 0;
  double mean = 0.0;
  double stddev = 1.0;
  std::string split;
  bool augment = false;  // random crop + horizontal flip (CIFAR-style configs)

  Index size() const { return images.shape().empty() ? 0 : images.shape()[0]; }
  Index sample_size() const { return size() ? images.size() / size() : 0; }
  Shape sample_shape() const;
};

/** Parse an IDX file (big-endian magic 0x00000801 for label vectors,
 * 0x00000803 for image tensors, unsigned-byte payload scaled to [0,1]). */
Tensor load_idx(const std::string& path);
/** Write a [0,1] tensor as an unsigned-byte IDX file. */
void save_idx(const std::string& path, const Tensor& t);

Dataset load_image_dataset(const std::string& images_path, const std::string& labels_path);
/** CIFAR-10 binary batches (3073-byte records, label + CHW pixels). */
Dataset load_cifar10_binary(const std::vector<std::string>& batch_files);

/** Global mean/std over all pixels of this split. */
void fit_normalization(Dataset& ds);

/** Normalized constant-current columns for the given samples. */
Mat encode_batch(const Dataset& ds, const std::vector<Index>& idx);
InputEncoding encode_constant_current(const Dataset& ds, const std::vector<Index>& idx);
InputEncoding encode_constant_current(const Dataset& ds, Index sample);

/** Random crop with zero padding plus horizontal flip on a {C,H,W} image. */
Vec augment_crop_flip(const Eigen::Ref<const Vec>& image, const Shape& chw, RngStream& rng, Index pad = 4);
/** encode_batch with augmentation applied before normalization. */
Mat encode_batch_augmented(const Dataset& ds, const std::vector<Index>& idx, RngStream& rng, Index pad = 4);

/** Reproducible synthetic point clouds for smoke tests. */
Dataset synth_dataset(const std::string& kind /* "blobs" | "xor" */, Index n, std::uint64_t seed);

/** Yields each sample exactly once per epoch, in a seeded shuffled order. */
class BatchIterator {
 public:
  BatchIterator(Index n, Index batch_size, std::uint64_t seed, bool shuffle = true);
  bool next(std::vector<Index>& out);  // false at epoch end
  void new_epoch();
  int epoch() const { return epoch_; }

 private:
  Index n_, batch_size_, pos_ = 0;
  int epoch_ = 0;
  bool shuffle_;
  RngStream rng_;
  std::vector<Index> order_;
};

std::vector<Index> shuffled_indices(Index n, RngStream& rng);

}  // namespace eqspike
