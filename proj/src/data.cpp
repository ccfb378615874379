#include "eqspike/data.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace eqspike {

Shape Dataset::sample_shape() const {
  Shape s(images.shape().begin() + 1, images.shape().end());
  return s;
}

namespace {

std::uint32_t read_be32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("load_idx: truncated header in " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

Tensor load_idx(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_idx: cannot open " + path);
  const std::uint32_t magic = read_be32(is, path);
  if (magic != 0x00000801u && magic != 0x00000803u) {
    std::ostringstream what;
    what << "load_idx: bad magic 0x" << std::hex << magic << " in " << path
         << " (expected 0x801 label vector or 0x803 image tensor)";
    throw std::runtime_error(what.str());
  }
  const int ndim = magic & 0xFF;
  Shape shape(ndim);
  for (int d = 0; d < ndim; ++d) shape[d] = static_cast<Index>(read_be32(is, path));
  const Index n = numel(shape);
  std::vector<unsigned char> payload(static_cast<size_t>(n));
  if (!is.read(reinterpret_cast<char*>(payload.data()), n))
    throw std::runtime_error("load_idx: truncated payload in " + path + " (wanted " + std::to_string(n) + " bytes)");
  Tensor t(shape);
  for (Index i = 0; i < n; ++i) t[i] = payload[static_cast<size_t>(i)] / 255.0;
  return t;
}

void save_idx(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_idx: cannot open " + path);
  const int ndim = static_cast<int>(t.rank());
  write_be32(os, 0x00000800u | static_cast<std::uint32_t>(ndim));
  for (Index d : t.shape()) write_be32(os, static_cast<std::uint32_t>(d));
  std::vector<unsigned char> payload(static_cast<size_t>(t.size()));
  for (Index i = 0; i < t.size(); ++i)
    payload[static_cast<size_t>(i)] = static_cast<unsigned char>(std::lround(t[i] * 255.0));
  os.write(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
}

Dataset load_image_dataset(const std::string& images_path, const std::string& labels_path) {
  Dataset ds;
  Tensor imgs = load_idx(images_path);
  Tensor labs = load_idx(labels_path);
  if (labs.rank() != 1) throw std::runtime_error("load_image_dataset: labels file is not a vector");
  if (imgs.rank() < 2 || imgs.shape()[0] != labs.shape()[0])
    throw std::runtime_error("load_image_dataset: image/label counts differ");
  // store as {N, C, H, W}; IDX image files are {N, H, W} single-channel
  if (imgs.rank() == 3) {
    ds.images = imgs.reshaped({imgs.shape()[0], 1, imgs.shape()[1], imgs.shape()[2]});
  } else {
    ds.images = imgs;
  }
  ds.labels.resize(labs.size());
  int max_label = 0;
  for (Index i = 0; i < labs.size(); ++i) {
    ds.labels[static_cast<size_t>(i)] = static_cast<int>(std::lround(labs[i] * 255.0));
    max_label = std::max(max_label, ds.labels[static_cast<size_t>(i)]);
  }
  ds.num_classes = max_label + 1;
  return ds;
}

Dataset load_cifar10_binary(const std::vector<std::string>& batch_files) {
  constexpr Index kRecord = 3073, kPixels = 3072;
  Dataset ds;
  std::vector<unsigned char> all;
  for (const auto& path : batch_files) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_cifar10_binary: cannot open " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (buf.size() % kRecord != 0) throw std::runtime_error("load_cifar10_binary: bad record size in " + path);
    all.insert(all.end(), buf.begin(), buf.end());
  }
  const Index n = static_cast<Index>(all.size()) / kRecord;
  ds.images = Tensor({n, 3, 32, 32});
  ds.labels.resize(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const unsigned char* rec = all.data() + i * kRecord;
    ds.labels[static_cast<size_t>(i)] = rec[0];
    for (Index p = 0; p < kPixels; ++p, ++rec) ds.images[i * kPixels + p] = rec[1] / 255.0;
  }
  ds.num_classes = 10;
  return ds;
}

void fit_normalization(Dataset& ds) {
  auto flat = ds.images.flat();
  ds.mean = flat.mean();
  const double var = (flat.array() - ds.mean).square().sum() / static_cast<double>(flat.size());
  ds.stddev = std::sqrt(var);
  if (!(ds.stddev > 0.0)) throw std::runtime_error("fit_normalization: zero variance");
}

Mat encode_batch(const Dataset& ds, const std::vector<Index>& idx) {
  const Index d = ds.sample_size();
  Mat x(d, static_cast<Index>(idx.size()));
  for (size_t c = 0; c < idx.size(); ++c) {
    if (idx[c] < 0 || idx[c] >= ds.size()) throw std::invalid_argument("encode_batch: sample index out of range");
    x.col(static_cast<Index>(c)) =
        (ds.images.flat().segment(idx[c] * d, d).array() - ds.mean) / ds.stddev;
  }
  return x;
}

InputEncoding encode_constant_current(const Dataset& ds, const std::vector<Index>& idx) {
  return InputEncoding::constant_current(encode_batch(ds, idx));
}

InputEncoding encode_constant_current(const Dataset& ds, Index sample) {
  return encode_constant_current(ds, std::vector<Index>{sample});
}

Vec augment_crop_flip(const Eigen::Ref<const Vec>& image, const Shape& chw, RngStream& rng, Index pad) {
  if (chw.size() != 3) throw std::invalid_argument("augment_crop_flip: needs a {C,H,W} image");
  const Index C = chw[0], H = chw[1], W = chw[2];
  const Index dy = rng.uniform_index(2 * pad + 1) - pad;
  const Index dx = rng.uniform_index(2 * pad + 1) - pad;
  const bool flip = rng.uniform() < 0.5;
  Vec out = Vec::Zero(image.size());
  for (Index c = 0; c < C; ++c)
    for (Index y = 0; y < H; ++y) {
      const Index sy = y + dy;
      if (sy < 0 || sy >= H) continue;
      for (Index x = 0; x < W; ++x) {
        const Index sx = (flip ? W - 1 - x : x) + dx;
        if (sx < 0 || sx >= W) continue;
        out[(c * H + y) * W + x] = image[(c * H + sy) * W + sx];
      }
    }
  return out;
}

Mat encode_batch_augmented(const Dataset& ds, const std::vector<Index>& idx, RngStream& rng, Index pad) {
  const Index d = ds.sample_size();
  const Shape chw = ds.sample_shape();
  Mat x(d, static_cast<Index>(idx.size()));
  for (size_t c = 0; c < idx.size(); ++c) {
    if (idx[c] < 0 || idx[c] >= ds.size()) throw std::invalid_argument("encode_batch_augmented: index out of range");
    Vec img = augment_crop_flip(ds.images.flat().segment(idx[c] * d, d), chw, rng, pad);
    x.col(static_cast<Index>(c)) = (img.array() - ds.mean) / ds.stddev;
  }
  return x;
}

Dataset synth_dataset(const std::string& kind, Index n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("synth_dataset: n must be >= 2");
  RngStream rng(seed, 11);
  Dataset ds;
  ds.split = "synthetic";
  if (kind == "blobs") {
    // two well-separated 2-D gaussian blobs (5 sigma apart)
    ds.images = Tensor({n, 2});
    ds.labels.resize(static_cast<size_t>(n));
    ds.num_classes = 2;
    for (Index i = 0; i < n; ++i) {
      const int cls = static_cast<int>(i % 2);
      const double cx = cls == 0 ? 0.0 : 5.0;
      ds.images[i * 2 + 0] = cx + rng.normal();
      ds.images[i * 2 + 1] = rng.normal();
      ds.labels[static_cast<size_t>(i)] = cls;
    }
  } else if (kind == "xor") {
    ds.images = Tensor({n, 2});
    ds.labels.resize(static_cast<size_t>(n));
    ds.num_classes = 2;
    for (Index i = 0; i < n; ++i) {
      const Index corner = i % 4;  // canonical corners first, then jittered copies
      const double x0 = (corner & 1) ? 1.0 : 0.0;
      const double x1 = (corner & 2) ? 1.0 : 0.0;
      const double jit = i < 4 ? 0.0 : 0.1;
      ds.images[i * 2 + 0] = x0 + jit * rng.normal();
      ds.images[i * 2 + 1] = x1 + jit * rng.normal();
      ds.labels[static_cast<size_t>(i)] = static_cast<int>(x0) ^ static_cast<int>(x1);
    }
  } else {
    throw std::invalid_argument("synth_dataset: unknown kind " + kind);
  }
  return ds;
}

std::vector<Index> shuffled_indices(Index n, RngStream& rng) {
  std::vector<Index> order(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  for (Index i = n - 1; i > 0; --i) std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_index(i + 1))]);
  return order;
}

BatchIterator::BatchIterator(Index n, Index batch_size, std::uint64_t seed, bool shuffle)
    : n_(n), batch_size_(batch_size), shuffle_(shuffle), rng_(seed, 13) {
  if (batch_size_ < 1) throw std::invalid_argument("BatchIterator: batch size must be >= 1");
  new_epoch();
  epoch_ = 0;
}

void BatchIterator::new_epoch() {
  order_ = shuffle_ ? shuffled_indices(n_, rng_) : [this] {
    std::vector<Index> o(static_cast<size_t>(n_));
    for (Index i = 0; i < n_; ++i) o[static_cast<size_t>(i)] = i;
    return o;
  }();
  pos_ = 0;
  ++epoch_;
}

bool BatchIterator::next(std::vector<Index>& out) {
  if (pos_ >= n_) return false;
  const Index take = std::min(batch_size_, n_ - pos_);
  out.assign(order_.begin() + pos_, order_.begin() + pos_ + take);
  pos_ += take;
  return true;
}

}  // namespace eqspike
