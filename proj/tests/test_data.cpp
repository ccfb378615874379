#include "eqspike/data.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace eqspike;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("idx header parsing and scaling") {
    const std::string path = temp_path("eqspike_idx_test");
    {
      std::ofstream os(path, std::ios::binary);
      const unsigned char header[] = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2};
      os.write(reinterpret_cast<const char*>(header), sizeof(header));
      const unsigned char payload[] = {0, 255, 51, 102, 153, 204, 10, 20};
      os.write(reinterpret_cast<const char*>(payload), sizeof(payload));
    }
    Tensor t = load_idx(path);
    CHECK(t.shape() == Shape{2, 2, 2});
    CHECK(t[0] == 0.0);
    CHECK(t[1] == 1.0);  // byte 255 -> 1.0
    CHECK(t[2] == doctest::Approx(51.0 / 255.0));
    std::remove(path.c_str());
  }

  TEST_CASE("idx rejects bad magic and truncation") {
    const std::string bad = temp_path("eqspike_idx_bad");
    {
      std::ofstream os(bad, std::ios::binary);
      const unsigned char header[] = {0, 0, 9, 9, 0, 0, 0, 1};
      os.write(reinterpret_cast<const char*>(header), sizeof(header));
    }
    CHECK_THROWS_WITH_AS(load_idx(bad), doctest::Contains("bad magic"), std::runtime_error);
    {
      std::ofstream os(bad, std::ios::binary);
      const unsigned char header[] = {0, 0, 8, 1, 0, 0, 0, 9, 1, 2};  // promises 9, has 2
      os.write(reinterpret_cast<const char*>(header), sizeof(header));
    }
    CHECK_THROWS_WITH_AS(load_idx(bad), doctest::Contains("truncated"), std::runtime_error);
    CHECK_THROWS_AS(load_idx(temp_path("eqspike_no_such_file")), std::runtime_error);
    std::remove(bad.c_str());
  }

  TEST_CASE("save/load round-trips byte-quantized tensors exactly") {
    RngStream rng(5);
    Tensor t({3, 4, 4});
    for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<double>(rng.uniform_index(256)) / 255.0;
    const std::string path = temp_path("eqspike_idx_rt");
    save_idx(path, t);
    Tensor back = load_idx(path);
    CHECK(back.shape() == t.shape());
    CHECK((back.flat() - t.flat()).norm() == 0.0);
    std::remove(path.c_str());
  }

  TEST_CASE("normalization: fitted stats standardize the split") {
    Dataset ds = synth_dataset("blobs", 64, 9);
    // abuse the image tensor as pixels; stats are global
    fit_normalization(ds);
    auto flat = ds.images.flat();
    const double m = ((flat.array() - ds.mean) / ds.stddev).mean();
    const double v = ((flat.array() - ds.mean) / ds.stddev).square().mean();
    CHECK(std::abs(m) <= 1e-6);
    CHECK(std::abs(v - 1.0) <= 1e-6);
  }

  TEST_CASE("encode_constant_current: passthrough and zero cases") {
    Dataset ds;
    ds.images = Tensor::constant({2, 3}, 0.5);
    ds.labels = {0, 1};
    ds.num_classes = 2;
    ds.mean = 0.0;
    ds.stddev = 1.0;
    InputEncoding enc = encode_constant_current(ds, Index{0});
    CHECK(enc.mode == InputEncoding::Mode::constant_current);
    CHECK((enc.constant.array() == 0.5).all());
    // frame(t) is constant in t: trivially convergent average input
    CHECK((enc.frame(0) - enc.frame(17)).norm() == 0.0);

    ds.mean = 0.5;  // image equal to the mean -> all-zero current
    InputEncoding zero = encode_constant_current(ds, Index{1});
    CHECK(zero.constant.norm() == 0.0);
    CHECK_THROWS_AS(encode_constant_current(ds, Index{5}), std::invalid_argument);
  }

  TEST_CASE("synthetic blobs beat a nearest-centroid probe") {
    Dataset ds = synth_dataset("blobs", 400, 31);
    Dataset same = synth_dataset("blobs", 400, 31);
    CHECK((ds.images.flat() - same.images.flat()).norm() == 0.0);

    // independent nearest-centroid classifier on held-out half
    Vec c0 = Vec::Zero(2), c1 = Vec::Zero(2);
    Index n0 = 0, n1 = 0;
    for (Index i = 0; i < 200; ++i) {
      Vec p = ds.images.flat().segment(i * 2, 2);
      if (ds.labels[static_cast<size_t>(i)] == 0) {
        c0 += p;
        ++n0;
      } else {
        c1 += p;
        ++n1;
      }
    }
    c0 /= n0;
    c1 /= n1;
    Index correct = 0;
    for (Index i = 200; i < 400; ++i) {
      Vec p = ds.images.flat().segment(i * 2, 2);
      const int pred = (p - c0).norm() <= (p - c1).norm() ? 0 : 1;
      if (pred == ds.labels[static_cast<size_t>(i)]) ++correct;
    }
    CHECK(static_cast<double>(correct) / 200.0 >= 0.99);
  }

  TEST_CASE("xor canonical corners") {
    Dataset ds = synth_dataset("xor", 4, 1);
    CHECK(ds.labels == std::vector<int>{0, 1, 1, 0});
    CHECK_THROWS_AS(synth_dataset("nope", 8, 1), std::invalid_argument);
    CHECK_THROWS_AS(synth_dataset("xor", 1, 1), std::invalid_argument);
  }

  TEST_CASE("batch iterator covers each sample exactly once per epoch") {
    BatchIterator it(17, 5, 99);
    for (int epoch = 0; epoch < 3; ++epoch) {
      std::vector<int> seen(17, 0);
      std::vector<Index> batch;
      Index total = 0;
      while (it.next(batch)) {
        for (Index i : batch) ++seen[static_cast<size_t>(i)];
        total += static_cast<Index>(batch.size());
        CHECK(batch.size() <= 5);
      }
      CHECK(total == 17);
      for (int s : seen) CHECK(s == 1);
      it.new_epoch();
    }
    // same seed -> same order
    BatchIterator a(10, 3, 7), b(10, 3, 7);
    std::vector<Index> ba, bb;
    while (a.next(ba) && b.next(bb)) CHECK(ba == bb);
  }

  TEST_CASE("cifar10 binary loader parses records") {
    const std::string path = temp_path("eqspike_cifar_test");
    {
      std::ofstream os(path, std::ios::binary);
      std::vector<unsigned char> rec(3073, 0);
      rec[0] = 7;    // label
      rec[1] = 255;  // first red pixel
      os.write(reinterpret_cast<char*>(rec.data()), 3073);
      rec[0] = 2;
      os.write(reinterpret_cast<char*>(rec.data()), 3073);
    }
    Dataset ds = load_cifar10_binary({path});
    CHECK(ds.size() == 2);
    CHECK(ds.images.shape() == Shape{2, 3, 32, 32});
    CHECK(ds.labels == std::vector<int>{7, 2});
    CHECK(ds.images[0] == 1.0);
    std::remove(path.c_str());
  }
}

TEST_SUITE("data") {
  TEST_CASE("augmentation preserves shape and is a shifted copy") {
    RngStream rng(44);
    Shape chw{2, 6, 6};
    Vec img(numel(chw));
    rng.fill_uniform(img, 0.0, 1.0);
    RngStream a(7, 1), b(7, 1);
    Vec out1 = augment_crop_flip(img, chw, a, 2);
    Vec out2 = augment_crop_flip(img, chw, b, 2);
    CHECK(out1.size() == img.size());
    CHECK((out1 - out2).norm() == 0.0);  // same stream, same transform
    // every surviving pixel value comes from the source image
    for (Index i = 0; i < out1.size(); ++i) {
      if (out1[i] == 0.0) continue;
      bool found = false;
      for (Index j = 0; j < img.size() && !found; ++j) found = img[j] == out1[i];
      CHECK(found);
    }
    CHECK_THROWS_AS(augment_crop_flip(img, Shape{36}, a, 2), std::invalid_argument);
  }
}
