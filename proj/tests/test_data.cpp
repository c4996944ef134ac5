// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <doctest.h>

#include "ceimven/data.hpp"
#include "ceimven/error.hpp"
#include "ceimven/image.hpp"
#include "ceimven/synthetic.hpp"
#include "support.hpp"

using namespace ceimven;
using testing::TempDir;

namespace {

Image gray(std::size_t w, std::size_t h, std::uint8_t v) { return Image{w, h, 1, std::vector<std::uint8_t>(w * h, v)}; }

}  // namespace

TEST_CASE("png round trip and decode errors") {
  TempDir tmp;
  Image img{3, 2, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18}};
  write_png(tmp / "a.png", img);
  const Image back = read_png(tmp / "a.png");
  CHECK(back.width == 3);
  CHECK(back.height == 2);
  CHECK(back.pixels == img.pixels);
  testing::write_bytes(tmp / "bad.png", "not a png");
  CHECK_THROWS_WITH_AS(read_png(tmp / "bad.png"), doctest::Contains("bad.png"), DataError);
}

TEST_CASE("resizing") {
  const Tensor t(Shape{2, 2, 1}, {0, 1, 2, 3});
  CHECK(resize_bilinear(t, 2, 2).data()[3] == 3.0f);
  const Tensor up = resize_bilinear(t, 4, 4);
  CHECK(up.data()[0] == 0.0f);                        // clamped corner
  CHECK(up.data()[1] == doctest::Approx(0.25));       // half-pixel centres
  const Tensor nn = resize_nearest(t, 4, 4);
  CHECK(nn.data()[5] == 0.0f);
  CHECK(nn.data()[15] == 3.0f);
  const Tensor down = resize_nearest(Tensor::create({4, 4, 1}, init::Explicit<float>{{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10,
                                                                                       11, 12, 13, 14, 15}}),
                                     2, 2);
  CHECK(down.data()[0] == 5.0f);
}

TEST_CASE("preprocess scales to [0,1] and masks merge") {
  const Tensor p = preprocess(gray(10, 10, 255), 32);
  CHECK(p.shape() == Shape{32, 32, 1});
  CHECK(p.data()[0] == 1.0f);

  Image a = gray(4, 4, 0), b = gray(4, 4, 0);
  a.pixels[0] = 255;
  b.pixels[15] = 200;
  const Tensor m = preprocess_masks({a, b}, 4);
  CHECK(m.data()[0] == 1.0f);
  CHECK(m.data()[15] == 1.0f);
  CHECK(m.data()[5] == 0.0f);
}

TEST_CASE("ingest a BUSI-layout tree") {
  TempDir tmp;
  write_synthetic_busi(tmp / "d", 2, 24, 1);
  // A second mask for one image.
  write_png(tmp / "d" / "benign" / "benign (1)_mask_1.png", gray(24, 24, 0));
  const Manifest m = ingest_dataset(tmp / "d");
  REQUIRE(m.entries.size() == 6);
  CHECK(m.class_counts() == std::array<std::size_t, 3>{2, 2, 2});
  CHECK(m.entries[0].id == "benign/benign (1)");
  CHECK(m.entries[0].masks.size() == 2);
  CHECK(m.entries[0].width == 24);
  CHECK(Manifest::from_json(m.to_json()).to_json() == m.to_json());

  SUBCASE("orphan mask") {
    write_png(tmp / "d" / "normal" / "ghost_mask.png", gray(24, 24, 0));
    CHECK_THROWS_AS(ingest_dataset(tmp / "d"), DataError);
  }
  SUBCASE("mask size mismatch") {
    write_png(tmp / "d" / "normal" / "normal (1)_mask.png", gray(10, 24, 0));
    CHECK_THROWS_AS(ingest_dataset(tmp / "d"), DataError);
  }
  SUBCASE("missing root") { CHECK_THROWS_AS(ingest_dataset(tmp / "nope"), DataError); }
}

TEST_CASE("augmentation count rule") {
  AugmentConfig c;
  c.target_total = 5280;
  const auto counts = augmentation_counts(780, c);
  std::size_t total = 0;
  for (auto n : counts) total += n;
  CHECK(total == 4500);
  CHECK(counts.front() == 6);  // 4500 = 5 * 780 + 600
  CHECK(counts[599] == 6);
  CHECK(counts[600] == 5);
  AugmentConfig per;
  per.per_original = 3;
  CHECK(augmentation_counts(4, per) == std::vector<std::size_t>{3, 3, 3, 3});
  AugmentConfig bad;
  bad.zoom_min = 1.2;
  CHECK_THROWS_AS(bad.validate(), ValueError);
}

TEST_CASE("augmentation plans depend only on seed and parent") {
  AugmentConfig c;
  const auto a = plan_augmentation("benign/x", 4, c, 9);
  const auto b = plan_augmentation("benign/x", 6, c, 9);
  const auto other = plan_augmentation("benign/y", 4, c, 9);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a[i].to_json() == b[i].to_json());
  CHECK(a[0].to_json() != other[0].to_json());
  for (const auto& t : b) {
    CHECK((t.rotation_deg >= 0 && t.rotation_deg < 360));
    CHECK((t.zoom >= 0.9 && t.zoom <= 1.1));
    CHECK((t.brightness >= 0.8 && t.brightness <= 1.2));
    CHECK(std::abs(t.shift_x) <= 0.1);
  }
}

TEST_CASE("transforms move image and mask together") {
  std::vector<float> px(8 * 8, 0.0f);
  px[1 * 8 + 2] = 1.0f;  // (x=2, y=1)
  const Tensor img(Shape{8, 8, 1}, px);
  TransformDescriptor t;
  t.hflip = true;
  const Tensor f = apply_transform(img, t, true);
  CHECK(f.data()[1 * 8 + 5] == 1.0f);
  t = {};
  t.vflip = true;
  CHECK(apply_transform(img, t, true).data()[6 * 8 + 2] == 1.0f);

  // A 90 degree turn of a binary mask stays binary and keeps its area.
  std::vector<float> block(16 * 16, 0.0f);
  for (std::size_t y = 4; y < 8; ++y) {
    for (std::size_t x = 2; x < 10; ++x) block[y * 16 + x] = 1.0f;
  }
  const Tensor mask(Shape{16, 16, 1}, block);
  t = {};
  t.rotation_deg = 90;
  const Tensor r = apply_transform(mask, t, true);
  double area = 0;
  for (float v : r.data()) {
    CHECK((v == 0.0f || v == 1.0f));
    area += v;
  }
  CHECK(area == 32);

  // Brightness touches images only, and clips.
  t = {};
  t.brightness = 1.5;
  const Tensor bright = apply_transform(Tensor::full({2, 2, 1}, 0.8), t, false);
  CHECK(bright.data()[0] == 1.0f);
  CHECK(apply_transform(Tensor::full({2, 2, 1}, 0.8), t, true).data()[0] == 0.8f);
}

TEST_CASE("corpus build and split") {
  TempDir tmp;
  write_synthetic_busi(tmp / "d", 5, 24, 2);
  const Manifest m = ingest_dataset(tmp / "d");
  AugmentConfig c;
  c.target_total = 40;
  const Manifest planned = plan_corpus(m, c, 3);
  CHECK(planned.entries.size() == 40);
  CHECK(planned.original_count() == 15);
  CHECK(planned.entries[1].parent == planned.entries[0].id);

  const auto one = build_corpus(tmp / "d", planned, 32, 1);
  const auto three = build_corpus(tmp / "d", planned, 32, 3);
  REQUIRE(one.size() == 40);
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].id == three[i].id);
    CHECK(testing::same_bits(one[i].image, three[i].image));
    CHECK(testing::same_bits(one[i].mask, three[i].mask));
  }

  const DatasetSplit s = split(planned, {0.6, 0.2, 0.2}, 4);
  CHECK(s.train.size() + s.validation.size() + s.test.size() == 40);
  CHECK(DatasetSplit::from_json(s.to_json()).to_json() == s.to_json());
  const DatasetSplit again = split(planned, {0.6, 0.2, 0.2}, 4);
  CHECK(again.to_json() == s.to_json());
  // One original per class in validation and test.
  std::size_t originals = 0;
  for (const auto& id : s.test) originals += id.find("__aug") == std::string::npos;
  CHECK(originals == 3);

  CHECK_THROWS_AS(split(planned, {0.5, 0.6, 0.1}, 1), ValueError);
  CHECK_THROWS_AS(split(planned, {0.98, 0.01, 0.01}, 1), DataError);

  const Manifest written = write_corpus(one, planned, tmp / "out");
  CHECK(written.entries.size() == 40);
  CHECK(std::filesystem::exists(tmp / "out" / "manifest.json"));
  CHECK(ingest_dataset(tmp / "out").entries.size() == 40);
}
