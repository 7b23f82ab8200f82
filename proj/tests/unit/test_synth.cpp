#include <gtest/gtest.h>

#include <unistd.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "vargan/error.hpp"
#include "vargan/synth.hpp"

using namespace vargan;
using namespace vargan::synth;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("vargan-unit-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  return dir;
}

struct Blob {
  double mass = 0.0;
  double cx = 0.0, cy = 0.0;
  std::vector<std::array<double, 3>> pixels;  // x, y, coverage
};

// Connected components of non-background pixels, weighted by coverage.
std::vector<Blob> components(const std::vector<double>& cov, std::size_t size) {
  std::vector<int> label(cov.size(), -1);
  std::vector<Blob> out;
  for (std::size_t start = 0; start < cov.size(); ++start) {
    if (cov[start] <= 0.0 || label[start] >= 0) continue;
    Blob b;
    std::vector<std::size_t> stack = {start};
    label[start] = static_cast<int>(out.size());
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const double x = static_cast<double>(i % size), y = static_cast<double>(i / size);
      b.pixels.push_back({x, y, cov[i]});
      b.mass += cov[i];
      b.cx += cov[i] * x;
      b.cy += cov[i] * y;
      const std::size_t r = i / size, c = i % size;
      auto visit = [&](std::size_t rr, std::size_t cc) {
        const std::size_t j = rr * size + cc;
        if (cov[j] > 0.0 && label[j] < 0) {
          label[j] = label[start];
          stack.push_back(j);
        }
      };
      if (r > 0) visit(r - 1, c);
      if (r + 1 < size) visit(r + 1, c);
      if (c > 0) visit(r, c - 1);
      if (c + 1 < size) visit(r, c + 1);
    }
    b.cx /= b.mass;
    b.cy /= b.mass;
    out.push_back(std::move(b));
  }
  return out;
}

// Recovers the five landmarks in pixel units from a noise-free image: disc
// centroids for eyes and nose, and for the mouth a capsule fitted from its
// principal axis, extent and area.
std::vector<double> extract_landmarks(const std::vector<std::uint8_t>& pixels, std::size_t size) {
  const double bg = *std::min_element(pixels.begin(), pixels.end());
  const double fg = *std::max_element(pixels.begin(), pixels.end());
  std::vector<double> cov(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) cov[i] = (pixels[i] - bg) / (fg - bg);
  auto blobs = components(cov, size);
  if (blobs.size() != 4) return {};
  std::sort(blobs.begin(), blobs.end(), [](const Blob& a, const Blob& b) { return a.cy < b.cy; });
  if (blobs[0].cx > blobs[1].cx) std::swap(blobs[0], blobs[1]);
  const Blob& m = blobs[3];
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& [x, y, w] : m.pixels) {
    sxx += w * (x - m.cx) * (x - m.cx);
    sxy += w * (x - m.cx) * (y - m.cy);
    syy += w * (y - m.cy) * (y - m.cy);
  }
  const double angle = 0.5 * std::atan2(2 * sxy, sxx - syy);
  double ux = std::cos(angle), uy = std::sin(angle);
  if (ux < 0) ux = -ux, uy = -uy;
  double lo = 0, hi = 0;
  for (const auto& [x, y, w] : m.pixels) {
    if (w < 0.5) continue;
    const double t = (x - m.cx) * ux + (y - m.cy) * uy;
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  // Capsule with segment length L and half-thickness h: extent E = L + 2h and
  // area A = 2hL + pi h^2 = 2hE - (4 - pi) h^2.
  const double extent = hi - lo + 1.0, a = 4.0 - std::numbers::pi;
  const double h = (2 * extent - std::sqrt(4 * extent * extent - 4 * a * m.mass)) / (2 * a);
  const double half_len = std::max(0.0, extent / 2 - h);
  return {blobs[0].cx, blobs[0].cy, blobs[1].cx, blobs[1].cy, blobs[2].cx, blobs[2].cy,
          m.cx - half_len * ux, m.cy - half_len * uy, m.cx + half_len * ux, m.cy + half_len * uy};
}

FaceParams symmetric_face() {
  FaceParams p;
  p.left_eye = {-0.4, -0.3};
  p.right_eye = {0.4, -0.3};
  p.nose = {0.0, 0.1};
  p.mouth_left = {-0.3, 0.55};
  p.mouth_right = {0.3, 0.55};
  p.foreground = 0.9;
  p.background = 0.1;
  return p;
}

}  // namespace

TEST(Sampling, FixedSeedIsDeterministic) {
  Rng a(42), b(42);
  const SynthConfig cfg;
  const auto p = sample_face_params(a, cfg), q = sample_face_params(b, cfg);
  EXPECT_EQ(landmark_target(p), landmark_target(q));
  EXPECT_EQ(p.eye_radius, q.eye_radius);
  EXPECT_EQ(p.noise_seed, q.noise_seed);
  EXPECT_EQ(render_face(p, 32), render_face(q, 32));
}

TEST(Sampling, InvariantsAndCoverage) {
  SynthConfig cfg;
  Rng rng(1);
  const auto ranges = cfg.ranges;
  const std::vector<Range> coord_ranges = {ranges.left_eye_x,    ranges.left_eye_y,   ranges.right_eye_x,
                                           ranges.right_eye_y,   ranges.nose_x,       ranges.nose_y,
                                           ranges.mouth_left_x,  ranges.mouth_left_y, ranges.mouth_right_x,
                                           ranges.mouth_right_y};
  std::vector<double> lo(10, 1e9), hi(10, -1e9);
  for (int i = 0; i < 10000; ++i) {
    const auto p = sample_face_params(rng, cfg);
    ASSERT_LT(p.left_eye.x, p.right_eye.x);
    ASSERT_EQ(check_invariants(p, cfg.image_size), "");
    const auto t = landmark_target(p);
    for (std::size_t k = 0; k < 10; ++k) {
      lo[k] = std::min(lo[k], t[k]);
      hi[k] = std::max(hi[k], t[k]);
    }
  }
  for (std::size_t k = 0; k < 10; ++k) {
    EXPECT_GE((hi[k] - lo[k]) / (coord_ranges[k].hi - coord_ranges[k].lo), 0.8) << kTargetNames[k];
  }
}

TEST(Sampling, ImpossibleRangesExhaustRetries) {
  SynthConfig cfg;
  cfg.max_retries = 5;
  cfg.ranges.left_eye_x = {0.5, 0.5};
  cfg.ranges.right_eye_x = {-0.5, -0.5};
  Rng rng(2);
  EXPECT_THROW(sample_face_params(rng, cfg), ValidationError);
}

TEST(Render, SymmetricFaceEqualsMirror) {
  const auto p = symmetric_face();
  ASSERT_EQ(check_invariants(p, 32), "");
  const auto img = render_face(p, 32);
  for (std::size_t r = 0; r < 32; ++r) {
    for (std::size_t c = 0; c < 32; ++c) EXPECT_NEAR(img[r * 32 + c], img[r * 32 + 31 - c], 1e-12);
  }
}

TEST(Render, EyeCentreHasForegroundIntensity) {
  auto p = symmetric_face();
  p.left_eye = {to_normalized(9, 32), to_normalized(10, 32)};
  ASSERT_EQ(check_invariants(p, 32), "");
  EXPECT_NEAR(to_pixel(p.left_eye.x, 32), 9.0, 1e-12);
  const auto img = render_face(p, 32);
  EXPECT_NEAR(img[10 * 32 + 9], p.foreground, 1e-12);
  EXPECT_NEAR(img[0], p.background, 1e-12);
}

TEST(Render, SameSeedIsByteIdentical) {
  const SynthConfig cfg;
  const auto a = generate_record(cfg, 9, 17), b = generate_record(cfg, 9, 17);
  EXPECT_EQ(a.pixels, b.pixels);
  EXPECT_NE(a.pixels, generate_record(cfg, 9, 18).pixels);
}

TEST(Dataset, DigestIsDeterministic) {
  const SynthConfig cfg;
  const auto a = generate_dataset(5000, cfg, 11), b = generate_dataset(5000, cfg, 11);
  EXPECT_EQ(dataset_digest(a), dataset_digest(b));
  EXPECT_NE(dataset_digest(a), dataset_digest(generate_dataset(5000, cfg, 12)));
  for (const auto& r : a.records) {
    for (double v : r.target) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Dataset, RoundTripAndCorruption) {
  SynthConfig cfg;
  cfg.image_size = 16;
  const auto data = generate_dataset(40, cfg, 5);
  const auto dir = temp_dir("roundtrip");
  write_dataset(data, dir);
  const auto back = read_dataset(dir);
  ASSERT_EQ(back.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back.records[i].pixels, data.records[i].pixels);
    EXPECT_EQ(back.records[i].target, data.records[i].target);
  }
  EXPECT_EQ(dataset_digest(back), dataset_digest(data));

  std::ifstream in(dir / "manifest");
  std::stringstream text;
  text << in.rdbuf();
  in.close();
  std::string manifest = text.str();
  const auto pos = manifest.find("digest=");
  manifest[pos + 7] = manifest[pos + 7] == '0' ? '1' : '0';
  std::ofstream(dir / "manifest") << manifest;
  EXPECT_THROW(read_dataset(dir), ValidationError);

  std::ofstream(dir / "manifest") << "format=other\n";
  EXPECT_THROW(read_dataset(dir), ValidationError);
  fs::remove_all(dir);
}

TEST(Dataset, TargetsAreEncodedInPixels) {
  SynthConfig cfg;
  cfg.noise_amplitude = 0.0;
  const auto data = generate_dataset(200, cfg, 21);
  double worst = 0.0;
  for (const auto& rec : data.records) {
    const auto found = extract_landmarks(rec.pixels, cfg.image_size);
    ASSERT_EQ(found.size(), 10u) << "record " << rec.seed;
    for (std::size_t k = 0; k < 10; ++k) {
      worst = std::max(worst, std::abs(found[k] - to_pixel(rec.target[k], cfg.image_size)));
    }
  }
  EXPECT_LE(worst, 1.0);
}

TEST(Latent, RangeMeanAndReproducibility) {
  Rng rng(3);
  const auto z = sample_latent<double>(rng, 1000, 1000);
  double sum = 0.0;
  for (double v : z.values()) {
    ASSERT_GE(v, -1.0);
    ASSERT_LE(v, 1.0);
    sum += v;
  }
  EXPECT_LT(std::abs(sum / 1e6), 0.01);
  Rng a(4), b(4);
  EXPECT_EQ(sample_latent<double>(a, 8, 3), sample_latent<double>(b, 8, 3));
}

TEST(Latent, ConditionInputLayout) {
  Rng rng(5);
  const auto z = sample_latent<double>(rng, 64, 3);
  Tensor<double> y({3, 10});
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 0.01 * static_cast<double>(i);
  const auto zy = make_condition_input(z, y);
  ASSERT_EQ(zy.shape(), (Shape{3, 74}));
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t j = 0; j < 64; ++j) EXPECT_EQ(zy[b * 74 + j], z[b * 64 + j]);
    for (std::size_t j = 0; j < 10; ++j) EXPECT_EQ(zy[b * 74 + 64 + j], y[b * 10 + j]);
  }
  EXPECT_THROW(make_condition_input(z, Tensor<double>({2, 10})), ValidationError);
}

TEST(Pgm, RoundTripWithComments) {
  const auto dir = temp_dir("pgm");
  fs::create_directories(dir);
  std::vector<std::uint8_t> px(6 * 4);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>(i * 10);
  const std::vector<std::string> comments = {"seed=3", "method=vargan"};
  write_pgm(dir / "a.pgm", px, 6, 4, comments);
  std::size_t w = 0, h = 0;
  EXPECT_EQ(read_pgm(dir / "a.pgm", w, h), px);
  EXPECT_EQ(w, 6u);
  EXPECT_EQ(h, 4u);
  const std::vector<std::string> bad = {"two\nlines"};
  EXPECT_THROW(write_pgm(dir / "b.pgm", px, 6, 4, bad), ValidationError);
  fs::remove_all(dir);
}
