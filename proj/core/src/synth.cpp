#include "vargan/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "vargan/digest.hpp"
#include "vargan/error.hpp"

namespace vargan::synth {

namespace {

constexpr int kFormatVersion = 1;

double round6(double v) { return std::round(v * 1e6) / 1e6; }

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (ax + t * dx), py - (ay + t * dy));
}

double coverage(double distance, double half_width) { return std::clamp(half_width + 0.5 - distance, 0.0, 1.0); }

double draw(Rng& rng, const Range& r) { return rng.uniform(r.lo, r.hi); }

std::string format_range(const Range& r) {
  std::ostringstream out;
  out.precision(17);
  out << r.lo << ',' << r.hi;
  return out.str();
}

Range parse_range(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw ValidationError("malformed range '" + text + "'");
  return {std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string images_blob(const Dataset& data) {
  std::string blob;
  blob.reserve(data.size() * data.image_size() * data.image_size());
  for (const auto& r : data.records) blob.append(r.pixels.begin(), r.pixels.end());
  return blob;
}

}  // namespace

std::vector<std::pair<std::string, Range>> SynthRanges::named() const {
  return {{"left_eye.x", left_eye_x},     {"left_eye.y", left_eye_y},       {"right_eye.x", right_eye_x},
          {"right_eye.y", right_eye_y},   {"nose.x", nose_x},               {"nose.y", nose_y},
          {"mouth_left.x", mouth_left_x}, {"mouth_left.y", mouth_left_y},   {"mouth_right.x", mouth_right_x},
          {"mouth_right.y", mouth_right_y}, {"eye_radius", eye_radius},     {"nose_radius", nose_radius},
          {"mouth_thickness", mouth_thickness}, {"foreground", foreground}, {"background", background}};
}

void SynthConfig::validate() const {
  if (landmark_count != kLandmarks) {
    throw ValidationError("the sprite-face renderer provides exactly " + std::to_string(kLandmarks) +
                          " landmarks, requested " + std::to_string(landmark_count));
  }
  if (image_size < 16) throw ValidationError("image_size must be at least 16");
  if (noise_amplitude < 0.0) throw ValidationError("noise_amplitude must be non-negative");
  for (const auto& [name, r] : ranges.named()) {
    if (!(r.lo <= r.hi)) throw ValidationError("range " + name + " is empty");
  }
}

double to_pixel(double v, std::size_t image_size) { return (v + 1.0) / 2.0 * static_cast<double>(image_size - 1); }

double to_normalized(double px, std::size_t image_size) {
  return px / static_cast<double>(image_size - 1) * 2.0 - 1.0;
}

std::string check_invariants(const FaceParams& p, std::size_t image_size) {
  const std::array<std::pair<const char*, Point>, kLandmarks> marks = {
      {{"left_eye", p.left_eye}, {"right_eye", p.right_eye}, {"nose", p.nose}, {"mouth_left", p.mouth_left},
       {"mouth_right", p.mouth_right}}};
  for (const auto& [name, pt] : marks) {
    if (!(std::abs(pt.x) <= 1.0 && std::abs(pt.y) <= 1.0)) return std::string(name) + " lies outside [-1, 1]^2";
  }
  if (!(p.left_eye.x < p.right_eye.x)) return "left eye is not left of the right eye";
  if (!(p.mouth_left.x < p.mouth_right.x)) return "mouth corners are swapped";
  const double eye_row = std::max(p.left_eye.y, p.right_eye.y);
  const double mouth_row = std::min(p.mouth_left.y, p.mouth_right.y);
  if (!(eye_row < p.nose.y && p.nose.y < mouth_row)) return "nose is not between the eye row and the mouth row";
  if (p.eye_radius < 1.0 || p.nose_radius < 1.0 || p.mouth_thickness < 1.0) return "feature size below one pixel";
  if (!(p.foreground - p.background >= 0.3)) return "foreground/background contrast below 0.3";
  if (p.foreground > 1.0 || p.background < 0.0) return "intensities outside [0, 1]";

  const double last = static_cast<double>(image_size - 1);
  auto px = [&](const Point& pt) { return Point{to_pixel(pt.x, image_size), to_pixel(pt.y, image_size)}; };
  struct Disc {
    Point c;
    double r;
  };
  const std::array<Disc, 3> discs = {{{px(p.left_eye), p.eye_radius},
                                      {px(p.right_eye), p.eye_radius},
                                      {px(p.nose), p.nose_radius}}};
  const Point ml = px(p.mouth_left), mr = px(p.mouth_right);
  const double half = p.mouth_thickness / 2.0;
  auto inside = [&](const Point& c, double extent) {
    return c.x - extent >= 0.0 && c.x + extent <= last && c.y - extent >= 0.0 && c.y + extent <= last;
  };
  for (const auto& d : discs) {
    if (!inside(d.c, d.r + 0.5)) return "feature does not fit inside the canvas";
  }
  if (!inside(ml, half + 0.5) || !inside(mr, half + 0.5)) return "mouth does not fit inside the canvas";
  // Soft edges take half a pixel on each side; keep one clear pixel between features.
  constexpr double kGap = 2.0;
  for (std::size_t i = 0; i < discs.size(); ++i) {
    for (std::size_t j = i + 1; j < discs.size(); ++j) {
      if (std::hypot(discs[i].c.x - discs[j].c.x, discs[i].c.y - discs[j].c.y) < discs[i].r + discs[j].r + kGap) {
        return "features overlap";
      }
    }
    if (segment_distance(discs[i].c.x, discs[i].c.y, ml.x, ml.y, mr.x, mr.y) < discs[i].r + half + kGap) {
      return "feature overlaps the mouth";
    }
  }
  return {};
}

FaceParams sample_face_params(Rng& rng, const SynthConfig& cfg) {
  cfg.validate();
  const auto& r = cfg.ranges;
  const double scale = static_cast<double>(cfg.image_size) / 32.0;
  auto radius = [&](const Range& range) { return std::max(1.0, draw(rng, range) * scale); };
  for (std::size_t attempt = 0; attempt < cfg.max_retries; ++attempt) {
    FaceParams p;
    p.left_eye = {draw(rng, r.left_eye_x), draw(rng, r.left_eye_y)};
    p.right_eye = {draw(rng, r.right_eye_x), draw(rng, r.right_eye_y)};
    p.nose = {draw(rng, r.nose_x), draw(rng, r.nose_y)};
    p.mouth_left = {draw(rng, r.mouth_left_x), draw(rng, r.mouth_left_y)};
    p.mouth_right = {draw(rng, r.mouth_right_x), draw(rng, r.mouth_right_y)};
    p.eye_radius = radius(r.eye_radius);
    p.nose_radius = radius(r.nose_radius);
    p.mouth_thickness = radius(r.mouth_thickness);
    p.foreground = draw(rng, r.foreground);
    p.background = draw(rng, r.background);
    p.noise_amplitude = cfg.noise_amplitude;
    p.noise_seed = rng.next_u64();
    if (check_invariants(p, cfg.image_size).empty()) return p;
  }
  throw ValidationError("face parameter sampling exhausted " + std::to_string(cfg.max_retries) +
                        " retries; check the configured ranges");
}

std::vector<double> render_face(const FaceParams& p, std::size_t image_size) {
  const auto px = [&](const Point& pt) { return Point{to_pixel(pt.x, image_size), to_pixel(pt.y, image_size)}; };
  const Point le = px(p.left_eye), re = px(p.right_eye), no = px(p.nose), ml = px(p.mouth_left),
              mr = px(p.mouth_right);
  const double half = p.mouth_thickness / 2.0;
  std::vector<double> img(image_size * image_size);
  Rng noise(p.noise_seed);
  for (std::size_t i = 0; i < image_size; ++i) {
    const double y = static_cast<double>(i);
    for (std::size_t j = 0; j < image_size; ++j) {
      const double x = static_cast<double>(j);
      double cov = coverage(std::hypot(x - le.x, y - le.y), p.eye_radius);
      cov = std::max(cov, coverage(std::hypot(x - re.x, y - re.y), p.eye_radius));
      cov = std::max(cov, coverage(std::hypot(x - no.x, y - no.y), p.nose_radius));
      cov = std::max(cov, coverage(segment_distance(x, y, ml.x, ml.y, mr.x, mr.y), half));
      double v = p.background + (p.foreground - p.background) * cov;
      if (p.noise_amplitude > 0.0) v += p.noise_amplitude * noise.normal();
      img[i * image_size + j] = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

std::vector<std::uint8_t> quantize(std::span<const double> pixels) {
  std::vector<std::uint8_t> out(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(pixels[i], 0.0, 1.0) * 255.0));
  }
  return out;
}

std::vector<double> landmark_target(const FaceParams& p) {
  return {p.left_eye.x,   p.left_eye.y,   p.right_eye.x,  p.right_eye.y,  p.nose.x,
          p.nose.y,       p.mouth_left.x, p.mouth_left.y, p.mouth_right.x, p.mouth_right.y};
}

template <typename T>
void Dataset::batch(std::span<const std::size_t> indices, Tensor<T>& images, Tensor<T>& targets) const {
  const std::size_t s = image_size(), d = target_dim(), n = indices.size();
  images = Tensor<T>({n, 1, s, s});
  targets = Tensor<T>({n, d});
  for (std::size_t b = 0; b < n; ++b) {
    const auto& rec = records.at(indices[b]);
    for (std::size_t i = 0; i < s * s; ++i) images[b * s * s + i] = static_cast<T>(rec.pixels[i]) / T{255};
    for (std::size_t j = 0; j < d; ++j) targets[b * d + j] = static_cast<T>(rec.target[j]);
  }
}

template void Dataset::batch<float>(std::span<const std::size_t>, Tensor<float>&, Tensor<float>&) const;
template void Dataset::batch<double>(std::span<const std::size_t>, Tensor<double>&, Tensor<double>&) const;

DatasetRecord generate_record(const SynthConfig& cfg, std::uint64_t dataset_seed, std::size_t index) {
  DatasetRecord rec;
  rec.seed = mix_seed(dataset_seed, index);
  Rng rng(rec.seed);
  const FaceParams p = sample_face_params(rng, cfg);
  rec.pixels = quantize(render_face(p, cfg.image_size));
  for (double v : landmark_target(p)) rec.target.push_back(round6(v));
  return rec;
}

Dataset generate_dataset(std::size_t n, const SynthConfig& cfg, std::uint64_t seed) {
  if (n == 0) throw ValidationError("dataset size must be at least 1");
  cfg.validate();
  Dataset data{cfg, seed, {}};
  data.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) data.records.push_back(generate_record(cfg, seed, i));
  return data;
}

std::string targets_csv(const Dataset& data) {
  std::string out;
  for (std::size_t j = 0; j < kTargetNames.size(); ++j) {
    out += (j ? "," : "");
    out += kTargetNames[j];
  }
  out += '\n';
  char buf[32];
  for (const auto& r : data.records) {
    for (std::size_t j = 0; j < r.target.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%s%.6f", j ? "," : "", r.target[j]);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

std::string dataset_digest(const Dataset& data) {
  Fnv1a h;
  h.update(images_blob(data));
  h.update(targets_csv(data));
  return h.hex();
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string blob = images_blob(data);
  const std::string csv = targets_csv(data);
  {
    std::ofstream out(dir / "images.bin", std::ios::binary);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw std::runtime_error("failed writing " + (dir / "images.bin").string());
  }
  {
    std::ofstream out(dir / "targets.csv", std::ios::binary);
    out << csv;
    if (!out) throw std::runtime_error("failed writing " + (dir / "targets.csv").string());
  }
  std::ofstream out(dir / "manifest", std::ios::binary);
  out << "format=vargan-synth\n"
      << "version=" << kFormatVersion << '\n'
      << "image_size=" << data.config.image_size << '\n'
      << "landmarks=" << data.config.landmark_count << '\n'
      << "n=" << data.size() << '\n'
      << "seed=" << data.seed << '\n';
  out.precision(17);
  out << "noise_amplitude=" << data.config.noise_amplitude << '\n';
  for (const auto& [name, r] : data.config.ranges.named()) out << "range." << name << '=' << format_range(r) << '\n';
  out << "digest=" << dataset_digest(data) << '\n';
  if (!out) throw std::runtime_error("failed writing " + (dir / "manifest").string());
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::map<std::string, std::string> kv;
  {
    std::istringstream in(read_file(dir / "manifest"));
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  auto get = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ValidationError("dataset manifest lacks '" + key + "'");
    return it->second;
  };
  if (get("format") != "vargan-synth") throw ValidationError("not a vargan-synth dataset: " + dir.string());
  if (std::stoi(get("version")) != kFormatVersion) throw ValidationError("unsupported dataset version " + get("version"));

  Dataset data;
  data.config.image_size = std::stoul(get("image_size"));
  data.config.landmark_count = std::stoul(get("landmarks"));
  data.config.noise_amplitude = std::stod(get("noise_amplitude"));
  data.seed = std::stoull(get("seed"));
  SynthRanges ranges;
  auto named = ranges.named();
  for (auto& [name, r] : named) r = parse_range(get("range." + name));
  auto at = [&](std::size_t i) { return named[i].second; };
  ranges = SynthRanges{at(0), at(1), at(2), at(3), at(4), at(5), at(6), at(7), at(8), at(9), at(10), at(11), at(12), at(13), at(14)};
  data.config.ranges = ranges;
  const std::size_t n = std::stoul(get("n"));
  const std::size_t s = data.config.image_size, d = 2 * data.config.landmark_count;

  const std::string blob = read_file(dir / "images.bin");
  if (blob.size() != n * s * s) {
    throw ValidationError("images.bin holds " + std::to_string(blob.size()) + " bytes, expected " +
                          std::to_string(n * s * s));
  }
  const auto rows = read_targets_csv(dir / "targets.csv", d);
  if (rows.size() != n) throw ValidationError("targets.csv holds " + std::to_string(rows.size()) + " rows, expected " + std::to_string(n));
  data.records.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& rec = data.records[i];
    rec.pixels.assign(blob.begin() + static_cast<std::ptrdiff_t>(i * s * s),
                      blob.begin() + static_cast<std::ptrdiff_t>((i + 1) * s * s));
    rec.target = rows[i];
    rec.seed = mix_seed(data.seed, i);
  }
  if (dataset_digest(data) != get("digest")) throw ValidationError("dataset digest mismatch in " + dir.string());
  return data;
}

std::vector<std::vector<double>> read_targets_csv(const std::filesystem::path& path, std::size_t expected_dim) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + " is empty");
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
      if (!(v >= -1.0 && v <= 1.0)) {
        throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": target outside [-1, 1]");
      }
      row.push_back(v);
    }
    if (row.size() != expected_dim) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(expected_dim) + " values, got " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename T>
Tensor<T> sample_latent(Rng& rng, std::size_t latent_dim, std::size_t batch) {
  Tensor<T> z({batch, latent_dim});
  for (auto& v : z.values()) v = static_cast<T>(rng.uniform(-1.0, 1.0));
  return z;
}

template <typename T>
Tensor<T> make_condition_input(const Tensor<T>& z, const Tensor<T>& y) {
  if (z.rank() != 2 || y.rank() != 2 || z.dim(0) != y.dim(0)) {
    throw ValidationError("make_condition_input: batch mismatch between " + shape_string(z.shape()) + " and " +
                          shape_string(y.shape()));
  }
  const std::size_t n = z.dim(0), dz = z.dim(1), dy = y.dim(1);
  Tensor<T> out({n, dz + dy});
  for (std::size_t b = 0; b < n; ++b) {
    std::copy_n(z.data() + b * dz, dz, out.data() + b * (dz + dy));
    std::copy_n(y.data() + b * dy, dy, out.data() + b * (dz + dy) + dz);
  }
  return out;
}

template Tensor<float> sample_latent<float>(Rng&, std::size_t, std::size_t);
template Tensor<double> sample_latent<double>(Rng&, std::size_t, std::size_t);
template Tensor<float> make_condition_input<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> make_condition_input<double>(const Tensor<double>&, const Tensor<double>&);

void write_pgm(const std::filesystem::path& path, std::span<const std::uint8_t> pixels, std::size_t width,
               std::size_t height, std::span<const std::string> comments) {
  if (pixels.size() != width * height) throw ValidationError("write_pgm: pixel count does not match dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n";
  for (const auto& c : comments) {
    if (c.find('\n') != std::string::npos) throw ValidationError("write_pgm: comment contains a newline");
    out << "# " << c << '\n';
  }
  out << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<std::uint8_t> read_pgm(const std::filesystem::path& path, std::size_t& width, std::size_t& height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string magic;
  int maxval = 0;
  in >> magic;
  auto skip_comments = [&] {
    while (in >> std::ws && in.peek() == '#') in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
  };
  skip_comments();
  in >> width;
  skip_comments();
  in >> height;
  skip_comments();
  in >> maxval;
  in.get();
  if (magic != "P5" || maxval != 255) throw ValidationError(path.string() + " is not an 8-bit binary PGM");
  std::vector<std::uint8_t> pixels(width * height);
  in.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!in) throw ValidationError(path.string() + " is truncated");
  return pixels;
}

}  // namespace vargan::synth
