#include "vargan/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <numbers>
#include <sstream>

#include "binio.hpp"
#include "vargan/digest.hpp"
#include "vargan/error.hpp"
#include "vargan/log.hpp"
#include "vargan/losses.hpp"

namespace vargan::eval {

namespace {

constexpr char kOracleMagic[4] = {'V', 'G', 'O', 'R'};
constexpr std::uint32_t kOracleVersion = 1;
constexpr std::size_t kChunk = 64;

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

Tensor<float> rows_of(const Tensor<float>& t, std::size_t begin, std::size_t end) {
  Shape shape = t.shape();
  shape[0] = end - begin;
  const std::size_t stride = t.stride0();
  return Tensor<float>(shape, std::vector<float>(t.data() + begin * stride, t.data() + end * stride));
}

// Runs `fn` over chunks of the leading axis and concatenates the results.
template <typename Fn>
Tensor<float> chunked(const Tensor<float>& x, Fn fn) {
  Tensor<float> out;
  std::vector<float> values;
  Shape shape;
  for (std::size_t b = 0; b < x.dim(0); b += kChunk) {
    const Tensor<float> y = fn(rows_of(x, b, std::min(x.dim(0), b + kChunk)));
    if (shape.empty()) shape = y.shape();
    values.insert(values.end(), y.values().begin(), y.values().end());
  }
  shape[0] = x.dim(0);
  return Tensor<float>(shape, std::move(values));
}

Tensor<float> repeat_targets(const std::vector<double>& target, std::size_t n) {
  Tensor<float> t({n, target.size()});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < target.size(); ++j) t[i * target.size() + j] = static_cast<float>(target[j]);
  }
  return t;
}

bool better(double a, double b, bool lower_is_better) {
  const double tol = kTieTolerance * std::max({1.0, std::abs(a), std::abs(b)});
  return lower_is_better ? a < b - tol : a > b + tol;
}

const std::vector<std::pair<std::string, bool>>& metric_table() {
  static const std::vector<std::pair<std::string, bool>> table = {
      {"fidelity", true}, {"diversity", false}, {"entropy", true}, {"separation", false}};
  return table;
}

double metric_of(const EvalReport& r, const std::string& metric) {
  if (metric == "fidelity") return r.fidelity;
  if (metric == "diversity") return r.diversity;
  if (metric == "entropy") return r.entropy;
  if (metric == "separation") return r.separation;
  throw ValidationError("unknown metric '" + metric + "'");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void OracleConfig::validate() const {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw ValidationError("holdout fraction must lie in (0, 1)");
  if (batch == 0 || max_steps == 0 || check_every == 0) throw ValidationError("oracle batch and steps must be positive");
  if (!(lr > 0.0)) throw ValidationError("oracle learning rate must be positive");
  if (!(target_error > 0.0)) throw ValidationError("oracle target error must be positive");
  if (feature_dims == 0 || feature_dims > hidden) throw ValidationError("feature_dims must lie in [1, hidden]");
}

void split_indices(std::size_t n, double holdout_fraction, std::uint64_t seed, std::vector<std::size_t>& train,
                   std::vector<std::size_t>& holdout) {
  Rng rng(mix_seed(seed, 0x5311));
  const auto p = permutation(n, rng);
  const auto n_hold = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(n)));
  if (n_hold == 0 || n_hold >= n) throw ValidationError("holdout split leaves an empty side");
  train.assign(p.begin(), p.end() - static_cast<std::ptrdiff_t>(n_hold));
  holdout.assign(p.end() - static_cast<std::ptrdiff_t>(n_hold), p.end());
}

double mean_landmark_error(const Tensor<float>& predicted, const Tensor<float>& target) {
  predicted.require_same_shape(target, "mean_landmark_error");
  if (predicted.rank() != 2 || predicted.dim(1) % 2 != 0) {
    throw ValidationError("mean_landmark_error expects (N, 2L), got " + shape_string(predicted.shape()));
  }
  const std::size_t n = predicted.dim(0), d = predicted.dim(1), l = d / 2;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double per = 0.0;
    for (std::size_t j = 0; j < l; ++j) {
      const double dx = static_cast<double>(predicted[i * d + 2 * j]) - target[i * d + 2 * j];
      const double dy = static_cast<double>(predicted[i * d + 2 * j + 1]) - target[i * d + 2 * j + 1];
      per += std::hypot(dx, dy);
    }
    total += per / static_cast<double>(l);
  }
  return total / static_cast<double>(n);
}

Tensor<float> Oracle::predict(const Tensor<float>& images) {
  return chunked(images, [&](const Tensor<float>& x) { return net.forward(x); });
}

Points Oracle::features(const Tensor<float>& images) {
  if (feature_dims == 0) throw ValidationError("oracle has no feature projection");
  const Tensor<float> h = chunked(images, [&](const Tensor<float>& x) { return net.forward_until(x, kFeatureLayer); });
  const std::size_t n = h.dim(0), width = h.dim(1);
  if (width != feature_mean.size()) throw ValidationError("oracle feature width mismatch");
  Points out(n, std::vector<double>(feature_dims, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < feature_dims; ++c) {
      double acc = 0.0;
      const double* basis = feature_basis.data() + c * width;
      for (std::size_t j = 0; j < width; ++j) acc += (static_cast<double>(h[i * width + j]) - feature_mean[j]) * basis[j];
      out[i][c] = acc;
    }
  }
  return out;
}

std::string Oracle::feature_space() const {
  return "oracle " + std::string(kFeatureLayer) + " activations, top " + std::to_string(feature_dims) +
         " principal components fitted on genuine training images, whitened";
}

double oracle_error(Oracle& oracle, const synth::Dataset& data, const std::vector<std::size_t>& indices) {
  Tensor<float> images, targets;
  data.batch<float>(indices, images, targets);
  return mean_landmark_error(oracle.predict(images), targets);
}

Oracle train_oracle(const synth::Dataset& data, const OracleConfig& cfg) {
  cfg.validate();
  if (data.size() < 1000) {
    throw ValidationError("oracle training needs at least 1000 records, dataset has " + std::to_string(data.size()));
  }
  arch::ArchConfig a;
  a.image_size = data.image_size();
  a.landmark_count = data.config.landmark_count;
  a.regressor_channels = cfg.channels;
  a.regressor_hidden = cfg.hidden;

  Oracle oracle;
  oracle.net = arch::build_regressor<float>(a);
  oracle.image_size = a.image_size;
  oracle.landmark_count = a.landmark_count;
  oracle.dataset_digest = synth::dataset_digest(data);
  oracle.target_error = cfg.target_error;
  Rng init(mix_seed(cfg.seed, 0));
  oracle.net.initialize(init);

  std::vector<std::size_t> train_idx, hold_idx;
  split_indices(data.size(), cfg.holdout_fraction, cfg.seed, train_idx, hold_idx);
  oracle.train_count = train_idx.size();
  oracle.holdout_count = hold_idx.size();

  // Training targets, optionally shuffled across images for the negative control.
  synth::Dataset train_view = data;
  if (cfg.permute_targets) {
    Rng prng(mix_seed(cfg.seed, 2));
    const auto p = permutation(data.size(), prng);
    for (std::size_t i = 0; i < data.size(); ++i) train_view.records[i].target = data.records[p[i]].target;
  }

  nn::Optimizer<float> opt(nn::AdamSettings{cfg.lr, 0.9, 0.999, 1e-8}, oracle.net);
  Rng rng(mix_seed(cfg.seed, 1));
  std::vector<std::size_t> batch(cfg.batch);
  Tensor<float> images, targets;
  for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
    for (auto& i : batch) i = train_idx[rng.below(train_idx.size())];
    train_view.batch<float>(batch, images, targets);
    oracle.net.zero_grad();
    const auto mse = loss::reconstruction_loss(targets, oracle.net.forward(images));
    oracle.net.backward(mse.grad);
    opt.step(oracle.net);
    oracle.steps = step;
    if (step % cfg.check_every == 0 || step == cfg.max_steps) {
      oracle.holdout_error = oracle_error(oracle, data, hold_idx);
      log::debug("oracle step " + std::to_string(step) + " mse " + fmt(mse.value) + " holdout error " +
                 fmt(oracle.holdout_error));
      if (oracle.holdout_error < cfg.stop_error) break;
    }
  }
  oracle.train_error = oracle_error(oracle, train_view, train_idx);
  oracle.reached_target = oracle.holdout_error < cfg.target_error;
  log::info("oracle trained for " + std::to_string(oracle.steps) + " steps: holdout error " +
            fmt(oracle.holdout_error) + ", train error " + fmt(oracle.train_error));

  // Whitened PCA of penultimate activations on genuine training images.
  std::vector<std::size_t> fit_idx(train_idx.begin(), train_idx.begin() + std::min<std::size_t>(train_idx.size(), 4000));
  data.batch<float>(fit_idx, images, targets);
  const Tensor<float> h = chunked(images, [&](const Tensor<float>& x) { return oracle.net.forward_until(x, kFeatureLayer); });
  const std::size_t n = h.dim(0), width = h.dim(1);
  Eigen::MatrixXd f(n, width);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < width; ++j) f(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = h[i * width + j];
  }
  const Eigen::RowVectorXd mean = f.colwise().mean();
  f.rowwise() -= mean;
  const Eigen::MatrixXd cov = (f.transpose() * f) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  oracle.feature_dims = cfg.feature_dims;
  oracle.feature_mean.assign(mean.data(), mean.data() + width);
  oracle.feature_basis.assign(cfg.feature_dims * width, 0.0);
  for (std::size_t c = 0; c < cfg.feature_dims; ++c) {
    const auto col = static_cast<Eigen::Index>(width - 1 - c);  // eigenvalues ascend
    const double lambda = eig.eigenvalues()(col);
    if (!(lambda > 1e-12)) throw std::runtime_error("oracle feature space is degenerate (eigenvalue " + fmt(lambda) + ")");
    Eigen::VectorXd v = eig.eigenvectors().col(col);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    v /= std::sqrt(lambda);
    std::copy(v.data(), v.data() + width, oracle.feature_basis.begin() + static_cast<std::ptrdiff_t>(c * width));
  }
  return oracle;
}

void save_oracle(const Oracle& oracle, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write oracle " + path.string());
  binio::Writer w(out);
  w.bytes(kOracleMagic, 4);
  w.u32(kOracleVersion);
  w.u64(oracle.image_size);
  w.u64(oracle.landmark_count);
  auto& net = const_cast<nn::Net<float>&>(oracle.net);
  const auto params = net.parameters();
  // hidden1.conv weight (C, 1, 3, 3) and hidden3.dense weight (H, ...) fix the widths.
  w.u64(params.front().param->value.dim(0));
  w.u64(oracle.feature_mean.size());
  w.str(oracle.dataset_digest);
  w.f64(oracle.holdout_error);
  w.f64(oracle.train_error);
  w.f64(oracle.target_error);
  w.u64(oracle.train_count);
  w.u64(oracle.holdout_count);
  w.u64(oracle.steps);
  w.u32(oracle.reached_target ? 1 : 0);
  w.u64(oracle.feature_dims);
  w.u64(params.size() + 2);
  for (const auto& p : params) w.tensor(p.name, p.param->value);
  w.tensor("feature.mean", Tensor<double>({oracle.feature_mean.size()}, oracle.feature_mean));
  w.tensor("feature.basis", Tensor<double>({oracle.feature_dims, oracle.feature_mean.size()}, oracle.feature_basis));
  w.bytes(kOracleMagic, 4);
  if (!out) throw std::runtime_error("failed writing oracle " + path.string());
}

Oracle load_oracle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open oracle " + path.string());
  binio::Reader r(in, path.string());
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kOracleMagic, 4) != 0) throw ValidationError("not an oracle file (bad magic): " + path.string());
  if (const auto v = r.u32(); v != kOracleVersion) throw ValidationError("unsupported oracle version " + std::to_string(v));
  Oracle o;
  o.image_size = r.u64();
  o.landmark_count = r.u64();
  arch::ArchConfig a;
  a.image_size = o.image_size;
  a.landmark_count = o.landmark_count;
  a.regressor_channels = r.u64();
  a.regressor_hidden = r.u64();
  o.net = arch::build_regressor<float>(a);
  o.dataset_digest = r.str();
  o.holdout_error = r.f64();
  o.train_error = r.f64();
  o.target_error = r.f64();
  o.train_count = r.u64();
  o.holdout_count = r.u64();
  o.steps = r.u64();
  o.reached_target = r.u32() != 0;
  o.feature_dims = r.u64();
  std::map<std::string, Tensor<double>> tensors;
  const auto count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name;
    Tensor<double> t = r.tensor(name);
    tensors.emplace(name, std::move(t));
  }
  r.bytes(magic, 4);
  if (std::memcmp(magic, kOracleMagic, 4) != 0) throw ValidationError("oracle trailer missing: " + path.string());
  auto take = [&](const std::string& name, const Shape& shape) {
    auto it = tensors.find(name);
    if (it == tensors.end() || it->second.shape() != shape) {
      throw ValidationError("oracle file lacks tensor '" + name + "' of shape " + shape_string(shape));
    }
    return it->second;
  };
  for (auto& p : o.net.parameters()) p.param->value = take(p.name, p.param->value.shape()).cast<float>();
  o.feature_mean = take("feature.mean", {a.regressor_hidden}).storage();
  o.feature_basis = take("feature.basis", {o.feature_dims, a.regressor_hidden}).storage();
  return o;
}

SampleSource generator_source(const train::TrainingState& state) {
  auto g = std::make_shared<nn::Net<float>>(state.role("G").net);
  const bool conditional = state.config.arch.conditional;
  const std::size_t latent = state.config.arch.latent_dim;
  return [g, conditional, latent](const Tensor<float>& targets, Rng& rng) {
    const Tensor<float> z = synth::sample_latent<float>(rng, latent, targets.dim(0));
    const Tensor<float> in = conditional ? synth::make_condition_input(z, targets) : z;
    return chunked(in, [&](const Tensor<float>& x) { return g->forward(x); });
  };
}

SampleSource renderer_source(const synth::SynthConfig& cfg) {
  cfg.validate();
  return [cfg](const Tensor<float>& targets, Rng& rng) {
    const std::size_t n = targets.dim(0), d = targets.dim(1), s = cfg.image_size;
    if (d != 2 * synth::kLandmarks) throw ValidationError("renderer_source: targets must have 10 coordinates");
    Tensor<float> out({n, 1, s, s});
    for (std::size_t i = 0; i < n; ++i) {
      auto at = [&](std::size_t j) { return static_cast<double>(targets[i * d + j]); };
      synth::FaceParams p;
      std::size_t attempt = 0;
      for (;; ++attempt) {
        if (attempt == cfg.max_retries) {
          throw ValidationError("renderer_source: requested landmarks admit no valid face at row " + std::to_string(i));
        }
        p = synth::sample_face_params(rng, cfg);
        p.left_eye = {at(0), at(1)};
        p.right_eye = {at(2), at(3)};
        p.nose = {at(4), at(5)};
        p.mouth_left = {at(6), at(7)};
        p.mouth_right = {at(8), at(9)};
        if (synth::check_invariants(p, s).empty()) break;
      }
      const auto pixels = synth::quantize(synth::render_face(p, s));
      for (std::size_t k = 0; k < s * s; ++k) out[i * s * s + k] = static_cast<float>(pixels[k]) / 255.0f;
    }
    return out;
  };
}

double landmark_fidelity(const SampleSource& source, Oracle& oracle, const Points& targets, std::size_t n_per_target,
                         std::uint64_t seed) {
  if (targets.empty() || n_per_target == 0) throw ValidationError("landmark_fidelity needs targets and samples");
  if (oracle.steps == 0) throw ValidationError("landmark_fidelity: oracle is untrained");
  double total = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (targets[t].size() != 2 * oracle.landmark_count) throw ValidationError("target dimension does not match the oracle");
    Rng rng(mix_seed(seed, t));
    const Tensor<float> y = repeat_targets(targets[t], n_per_target);
    total += mean_landmark_error(oracle.predict(source(y, rng)), y);
  }
  return total / static_cast<double>(targets.size());
}

double diversity_score(const Tensor<float>& samples) {
  if (samples.rank() < 2 || samples.dim(0) < 2) throw ValidationError("diversity_score needs at least 2 samples");
  const std::size_t n = samples.dim(0), p = samples.stride0();
  std::vector<double> mean(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) mean[j] += samples[i * p + j];
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  // sum_{i<j} |a_i - a_j|^2 = n * sum_i |a_i - mean|^2
  double spread = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      const double d = samples[i * p + j] - mean[j];
      spread += d * d;
    }
  }
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  return static_cast<double>(n) * spread / pairs / static_cast<double>(p);
}

double knn_entropy(const Points& samples, std::size_t k, std::uint64_t jitter_seed) {
  const std::size_t n = samples.size();
  if (k == 0 || n <= k) throw ValidationError("knn_entropy requires n > k >= 1");
  const std::size_t d = samples.front().size();
  if (d == 0) throw ValidationError("knn_entropy: zero-dimensional samples");
  for (const auto& s : samples) {
    if (s.size() != d) throw ValidationError("knn_entropy: samples differ in dimension");
  }
  std::vector<double> flat(n * d);
  for (std::size_t i = 0; i < n; ++i) std::copy(samples[i].begin(), samples[i].end(), flat.begin() + static_cast<std::ptrdiff_t>(i * d));

  auto kth_distances = [&](std::vector<double>& eps) {
    std::vector<double> best(k);
    for (std::size_t i = 0; i < n; ++i) {
      std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
      const double* a = flat.data() + i * d;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double* b = flat.data() + j * d;
        double d2 = 0.0;
        for (std::size_t c = 0; c < d; ++c) d2 += (a[c] - b[c]) * (a[c] - b[c]);
        if (d2 < best[k - 1]) {
          std::size_t pos = k - 1;
          while (pos > 0 && best[pos - 1] > d2) {
            best[pos] = best[pos - 1];
            --pos;
          }
          best[pos] = d2;
        }
      }
      eps[i] = std::sqrt(best[k - 1]);
    }
  };
  std::vector<double> eps(n);
  kth_distances(eps);
  if (std::any_of(eps.begin(), eps.end(), [](double e) { return e == 0.0; })) {
    double scale = 0.0;
    for (double v : flat) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) scale = 1.0;
    log::warn("knn_entropy: duplicate points, adding jitter of " + fmt(1e-9 * scale));
    Rng rng(jitter_seed);
    for (double& v : flat) v += 1e-9 * scale * rng.uniform(-1.0, 1.0);
    kth_distances(eps);
  }
  const double dd = static_cast<double>(d);
  const double log_unit_ball = 0.5 * dd * std::log(std::numbers::pi) - std::lgamma(0.5 * dd + 1.0);
  double sum_log = 0.0;
  for (double e : eps) sum_log += std::log(e);
  return boost::math::digamma(static_cast<double>(n)) - boost::math::digamma(static_cast<double>(k)) + log_unit_ball +
         dd * sum_log / static_cast<double>(n);
}

double sample_set_jsd(const Points& a, const Points& b, std::size_t bins) {
  if (a.empty() || b.empty()) throw ValidationError("sample_set_jsd: empty sample set");
  if (bins == 0) throw ValidationError("sample_set_jsd: bins must be positive");
  const std::size_t d = a.front().size();
  if (d == 0) throw ValidationError("sample_set_jsd: zero-dimensional samples");
  for (const auto* set : {&a, &b}) {
    for (const auto& s : *set) {
      if (s.size() != d) throw ValidationError("sample_set_jsd: sets differ in feature dimension");
    }
  }
  double cells = 1.0;
  for (std::size_t c = 0; c < d; ++c) cells *= static_cast<double>(bins);
  if (cells > 1e7) throw ValidationError("sample_set_jsd: too many histogram cells");

  std::vector<double> lo(d, std::numeric_limits<double>::infinity()), hi(d, -std::numeric_limits<double>::infinity());
  for (const auto* set : {&a, &b}) {
    for (const auto& s : *set) {
      for (std::size_t c = 0; c < d; ++c) {
        lo[c] = std::min(lo[c], s[c]);
        hi[c] = std::max(hi[c], s[c]);
      }
    }
  }
  auto cell = [&](const std::vector<double>& s) {
    std::size_t idx = 0;
    for (std::size_t c = 0; c < d; ++c) {
      std::size_t bin = 0;
      if (hi[c] > lo[c]) {
        bin = static_cast<std::size_t>(std::floor((s[c] - lo[c]) / (hi[c] - lo[c]) * static_cast<double>(bins)));
        bin = std::min(bin, bins - 1);
      }
      idx = idx * bins + bin;
    }
    return idx;
  };
  std::vector<double> p(static_cast<std::size_t>(cells), 0.0), q(p.size(), 0.0);
  for (const auto& s : a) p[cell(s)] += 1.0 / static_cast<double>(a.size());
  for (const auto& s : b) q[cell(s)] += 1.0 / static_cast<double>(b.size());
  double jsd = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) jsd += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) jsd += 0.5 * q[i] * std::log(q[i] / m);
  }
  return std::max(jsd, 0.0);
}

std::vector<std::uint8_t> grid_pixels(const std::vector<std::vector<std::uint8_t>>& images, std::size_t size,
                                      std::size_t cols, std::size_t& width, std::size_t& height) {
  if (images.empty()) throw ValidationError("grid: no images");
  if (cols == 0) throw ValidationError("grid: cols must be positive");
  cols = std::min(cols, images.size());
  const std::size_t rows = (images.size() + cols - 1) / cols;
  width = cols * size + (cols - 1);
  height = rows * size + (rows - 1);
  std::vector<std::uint8_t> out(width * height, 255);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    const std::size_t r = i / cols, c = i % cols;
    for (std::size_t y = 0; y < size; ++y) {
      std::uint8_t* dst = out.data() + (r * (size + 1) + y) * width + c * (size + 1);
      if (i < images.size()) {
        if (images[i].size() != size * size) throw ValidationError("grid: image " + std::to_string(i) + " has the wrong size");
        std::copy_n(images[i].data() + y * size, size, dst);
      } else {
        std::fill_n(dst, size, std::uint8_t{0});
      }
    }
  }
  return out;
}

void emit_grid(const Tensor<float>& samples, std::size_t cols, const std::filesystem::path& path,
               std::span<const std::string> comments) {
  if (samples.rank() != 4 || samples.dim(1) != 1 || samples.dim(2) != samples.dim(3)) {
    throw ValidationError("emit_grid expects (N, 1, S, S) samples, got " + shape_string(samples.shape()));
  }
  const std::size_t s = samples.dim(2);
  std::vector<std::vector<std::uint8_t>> images;
  for (std::size_t i = 0; i < samples.dim(0); ++i) {
    std::vector<double> px(samples.data() + i * s * s, samples.data() + (i + 1) * s * s);
    images.push_back(synth::quantize(px));
  }
  std::size_t w = 0, h = 0;
  const auto pixels = grid_pixels(images, s, cols, w, h);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  synth::write_pgm(path, pixels, w, h, comments);
}

void EvalSpec::validate() const {
  if (targets < 2) throw ValidationError("evaluation needs at least 2 targets");
  if (per_target < 2 || per_target <= knn_k) throw ValidationError("per-target sample count must exceed knn k and 1");
  if (knn_k == 0) throw ValidationError("knn k must be positive");
  if (bins == 0) throw ValidationError("bins must be positive");
}

Points pick_targets(const synth::Dataset& data, std::size_t count, std::uint64_t seed) {
  if (count > data.size()) throw ValidationError("more targets requested than dataset records");
  Rng rng(mix_seed(seed, 0x7A6E));
  const auto p = permutation(data.size(), rng);
  Points out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(data.records[p[i]].target);
  return out;
}

EvalReport evaluate(const SampleSource& source, Oracle& oracle, const synth::Dataset& data, const EvalSpec& spec,
                    std::uint64_t seed, const std::string& model) {
  spec.validate();
  if (oracle.steps == 0) throw ValidationError("evaluate: oracle is untrained");
  EvalReport r;
  r.model = model;
  r.seed = seed;
  r.spec = spec;
  r.targets = spec.targets;
  r.per_target = spec.per_target;
  r.samples = spec.targets * spec.per_target;
  r.feature_space = oracle.feature_space();
  r.dataset_digest = synth::dataset_digest(data);
  const Points targets = pick_targets(data, spec.targets, seed);
  std::vector<Points> feats;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    Rng rng(mix_seed(seed, t));
    const Tensor<float> y = repeat_targets(targets[t], spec.per_target);
    const Tensor<float> images = source(y, rng);
    r.fidelity += mean_landmark_error(oracle.predict(images), y);
    r.diversity += diversity_score(images);
    feats.push_back(oracle.features(images));
    r.entropy += knn_entropy(feats.back(), spec.knn_k, mix_seed(seed, 1000 + t));
  }
  const double nt = static_cast<double>(targets.size());
  r.fidelity /= nt;
  r.diversity /= nt;
  r.entropy /= nt;
  const std::size_t pairs = targets.size() / 2;
  for (std::size_t p = 0; p < pairs; ++p) r.separation += sample_set_jsd(feats[2 * p], feats[2 * p + 1], spec.bins);
  r.separation /= static_cast<double>(pairs);
  return r;
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  out << "model=" << model << "\nseed=" << seed << "\nfidelity=" << fmt(fidelity) << "\ndiversity=" << fmt(diversity)
      << "\nentropy=" << fmt(entropy) << "\nseparation=" << fmt(separation) << "\ntargets=" << targets
      << "\nper_target=" << per_target << "\nsamples=" << samples << "\nknn_k=" << spec.knn_k
      << "\njsd_bins_per_dim=" << spec.bins << "\nfeature_space=" << feature_space
      << "\ndataset_digest=" << dataset_digest << "\n";
  return out.str();
}

CompareReport compare_report(const std::vector<ModelRuns>& models, Oracle& oracle, const synth::Dataset& data,
                             const std::vector<std::uint64_t>& seeds, const EvalSpec& spec) {
  if (models.empty() || seeds.empty()) throw ValidationError("compare needs models and seeds");
  const std::string digest = synth::dataset_digest(data);
  if (oracle.dataset_digest != digest) log::warn("oracle was trained on dataset " + oracle.dataset_digest);
  CompareReport rep;
  rep.seeds = seeds;
  for (const auto& m : models) {
    if (m.states.size() != 1 && m.states.size() != seeds.size()) {
      throw ValidationError("model " + m.name + ": give one checkpoint or one per seed");
    }
    for (const auto& s : m.states) {
      if (s.dataset_digest != digest) {
        throw ValidationError("dataset digest mismatch: " + m.name + " was trained on " + s.dataset_digest +
                              ", evaluation data is " + digest);
      }
    }
    rep.models.push_back(m.name);
    rep.reports.emplace_back();
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      const auto& state = m.states.size() == 1 ? m.states[0] : m.states[i];
      rep.reports.back().push_back(evaluate(generator_source(state), oracle, data, spec, seeds[i], m.name));
      log::info("evaluated " + m.name + " seed " + std::to_string(seeds[i]));
    }
  }
  for (const auto& [metric, lower] : metric_table()) {
    std::map<std::string, std::size_t> tally;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      Verdict v{metric, lower, seeds[i], {}, "tie"};
      for (std::size_t m = 0; m < rep.models.size(); ++m) v.values.push_back(metric_of(rep.reports[m][i], metric));
      std::size_t best = 0;
      for (std::size_t m = 1; m < v.values.size(); ++m) {
        if (better(v.values[m], v.values[best], lower)) best = m;
      }
      bool unique = true;
      for (std::size_t m = 0; m < v.values.size(); ++m) {
        if (m != best && !better(v.values[best], v.values[m], lower)) unique = false;
      }
      if (unique && v.values.size() > 1) v.winner = rep.models[best];
      ++tally[v.winner];
      rep.verdicts.push_back(v);
    }
    Verdict majority{metric, lower, 0, std::vector<double>(rep.models.size(), 0.0), "tie"};
    for (std::size_t m = 0; m < rep.models.size(); ++m) {
      for (std::size_t i = 0; i < seeds.size(); ++i) majority.values[m] += metric_of(rep.reports[m][i], metric);
      majority.values[m] /= static_cast<double>(seeds.size());
    }
    for (const auto& [name, count] : tally) {
      if (2 * count > seeds.size()) majority.winner = name;
    }
    rep.verdicts.push_back(majority);
  }
  return rep;
}

double CompareReport::value(const std::string& model, std::size_t seed_index, const std::string& metric) const {
  const auto it = std::find(models.begin(), models.end(), model);
  if (it == models.end()) throw ValidationError("compare report has no model '" + model + "'");
  return metric_of(reports.at(static_cast<std::size_t>(it - models.begin())).at(seed_index), metric);
}

std::size_t CompareReport::wins(const std::string& metric, const std::string& a, const std::string& b) const {
  bool lower = false;
  for (const auto& [name, l] : metric_table()) {
    if (name == metric) lower = l;
  }
  std::size_t count = 0;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (better(value(a, i, metric), value(b, i, metric), lower)) ++count;
  }
  return count;
}

std::string CompareReport::verdict_csv() const {
  std::string out = "metric,direction,seed";
  for (const auto& m : models) out += "," + m;
  out += ",winner\n";
  for (const auto& v : verdicts) {
    out += v.metric + (v.lower_is_better ? ",lower" : ",higher") + ",";
    out += (v.seed == 0 && &v != &verdicts.front() && v.values.size() == models.size() &&
            std::find(seeds.begin(), seeds.end(), 0) == seeds.end())
               ? "majority"
               : std::to_string(v.seed);
    for (double x : v.values) out += "," + fmt(x);
    out += "," + v.winner + "\n";
  }
  return out;
}

std::string CompareReport::to_text() const {
  std::ostringstream out;
  for (std::size_t m = 0; m < models.size(); ++m) {
    for (const auto& r : reports[m]) out << "[" << r.model << " seed " << r.seed << "]\n" << r.to_text() << "\n";
  }
  auto has = [&](const std::string& m) { return std::find(models.begin(), models.end(), m) != models.end(); };
  const std::size_t n = seeds.size();
  out << "[claims]\n";
  if (has("vargan") && has("cbigan")) {
    out << "diversity_vargan_gt_cbigan=" << wins("diversity", "vargan", "cbigan") << "/" << n << "\n";
  }
  if (has("vargan") && has("began")) {
    out << "entropy_vargan_lt_began=" << wins("entropy", "vargan", "began") << "/" << n << "\n";
    out << "separation_vargan_gt_began=" << wins("separation", "vargan", "began") << "/" << n << "\n";
    std::size_t halved = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (value("vargan", i, "fidelity") <= 0.5 * value("began", i, "fidelity")) ++halved;
    }
    out << "fidelity_vargan_le_half_began=" << halved << "/" << n << "\n";
  }
  return out.str();
}

}  // namespace vargan::eval
