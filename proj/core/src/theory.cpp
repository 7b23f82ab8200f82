#include "vargan/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>

#include "vargan/error.hpp"

namespace vargan::theory {

namespace {

void require_same_bins(const DiscreteDistribution& a, const DiscreteDistribution& b, const char* what) {
  if (a.size() != b.size()) {
    throw ValidationError(std::string(what) + ": distributions have " + std::to_string(a.size()) + " and " +
                          std::to_string(b.size()) + " bins");
  }
}

void require_distinct_targets(double y1, double y2) {
  if (y1 == y2) throw ValidationError("pair regressor requires y1 != y2");
}

}  // namespace

DiscreteDistribution::DiscreteDistribution(std::vector<double> p) : p_(std::move(p)) {
  if (p_.empty()) throw ValidationError("distribution needs at least one bin");
  double sum = 0.0;
  for (std::size_t i = 0; i < p_.size(); ++i) {
    if (!(p_[i] >= 0.0) || !std::isfinite(p_[i])) {
      throw ValidationError("distribution entry " + std::to_string(i) + " is negative or non-finite");
    }
    sum += p_[i];
  }
  if (std::abs(sum - 1.0) > 1e-12) throw ValidationError("distribution sums to " + std::to_string(sum));
}

DiscreteDistribution DiscreteDistribution::uniform(std::size_t bins) {
  return DiscreteDistribution(std::vector<double>(bins, 1.0 / static_cast<double>(bins)));
}

DiscreteDistribution DiscreteDistribution::point_mass(std::size_t bins, std::size_t at) {
  std::vector<double> p(bins, 0.0);
  p.at(at) = 1.0;
  return DiscreteDistribution(std::move(p));
}

DiscreteDistribution DiscreteDistribution::random(std::size_t bins, Rng& rng, double zero_fraction) {
  std::vector<double> p(bins);
  for (auto& v : p) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    v = -std::log(u);
  }
  if (zero_fraction > 0.0) {
    const std::size_t keep = rng.below(bins);
    for (std::size_t i = 0; i < bins; ++i) {
      if (i != keep && rng.uniform() < zero_fraction) p[i] = 0.0;
    }
  }
  const double sum = std::accumulate(p.begin(), p.end(), 0.0);
  for (auto& v : p) v /= sum;
  return DiscreteDistribution(std::move(p));
}

double shannon_entropy(const DiscreteDistribution& p) {
  double h = 0.0;
  for (double v : p.values()) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double kl_divergence(const DiscreteDistribution& p, const DiscreteDistribution& q) {
  require_same_bins(p, q, "kl_divergence");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

double jsd(const DiscreteDistribution& p1, const DiscreteDistribution& p2) {
  require_same_bins(p1, p2, "jsd");
  double total = 0.0;
  for (std::size_t i = 0; i < p1.size(); ++i) {
    const double m = 0.5 * (p1[i] + p2[i]);
    if (p1[i] > 0.0) total += 0.5 * p1[i] * std::log(p1[i] / m);
    if (p2[i] > 0.0) total += 0.5 * p2[i] * std::log(p2[i] / m);
  }
  return total;
}

double discrete_regression_loss(const DiscreteDistribution& p, const RegressorTable& r, double y,
                                bool magnitude_log) {
  if (r.size() != p.size()) throw ValidationError("regressor table size does not match distribution");
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    double arg = 1.0 - (y - r[i]);
    if (magnitude_log) arg = std::abs(arg);
    if (!(arg > 0.0)) {
      throw ValidationError("log argument " + std::to_string(arg) + " is not positive in bin " + std::to_string(i));
    }
    loss -= p[i] * std::log(arg);
  }
  return loss;
}

RegressorTable optimal_regressor_single(const DiscreteDistribution& p, double c, double y) {
  if (!(c > 0.0)) throw ValidationError("post-integration constant c must be positive");
  RegressorTable r(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) r[i] = p[i] / c + y - 1.0;
  return r;
}

RegressorTable optimal_regressor_pair(const DiscreteDistribution& p1, const DiscreteDistribution& p2, double y1,
                                      double y2) {
  require_same_bins(p1, p2, "optimal_regressor_pair");
  require_distinct_targets(y1, y2);
  const double c1 = 1.0 - y1, c2 = 1.0 - y2;
  RegressorTable r(p1.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    const double mass = p1[i] + p2[i];
    if (mass == 0.0) throw ValidationError("bin " + std::to_string(i) + " is outside the union support");
    r[i] = -(p1[i] * c2 + p2[i] * c1) / mass;
  }
  return r;
}

double pair_regression_loss(const DiscreteDistribution& p1, const DiscreteDistribution& p2,
                            const RegressorTable& r, double y1, double y2) {
  require_same_bins(p1, p2, "pair_regression_loss");
  if (r.size() != p1.size()) throw ValidationError("regressor table size does not match distributions");
  const double c1 = 1.0 - y1, c2 = 1.0 - y2;
  double loss = 0.0;
  for (std::size_t i = 0; i < p1.size(); ++i) {
    for (const auto& [w, c] : {std::pair{p1[i], c1}, std::pair{p2[i], c2}}) {
      if (w == 0.0) continue;
      const double arg = std::abs(c + r[i]);
      if (arg == 0.0) throw ValidationError("zero log argument in bin " + std::to_string(i));
      loss -= w * std::log(arg);
    }
  }
  return loss;
}

IdentityCheck verify_entropy_identity(const DiscreteDistribution& p, double c, double y, double tolerance) {
  const RegressorTable r = optimal_regressor_single(p, c, y);
  IdentityCheck check;
  check.name = "entropy_identity";
  check.lhs = discrete_regression_loss(p, r, y, false);
  check.rhs = shannon_entropy(p) + std::log(c);
  check.residual = std::abs(check.lhs - check.rhs);
  check.pass = check.residual < tolerance;
  return check;
}

JsdIdentityReport verify_jsd_identity(const DiscreteDistribution& p1, const DiscreteDistribution& p2, double y1,
                                      double y2, double tolerance) {
  const RegressorTable r = optimal_regressor_pair(p1, p2, y1, y2);
  const double gap = std::abs((1.0 - y1) - (1.0 - y2));
  JsdIdentityReport report;
  report.loss = pair_regression_loss(p1, p2, r, y1, y2);
  report.jsd_value = jsd(p1, p2);
  report.derived_constant = std::log(4.0) - 2.0 * std::log(gap);
  report.negated_log4_constant = -std::log(4.0) - 2.0 * std::log(gap);
  report.constant_residual = std::abs(report.loss + 2.0 * report.jsd_value - report.derived_constant);
  report.pass = report.constant_residual < tolerance;
  report.note =
      "magnitude logs: log(c1-c2) and log(c2-c1) cannot both be real; the closing constant is "
      "+log 4 - 2 log|c1-c2|; the -log 4 form is off by log 16 and does not close";
  return report;
}

BruteForceResult brute_force_pair_minimum(const DiscreteDistribution& p1, const DiscreteDistribution& p2,
                                          double y1, double y2, const GridSpec& grid) {
  require_same_bins(p1, p2, "brute_force_pair_minimum");
  require_distinct_targets(y1, y2);
  if (grid.points < 3) throw ValidationError("grid needs at least 3 points");
  const double c1 = 1.0 - y1, c2 = 1.0 - y2;
  const double gap = std::abs(c1 - c2);
  const double lo = std::min(-c1, -c2) + grid.margin * gap;
  const double hi = std::max(-c1, -c2) - grid.margin * gap;
  const double step = (hi - lo) / static_cast<double>(grid.points - 1);

  BruteForceResult out;
  std::vector<double> profile(grid.points);
  for (std::size_t i = 0; i < p1.size(); ++i) {
    if (p1[i] + p2[i] == 0.0) throw ValidationError("bin " + std::to_string(i) + " is outside the union support");
    for (std::size_t g = 0; g < grid.points; ++g) {
      const double r = lo + step * static_cast<double>(g);
      double f = 0.0;
      if (p1[i] > 0.0) f -= p1[i] * std::log(std::abs(c1 + r));
      if (p2[i] > 0.0) f -= p2[i] * std::log(std::abs(c2 + r));
      profile[g] = f;
    }
    const auto best = static_cast<std::size_t>(std::min_element(profile.begin(), profile.end()) - profile.begin());
    if (best == 0 || best + 1 == grid.points) {
      throw ValidationError("bin " + std::to_string(i) +
                            ": objective is monotone on the grid, no finite interior minimizer");
    }
    out.argmin.push_back(lo + step * static_cast<double>(best));
    out.step.push_back(step);
    out.min_loss.push_back(profile[best]);
    out.neighbour_rise.push_back(std::max(profile[best - 1], profile[best + 1]) - profile[best]);
  }
  return out;
}

SweepSummary run_theory_sweep(std::size_t trials, std::uint64_t seed, std::size_t bins) {
  SweepSummary summary;
  Rng rng(seed);
  auto add = [&](IdentityCheck check) {
    summary.all_pass = summary.all_pass && check.pass;
    summary.checks.push_back(std::move(check));
  };
  // Keeps every bin's mass away from zero so the pair optimum stays clear of the poles.
  auto spread = [&](Rng& r) {
    const auto d = DiscreteDistribution::random(bins, r);
    std::vector<double> p(bins);
    for (std::size_t i = 0; i < bins; ++i) p[i] = 0.8 * d[i] + 0.2 / static_cast<double>(bins);
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& v : p) v /= s;
    return DiscreteDistribution(std::move(p));
  };

  for (std::size_t t = 0; t < trials; ++t) {
    const auto p = DiscreteDistribution::random(bins, rng, 0.25);
    const double c = rng.uniform(0.25, 4.0);
    const double y = rng.uniform(-1.0, 1.0);
    auto t1 = verify_entropy_identity(p, c, y);
    t1.name += "#" + std::to_string(t);
    summary.max_entropy_residual = std::max(summary.max_entropy_residual, t1.residual);
    add(std::move(t1));

    const auto p1 = spread(rng);
    const auto p2 = spread(rng);
    const double y1 = rng.uniform(-1.0, 1.0);
    double y2 = rng.uniform(-1.0, 1.0);
    while (std::abs(y1 - y2) < 0.05) y2 = rng.uniform(-1.0, 1.0);
    const auto t2 = verify_jsd_identity(p1, p2, y1, y2);
    IdentityCheck c2{"jsd_identity#" + std::to_string(t), t2.loss + 2.0 * t2.jsd_value,
                     t2.derived_constant, t2.constant_residual, t2.pass, t2.note};
    summary.max_jsd_residual = std::max(summary.max_jsd_residual, t2.constant_residual);
    add(std::move(c2));

    const auto closed = optimal_regressor_pair(p1, p2, y1, y2);
    const auto grid = brute_force_pair_minimum(p1, p2, y1, y2);
    double worst = 0.0;
    for (std::size_t i = 0; i < bins; ++i) worst = std::max(worst, std::abs(grid.argmin[i] - closed[i]) / grid.step[i]);
    summary.max_brute_force_gap_in_steps = std::max(summary.max_brute_force_gap_in_steps, worst);
    add(IdentityCheck{"pair_grid_minimum#" + std::to_string(t), worst, 1.0, worst, worst <= 1.0,
                      "gap between grid argmin and closed form, in grid steps"});
  }
  return summary;
}

std::string format_record(const IdentityCheck& check) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "check=%s lhs=%.17g rhs=%.17g residual=%.3e pass=%d", check.name.c_str(), check.lhs,
                check.rhs, check.residual, check.pass ? 1 : 0);
  return buf;
}

}  // namespace vargan::theory
