#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vargan/rng.hpp"

namespace vargan::theory {

// Probability vector over n bins. Construction validates p_i >= 0 and
// sum p_i = 1 within 1e-12.
class DiscreteDistribution {
 public:
  explicit DiscreteDistribution(std::vector<double> p);

  static DiscreteDistribution uniform(std::size_t bins);
  static DiscreteDistribution point_mass(std::size_t bins, std::size_t at);
  // Dirichlet(1,...,1) draw; `zero_fraction` of bins are forced empty.
  static DiscreteDistribution random(std::size_t bins, Rng& rng, double zero_fraction = 0.0);

  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  const std::vector<double>& values() const { return p_; }

 private:
  std::vector<double> p_;
};

// Regressor values on the distribution's support, one per bin.
using RegressorTable = std::vector<double>;

// Natural-log entropy with 0 log 0 = 0.
double shannon_entropy(const DiscreteDistribution& p);
double kl_divergence(const DiscreteDistribution& p, const DiscreteDistribution& q);
double jsd(const DiscreteDistribution& p1, const DiscreteDistribution& p2);

// sum_i p_i * -log(1 - (y - r_i)), or with |.| inside the log in magnitude mode.
// Bins with p_i = 0 contribute nothing.
double discrete_regression_loss(const DiscreteDistribution& p, const RegressorTable& r, double y,
                                bool magnitude_log);

// r_i = p_i / c + y - 1
RegressorTable optimal_regressor_single(const DiscreteDistribution& p, double c, double y);

// r_i = -(p1_i c2 + p2_i c1) / (p1_i + p2_i) with c_k = 1 - y_k.
RegressorTable optimal_regressor_pair(const DiscreteDistribution& p1, const DiscreteDistribution& p2, double y1,
                                      double y2);

// Two-set loss -sum p1_i log|c1 + r_i| - sum p2_i log|c2 + r_i|.
double pair_regression_loss(const DiscreteDistribution& p1, const DiscreteDistribution& p2,
                            const RegressorTable& r, double y1, double y2);

struct IdentityCheck {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;
  bool pass = false;
  std::string note;
};

// Loss at the closed-form single-set regressor against H(p) + log c.
IdentityCheck verify_entropy_identity(const DiscreteDistribution& p, double c, double y, double tolerance = 1e-9);

struct JsdIdentityReport {
  double loss = 0.0;                  // two-set loss at the closed-form pair regressor
  double jsd_value = 0.0;
  double derived_constant = 0.0;       // log 4 - 2 log|c1 - c2|
  double negated_log4_constant = 0.0; // -log 4 - 2 log|c1 - c2|, taking magnitudes of both c-logs
  double constant_residual = 0.0;     // |loss + 2 JSD - derived_constant|
  bool pass = false;
  std::string note;
};

JsdIdentityReport verify_jsd_identity(const DiscreteDistribution& p1, const DiscreteDistribution& p2, double y1,
                                      double y2, double tolerance = 1e-9);

struct GridSpec {
  std::size_t points = 20001;
  // Margin kept away from the poles at r = -c1 and r = -c2, as a fraction of |c1 - c2|.
  double margin = 1e-4;
};

struct BruteForceResult {
  RegressorTable argmin;
  std::vector<double> step;         // grid spacing per bin
  std::vector<double> min_loss;     // per-bin objective at the argmin
  std::vector<double> neighbour_rise; // max objective increase to the adjacent grid points
};

// Per-bin grid search of p1_i(-log|c1 + r|) + p2_i(-log|c2 + r|) over the open
// interval between the poles. Throws ValidationError if the minimum sits on
// the grid boundary (no interior stationary point, e.g. when one of the
// distributions is empty in that bin).
BruteForceResult brute_force_pair_minimum(const DiscreteDistribution& p1, const DiscreteDistribution& p2,
                                          double y1, double y2, const GridSpec& grid = {});

struct SweepSummary {
  std::vector<IdentityCheck> checks;
  bool all_pass = true;
  double max_entropy_residual = 0.0;
  double max_jsd_residual = 0.0;
  double max_brute_force_gap_in_steps = 0.0;
};

// Randomized sweep over `trials` seeded instances of both identities plus a
// grid-search check of the pair optimum.
SweepSummary run_theory_sweep(std::size_t trials, std::uint64_t seed, std::size_t bins = 8);

// One key=value record per check.
std::string format_record(const IdentityCheck& check);

}  // namespace vargan::theory
