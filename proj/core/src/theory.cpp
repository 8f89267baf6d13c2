// Copyright 2026 The m2vae Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include "m2vae/theory.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "m2vae/errors.hpp"

namespace m2vae {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double normal_log_pdf(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + r * r / var);
}

// Rounding allowance for comparing two long-double evaluations of equal
// magnitude: a handful of ulps.
long double rounding_allowance(long double scale) { return 64.0L * LDBL_EPSILON * std::fabs(scale); }

struct Draw {
  std::vector<long double> q;
  std::vector<long double> alpha;
};

// q_j ~ U(0,1); alpha uniform on the simplex, rejecting boundary values.
Draw sample_draw(std::mt19937_64& rng, std::size_t k) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::exponential_distribution<double> e(1.0);
  Draw d{std::vector<long double>(k), std::vector<long double>(k)};
  for (;;) {
    long double total = 0;
    for (std::size_t j = 0; j < k; ++j) {
      double q;
      do q = u(rng);
      while (q <= 0.0);
      d.q[j] = q;
      d.alpha[j] = e(rng);
      total += d.alpha[j];
    }
    bool interior = true;
    for (auto& a : d.alpha) {
      a /= total;
      interior = interior && a > 0 && a < 1;
    }
    if (interior) return d;
  }
}

Draw violation_fixture(std::size_t k) {
  return {std::vector<long double>(k, 2.0L), std::vector<long double>(k, 1.0L / static_cast<long double>(k))};
}

void validate(const TheoryOptions& o) {
  if (o.draws == 0) throw ConfigError("draws must be at least 1");
  if (o.components < 2) throw ConfigError("need at least two components");
}

}  // namespace

AmgmCheck check_amgm(std::span<const long double> q, std::span<const long double> alpha) {
  AmgmCheck c;
  long double log_geo = 0;
  c.product = 1;
  long double qmin = q[0], qmax = q[0];
  for (std::size_t j = 0; j < q.size(); ++j) {
    c.arithmetic += alpha[j] * q[j];
    log_geo += alpha[j] * std::log(q[j]);
    c.product *= q[j];
    c.strict_log_margin += (1 - alpha[j]) * -std::log1p(q[j] - 1);
    qmin = std::min(qmin, q[j]);
    qmax = std::max(qmax, q[j]);
  }
  c.geometric = std::exp(log_geo);
  c.amgm_margin = c.arithmetic - c.geometric;
  c.equal_q = qmax - qmin <= 1e-12L;
  const long double tol = rounding_allowance(c.arithmetic);
  c.amgm_holds = c.equal_q ? std::fabs(c.amgm_margin) <= tol + 1e-12L : c.amgm_margin >= -tol;
  c.strict_holds = c.strict_log_margin > 0;
  return c;
}

long double fusion_density_margin(std::span<const long double> q, std::span<const long double> alpha) {
  long double arith = 0, prod = 1;
  for (std::size_t j = 0; j < q.size(); ++j) {
    arith += alpha[j] * q[j];
    prod *= q[j];
  }
  return arith - prod;
}

TheoryReport check_amgm_chain(const TheoryOptions& options) {
  validate(options);
  std::mt19937_64 rng(options.seed);
  TheoryReport r;
  r.min_amgm_margin = INFINITY;
  r.min_strict_log_margin = INFINITY;
  auto record = [&](const Draw& d) {
    const AmgmCheck c = check_amgm(d.q, d.alpha);
    ++r.draws;
    if (!c.amgm_holds || !c.strict_holds) ++r.amgm_violations;
    if (c.equal_q) ++r.equality_cases;
    r.min_amgm_margin = std::min(r.min_amgm_margin, c.amgm_margin);
    r.min_strict_log_margin = std::min(r.min_strict_log_margin, c.strict_log_margin);
  };
  for (std::size_t i = 0; i < options.draws; ++i) record(sample_draw(rng, options.components));
  if (options.inject_violation) record(violation_fixture(options.components));
  return r;
}

TheoryReport compare_fusion_densities(const TheoryOptions& options) {
  validate(options);
  // Separate stream from the AM-GM check.
  std::mt19937_64 rng(options.seed + 1);
  TheoryReport r;
  r.min_density_margin = INFINITY;
  auto record = [&](const Draw& d) {
    const long double m = fusion_density_margin(d.q, d.alpha);
    ++r.draws;
    if (!(m > 0)) ++r.density_violations;
    r.min_density_margin = std::min(r.min_density_margin, m);
  };
  for (std::size_t i = 0; i < options.draws; ++i) record(sample_draw(rng, options.components));
  if (options.inject_violation) record(violation_fixture(options.components));
  return r;
}

double HybridMixture::log_density(double z) const {
  double terms[3];
  double top = -INFINITY;
  for (std::size_t k = 0; k < 3; ++k) {
    terms[k] = std::log(weights[k]) + normal_log_pdf(z, means[k], variances[k]);
    top = std::max(top, terms[k]);
  }
  double s = 0.0;
  for (double t : terms) s += std::exp(t - top);
  return top + std::log(s);
}

std::pair<double, double> poe_posterior(const ToySpec& toy) {
  const double ta = std::exp(-toy.log_var_a);
  const double tc = std::exp(-toy.log_var_c);
  return {(toy.mu_a * ta + toy.mu_c * tc) / (ta + tc), 1.0 / (ta + tc)};
}

HybridMixture hybrid_posterior(const ToySpec& toy) {
  if (!(toy.gate_a > 0.0 && toy.gate_a < 1.0)) throw ConfigError("toy gate must lie in (0, 1)");
  const double va = std::exp(toy.log_var_a);
  const double vc = std::exp(toy.log_var_c);
  const auto [mp, vp] = poe_posterior(toy);
  HybridMixture h;
  h.product_mass = std::exp(normal_log_pdf(toy.mu_a, toy.mu_c, va + vc));
  const double norm = 0.5 * (1.0 + h.product_mass);
  h.weights = {0.5 * toy.gate_a / norm, 0.5 * (1.0 - toy.gate_a) / norm, 0.5 * h.product_mass / norm};
  h.means = {toy.mu_a, toy.mu_c, mp};
  h.variances = {va, vc, vp};
  return h;
}

double kl_to_standard_grid(const std::function<double(double)>& log_q, double lo, double hi, std::size_t points) {
  if (points < 2 || !(hi > lo)) throw ConfigError("grid needs at least two points on a non-empty interval");
  const double h = (hi - lo) / static_cast<double>(points - 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double z = lo + h * static_cast<double>(i);
    const double lq = log_q(z);
    const double f = std::exp(lq) * (lq - normal_log_pdf(z, 0.0, 1.0));
    sum += (i == 0 || i + 1 == points) ? 0.5 * f : f;
  }
  return sum * h;
}

namespace {

struct Moments {
  double mean = 0.0;
  double se = 0.0;
};

Moments moments(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

}  // namespace

ElboGapReport estimate_elbo_gap(const ToySpec& toy, std::size_t mc_samples, std::uint64_t seed, bool keep_samples) {
  if (mc_samples < 2) throw ConfigError("need at least two Monte Carlo samples");
  const HybridMixture hybrid = hybrid_posterior(toy);
  const auto [mp, vp] = poe_posterior(toy);
  const double var_x = std::exp(toy.log_var_x);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::discrete_distribution<int> pick(hybrid.weights.begin(), hybrid.weights.end());

  auto log_lik = [&](double z) { return normal_log_pdf(toy.x, toy.w * z + toy.b, var_x); };
  auto log_prior = [](double z) { return normal_log_pdf(z, 0.0, 1.0); };

  std::vector<double> eh(mc_samples), ep(mc_samples), kh(mc_samples), kp(mc_samples);
  for (std::size_t i = 0; i < mc_samples; ++i) {
    const int k = pick(rng);
    const double zh = hybrid.means[k] + std::sqrt(hybrid.variances[k]) * normal(rng);
    const double zp = mp + std::sqrt(vp) * normal(rng);
    kh[i] = hybrid.log_density(zh) - log_prior(zh);
    kp[i] = normal_log_pdf(zp, mp, vp) - log_prior(zp);
    eh[i] = log_lik(zh) - kh[i];
    ep[i] = log_lik(zp) - kp[i];
  }

  ElboGapReport r;
  r.mc_samples = mc_samples;
  const Moments mh = moments(eh), mpoe = moments(ep), klh = moments(kh), klp = moments(kp);
  r.elbo_hybrid = mh.mean;
  r.se_hybrid = mh.se;
  r.elbo_poe = mpoe.mean;
  r.se_poe = mpoe.se;
  r.gap = r.elbo_hybrid - r.elbo_poe;
  r.gap_se = std::hypot(mh.se, mpoe.se);  // independent draws
  r.kl_hybrid_mc = klh.mean;
  r.kl_hybrid_se = klh.se;
  r.kl_poe_mc = klp.mean;
  r.kl_poe_se = klp.se;
  r.kl_poe_closed = 0.5 * (vp + mp * mp - 1.0 - std::log(vp));

  double lo = 0.0, hi = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double s = std::sqrt(hybrid.variances[k]);
    lo = std::min(lo, hybrid.means[k] - 12.0 * s);
    hi = std::max(hi, hybrid.means[k] + 12.0 * s);
  }
  const std::size_t points = 20001;
  r.kl_hybrid_grid = kl_to_standard_grid([&](double z) { return hybrid.log_density(z); }, lo, hi, points);

  const double va = std::exp(toy.log_var_a), vc = std::exp(toy.log_var_c);
  const double h = (hi - lo) / static_cast<double>(points - 1);
  double mass = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double z = lo + h * static_cast<double>(i);
    const double pa = std::exp(normal_log_pdf(z, toy.mu_a, va));
    const double pc = std::exp(normal_log_pdf(z, toy.mu_c, vc));
    const double f = 0.5 * (toy.gate_a * pa + (1.0 - toy.gate_a) * pc) + 0.5 * pa * pc;
    mass += (i == 0 || i + 1 == points) ? 0.5 * f : f;
  }
  r.normalizer_grid = mass * h;
  r.normalizer_closed = 0.5 * (1.0 + hybrid.product_mass);

  if (keep_samples) {
    r.samples.reserve(mc_samples);
    for (std::size_t i = 0; i < mc_samples; ++i) r.samples.emplace_back(eh[i], ep[i]);
  }
  return r;
}

TheoryReport verify_theory(const TheoryOptions& options, const ToySpec& toy, std::size_t mc_samples) {
  TheoryReport r = check_amgm_chain(options);
  const TheoryReport d = compare_fusion_densities(options);
  r.density_violations = d.density_violations;
  r.min_density_margin = d.min_density_margin;
  r.elbo = estimate_elbo_gap(toy, mc_samples, options.seed + 2);
  return r;
}

std::string TheoryReport::to_text() const {
  std::ostringstream out;
  out.precision(6);
  out << "draws: " << draws << "\n";
  out << "amgm_violations: " << amgm_violations << "\n";
  out << "density_violations: " << density_violations << "\n";
  out << "equality_cases: " << equality_cases << "\n";
  out << "min_amgm_margin: " << static_cast<double>(min_amgm_margin) << "\n";
  out << "min_strict_log_margin: " << static_cast<double>(min_strict_log_margin) << "\n";
  out << "min_density_margin: " << static_cast<double>(min_density_margin) << "\n";
  if (elbo) {
    out << "elbo_hybrid: " << elbo->elbo_hybrid << " +- " << elbo->se_hybrid << "\n";
    out << "elbo_poe: " << elbo->elbo_poe << " +- " << elbo->se_poe << "\n";
    out << "elbo_gap: " << elbo->gap << " +- " << elbo->gap_se << "\n";
    out << "kl_hybrid: " << elbo->kl_hybrid_mc << " +- " << elbo->kl_hybrid_se << " (grid " << elbo->kl_hybrid_grid
        << ")\n";
    out << "kl_poe: " << elbo->kl_poe_mc << " +- " << elbo->kl_poe_se << " (closed form " << elbo->kl_poe_closed
        << ")\n";
  }
  out << "status: " << (passed() ? "ok" : "VIOLATION") << "\n";
  return out.str();
}

}  // namespace m2vae
