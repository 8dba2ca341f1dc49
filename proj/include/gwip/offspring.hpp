#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gwip/errors.hpp"
#include "gwip/rng.hpp"

namespace gwip {

// Derived generating-function constants:
//   mu      = phi'(1), the mean offspring count
//   phi2    = phi''(1) = E[Z(Z-1)]
//   p_c     = 1/mu, the critical percolation parameter
//   K       = 2 / (p_c^3 * phi2), the right-derivative of the survival
//             function at p_c
//   q_ratio = log(mu) / log(1/p1), taken to be 0 when p1 = 0 (the limiting
//             value as p1 -> 0)
struct GfConstants {
  double mu;
  double phi2;
  double p_c;
  double K;
  double q_ratio;
};

// Progeny law of a supercritical branching process with no death:
// p_0 = 0, sum p_k = 1, mean > 1. Finite support only; parametric families
// with unbounded support are truncated where the tail mass drops below
// 1e-14 and renormalized, which keeps pgf sums exact to tolerance and
// sampling table-driven.
//
// Immutable after construction and safe to share across parallel
// replicates; probabilities are validated once here, not per call.
class OffspringDistribution {
 public:
  static OffspringDistribution from_pmf(const std::vector<std::pair<int, double>>& pmf) {
    return OffspringDistribution(pmf);
  }

  // Z == b deterministically.
  static OffspringDistribution deterministic(int b) {
    return OffspringDistribution({{b, 1.0}});
  }

  // Z in {1,2} with P[Z=1] = p1.
  static OffspringDistribution two_point(double p1) {
    if (p1 < 0.0 || p1 >= 1.0)
      throw std::invalid_argument("two_point: p1 must lie in [0,1)");
    if (p1 == 0.0) return deterministic(2);
    return OffspringDistribution({{1, p1}, {2, 1.0 - p1}});
  }

  // Poisson(lambda) conditioned positive, truncated at tail mass < 1e-14.
  static OffspringDistribution poisson_positive(double lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("poisson_positive: lambda must be > 0");
    std::vector<std::pair<int, double>> pmf;
    double norm = -std::expm1(-lambda);  // 1 - e^{-lambda}
    double term = lambda * std::exp(-lambda);
    double tail = norm;
    for (int k = 1; k < 4096; ++k) {
      tail -= term;
      pmf.emplace_back(k, term / norm);
      if (tail < 1e-14 * norm) break;
      term *= lambda / (k + 1);
    }
    double total = 0.0;
    for (auto& [k, p] : pmf) total += p;
    for (auto& [k, p] : pmf) p /= total;
    return OffspringDistribution(pmf);
  }

  // Parses a distribution spec in the config syntax, either an explicit
  // list `pmf = [[1,0.4],[2,0.6]]` or a named family such as
  // `family = deterministic, b = 2`. Commas between key=value pairs are
  // optional outside brackets.
  static OffspringDistribution parse(const std::string& text);

  // phi(z) = sum_k p_k z^k for z in [0,1].
  double phi(double z) const {
    check_z(z);
    double acc = 0.0;
    for (const auto& [k, p] : pmf_) acc += p * pow_i(z, k);
    return acc;
  }

  double phi_prime(double z) const {
    check_z(z);
    double acc = 0.0;
    for (const auto& [k, p] : pmf_) acc += p * k * pow_i(z, k - 1);
    return acc;
  }

  double phi_double_prime(double z) const {
    check_z(z);
    double acc = 0.0;
    for (const auto& [k, p] : pmf_)
      if (k >= 2) acc += p * k * (k - 1) * pow_i(z, k - 2);
    return acc;
  }

  // sum_k p_k k(k-1)(k-2); bounds phi''' on [0,1] for finite-difference tests.
  double phi_triple_prime_at_one() const {
    double acc = 0.0;
    for (const auto& [k, p] : pmf_)
      if (k >= 3) acc += p * k * (k - 1) * (k - 2);
    return acc;
  }

  GfConstants constants() const {
    double phi2 = phi_double_prime(1.0);
    if (phi2 <= 0.0)
      throw std::domain_error(
          "degenerate offspring distribution (phi''(1) = 0): tree is a ray, invasion trivial");
    GfConstants c;
    c.mu = mean_;
    c.phi2 = phi2;
    c.p_c = 1.0 / mean_;
    c.K = 2.0 / (c.p_c * c.p_c * c.p_c * phi2);
    double p1 = prob(1);
    c.q_ratio = p1 > 0.0 ? std::log(mean_) / std::log(1.0 / p1) : 0.0;
    return c;
  }

  int sample(RngStream& rng) const { return sample_unit(rng.next_unit()); }

  // Inverse-CDF walk on the cumulative table; u in (0,1).
  int sample_unit(double u) const {
    auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
    size_t idx = static_cast<size_t>(it - cdf_.begin());
    if (idx >= pmf_.size()) idx = pmf_.size() - 1;
    return pmf_[idx].first;
  }

  double mean() const { return mean_; }
  double prob(int k) const {
    for (const auto& [kk, p] : pmf_)
      if (kk == k) return p;
    return 0.0;
  }
  double p1() const { return prob(1); }
  int max_support() const { return pmf_.back().first; }
  int min_support() const { return pmf_.front().first; }
  const std::vector<std::pair<int, double>>& pmf() const { return pmf_; }

  // Canonical text form, round-trips through parse().
  std::string spec_string() const {
    std::ostringstream os;
    os.precision(17);
    os << "pmf=[";
    for (size_t i = 0; i < pmf_.size(); ++i) {
      if (i) os << ",";
      os << "[" << pmf_[i].first << "," << pmf_[i].second << "]";
    }
    os << "]";
    return os.str();
  }

 private:
  explicit OffspringDistribution(std::vector<std::pair<int, double>> pmf) : pmf_(std::move(pmf)) {
    if (pmf_.empty()) throw std::invalid_argument("offspring pmf is empty");
    std::sort(pmf_.begin(), pmf_.end());
    double total = 0.0, mean = 0.0;
    for (const auto& [k, p] : pmf_) {
      if (k <= 0) throw std::invalid_argument("offspring pmf requires k >= 1 (no death)");
      if (p < 0.0) throw std::invalid_argument("offspring pmf has a negative probability");
      total += p;
      mean += p * k;
    }
    if (std::fabs(total - 1.0) > 1e-12)
      throw std::invalid_argument("offspring pmf does not sum to 1 within 1e-12");
    if (!(mean > 1.0))
      throw std::invalid_argument("offspring distribution must be supercritical (mean > 1)");
    mean_ = mean;
    cdf_.reserve(pmf_.size());
    double acc = 0.0;
    for (const auto& [k, p] : pmf_) {
      acc += p;
      cdf_.push_back(acc);
    }
    cdf_.back() = 1.0;
  }

  static void check_z(double z) {
    if (!(z >= 0.0 && z <= 1.0)) throw std::domain_error("pgf argument z must lie in [0,1]");
  }

  static double pow_i(double z, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= z;
    return r;
  }

  std::vector<std::pair<int, double>> pmf_;
  std::vector<double> cdf_;
  double mean_ = 0.0;
};

namespace detail {

inline void skip_ws(const std::string& s, size_t& i) {
  while (i < s.size() && (std::isspace(static_cast<unsigned char>(s[i])) || s[i] == ',')) ++i;
}

inline double parse_number(const std::string& s, size_t& i) {
  size_t end = i;
  while (end < s.size() && (std::isdigit(static_cast<unsigned char>(s[end])) || s[end] == '.' ||
                            s[end] == '-' || s[end] == '+' || s[end] == 'e' || s[end] == 'E'))
    ++end;
  if (end == i) throw std::invalid_argument("distribution spec: expected a number in '" + s + "'");
  double v = std::stod(s.substr(i, end - i));
  i = end;
  return v;
}

}  // namespace detail

inline OffspringDistribution OffspringDistribution::parse(const std::string& text) {
  // Tokenize into key=value pairs; the value of "pmf" is a bracketed list.
  std::string family;
  double b = 0, p1_val = -1, lambda = 0;
  bool has_b = false, has_p1 = false, has_lambda = false;
  std::vector<std::pair<int, double>> pmf;
  bool has_pmf = false;

  size_t i = 0;
  while (i < text.size()) {
    detail::skip_ws(text, i);
    if (i >= text.size()) break;
    size_t eq = text.find('=', i);
    if (eq == std::string::npos)
      throw std::invalid_argument("distribution spec: expected key=value in '" + text + "'");
    std::string key = text.substr(i, eq - i);
    key.erase(std::remove_if(key.begin(), key.end(),
                             [](unsigned char c) { return std::isspace(c); }),
              key.end());
    i = eq + 1;
    detail::skip_ws(text, i);
    if (key == "pmf") {
      if (i >= text.size() || text[i] != '[')
        throw std::invalid_argument("distribution spec: pmf expects [[k,p],...]");
      ++i;  // outer [
      while (true) {
        detail::skip_ws(text, i);
        if (i < text.size() && text[i] == ']') {
          ++i;
          break;
        }
        if (i >= text.size() || text[i] != '[')
          throw std::invalid_argument("distribution spec: malformed pmf list");
        ++i;
        detail::skip_ws(text, i);
        double k = detail::parse_number(text, i);
        detail::skip_ws(text, i);
        double p = detail::parse_number(text, i);
        detail::skip_ws(text, i);
        if (i >= text.size() || text[i] != ']')
          throw std::invalid_argument("distribution spec: malformed pmf entry");
        ++i;
        if (k != std::floor(k)) throw std::invalid_argument("distribution spec: k must be integral");
        pmf.emplace_back(static_cast<int>(k), p);
      }
      has_pmf = true;
    } else {
      std::string value;
      size_t start = i;
      while (i < text.size() && text[i] != ',' && !std::isspace(static_cast<unsigned char>(text[i])))
        ++i;
      value = text.substr(start, i - start);
      if (key == "family") {
        family = value;
      } else if (key == "b") {
        b = std::stod(value);
        has_b = true;
      } else if (key == "p1") {
        p1_val = std::stod(value);
        has_p1 = true;
      } else if (key == "lambda") {
        lambda = std::stod(value);
        has_lambda = true;
      } else {
        throw std::invalid_argument("distribution spec: unknown key '" + key + "'");
      }
    }
  }

  if (has_pmf) return from_pmf(pmf);
  if (family == "deterministic") {
    if (!has_b) throw std::invalid_argument("family=deterministic requires b");
    return deterministic(static_cast<int>(b));
  }
  if (family == "two_point") {
    if (!has_p1) throw std::invalid_argument("family=two_point requires p1");
    return two_point(p1_val);
  }
  if (family == "poisson_positive") {
    if (!has_lambda) throw std::invalid_argument("family=poisson_positive requires lambda");
    return poisson_positive(lambda);
  }
  throw std::invalid_argument("distribution spec: need pmf=[[k,p],...] or a known family in '" +
                              text + "'");
}

}  // namespace gwip
