#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "segsense/errors.hpp"

namespace segsense {

struct TracePoint {
  double epoch = 0.0;
  double value = 0.0;
};

/// Metric value per epoch; epochs are nonnegative and strictly increasing.
class Trace {
 public:
  Trace() = default;
  explicit Trace(std::vector<TracePoint> points) : points_(std::move(points)) {
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (!(points_[i].epoch >= 0.0)) throw DataError("trace epochs must be >= 0");
      if (i > 0 && !(points_[i].epoch > points_[i - 1].epoch)) {
        throw DataError("trace epochs must be strictly increasing");
      }
    }
  }

  void push_back(TracePoint p) {
    if (!(p.epoch >= 0.0) || (!points_.empty() && !(p.epoch > points_.back().epoch))) {
      throw DataError("trace epochs must be nonnegative and strictly increasing");
    }
    points_.push_back(p);
  }

  std::span<const TracePoint> points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  const TracePoint& back() const { return points_.back(); }

 private:
  std::vector<TracePoint> points_;
};

/// p(ep) = a * exp(-esr * ep) + c
struct ExpFit {
  double a = 0.0;
  double esr = 0.0;
  double c = 0.0;
  double residual_rms = 0.0;
  bool degenerate = false;
  int iterations = 0;
};

inline double eval_exponential(const ExpFit& f, double epoch) {
  return f.a * std::exp(-f.esr * epoch) + f.c;
}

/// Thrown when the damped iteration runs out of budget; carries the best
/// parameters reached.
class FitError : public DataError {
 public:
  FitError(const std::string& what, ExpFit best) : DataError(what), best_(best) {}
  const ExpFit& best() const noexcept { return best_; }

 private:
  ExpFit best_;
};

struct ExpFitOptions {
  int max_iterations = 500;
  double step_tolerance = 1e-10;
  double initial_damping = 1e-3;
};

namespace detail {

inline double trace_rms(std::span<const TracePoint> pts, double a, double esr, double c) {
  double s = 0.0;
  for (const auto& p : pts) {
    const double r = a * std::exp(-esr * p.epoch) + c - p.value;
    s += r * r;
  }
  return std::sqrt(s / static_cast<double>(pts.size()));
}

/// Gaussian elimination with partial pivoting; false when singular.
inline bool solve3(std::array<std::array<double, 3>, 3> m, std::array<double, 3> b,
                   std::array<double, 3>& x) {
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r) {
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    }
    if (m[piv][col] == 0.0 || !std::isfinite(m[piv][col])) return false;
    std::swap(m[piv], m[col]);
    std::swap(b[piv], b[col]);
    for (int r = col + 1; r < 3; ++r) {
      const double f = m[r][col] / m[col][col];
      for (int k = col; k < 3; ++k) m[r][k] -= f * m[col][k];
      b[r] -= f * b[col];
    }
  }
  for (int r = 2; r >= 0; --r) {
    double s = b[r];
    for (int k = r + 1; k < 3; ++k) s -= m[r][k] * x[k];
    x[r] = s / m[r][r];
  }
  return std::isfinite(x[0]) && std::isfinite(x[1]) && std::isfinite(x[2]);
}

}  // namespace detail

/// Starting point read off the trace geometry: asymptote from the last value,
/// amplitude from the first, rate from a log-linear regression of
/// ln|p - c| over the first half of the trace (floored at 1e-6).
inline ExpFit initial_exponential_guess(const Trace& t) {
  const auto pts = t.points();
  ExpFit g;
  g.c = pts.back().value;
  g.a = pts.front().value - g.c;
  const std::size_t half = std::max<std::size_t>(2, pts.size() / 2);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < half && i < pts.size(); ++i) {
    const double d = std::abs(pts[i].value - g.c);
    if (d <= 0.0) continue;
    const double y = std::log(d);
    sx += pts[i].epoch;
    sy += y;
    sxx += pts[i].epoch * pts[i].epoch;
    sxy += pts[i].epoch * y;
    ++n;
  }
  double rate = 0.0;
  if (n >= 2) {
    const double denom = static_cast<double>(n) * sxx - sx * sx;
    if (denom > 0) rate = -(static_cast<double>(n) * sxy - sx * sy) / denom;
  }
  g.esr = std::max(rate, 1e-6);
  g.residual_rms = detail::trace_rms(pts, g.a, g.esr, g.c);
  return g;
}

/// Least-squares fit of a * exp(-esr * ep) + c by Levenberg-Marquardt.
/// The rate is optimised as esr = exp(theta) so it stays positive.
inline ExpFit fit_exponential(const Trace& t, const ExpFitOptions& opt = {}) {
  const auto pts = t.points();
  if (pts.size() < 4) {
    throw DataError("exponential fit needs at least 4 points, got " + std::to_string(pts.size()));
  }
  const bool constant = std::all_of(pts.begin(), pts.end(),
                                    [&](const TracePoint& p) { return p.value == pts.front().value; });
  if (constant) {
    ExpFit f;
    f.c = pts.front().value;
    f.degenerate = true;
    return f;
  }

  const ExpFit init = initial_exponential_guess(t);
  std::array<double, 3> x = {init.a, std::log(init.esr), init.c};
  const auto cost = [&](const std::array<double, 3>& q) {
    const double r = detail::trace_rms(pts, q[0], std::exp(q[1]), q[2]);
    return r * r;
  };
  double current = cost(x);
  double damping = opt.initial_damping;

  const auto finish = [&](int iters) {
    ExpFit f;
    f.a = x[0];
    f.esr = std::exp(x[1]);
    f.c = x[2];
    f.residual_rms = std::sqrt(current);
    f.iterations = iters;
    return f;
  };

  for (int iter = 1; iter <= opt.max_iterations; ++iter) {
    std::array<std::array<double, 3>, 3> jtj{};
    std::array<double, 3> jtr{};
    const double rate = std::exp(x[1]);
    for (const auto& p : pts) {
      const double e = std::exp(-rate * p.epoch);
      const double r = x[0] * e + x[2] - p.value;
      const std::array<double, 3> j = {e, -x[0] * p.epoch * rate * e, 1.0};
      for (int a = 0; a < 3; ++a) {
        jtr[a] += j[a] * r;
        for (int b = 0; b < 3; ++b) jtj[a][b] += j[a] * j[b];
      }
    }
    const double max_diag = std::max({jtj[0][0], jtj[1][1], jtj[2][2]});

    auto damped = jtj;
    for (int a = 0; a < 3; ++a) damped[a][a] += damping * std::max(jtj[a][a], 1e-9 * max_diag);
    std::array<double, 3> step{};
    const bool solved = detail::solve3(damped, {-jtr[0], -jtr[1], -jtr[2]}, step);
    if (solved) {
      const std::array<double, 3> trial = {x[0] + step[0], x[1] + step[1], x[2] + step[2]};
      const double trial_cost = cost(trial);
      if (std::isfinite(trial_cost) && trial_cost < current) {
        x = trial;
        current = trial_cost;
        damping = std::max(damping * 0.1, 1e-15);
        const double norm = std::sqrt(step[0] * step[0] + step[1] * step[1] + step[2] * step[2]);
        if (norm < opt.step_tolerance || current == 0.0) return finish(iter);
        continue;
      }
    }
    damping *= 10.0;
    // No descent direction survives this much damping: at the minimum to
    // working precision.
    if (damping > 1e16) return finish(iter);
  }
  throw FitError("exponential fit did not converge in " + std::to_string(opt.max_iterations) +
                     " iterations",
                 finish(opt.max_iterations));
}

enum class AxisUnits { index, images };

inline std::string units_name(AxisUnits u) { return u == AxisUnits::index ? "index" : "images"; }

inline AxisUnits parse_units(const std::string& s) {
  if (s == "index") return AxisUnits::index;
  if (s == "images") return AxisUnits::images;
  throw UsageError("units must be 'index' or 'images', got '" + s + "'");
}

struct SurfaceSample {
  double ntrain = 0.0;
  double ntest = 0.0;
  double value = 0.0;
};

/// p ≈ p00 + p10 * ntrain + p01 * ntest
struct SurfaceFit {
  double p00 = 0.0;
  double p10 = 0.0;
  double p01 = 0.0;
  AxisUnits units = AxisUnits::index;
  double residual_rms = 0.0;
};

class RankDeficientError : public DataError {
 public:
  RankDeficientError(const std::string& what, std::string axis)
      : DataError(what), axis_(std::move(axis)) {}
  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

/// Ordinary least-squares plane. The design is centred, then solved with
/// Householder QR on the two slope columns; the intercept follows from the
/// means.
inline SurfaceFit fit_surface(std::span<const SurfaceSample> samples, AxisUnits units = AxisUnits::index) {
  const std::size_t n = samples.size();
  if (n < 3) {
    throw RankDeficientError("surface fit needs at least 3 samples, got " + std::to_string(n),
                             "N-Train and N-Test");
  }
  double m_tr = 0, m_te = 0, m_p = 0;
  for (const auto& s : samples) {
    m_tr += s.ntrain;
    m_te += s.ntest;
    m_p += s.value;
  }
  m_tr /= static_cast<double>(n);
  m_te /= static_cast<double>(n);
  m_p /= static_cast<double>(n);

  std::vector<double> c0(n), c1(n), rhs(n);
  for (std::size_t i = 0; i < n; ++i) {
    c0[i] = samples[i].ntrain - m_tr;
    c1[i] = samples[i].ntest - m_te;
    rhs[i] = samples[i].value - m_p;
  }
  const auto norm = [](const std::vector<double>& v, std::size_t from = 0) {
    double s = 0;
    for (std::size_t i = from; i < v.size(); ++i) s += v[i] * v[i];
    return std::sqrt(s);
  };
  const double scale0 = norm(c0);
  const double scale1 = norm(c1);
  const bool train_flat = scale0 == 0.0;
  const bool test_flat = scale1 == 0.0;
  if (train_flat && test_flat) {
    throw RankDeficientError("surface fit: N-Train and N-Test are both constant", "N-Train and N-Test");
  }
  if (train_flat) throw RankDeficientError("surface fit: N-Train axis has no variation", "N-Train");
  if (test_flat) throw RankDeficientError("surface fit: N-Test axis has no variation", "N-Test");

  // Householder reflection applied in place to a column range.
  const auto reflect = [n](std::vector<double>& v, std::size_t k, std::vector<std::vector<double>*> targets) {
    double alpha = 0;
    for (std::size_t i = k; i < n; ++i) alpha += v[i] * v[i];
    alpha = std::sqrt(alpha);
    if (v[k] > 0) alpha = -alpha;
    std::vector<double> u(n, 0.0);
    for (std::size_t i = k; i < n; ++i) u[i] = v[i];
    u[k] -= alpha;
    double uu = 0;
    for (std::size_t i = k; i < n; ++i) uu += u[i] * u[i];
    if (uu == 0.0) return;
    for (auto* t : targets) {
      double dot = 0;
      for (std::size_t i = k; i < n; ++i) dot += u[i] * (*t)[i];
      const double f = 2.0 * dot / uu;
      for (std::size_t i = k; i < n; ++i) (*t)[i] -= f * u[i];
    }
  };
  reflect(c0, 0, {&c0, &c1, &rhs});
  reflect(c1, 1, {&c1, &rhs});
  const double r00 = c0[0], r01 = c1[0], r11 = c1[1];
  if (std::abs(r11) <= 1e-12 * scale1) {
    throw RankDeficientError("surface fit: N-Train and N-Test are collinear in the design",
                             "N-Train and N-Test");
  }
  SurfaceFit f;
  f.units = units;
  f.p01 = rhs[1] / r11;
  f.p10 = (rhs[0] - r01 * f.p01) / r00;
  f.p00 = m_p - f.p10 * m_tr - f.p01 * m_te;

  double ss = 0;
  for (const auto& s : samples) {
    const double r = f.p00 + f.p10 * s.ntrain + f.p01 * s.ntest - s.value;
    ss += r * r;
  }
  f.residual_rms = std::sqrt(ss / static_cast<double>(n));
  return f;
}

inline double eval_surface(const SurfaceFit& f, double ntrain, double ntest) {
  return f.p00 + f.p10 * ntrain + f.p01 * ntest;
}

inline double eval_surface(const SurfaceFit& f, double ntrain, double ntest, AxisUnits units) {
  if (units != f.units) {
    throw UsageError("surface was fitted in '" + units_name(f.units) + "' units, evaluated in '" +
                     units_name(units) + "'");
  }
  return eval_surface(f, ntrain, ntest);
}

/// Axis indices 1..K mapped to image counts.
class GridAxis {
 public:
  GridAxis() = default;
  explicit GridAxis(std::vector<std::size_t> counts) : counts_(std::move(counts)) {
    if (counts_.empty()) throw UsageError("grid axis must not be empty");
    for (std::size_t i = 1; i < counts_.size(); ++i) {
      if (counts_[i] <= counts_[i - 1]) throw UsageError("grid axis counts must be strictly increasing");
    }
  }

  std::size_t size() const noexcept { return counts_.size(); }
  std::span<const std::size_t> counts() const noexcept { return counts_; }

  std::size_t count_at(std::size_t index) const {
    if (index < 1 || index > counts_.size()) {
      throw UsageError("axis index " + std::to_string(index) + " outside 1.." +
                       std::to_string(counts_.size()));
    }
    return counts_[index - 1];
  }

  std::size_t index_of(std::size_t count) const {
    auto it = std::lower_bound(counts_.begin(), counts_.end(), count);
    if (it == counts_.end() || *it != count) {
      throw UsageError("count " + std::to_string(count) + " is not on the axis");
    }
    return static_cast<std::size_t>(it - counts_.begin()) + 1;
  }

 private:
  std::vector<std::size_t> counts_;
};

/// Training-set sizes of the eight-step tumour sweep.
inline GridAxis reference_ntrain_axis() {
  return GridAxis({402, 801, 1229, 1519, 1879, 2296, 2739, 3230});
}

inline nlohmann::json to_json(const ExpFit& f) {
  nlohmann::json j{{"kind", "exp"}, {"a", f.a}, {"esr", f.esr}, {"c", f.c}, {"residual_rms", f.residual_rms}};
  if (f.degenerate) j["degenerate"] = true;
  return j;
}

inline nlohmann::json to_json(const SurfaceFit& f) {
  return {{"kind", "surface"}, {"p00", f.p00}, {"p10", f.p10}, {"p01", f.p01},
          {"units", units_name(f.units)}, {"residual_rms", f.residual_rms}};
}

inline ExpFit exp_fit_from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind") != "exp") throw DataError("expected an exponential fit record");
    ExpFit f;
    f.a = j.at("a").get<double>();
    f.esr = j.at("esr").get<double>();
    f.c = j.at("c").get<double>();
    f.residual_rms = j.value("residual_rms", 0.0);
    f.degenerate = j.value("degenerate", false);
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed exponential fit: ") + e.what());
  }
}

inline SurfaceFit surface_fit_from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind") != "surface") throw DataError("expected a surface fit record");
    SurfaceFit f;
    f.p00 = j.at("p00").get<double>();
    f.p10 = j.at("p10").get<double>();
    f.p01 = j.at("p01").get<double>();
    f.units = parse_units(j.value("units", std::string("index")));
    f.residual_rms = j.value("residual_rms", 0.0);
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed surface fit: ") + e.what());
  }
}

}  // namespace segsense
