#pragma once

// Numerical checks of the dynamics of H = (f1^2 + f2^2) / 2:
//   - orbit integration of xdot = -H_y, ydot = H_x (dopri5 with dense output),
//   - return time to the section {f2 = 0, f1 > 0},
//   - isochrony sweeps over energies, with starting points from the exact inverse,
//   - grid sampling of a map for collisions,
//   - least-squares search for a linear change of variables between two
//     Hamiltonians (evidence of inequivalence, never a proof).
//
// When det Df = 1 the chain rule gives d(f1)/dt = -f2 and d(f2)/dt = f1 along
// the flow, so in f-coordinates every orbit is a rigid rotation with unit
// angular speed and the section is crossed transversally once per turn.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/numeric/odeint.hpp>
#include <json.hpp>

#include "isoforge/families.hpp"

namespace isoforge {

using Point = std::array<double, 2>;

struct IntegratorConfig {
  double rel_tol = 1e-12;
  double abs_tol = 1e-14;
  double max_step = 1.0;
  double section_refinement_tol = 1e-12;
  /// Orbits leaving the box |x|, |y| <= escape_radius are reported as escapes.
  double escape_radius = 1e6;
  /// Integration horizon for period measurement.
  double t_max = 50.0;
  /// measure_period fails when the energy drift exceeds factor * rel_tol * E. Zero disables.
  double drift_tolerance_factor = 100.0;
  /// Before failing on drift, measure_period retries this many times with the
  /// step tolerances tightened tenfold each time.
  int drift_refinements = 2;
  long max_steps = 2'000'000;

  void validate() const {
    if (!(rel_tol > 0 && abs_tol > 0 && max_step > 0 && section_refinement_tol > 0 && escape_radius > 0 &&
          t_max > 0 && drift_tolerance_factor >= 0 && max_steps > 0 && drift_refinements >= 0))
      throw std::invalid_argument("IntegratorConfig: tolerances and limits must be positive");
  }
};

struct IntegrationError : NumericError {
  enum class Kind { InvalidStart, StepUnderflow, StepBudget, Escape, NoCrossing, Drift };
  IntegrationError(Kind kind, const std::string& what) : NumericError(what), kind(kind) {}
  Kind kind;
};

// Integration runs in extended precision. Family orbits at large energy reach
// coordinates where the unit in the last place of a double already moves H by
// more than the conservation tolerance.
using Extended = long double;
using ExtPoint = std::array<Extended, 2>;
using ExtPoly = BasicFloatPoly<Extended>;

inline ExtPoint extend(const Point& p) { return {p[0], p[1]}; }
inline Point narrow(const ExtPoint& p) { return {static_cast<double>(p[0]), static_cast<double>(p[1])}; }

/// Floating evaluation of a polynomial map and its Jacobian through a chain of
/// factors (innermost first).
class MapEvaluator {
 public:
  explicit MapEvaluator(const std::vector<PolyMap>& factors) {
    for (const auto& f : factors)
      stages_.push_back({ExtPoly(f.f1), ExtPoly(f.f2), ExtPoly(partial(f.f1, Var::X)), ExtPoly(partial(f.f1, Var::Y)),
                         ExtPoly(partial(f.f2, Var::X)), ExtPoly(partial(f.f2, Var::Y))});
  }

  ExtPoint operator()(const ExtPoint& p) const {
    ExtPoint u = p;
    for (const auto& st : stages_)
      u = {st.f1(u[0], u[1]), st.f2(u[0], u[1])};
    return u;
  }

  /// f(p) and Df(p) (row-major).
  std::pair<ExtPoint, std::array<Extended, 4>> with_jacobian(const ExtPoint& p) const {
    ExtPoint u = p;
    std::array<Extended, 4> j{1, 0, 0, 1};
    for (const auto& st : stages_) {
      Extended a = st.f1x(u[0], u[1]), b = st.f1y(u[0], u[1]), c = st.f2x(u[0], u[1]), d = st.f2y(u[0], u[1]);
      j = {a * j[0] + b * j[2], a * j[1] + b * j[3], c * j[0] + d * j[2], c * j[1] + d * j[3]};
      u = {st.f1(u[0], u[1]), st.f2(u[0], u[1])};
    }
    return {u, j};
  }

 private:
  struct Stage {
    ExtPoly f1, f2, f1x, f1y, f2x, f2y;
  };
  std::vector<Stage> stages_;
};

namespace detail {

/// Factor chain for evaluating the source map: the recorded factors when they
/// compose to it, otherwise the source itself.
inline std::vector<PolyMap> source_chain(const Hamiltonian& h) {
  if (!h.factors.empty()) {
    PolyMap composed = h.factors.front();
    for (std::size_t i = 1; i < h.factors.size(); ++i)
      composed = compose_maps(h.factors[i], composed);
    if (composed == *h.source)
      return h.factors;
  }
  return {*h.source};
}

}  // namespace detail

/// H and grad H in floating point. When H = |f|^2 / 2 for the source map f,
/// H and grad H = Df^T f are evaluated through the factor chain; the expanded
/// H loses all precision to cancellation far from the origin.
class HamiltonianEvaluator {
 public:
  explicit HamiltonianEvaluator(const Hamiltonian& h)
      : h_(h.H), hx_(partial(h.H, Var::X)), hy_(partial(h.H, Var::Y)) {
    if (h.source && (h.source->f1 * h.source->f1 + h.source->f2 * h.source->f2) * Rational(1, 2) == h.H)
      map_.emplace(detail::source_chain(h));
  }

  Extended energy(const ExtPoint& p) const {
    if (map_) {
      ExtPoint u = (*map_)(p);
      return (u[0] * u[0] + u[1] * u[1]) / 2;
    }
    return h_(p[0], p[1]);
  }

  const MapEvaluator* map() const { return map_ ? &*map_ : nullptr; }

  ExtPoint gradient(const ExtPoint& p) const {
    if (map_) {
      auto [u, j] = map_->with_jacobian(p);
      return {j[0] * u[0] + j[2] * u[1], j[1] * u[0] + j[3] * u[1]};
    }
    return {hx_(p[0], p[1]), hy_(p[0], p[1])};
  }

 private:
  ExtPoly h_, hx_, hy_;
  std::optional<MapEvaluator> map_;
};

/// Step error control for odeint. With a source map the local error estimate
/// is pushed through Df and measured against |f|, i.e. in the coordinates where
/// the motion is a rotation of constant radius; orbits of large energy stretch
/// far out in (x, y), where a state-relative tolerance would let the energy
/// drift. Without a source map this is odeint's usual mixed criterion.
class OrbitErrorChecker {
 public:
  using value_type = Extended;
  using algebra_type = boost::numeric::odeint::array_algebra;
  using operations_type = boost::numeric::odeint::default_operations;

  OrbitErrorChecker(Extended eps_abs = 1e-6, Extended eps_rel = 1e-6, const MapEvaluator* map = nullptr)
      : eps_abs_(eps_abs), eps_rel_(eps_rel), map_(map) {}

  template <class State, class Deriv, class Err, class Time>
  value_type error(algebra_type&, const State& x, const Deriv& dxdt, Err& err, Time dt) const {
    if (map_) {
      auto [u, j] = map_->with_jacobian(x);
      Extended e1 = j[0] * err[0] + j[1] * err[1], e2 = j[2] * err[0] + j[3] * err[1];
      Extended scale = eps_abs_ + eps_rel_ * std::max(std::abs(u[0]), std::abs(u[1]));
      return std::max(std::abs(e1), std::abs(e2)) / scale;
    }
    Extended worst = 0;
    for (int i = 0; i < 2; ++i)
      worst = std::max(worst, std::abs(err[i]) / (eps_abs_ + eps_rel_ * (std::abs(x[i]) + std::abs(dt) * std::abs(dxdt[i]))));
    return worst;
  }

 private:
  Extended eps_abs_, eps_rel_;
  const MapEvaluator* map_;
};

/// Adaptive dopri5 integration of the Hamiltonian vector field with access to
/// the dense-output interpolant over the most recent step.
class Orbit {
 public:
  using State = ExtPoint;

  Orbit(const Hamiltonian& h, const IntegratorConfig& cfg)
      : eval_(h), cfg_(cfg),
        stepper_(Controlled(OrbitErrorChecker(cfg.abs_tol, cfg.rel_tol, eval_.map()), Adjuster(cfg.max_step))) {
    cfg.validate();
  }
  Orbit(const Orbit&) = delete;
  Orbit& operator=(const Orbit&) = delete;

  void start(const Point& p) {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]))
      throw IntegrationError(IntegrationError::Kind::InvalidStart, "start point is not finite");
    ExtPoint grad = eval_.gradient(extend(p));
    double speed = static_cast<double>(std::hypot(grad[0], grad[1]));
    double radius = std::hypot(p[0], p[1]);
    double dt = std::min(cfg_.max_step, 1e-3 * std::max(radius, 1e-8) / std::max(speed, 1e-300));
    dt = std::max(dt, 1e-10);
    stepper_.initialize(extend(p), Extended(0), Extended(dt));
    steps_ = 0;
  }

  /// Advances one accepted step; returns the covered interval.
  std::pair<Extended, Extended> step() {
    if (steps_ >= cfg_.max_steps) {
      std::ostringstream os;
      os << "step budget of " << cfg_.max_steps << " exhausted at t = " << static_cast<double>(time());
      throw IntegrationError(IntegrationError::Kind::StepBudget, os.str());
    }
    std::pair<Extended, Extended> span;
    try {
      span = stepper_.do_step(Field{&eval_});
    } catch (const boost::numeric::odeint::step_adjustment_error& e) {
      throw IntegrationError(IntegrationError::Kind::StepUnderflow, std::string("step size underflow: ") + e.what());
    }
    ++steps_;
    const auto& s = stepper_.current_state();
    if (!std::isfinite(s[0]) || !std::isfinite(s[1]) || std::abs(s[0]) > cfg_.escape_radius ||
        std::abs(s[1]) > cfg_.escape_radius) {
      std::ostringstream os;
      os << "orbit escaped the box of radius " << cfg_.escape_radius << " at t = " << static_cast<double>(span.second);
      throw IntegrationError(IntegrationError::Kind::Escape, os.str());
    }
    if (span.second - span.first <= 1e-14 * std::max(Extended(1), std::abs(span.second)))
      throw IntegrationError(IntegrationError::Kind::StepUnderflow, "step size underflow");
    return span;
  }

  /// Dense-output state; t must lie in the last step's interval.
  ExtPoint state_at(Extended t) {
    State s;
    stepper_.calc_state(t, s);
    return s;
  }

  ExtPoint current() const { return stepper_.current_state(); }
  Extended time() const { return stepper_.current_time(); }
  long steps() const { return steps_; }
  Extended energy(const ExtPoint& p) const { return eval_.energy(p); }
  ExtPoint velocity(const ExtPoint& p) const {
    ExtPoint g = eval_.gradient(p);
    return {-g[1], g[0]};
  }
  const HamiltonianEvaluator& evaluator() const { return eval_; }

 private:
  struct Field {
    const HamiltonianEvaluator* eval;
    void operator()(const State& s, State& d, Extended) const {
      ExtPoint g = eval->gradient(s);
      d[0] = -g[1];
      d[1] = g[0];
    }
  };

  HamiltonianEvaluator eval_;
  IntegratorConfig cfg_;
  using Adjuster = boost::numeric::odeint::default_step_adjuster<Extended, Extended>;
  using Controlled = boost::numeric::odeint::controlled_runge_kutta<boost::numeric::odeint::runge_kutta_dopri5<State>,
                                                                    OrbitErrorChecker, Adjuster>;
  boost::numeric::odeint::dense_output_runge_kutta<Controlled> stepper_;
  long steps_ = 0;
};

struct OrbitSample {
  double t;
  Point p;
  double energy;
};

struct Trajectory {
  std::vector<OrbitSample> samples;  // accepted step endpoints, starting at t = 0
  double energy_drift = 0.0;
};

inline void check_start(const HamiltonianEvaluator& h, const Point& start) {
  if (!std::isfinite(start[0]) || !std::isfinite(start[1]))
    throw IntegrationError(IntegrationError::Kind::InvalidStart, "start point is not finite");
  if (start[0] == 0.0 && start[1] == 0.0)
    throw IntegrationError(IntegrationError::Kind::InvalidStart, "start point is the equilibrium at the origin");
  if (!(h.energy(extend(start)) > 0))
    throw IntegrationError(IntegrationError::Kind::InvalidStart, "H(start) must be positive");
}

inline Trajectory integrate_orbit(const Hamiltonian& h, const Point& start, const IntegratorConfig& cfg,
                                  double t_max) {
  Orbit orbit(h, cfg);
  check_start(orbit.evaluator(), start);
  orbit.start(start);
  Trajectory out;
  const Extended e0 = orbit.energy(extend(start));
  out.samples.push_back({0.0, start, static_cast<double>(e0)});
  while (orbit.time() < t_max) {
    orbit.step();
    ExtPoint p = orbit.current();
    Extended e = orbit.energy(p);
    out.energy_drift = std::max(out.energy_drift, static_cast<double>(std::abs(e - e0)));
    out.samples.push_back({static_cast<double>(orbit.time()), narrow(p), static_cast<double>(e)});
  }
  return out;
}

namespace detail {

/// Root of g in [a, b] with g(a) < 0 <= g(b): secant steps, with a bisection
/// whenever the bracket fails to halve. Stops at bracket width <= tol or a
/// secant correction below tol.
template <typename G, typename T>
T refine_crossing(G&& g, T a, T b, T ga, T gb, T tol) {
  T last_width = b - a;
  bool bisect = false;
  for (int iter = 0; iter < 200 && b - a > tol; ++iter) {
    T secant = b - gb * (b - a) / (gb - ga);
    T t = (bisect || !(secant > a && secant < b)) ? (a + b) / 2 : secant;
    T gt = g(t);
    if (gt == 0)
      return t;
    T prev = gt < 0 ? a : b;
    if (gt < 0) {
      a = t;
      ga = gt;
    } else {
      b = t;
      gb = gt;
    }
    if (!bisect && std::abs(t - prev) <= tol / 2)
      break;
    bisect = (b - a) > last_width / 2;
    last_width = b - a;
  }
  if (gb != ga)
    return std::clamp(b - gb * (b - a) / (gb - ga), a, b);
  return (a + b) / 2;
}

}  // namespace detail

struct PeriodReport {
  double energy = 0.0;
  Point initial_point{};
  double period = 0.0;
  double period_abs_error_estimate = 0.0;
  double energy_drift = 0.0;
  long steps = 0;
  /// Number of tenfold step-tolerance tightenings needed to meet the drift bound.
  int tolerance_refinements = 0;
};

namespace detail {

inline PeriodReport measure_period_once(const Hamiltonian& h, const MapEvaluator& section, const Point& start,
                                        const IntegratorConfig& cfg) {
  Orbit orbit(h, cfg);
  check_start(orbit.evaluator(), start);
  orbit.start(start);
  auto g = [&](Extended t) { return section(orbit.state_at(t))[1]; };

  const Extended e0 = orbit.energy(extend(start));
  Extended drift = 0;
  std::vector<Extended> crossings;
  std::vector<ExtPoint> crossing_points;
  Extended g_prev = section(extend(start))[1];
  while (crossings.size() < 2) {
    auto [t0, t1] = orbit.step();
    if (t1 > cfg.t_max) {
      std::ostringstream os;
      os << "no return to the section within t_max = " << cfg.t_max;
      throw IntegrationError(IntegrationError::Kind::NoCrossing, os.str());
    }
    ExtPoint p1 = orbit.current();
    drift = std::max(drift, std::abs(orbit.energy(p1) - e0));
    Extended g1 = section(p1)[1];
    if (g_prev < 0 && g1 >= 0) {
      Extended tc = refine_crossing(g, t0, t1, g_prev, g1, Extended(cfg.section_refinement_tol));
      ExtPoint pc = orbit.state_at(tc);
      if (section(pc)[0] > 0) {
        crossings.push_back(tc);
        crossing_points.push_back(pc);
        drift = std::max(drift, std::abs(orbit.energy(pc) - e0));
      }
    }
    g_prev = g1;
  }

  PeriodReport rep;
  rep.initial_point = start;
  rep.energy = static_cast<double>(e0);
  rep.period = static_cast<double>(crossings[1] - crossings[0]);
  rep.energy_drift = static_cast<double>(drift);
  rep.steps = orbit.steps();

  // Mismatch between the two crossing points along the section, converted to
  // time through the crossing speed of s2, plus the event tolerance.
  auto [sb, jb] = section.with_jacobian(crossing_points[1]);
  ExtPoint sa = section(crossing_points[0]);
  ExtPoint v = orbit.velocity(crossing_points[1]);
  Extended ds2 = jb[2] * v[0] + jb[3] * v[1];
  Extended mismatch = std::abs(sb[0] - sa[0]);
  rep.period_abs_error_estimate =
      2 * cfg.section_refinement_tol + (ds2 != 0 ? static_cast<double>(mismatch / std::abs(ds2)) : 0.0);

  return rep;
}

inline PeriodReport measure_period_impl(const Hamiltonian& h, const MapEvaluator& section, const Point& start,
                                        const IntegratorConfig& cfg) {
  IntegratorConfig run = cfg;
  for (int attempt = 0;; ++attempt) {
    PeriodReport rep = measure_period_once(h, section, start, run);
    rep.tolerance_refinements = attempt;
    double bound = cfg.drift_tolerance_factor * cfg.rel_tol * rep.energy;
    if (cfg.drift_tolerance_factor == 0 || rep.energy_drift <= bound)
      return rep;
    if (attempt == cfg.drift_refinements) {
      std::ostringstream os;
      os << "energy drift " << rep.energy_drift << " exceeds " << cfg.drift_tolerance_factor
         << " * rel_tol * E = " << bound << " after " << attempt << " tolerance refinements";
      throw IntegrationError(IntegrationError::Kind::Drift, os.str());
    }
    run.rel_tol /= 10;
    run.abs_tol /= 10;
  }
}

inline MapEvaluator source_evaluator(const Hamiltonian& h, const char* who) {
  if (!h.source)
    throw std::invalid_argument(std::string(who) + ": Hamiltonian carries no source map");
  return MapEvaluator(source_chain(h));
}

}  // namespace detail

/// Return time to the section {s2 = 0, s1 > 0} of the map s = (s1, s2),
/// measured between two consecutive upward crossings.
inline PeriodReport measure_period_on_section(const Hamiltonian& h, const PolyMap& section, const Point& start,
                                              const IntegratorConfig& cfg) {
  return detail::measure_period_impl(h, MapEvaluator({section}), start, cfg);
}

/// Section {f2 = 0, f1 > 0} of the map the Hamiltonian was built from.
inline PeriodReport measure_period(const Hamiltonian& h, const Point& start, const IntegratorConfig& cfg) {
  return detail::measure_period_impl(h, detail::source_evaluator(h, "measure_period"), start, cfg);
}

/// Point with f = (sqrt(2E), 0), computed as g(sqrt(2E), 0) for the inverse g.
/// The expanded inverse cancels badly in floating point for large E, so it is
/// evaluated exactly at the (exactly representable) double sqrt(2E) and rounded once.
inline Point start_for_energy(const PolyMap& inverse, double energy) {
  if (!(energy > 0) || !std::isfinite(energy))
    throw std::invalid_argument("start_for_energy: energy must be positive and finite");
  const Rational r(std::sqrt(2 * energy)), zero(0);
  return {eval_exact(inverse.f1, r, zero).get_d(), eval_exact(inverse.f2, r, zero).get_d()};
}

/// Period at each energy; starting points on {f2 = 0, f1 = sqrt(2E)}.
inline std::vector<PeriodReport> isochrony_sweep(const Hamiltonian& h, const PolyMap& inverse,
                                                 const std::vector<double>& energies, const IntegratorConfig& cfg) {
  for (std::size_t i = 0; i < energies.size(); ++i)
    if (!(energies[i] > 0) || (i > 0 && !(energies[i] > energies[i - 1])))
      throw std::invalid_argument("isochrony_sweep: energies must be positive and ascending");
  std::vector<PeriodReport> out;
  out.reserve(energies.size());
  for (double e : energies)
    out.push_back(measure_period(h, start_for_energy(inverse, e), cfg));
  return out;
}

/// Builds the family, its Hamiltonian and exact inverse, then sweeps.
inline std::vector<PeriodReport> isochrony_sweep(const FamilySpec& spec, const std::vector<double>& energies,
                                                 const IntegratorConfig& cfg) {
  auto h = family_hamiltonian(spec);
  return isochrony_sweep(h, invert_map(*h.source, spec), energies, cfg);
}

/// Largest deviation of d(f1)/dt from -f2 and of d(f2)/dt from f1 along an
/// orbit, with derivatives taken by central differences on the dense output.
struct RotationDefect {
  double max_defect = 0.0;
  int samples = 0;
};

inline RotationDefect rigid_rotation_check(const Hamiltonian& h, const Point& start, const IntegratorConfig& cfg,
                                           double t_max, double fd_step = 1e-4) {
  const MapEvaluator f = detail::source_evaluator(h, "rigid_rotation_check");
  Orbit orbit(h, cfg);
  check_start(orbit.evaluator(), start);
  orbit.start(start);
  RotationDefect out;
  while (orbit.time() < t_max) {
    auto [t0, t1] = orbit.step();
    if (t1 - t0 <= 2 * fd_step)
      continue;
    Extended t = (t0 + t1) / 2;
    ExtPoint u = f(orbit.state_at(t)), up = f(orbit.state_at(t + fd_step)), um = f(orbit.state_at(t - fd_step));
    Extended d1 = (up[0] - um[0]) / (2 * fd_step);
    Extended d2 = (up[1] - um[1]) / (2 * fd_step);
    out.max_defect = std::max(
        {out.max_defect, static_cast<double>(std::abs(d1 + u[1])), static_cast<double>(std::abs(d2 - u[0]))});
    ++out.samples;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Injectivity sampling.

struct Collision {
  Point a;
  Point b;
  double image_distance;
};

struct CollisionReport {
  std::size_t points = 0;
  std::size_t collision_count = 0;
  std::vector<Collision> collisions;  // first max_reported of them
  bool empty() const { return collision_count == 0; }
};

/// Evaluates f on an n x n grid over [-w, w]^2 and reports pairs of distinct
/// grid points whose images lie within `tolerance` of each other (max norm).
inline CollisionReport injectivity_sample(const PolyMap& f, double box_half_width, int grid_points_per_axis,
                                          double tolerance = 1e-9, std::size_t max_reported = 100) {
  if (grid_points_per_axis < 2)
    throw std::invalid_argument("injectivity_sample: need at least 2 grid points per axis");
  const FloatPoly f1(f.f1), f2(f.f2);
  const int n = grid_points_per_axis;
  struct Image {
    double u, v;
    Point p;
  };
  std::vector<Image> images;
  images.reserve(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double x = box_half_width * (2 * i - (n - 1)) / (n - 1);
      double y = box_half_width * (2 * j - (n - 1)) / (n - 1);
      images.push_back({f1(x, y), f2(x, y), {x, y}});
    }
  std::sort(images.begin(), images.end(), [](const Image& a, const Image& b) { return a.u < b.u; });

  CollisionReport rep;
  rep.points = images.size();
  for (std::size_t i = 0; i < images.size(); ++i)
    for (std::size_t j = i + 1; j < images.size() && images[j].u - images[i].u <= tolerance; ++j) {
      double dist = std::max(std::abs(images[j].u - images[i].u), std::abs(images[j].v - images[i].v));
      if (dist <= tolerance) {
        ++rep.collision_count;
        if (rep.collisions.size() < max_reported)
          rep.collisions.push_back({images[i].p, images[j].p, dist});
      }
    }
  return rep;
}

// ---------------------------------------------------------------------------
// Linear equivalence search: minimize the RMS of H_a(p) - H_b(A p) over sample
// points p in a box, over 2x2 matrices A with |det A| in [min_det, max_det].

using Matrix2 = std::array<std::array<double, 2>, 2>;

struct EquivalenceSearchOptions {
  std::uint64_t seed = 1;
  int samples_per_axis = 15;
  /// Restrict to det A = +-1 instead of |det A| in [min_det, max_det].
  bool unimodular = false;
  double min_det = 0.1;
  double max_det = 10.0;
  int max_iterations = 1000;
  /// Entries of random starting matrices are drawn from [-start_range, start_range].
  double start_range = 2.0;
};

struct EquivalenceSearchResult {
  Matrix2 best_matrix{};
  double best_residual = 0.0;
  int restarts = 0;
  int sample_count = 0;
  int converged_restarts = 0;
  std::vector<double> restart_residuals;
};

namespace detail {

class EquivalenceObjective {
 public:
  EquivalenceObjective(const Hamiltonian& a, const Hamiltonian& b, double box, int per_axis)
      : hb_(b.H), hbx_(partial(b.H, Var::X)), hby_(partial(b.H, Var::Y)) {
    const FloatPoly ha(a.H);
    for (int i = 0; i < per_axis; ++i)
      for (int j = 0; j < per_axis; ++j) {
        double x = box * (2 * i - (per_axis - 1)) / (per_axis - 1);
        double y = box * (2 * j - (per_axis - 1)) / (per_axis - 1);
        pts_.push_back({x, y});
        target_.push_back(ha(x, y));
      }
  }

  std::size_t size() const { return pts_.size(); }

  /// Residuals r_k = H_a(p_k) - H_b(A p_k) and, optionally, dr/dA (row-major entries).
  void evaluate(const Eigen::Vector4d& a, Eigen::VectorXd& r, Eigen::MatrixXd* jac) const {
    r.resize(pts_.size());
    if (jac)
      jac->resize(pts_.size(), 4);
    for (std::size_t k = 0; k < pts_.size(); ++k) {
      const auto& p = pts_[k];
      double u = a[0] * p[0] + a[1] * p[1];
      double v = a[2] * p[0] + a[3] * p[1];
      r[k] = target_[k] - hb_(u, v);
      if (jac) {
        double gu = hbx_(u, v), gv = hby_(u, v);
        (*jac)(k, 0) = -gu * p[0];
        (*jac)(k, 1) = -gu * p[1];
        (*jac)(k, 2) = -gv * p[0];
        (*jac)(k, 3) = -gv * p[1];
      }
    }
  }

 private:
  FloatPoly hb_, hbx_, hby_;
  std::vector<Point> pts_;
  std::vector<double> target_;
};

inline double det4(const Eigen::Vector4d& a) { return a[0] * a[3] - a[1] * a[2]; }

/// Unimodular parametrization: A = M / sqrt(|det M|).
inline Eigen::Vector4d unimodular(const Eigen::Vector4d& m) {
  double d = std::abs(det4(m));
  return d > 0 ? Eigen::Vector4d(m / std::sqrt(d)) : m;
}

struct LocalResult {
  Eigen::Vector4d a;
  double rms;
  bool converged;
};

/// Levenberg-Marquardt from `start`. In the free mode a penalty residual keeps
/// |det A| inside [min_det, max_det]; in the unimodular mode A is parametrized
/// through unimodular() and the chain rule is applied by central differences.
inline LocalResult levenberg_marquardt(const EquivalenceObjective& obj, Eigen::Vector4d theta,
                                       const EquivalenceSearchOptions& opt) {
  const double n = static_cast<double>(obj.size());
  const double penalty_weight = 1e3 * std::sqrt(n);
  auto matrix_of = [&](const Eigen::Vector4d& t) { return opt.unimodular ? unimodular(t) : t; };

  auto cost_and_system = [&](const Eigen::Vector4d& t, Eigen::Matrix4d* jtj, Eigen::Vector4d* jtr) {
    Eigen::Vector4d a = matrix_of(t);
    Eigen::VectorXd r;
    Eigen::MatrixXd ja;
    obj.evaluate(a, r, jtj ? &ja : nullptr);
    double cost = r.squaredNorm();
    double pen = 0.0;
    Eigen::Vector4d pen_grad = Eigen::Vector4d::Zero();
    if (!opt.unimodular) {
      double d = det4(a), ad = std::abs(d);
      Eigen::Vector4d dabs = (d >= 0 ? 1.0 : -1.0) * Eigen::Vector4d(a[3], -a[2], -a[1], a[0]);
      if (ad < opt.min_det) {
        pen = penalty_weight * (opt.min_det - ad);
        pen_grad = -penalty_weight * dabs;
      } else if (ad > opt.max_det) {
        pen = penalty_weight * (ad - opt.max_det);
        pen_grad = penalty_weight * dabs;
      }
      cost += pen * pen;
    }
    if (jtj) {
      Eigen::MatrixXd j = ja;
      if (opt.unimodular) {
        Eigen::Matrix4d da;
        for (int c = 0; c < 4; ++c) {
          double h = 1e-7 * std::max(1.0, std::abs(t[c]));
          Eigen::Vector4d tp = t, tm = t;
          tp[c] += h;
          tm[c] -= h;
          da.col(c) = (unimodular(tp) - unimodular(tm)) / (2 * h);
        }
        j = ja * da;
      }
      *jtj = j.transpose() * j + pen_grad * pen_grad.transpose();
      *jtr = j.transpose() * r + pen_grad * pen;
    }
    return cost;
  };

  Eigen::Matrix4d jtj;
  Eigen::Vector4d jtr;
  double cost = cost_and_system(theta, &jtj, &jtr);
  double mu = 1e-3;
  bool converged = false;
  for (int it = 0; it < opt.max_iterations; ++it) {
    if (cost <= 1e-28 * n) {
      converged = true;
      break;
    }
    Eigen::Matrix4d lhs = jtj;
    for (int d = 0; d < 4; ++d)
      lhs(d, d) += mu * std::max(jtj(d, d), 1e-12);
    Eigen::Vector4d step = lhs.ldlt().solve(-jtr);
    if (!step.allFinite()) {
      mu *= 10;
      continue;
    }
    Eigen::Vector4d trial = theta + step;
    double trial_cost = cost_and_system(trial, nullptr, nullptr);
    if (std::isfinite(trial_cost) && trial_cost < cost) {
      bool tiny = step.norm() <= 1e-13 * (1.0 + theta.norm());
      theta = trial;
      cost = cost_and_system(theta, &jtj, &jtr);
      mu = std::max(mu / 3, 1e-12);
      if (tiny) {
        converged = true;
        break;
      }
    } else {
      mu *= 4;
      if (mu > 1e16) {
        converged = true;  // no descent direction left at this precision
        break;
      }
    }
  }
  Eigen::Vector4d a = matrix_of(theta);
  Eigen::VectorXd r;
  obj.evaluate(a, r, nullptr);
  return {a, std::sqrt(r.squaredNorm() / n), converged};
}

}  // namespace detail

/// Multi-start least squares. The first start is the identity, the rest are
/// random matrices from the seeded generator. A persistent residual floor over
/// all restarts is evidence (not proof) that no admissible A exists.
inline EquivalenceSearchResult linear_equivalence_search(const Hamiltonian& h_a, const Hamiltonian& h_b,
                                                         double sample_box, int restarts,
                                                         const EquivalenceSearchOptions& opt = {}) {
  if (h_a.H.is_constant() || h_b.H.is_constant())
    throw std::invalid_argument("linear_equivalence_search: Hamiltonians must be nonconstant");
  if (restarts < 1 || opt.samples_per_axis < 2 || !(sample_box > 0))
    throw std::invalid_argument("linear_equivalence_search: need restarts >= 1, a positive box, 2+ samples per axis");

  detail::EquivalenceObjective obj(h_a, h_b, sample_box, opt.samples_per_axis);
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> entry(-opt.start_range, opt.start_range);
  const double lo = opt.unimodular ? 0.5 : opt.min_det, hi = opt.unimodular ? 2.0 : opt.max_det;

  EquivalenceSearchResult res;
  res.sample_count = static_cast<int>(obj.size());
  res.best_residual = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Eigen::Vector4d start(1, 0, 0, 1);
    if (r > 0) {
      do {
        start = Eigen::Vector4d(entry(rng), entry(rng), entry(rng), entry(rng));
      } while (std::abs(detail::det4(start)) < lo || std::abs(detail::det4(start)) > hi);
    }
    auto local = detail::levenberg_marquardt(obj, start, opt);
    double d = std::abs(detail::det4(local.a));
    bool admissible = opt.unimodular ? std::abs(d - 1.0) < 1e-9
                                     : d >= opt.min_det * (1 - 1e-9) && d <= opt.max_det * (1 + 1e-9);
    double rms = admissible && std::isfinite(local.rms) ? local.rms : std::numeric_limits<double>::infinity();
    res.restart_residuals.push_back(rms);
    res.converged_restarts += local.converged ? 1 : 0;
    if (rms < res.best_residual) {
      res.best_residual = rms;
      res.best_matrix = {{{local.a[0], local.a[1]}, {local.a[2], local.a[3]}}};
    }
  }
  res.restarts = restarts;
  return res;
}

// ---------------------------------------------------------------------------
// Serialization.

inline nlohmann::json to_json(const PeriodReport& r) {
  return {{"energy", r.energy},
          {"initial_point", {r.initial_point[0], r.initial_point[1]}},
          {"period", r.period},
          {"period_abs_error_estimate", r.period_abs_error_estimate},
          {"energy_drift", r.energy_drift},
          {"steps", r.steps},
          {"tolerance_refinements", r.tolerance_refinements}};
}

inline nlohmann::json to_json(const EquivalenceSearchResult& r) {
  nlohmann::json residuals = nlohmann::json::array();
  for (double v : r.restart_residuals)
    residuals.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr));
  return {{"best_matrix", {{r.best_matrix[0][0], r.best_matrix[0][1]}, {r.best_matrix[1][0], r.best_matrix[1][1]}}},
          {"best_residual", std::isfinite(r.best_residual) ? nlohmann::json(r.best_residual) : nlohmann::json(nullptr)},
          {"restarts", r.restarts},
          {"sample_count", r.sample_count},
          {"converged_restarts", r.converged_restarts},
          {"restart_residuals", residuals},
          {"interpretation", "evidence only: a residual floor across restarts suggests, but does not prove, that no "
                             "admissible linear map relates the two Hamiltonians"}};
}

inline std::string csv_header() { return "energy,period,period_error,drift,steps"; }

inline std::string to_csv_row(const PeriodReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.energy << ',' << r.period << ',' << r.period_abs_error_estimate << ',' << r.energy_drift << ',' << r.steps;
  return os.str();
}

}  // namespace isoforge
