#include "nnaee/adjoint.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "nnaee/parallel.hpp"
#include "nnaee/wavesim.hpp"

namespace nnaee::adjoint {

std::string to_string(StepRule rule) {
  return rule == StepRule::fixed ? "fixed" : "backtracking";
}

StepRule step_rule_from_string(const std::string &name) {
  if (name == "fixed") return StepRule::fixed;
  if (name == "backtracking") return StepRule::backtracking;
  throw InvalidArgument("unknown step rule '" + name + "'");
}

void InversionOptions::validate() const {
  if (max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");
  if (!(c_min > 0.0 && c_min < c_max)) throw InvalidArgument("bounds must satisfy 0 < c_min < c_max");
  if (!(initial_step > 0.0)) throw InvalidArgument("initial_step must be positive");
  if (smoothing_radius < 0.0) throw InvalidArgument("smoothing_radius must be >= 0");
  if (convergence_tol < 0.0) throw InvalidArgument("convergence_tol must be >= 0");
  if (max_backtracks < 1) throw InvalidArgument("max_backtracks must be >= 1");
}

namespace {

void check_target(const MeasurementSet &target, const ModelConfig &config,
                  const SensorGeometry &geometry) {
  if (target.n_transmitters != geometry.n_transmitters() ||
      target.n_receivers != geometry.n_receivers() || target.n_samples != config.n_steps)
    throw DimensionError("measurement set " + std::to_string(target.n_transmitters) + "x" +
                         std::to_string(target.n_receivers) + "x" +
                         std::to_string(target.n_samples) + " does not match geometry/config " +
                         std::to_string(geometry.n_transmitters()) + "x" +
                         std::to_string(geometry.n_receivers()) + "x" +
                         std::to_string(config.n_steps));
  if (std::abs(target.dt - config.dt) > 1e-9 * config.dt)
    throw ConfigError("measurement dt " + std::to_string(target.dt) +
                      " differs from the model dt " + std::to_string(config.dt));
}

SOSField field_on(const Grid2Dd &v, const ModelConfig &config) {
  return SOSField::from_slowness_squared(v, config.dx, config.origin_x, config.origin_y);
}

struct ShotSetup {
  std::size_t src = 0;
  std::vector<std::size_t> receivers;
};

ShotSetup shot_setup(const wave::Propagator &prop, const ModelConfig &config,
                     const SensorGeometry &geometry, int shot) {
  ShotSetup s;
  const auto node = wave::nearest_node(config, geometry.transmitter(shot));
  s.src = prop.index(node.row, node.col);
  for (int r = 0; r < geometry.n_receivers(); ++r) {
    const auto rn = wave::nearest_node(config, geometry.receiver(r));
    s.receivers.push_back(prop.index(rn.row, rn.col));
  }
  return s;
}

// Forward solve for one shot. Fills residual (M_r x M_t) and, when `snapshots` is non-null,
// stores u^0 .. u^M on the interior, (M + 1) blocks of side^2 values.
double forward_shot(const wave::Propagator &prop, const ModelConfig &config,
                    const SourceWaveform &waveform, const ShotSetup &setup,
                    const MeasurementSet &target, int shot, Grid2Dd &residual,
                    std::vector<double> *snapshots, const wave::InteriorRange &interior) {
  const int mt = config.n_steps;
  const int mr = static_cast<int>(setup.receivers.size());
  const auto side = static_cast<std::size_t>(interior.size());
  residual = Grid2Dd(static_cast<std::size_t>(mr), static_cast<std::size_t>(mt));
  if (snapshots) snapshots->assign((static_cast<std::size_t>(mt) + 1) * side * side, 0.0);

  auto prev = prop.make_state();
  auto cur = prop.make_state();
  auto next = prop.make_state();
  const double src_scale = 1.0 / (config.dx * config.dx);
  double j = 0.0;
  for (int n = 0; n < mt; ++n) {
    prop.step(prev.data(), cur.data(), next.data());
    prop.inject(next.data(), setup.src, waveform(n * config.dt) * src_scale);
    for (int r = 0; r < mr; ++r) {
      const double res = next[setup.receivers[r]] - target.at(shot, r, n);
      residual(r, n) = res;
      j += 0.5 * res * res;
    }
    if (snapshots) {
      double *dst = snapshots->data() + (static_cast<std::size_t>(n) + 1) * side * side;
      for (int rr = interior.lo; rr < interior.hi; ++rr) {
        const double *src = next.data() + prop.index(rr, interior.lo);
        std::copy(src, src + side, dst + static_cast<std::size_t>(rr - interior.lo) * side);
      }
    }
    if ((n % 64 == 63 || n == mt - 1) && !std::isfinite(prop.max_abs(next.data())))
      throw InstabilityError("non-finite pressure at step " + std::to_string(n) +
                             " during inversion forward solve");
    std::swap(prev, cur);
    std::swap(cur, next);
  }
  return j;
}

// Backward (adjoint) solve driven by the residuals; accumulates
//   g += sum_n lambda^n * (u^{n+1} - 2 u^n + u^{n-1}) / dt^2   on the interior.
void adjoint_shot(const wave::Propagator &prop, const ModelConfig &config,
                  const ShotSetup &setup, const Grid2Dd &residual,
                  const std::vector<double> &snapshots, const wave::InteriorRange &interior,
                  std::vector<double> &grad_interior) {
  const int mt = config.n_steps;
  const auto side = static_cast<std::size_t>(interior.size());
  const std::size_t block = side * side;
  const double inv_dt2 = 1.0 / (config.dt * config.dt);

  auto lam_next = prop.make_state(); // lambda^{m+1}
  auto lam_cur = prop.make_state();  // lambda^m
  auto lam_prev = prop.make_state(); // lambda^{m-1}
  for (int m = mt; m >= 1; --m) {
    prop.step(lam_next.data(), lam_cur.data(), lam_prev.data());
    for (std::size_t r = 0; r < setup.receivers.size(); ++r)
      prop.inject(lam_prev.data(), setup.receivers[r], -residual(r, static_cast<std::size_t>(m - 1)));

    const int n = m - 1;
    const double *u_next = snapshots.data() + static_cast<std::size_t>(n + 1) * block;
    const double *u_cur = snapshots.data() + static_cast<std::size_t>(n) * block;
    const double *u_prev = n >= 1 ? snapshots.data() + static_cast<std::size_t>(n - 1) * block
                                  : nullptr;
    for (std::size_t rr = 0; rr < side; ++rr) {
      const double *lam = lam_prev.data() + prop.index(interior.lo + static_cast<int>(rr), interior.lo);
      double *g = grad_interior.data() + rr * side;
      const std::size_t off = rr * side;
      for (std::size_t cc = 0; cc < side; ++cc) {
        const double um = u_prev ? u_prev[off + cc] : 0.0;
        g[cc] += lam[cc] * (u_next[off + cc] - 2.0 * u_cur[off + cc] + um) * inv_dt2;
      }
    }
    std::swap(lam_next, lam_cur);
    std::swap(lam_cur, lam_prev);
  }
}

void check_v(const Grid2Dd &v, const ModelConfig &config, const SensorGeometry &geometry,
             const SourceWaveform &waveform) {
  wave::check_inputs(field_on(v, config), config, geometry, waveform);
}

} // namespace

double misfit_v(const Grid2Dd &v, const MeasurementSet &target, const ModelConfig &config,
                const SensorGeometry &geometry, const SourceWaveform &waveform) {
  check_v(v, config, geometry, waveform);
  check_target(target, config, geometry);
  const wave::Propagator prop(v, config);
  const auto interior = wave::interior_range(config);
  std::vector<double> per_shot(static_cast<std::size_t>(geometry.n_transmitters()), 0.0);
  parallel_for(per_shot.size(), [&](std::size_t s) {
    Grid2Dd residual;
    const auto setup = shot_setup(prop, config, geometry, static_cast<int>(s));
    per_shot[s] = forward_shot(prop, config, waveform, setup, target, static_cast<int>(s),
                               residual, nullptr, interior);
  });
  return std::accumulate(per_shot.begin(), per_shot.end(), 0.0);
}

MisfitGradient misfit_gradient_v(const Grid2Dd &v, const MeasurementSet &target,
                                 const ModelConfig &config, const SensorGeometry &geometry,
                                 const SourceWaveform &waveform) {
  check_v(v, config, geometry, waveform);
  check_target(target, config, geometry);
  const wave::Propagator prop(v, config);
  const auto interior = wave::interior_range(config);
  const auto side = static_cast<std::size_t>(interior.size());
  const auto shots = static_cast<std::size_t>(geometry.n_transmitters());

  std::vector<double> per_shot_j(shots, 0.0);
  std::vector<std::vector<double>> per_shot_g(shots);
  parallel_for(shots, [&](std::size_t s) {
    Grid2Dd residual;
    std::vector<double> snapshots;
    const auto setup = shot_setup(prop, config, geometry, static_cast<int>(s));
    per_shot_j[s] = forward_shot(prop, config, waveform, setup, target, static_cast<int>(s),
                                 residual, &snapshots, interior);
    per_shot_g[s].assign(side * side, 0.0);
    adjoint_shot(prop, config, setup, residual, snapshots, interior, per_shot_g[s]);
  });

  MisfitGradient out;
  out.gradient = Grid2Dd(v.rows(), v.cols(), 0.0);
  for (std::size_t s = 0; s < shots; ++s) {
    out.misfit += per_shot_j[s];
    for (std::size_t rr = 0; rr < side; ++rr)
      for (std::size_t cc = 0; cc < side; ++cc)
        out.gradient(interior.lo + rr, interior.lo + cc) += per_shot_g[s][rr * side + cc];
  }
  return out;
}

double misfit(const SOSField &field, const MeasurementSet &target, const ModelConfig &config,
              const SensorGeometry &geometry, const SourceWaveform &waveform) {
  if (!field.matches(config)) throw ConfigError("misfit: field grid does not match config");
  return misfit_v(field.slowness_squared(), target, config, geometry, waveform);
}

Grid2Dd gradient(const SOSField &field, const MeasurementSet &target, const ModelConfig &config,
                 const SensorGeometry &geometry, const SourceWaveform &waveform) {
  if (!field.matches(config)) throw ConfigError("gradient: field grid does not match config");
  return misfit_gradient_v(field.slowness_squared(), target, config, geometry, waveform).gradient;
}

Grid2Dd smooth_interior(const Grid2Dd &g, const ModelConfig &config, double radius) {
  const auto interior = wave::interior_range(config);
  Grid2Dd out(g.rows(), g.cols(), 0.0);
  const int lo = interior.lo;
  const int hi = interior.hi;
  if (radius <= 0.0) {
    for (int r = lo; r < hi; ++r)
      for (int c = lo; c < hi; ++c) out(r, c) = g(r, c);
    return out;
  }
  const double sigma = 0.5 * radius / config.dx;
  const int half = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * half + 1);
  for (int i = -half; i <= half; ++i) k[i + half] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double sum = std::accumulate(k.begin(), k.end(), 0.0);
  for (double &w : k) w /= sum;

  Grid2Dd tmp(g.rows(), g.cols(), 0.0);
  for (int r = lo; r < hi; ++r)
    for (int c = lo; c < hi; ++c) {
      double acc = 0.0;
      for (int j = std::max(lo, c - half); j <= std::min(hi - 1, c + half); ++j)
        acc += k[j - c + half] * g(r, j);
      tmp(r, c) = acc;
    }
  for (int r = lo; r < hi; ++r)
    for (int c = lo; c < hi; ++c) {
      double acc = 0.0;
      for (int i = std::max(lo, r - half); i <= std::min(hi - 1, r + half); ++i)
        acc += k[i - r + half] * tmp(i, c);
      out(r, c) = acc;
    }
  return out;
}

Reconstruction reconstruct(const MeasurementSet &target, const ModelConfig &config,
                           const SensorGeometry &geometry, const SourceWaveform &waveform,
                           const InversionOptions &options) {
  options.validate();
  check_target(target, config, geometry);
  SOSField start = options.initial_field ? *options.initial_field
                                         : SOSField::constant(config, options.initial_value);
  if (!start.matches(config))
    throw ConfigError("initial field does not match the " + to_string(config.tier) + " grid");

  const double v_lo = 1.0 / (options.c_max * options.c_max);
  const double v_hi = 1.0 / (options.c_min * options.c_min);
  Grid2Dd v = start.slowness_squared();
  for (double &x : v.flat()) x = std::clamp(x, v_lo, v_hi);
  const auto interior = wave::interior_range(config);

  Reconstruction rec;
  auto current = misfit_gradient_v(v, target, config, geometry, waveform);
  rec.gradient_evaluations = 1;
  rec.history.push_back({0, current.misfit, 0.0});
  auto snapshot = [&] {
    rec.field = field_on(v, config);
    return rec;
  };

  if (current.misfit == 0.0) {
    rec.stop_reason = "zero misfit";
    return snapshot();
  }

  double step_c = options.initial_step; // trial size in m/s
  int failures = 0;
  for (int it = 1; it <= options.max_iterations; ++it) {
    const Grid2Dd direction = smooth_interior(current.gradient, config, options.smoothing_radius);
    // dc = -c^3/2 dv, so the largest sound-speed change of v - t*direction is t * scale.
    double scale = 0.0;
    for (int r = interior.lo; r < interior.hi; ++r)
      for (int c = interior.lo; c < interior.hi; ++c)
        scale = std::max(scale, std::abs(direction(r, c)) * 0.5 * std::pow(v(r, c), -1.5));
    if (!(scale > 0.0)) {
      rec.stop_reason = "zero gradient";
      return snapshot();
    }

    bool accepted = false;
    while (!accepted) {
      const double t = step_c / scale;
      Grid2Dd trial = v;
      double descent = 0.0;
      double max_dc = 0.0;
      for (int r = interior.lo; r < interior.hi; ++r)
        for (int c = interior.lo; c < interior.hi; ++c) {
          const double nv = std::clamp(v(r, c) - t * direction(r, c), v_lo, v_hi);
          descent += current.gradient(r, c) * (nv - v(r, c));
          max_dc = std::max(max_dc, std::abs(1.0 / std::sqrt(nv) - 1.0 / std::sqrt(v(r, c))));
          trial(r, c) = nv;
        }
      auto next = misfit_gradient_v(trial, target, config, geometry, waveform);
      ++rec.gradient_evaluations;
      const bool ok = options.step_rule == StepRule::fixed ||
                      next.misfit <= current.misfit + options.armijo * descent;
      if (!ok) {
        if (++failures >= options.max_backtracks) {
          snapshot();
          rec.stop_reason = "line search failed";
          throw OptimizationError("line search failed " + std::to_string(failures) +
                                      " consecutive times at iteration " + std::to_string(it),
                                  rec);
        }
        step_c *= 0.5;
        continue;
      }
      accepted = true;
      const bool first_try = failures == 0;
      failures = 0;
      const double previous = current.misfit;
      v = std::move(trial);
      current = std::move(next);
      rec.history.push_back({it, current.misfit, max_dc});
      if (options.step_rule == StepRule::backtracking && first_try) step_c *= 1.5;
      if (previous > 0.0 && (previous - current.misfit) < options.convergence_tol * previous &&
          options.step_rule == StepRule::backtracking) {
        rec.stop_reason = "converged";
        return snapshot();
      }
    }
  }
  rec.stop_reason = "max iterations";
  return snapshot();
}

std::string history_csv(const std::vector<IterationRecord> &history) {
  std::ostringstream out;
  out << "iteration,misfit,step_length\n" << std::setprecision(17);
  for (const auto &h : history) out << h.iteration << ',' << h.misfit << ',' << h.step_length << '\n';
  return out.str();
}

} // namespace nnaee::adjoint
