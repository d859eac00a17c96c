#include "nnaee/wavesim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "nnaee/parallel.hpp"

namespace nnaee::wave {

NodeIndex nearest_node(const ModelConfig &config, Point p) {
  auto snap = [&](double coord, double origin) {
    const long i = std::lround((coord - origin) / config.dx - 0.5);
    return static_cast<int>(std::clamp<long>(i, 0, config.n_grid - 1));
  };
  return {snap(p.y, config.origin_y), snap(p.x, config.origin_x)};
}

InteriorRange interior_range(const ModelConfig &config) {
  const double eps = 1e-9 * config.dx;
  InteriorRange range{config.n_grid, 0};
  for (int i = 0; i < config.n_grid; ++i) {
    const double x = config.node_x(i);
    if (x >= config.interior_lo_x() - eps && x <= config.interior_hi_x() + eps) {
      range.lo = std::min(range.lo, i);
      range.hi = std::max(range.hi, i + 1);
    }
  }
  if (range.hi <= range.lo) range = {0, 0};
  return range;
}

double eval_source(const SourceWaveform &w, double t) { return w(t); }

Grid2Dd build_damping_profile(const ModelConfig &config) {
  const auto n = static_cast<std::size_t>(config.n_grid);
  Grid2Dd eta(n, n, 0.0);
  // Depth of the outermost node centre below the interior edge.
  const double full_depth = config.abc_thickness - 0.5 * config.dx;
  if (!(full_depth > 0.0) || config.eta_max == 0.0) return eta;
  for (std::size_t r = 0; r < n; ++r) {
    const double y = config.node_y(static_cast<int>(r));
    const double dy = std::max({config.interior_lo_y() - y, y - config.interior_hi_y(), 0.0});
    for (std::size_t c = 0; c < n; ++c) {
      const double x = config.node_x(static_cast<int>(c));
      const double dx = std::max({config.interior_lo_x() - x, x - config.interior_hi_x(), 0.0});
      const double depth = std::min(1.0, std::max(dx, dy) / full_depth);
      // Interior nodes can sit a rounding error outside the edge; keep them undamped.
      eta(r, c) = depth < 1e-9 ? 0.0 : config.eta_max * depth * depth;
    }
  }
  return eta;
}

Propagator::Propagator(const Grid2Dd &slowness_sq, const ModelConfig &config)
    : n_(config.n_grid), pitch_(config.n_grid + 2), inv_dx2_(1.0 / (config.dx * config.dx)) {
  if (slowness_sq.rows() != static_cast<std::size_t>(n_) ||
      slowness_sq.cols() != static_cast<std::size_t>(n_))
    throw DimensionError("propagator: slowness grid does not match config n_grid");
  const Grid2Dd eta = build_damping_profile(config);
  const std::size_t size = state_size();
  a_inv_.assign(size, 0.0);
  b_.assign(size, 0.0);
  k_.assign(size, 0.0);
  a_k_.assign(size, 0.0);
  const double dt2 = config.dt * config.dt;
  for (int r = 0; r < n_; ++r)
    for (int c = 0; c < n_; ++c) {
      const std::size_t i = index(r, c);
      const double a = 0.5 * eta(r, c) * config.dt;
      a_inv_[i] = 1.0 / (1.0 + a);
      b_[i] = 1.0 - a;
      k_[i] = dt2 / slowness_sq(r, c);
      a_k_[i] = a_inv_[i] * k_[i];
    }
}

void Propagator::step(const double *prev, const double *cur, double *next) const {
  const double inv_dx2 = inv_dx2_;
  for (int r = 1; r <= n_; ++r) {
    const std::size_t row = static_cast<std::size_t>(r) * pitch_;
    const double *__restrict up = cur + row - pitch_;
    const double *__restrict uc = cur + row;
    const double *__restrict ud = cur + row + pitch_;
    const double *__restrict um = prev + row;
    const double *__restrict ai = a_inv_.data() + row;
    const double *__restrict bi = b_.data() + row;
    const double *__restrict ki = k_.data() + row;
    double *__restrict un = next + row;
    for (int c = 1; c <= n_; ++c) {
      const double lap = (uc[c - 1] + uc[c + 1] + up[c] + ud[c] - 4.0 * uc[c]) * inv_dx2;
      un[c] = ai[c] * (2.0 * uc[c] - bi[c] * um[c] + ki[c] * lap);
    }
  }
}

double Propagator::max_abs(const double *state) const {
  double m = 0.0;
  for (int r = 0; r < n_; ++r)
    for (int c = 0; c < n_; ++c) {
      const double v = std::abs(state[index(r, c)]);
      if (!(v <= m)) m = v; // NaN sticks
    }
  return m;
}

void check_inputs(const SOSField &field, const ModelConfig &config,
                  const SensorGeometry &geometry, const SourceWaveform &waveform) {
  config.validate();
  waveform.validate();
  geometry.validate(config);
  if (!field.matches(config))
    throw ConfigError("field grid (" + std::to_string(field.rows()) + "x" +
                      std::to_string(field.cols()) + ", dx " + std::to_string(field.dx) +
                      ") does not match the " + to_string(config.tier) + " config");
  const double cmin = field.min();
  const double cmax = field.max();
  if (!(cmin > 0.0) || !std::isfinite(cmax))
    throw ConfigError("sound speed must be finite and strictly positive");
  if (config.courant(cmax) > 1.0 / std::sqrt(2.0))
    throw ConfigError("CFL violated by field maximum " + std::to_string(cmax) + " m/s");
}

Grid2Dd simulate(const SOSField &field, const ModelConfig &config, const SensorGeometry &geometry,
                 const SourceWaveform &waveform, int transmitter_index) {
  check_inputs(field, config, geometry, waveform);
  if (transmitter_index < 0 || transmitter_index >= geometry.n_transmitters())
    throw InvalidArgument("transmitter index " + std::to_string(transmitter_index) +
                          " out of range");

  const Propagator prop(field.slowness_squared(), config);
  const NodeIndex src = nearest_node(config, geometry.transmitter(transmitter_index));
  const std::size_t src_idx = prop.index(src.row, src.col);
  std::vector<std::size_t> rec_idx;
  for (int r = 0; r < geometry.n_receivers(); ++r) {
    const NodeIndex node = nearest_node(config, geometry.receiver(r));
    rec_idx.push_back(prop.index(node.row, node.col));
  }

  const int mt = config.n_steps;
  Grid2Dd traces(rec_idx.size(), static_cast<std::size_t>(mt));
  auto prev = prop.make_state();
  auto cur = prop.make_state();
  auto next = prop.make_state();
  const double src_scale = 1.0 / (config.dx * config.dx);
  for (int n = 0; n < mt; ++n) {
    prop.step(prev.data(), cur.data(), next.data());
    prop.inject(next.data(), src_idx, waveform(n * config.dt) * src_scale);
    for (std::size_t r = 0; r < rec_idx.size(); ++r) traces(r, n) = next[rec_idx[r]];
    if ((n % 64 == 63 || n == mt - 1) && !std::isfinite(prop.max_abs(next.data())))
      throw InstabilityError("non-finite pressure at step " + std::to_string(n) + " (" +
                             to_string(config.tier) + " tier, shot " +
                             std::to_string(transmitter_index) + ")");
    std::swap(prev, cur);
    std::swap(cur, next);
  }
  return traces;
}

MeasurementSet simulate_all(const SOSField &field, const ModelConfig &config,
                            const SensorGeometry &geometry, const SourceWaveform &waveform) {
  check_inputs(field, config, geometry, waveform);
  const int ms = geometry.n_transmitters();
  const int mr = geometry.n_receivers();
  MeasurementSet out(ms, mr, config.n_steps, config.dt, geometry.radius, config.tier);
  parallel_for(static_cast<std::size_t>(ms), [&](std::size_t s) {
    const Grid2Dd traces = simulate(field, config, geometry, waveform, static_cast<int>(s));
    for (int r = 0; r < mr; ++r)
      std::copy(traces.row(r).begin(), traces.row(r).end(),
                out.trace(static_cast<int>(s), r).begin());
  });
  return out;
}

MeasurementSet add_noise(const MeasurementSet &m, double variance, std::uint64_t seed) {
  if (variance < 0.0) throw InvalidArgument("noise variance must be non-negative");
  MeasurementSet out = m;
  if (variance == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, std::sqrt(variance));
  for (double &v : out.data) v += noise(rng);
  return out;
}

} // namespace nnaee::wave
