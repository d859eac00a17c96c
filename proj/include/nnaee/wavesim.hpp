#pragma once

#include <cstdint>
#include <vector>

#include "nnaee/model.hpp"

namespace nnaee::wave {

struct NodeIndex {
  int row = 0;
  int col = 0;
  friend bool operator==(const NodeIndex &, const NodeIndex &) = default;
};

/// Nearest grid node to a physical point, clamped to the grid.
NodeIndex nearest_node(const ModelConfig &config, Point p);

/// Half-open index range [lo, hi) of undamped nodes along either axis.
struct InteriorRange {
  int lo = 0;
  int hi = 0;
  int size() const { return hi - lo; }
  bool contains(int r, int c) const { return r >= lo && r < hi && c >= lo && c < hi; }
};

InteriorRange interior_range(const ModelConfig &config);

double eval_source(const SourceWaveform &w, double t);

/// Damping coefficient eta per node: zero on the interior, rising quadratically with depth
/// into the absorbing layer and reaching eta_max at the outermost node.
Grid2Dd build_damping_profile(const ModelConfig &config);

/// One leapfrog time step of the damped wave equation
///   (1 + a) u+ = 2u - (1 - a) u- + dt^2/v (L u + s),   a = eta dt / 2,
/// on a zero-padded (Dirichlet) grid. The same operator drives the adjoint solve.
class Propagator {
public:
  Propagator(const Grid2Dd &slowness_sq, const ModelConfig &config);

  int n() const { return n_; }
  /// Buffer length for one padded state.
  std::size_t state_size() const { return static_cast<std::size_t>(pitch_) * pitch_; }
  std::vector<double> make_state() const { return std::vector<double>(state_size(), 0.0); }
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row + 1) * pitch_ + static_cast<std::size_t>(col + 1);
  }

  /// next = A (2 cur - B prev + K L cur) over all grid nodes.
  void step(const double *prev, const double *cur, double *next) const;

  /// Adds the contribution of a nodal source term s (units of L u) to a freshly stepped state.
  void inject(double *next, std::size_t idx, double s) const { next[idx] += a_k_[idx] * s; }

  /// Largest |value| over the grid nodes; NaN propagates.
  double max_abs(const double *state) const;

private:
  int n_ = 0;
  int pitch_ = 0;
  double inv_dx2_ = 0.0;
  std::vector<double> a_inv_;   // 1 / (1 + a)
  std::vector<double> b_;       // 1 - a
  std::vector<double> k_;       // dt^2 / v
  std::vector<double> a_k_;     // a_inv * k
};

/// Checks the configuration, geometry, waveform and field against each other.
void check_inputs(const SOSField &field, const ModelConfig &config,
                  const SensorGeometry &geometry, const SourceWaveform &waveform);

/// Receiver traces (M_r x M_t) for one shot. Sample t holds u at time (t + 1) dt.
Grid2Dd simulate(const SOSField &field, const ModelConfig &config, const SensorGeometry &geometry,
                 const SourceWaveform &waveform, int transmitter_index);

/// All shots stacked along the first axis.
MeasurementSet simulate_all(const SOSField &field, const ModelConfig &config,
                            const SensorGeometry &geometry, const SourceWaveform &waveform);

/// Adds i.i.d. N(0, variance) noise to every sample; deterministic per seed.
MeasurementSet add_noise(const MeasurementSet &m, double variance, std::uint64_t seed);

} // namespace nnaee::wave
