#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nnaee/errors.hpp"
#include "nnaee/grid.hpp"

namespace nnaee {

/// Largest sound speed any field may carry; the CFL bound is checked against it.
inline constexpr double kMaxSoundSpeed = 1800.0;
inline constexpr double kMinSoundSpeed = 1100.0;
inline constexpr double kPi = 3.14159265358979323846;

/// Which rung of the model hierarchy a configuration or data set belongs to.
enum class Tier { physical, accurate, surrogate };

std::string to_string(Tier tier);
Tier tier_from_string(const std::string &name);

/// Discretisation of one forward model: grid, time stepping, absorbing layer, noise.
///
/// Nodes sit at cell centres: node (r, c) is at
/// (origin_x + (c + 0.5) dx, origin_y + (r + 0.5) dx).
/// The interior (undamped) region is the square inset by abc_thickness on every side.
struct ModelConfig {
  Tier tier = Tier::surrogate;
  int n_grid = 0;
  double dx = 0.0;       // m
  double origin_x = 0.0; // m, grid corner
  double origin_y = 0.0;
  double dt = 0.0; // s
  int n_steps = 0; // M_t
  double abc_thickness = 0.0;  // m
  double eta_max = 0.0;        // 1/s
  double noise_variance = 0.0; // pressure^2

  /// Grid of n_grid nodes whose interior square of side `interior_side`
  /// is centred on (center_x, center_y).
  static ModelConfig centered(Tier tier, int n_grid, double abc_thickness, double interior_side,
                              double center_x, double center_y, double dt, int n_steps,
                              double eta_max, double noise_variance);

  double extent() const { return n_grid * dx; }
  double interior_lo_x() const { return origin_x + abc_thickness; }
  double interior_hi_x() const { return origin_x + extent() - abc_thickness; }
  double interior_lo_y() const { return origin_y + abc_thickness; }
  double interior_hi_y() const { return origin_y + extent() - abc_thickness; }
  double interior_side() const { return extent() - 2.0 * abc_thickness; }

  double node_x(int c) const { return origin_x + (c + 0.5) * dx; }
  double node_y(int r) const { return origin_y + (r + 0.5) * dx; }

  /// Courant number for the given sound speed.
  double courant(double c = kMaxSoundSpeed) const { return c * dt / dx; }

  /// Throws ConfigError when the configuration is unusable.
  void validate() const;

  friend bool operator==(const ModelConfig &, const ModelConfig &) = default;
};

/// Sound-speed field c(x) on a regular grid. v = 1/c^2 is available through slowness_squared().
struct SOSField {
  Grid2Dd values; // m/s
  double dx = 0.0;
  double origin_x = 0.0;
  double origin_y = 0.0;

  SOSField() = default;
  SOSField(std::size_t rows, std::size_t cols, double dx_, double ox, double oy, double fill = 0.0)
      : values(rows, cols, fill), dx(dx_), origin_x(ox), origin_y(oy) {}

  static SOSField constant(const ModelConfig &config, double c);

  std::size_t rows() const { return values.rows(); }
  std::size_t cols() const { return values.cols(); }
  double node_x(std::size_t c) const { return origin_x + (static_cast<double>(c) + 0.5) * dx; }
  double node_y(std::size_t r) const { return origin_y + (static_cast<double>(r) + 0.5) * dx; }

  double slowness_squared(std::size_t r, std::size_t c) const {
    const double s = values(r, c);
    return 1.0 / (s * s);
  }
  Grid2Dd slowness_squared() const;
  static SOSField from_slowness_squared(const Grid2Dd &v, double dx, double ox, double oy);

  /// True when grid size, spacing and origin agree with the configuration.
  bool matches(const ModelConfig &config) const;
  double min() const;
  double max() const;
  double mean() const;

  friend bool operator==(const SOSField &, const SOSField &) = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point &, const Point &) = default;
};

/// Transmitters and receivers on a circle, in physical coordinates.
struct SensorGeometry {
  Point center;
  double radius = 0.0;
  std::vector<double> transmitter_angles; // rad, increasing in [0, 2pi)
  std::vector<double> receiver_angles;

  /// Equally spaced ring with zero angular offset.
  static SensorGeometry ring(Point center, double radius, int n_transmitters, int n_receivers);

  int n_transmitters() const { return static_cast<int>(transmitter_angles.size()); }
  int n_receivers() const { return static_cast<int>(receiver_angles.size()); }
  Point transmitter(int i) const;
  Point receiver(int i) const;

  /// Throws ConfigError unless every sensor is strictly inside the interior of `config`.
  void validate(const ModelConfig &config) const;

  friend bool operator==(const SensorGeometry &, const SensorGeometry &) = default;
};

/// f(t) = amplitude * exp(xi (t - t0)^2) * sin(2 pi f0 t)
struct SourceWaveform {
  double xi = -1.0e10; // 1/s^2
  double f0 = 5.0e4;   // Hz
  double t0 = 2.5e-5;  // s
  double amplitude = 1.0;

  double operator()(double t) const {
    const double tau = t - t0;
    return amplitude * std::exp(xi * tau * tau) * std::sin(2.0 * kPi * f0 * t);
  }
  void validate() const;

  friend bool operator==(const SourceWaveform &, const SourceWaveform &) = default;
};

/// M_s x M_r x M_t pressure traces, stored (s, r, t) row-major.
struct MeasurementSet {
  int n_transmitters = 0;
  int n_receivers = 0;
  int n_samples = 0;
  double dt = 0.0;
  double geometry_radius = 0.0;
  Tier tier = Tier::surrogate;
  std::vector<double> data;

  MeasurementSet() = default;
  MeasurementSet(int ms, int mr, int mt, double dt_, double radius, Tier tier_)
      : n_transmitters(ms), n_receivers(mr), n_samples(mt), dt(dt_), geometry_radius(radius),
        tier(tier_), data(static_cast<std::size_t>(ms) * mr * mt, 0.0) {}

  std::size_t index(int s, int r, int t) const {
    return (static_cast<std::size_t>(s) * n_receivers + r) * n_samples + t;
  }
  double &at(int s, int r, int t) { return data[index(s, r, t)]; }
  double at(int s, int r, int t) const { return data[index(s, r, t)]; }

  std::span<double> trace(int s, int r) {
    return {data.data() + index(s, r, 0), static_cast<std::size_t>(n_samples)};
  }
  std::span<const double> trace(int s, int r) const {
    return {data.data() + index(s, r, 0), static_cast<std::size_t>(n_samples)};
  }

  bool same_shape(const MeasurementSet &o) const {
    return n_transmitters == o.n_transmitters && n_receivers == o.n_receivers &&
           n_samples == o.n_samples;
  }
  bool all_finite() const;

  /// Round every sample to the nearest binary32 value (the on-disk precision).
  void quantize_f32();

  friend bool operator==(const MeasurementSet &, const MeasurementSet &) = default;
};

/// Round every value to the nearest binary32 value (the on-disk precision).
void quantize_f32(SOSField &field);

} // namespace nnaee
