#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nnaee/model.hpp"

namespace nnaee::scene {

enum class InclusionShape { circle, star };

std::string to_string(InclusionShape shape);
InclusionShape shape_from_string(const std::string &name);

/// Parameters of the random sound-speed scene generator.
struct SceneParams {
  double mean_c = 1500.0;           // m/s
  double sigma_background = 91.0;   // m/s, pointwise std of the background
  double clamp_lo = kMinSoundSpeed; // m/s
  double clamp_hi = kMaxSoundSpeed;
  double correlation_length = 0.02; // m, squared-exponential covariance length
  int n_inclusions = 3;
  double inclusion_sigma_c = 50.0;     // m/s
  double inclusion_radius_min = 0.010; // m
  double inclusion_radius_max = 0.030;
  InclusionShape inclusion_shape = InclusionShape::circle;
  int star_points_min = 4;
  int star_points_max = 8;
  double star_amplitude = 0.3; // relative polar perturbation; 0 gives a circle
  Point placement_center{0.1, 0.1}; // inclusions must fit inside this circle
  double placement_radius = 0.09;
  std::uint64_t seed = 0;

  /// Training scenes: sigma_background 91 m/s, three circular inclusions.
  static SceneParams training(std::uint64_t seed = 0);
  /// Test scenes: sigma_background 23 m/s, star-shaped inclusions.
  static SceneParams test(std::uint64_t seed = 0);

  /// Radii and correlation length scaled to an interior square of the given side.
  void scale_to_interior(double interior_side);

  void validate() const;
};

struct Inclusion {
  Point center;
  double radius = 0.0; // mean radius r0
  InclusionShape shape = InclusionShape::circle;
  int points = 0;        // star lobes k
  double phase = 0.0;    // star rotation
  double amplitude = 0.0;
  double speed = 0.0;    // m/s

  double outer_radius() const;
  bool contains(Point p) const;
};

struct Scene {
  SOSField field;
  std::vector<Inclusion> inclusions;
};

/// Gaussian-random background plus non-overlapping constant-speed inclusions.
Scene generate_scene(const SceneParams &params, const ModelConfig &config);

SOSField generate_field(const SceneParams &params, const ModelConfig &config);

/// generate_field with star inclusions and a 23 m/s background.
SOSField generate_test_field(const SceneParams &params, const ModelConfig &config);

/// Area-weighted average of `field` onto the grid of `target`.
///
/// Each target cell receives the mean of the source over its footprint, so an integer
/// ratio of spacings reduces to plain block means. Throws ResamplingError when the source
/// does not cover the target footprint or is coarser than the target.
SOSField project(const SOSField &field, const ModelConfig &target);

/// Root mean square of the pointwise difference.
double rmse(const SOSField &a, const SOSField &b);

} // namespace nnaee::scene
