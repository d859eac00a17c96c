#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nnaee/model.hpp"

namespace nnaee::adjoint {

enum class StepRule { fixed, backtracking };

std::string to_string(StepRule rule);
StepRule step_rule_from_string(const std::string &name);

struct InversionOptions {
  int max_iterations = 50;
  /// Starting model; a constant field of `initial_value` on the model grid when unset.
  std::optional<SOSField> initial_field;
  double initial_value = 1500.0; // m/s
  StepRule step_rule = StepRule::backtracking;
  /// Largest sound-speed change (m/s) of the first trial step.
  double initial_step = 20.0;
  /// Gaussian gradient smoothing; the kernel standard deviation is half this radius. 0 disables.
  double smoothing_radius = 0.03; // m
  double c_min = kMinSoundSpeed;
  double c_max = kMaxSoundSpeed;
  /// Stop once an accepted step lowers the misfit by less than this fraction.
  double convergence_tol = 1e-5;
  double armijo = 1e-4;
  /// Consecutive rejected trial steps tolerated before giving up.
  int max_backtracks = 5;

  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  double misfit = 0.0;
  double step_length = 0.0; // largest |delta c| of the accepted step, m/s
};

struct Reconstruction {
  SOSField field;
  std::vector<IterationRecord> history;
  int gradient_evaluations = 0;
  std::string stop_reason;
};

/// Raised when the line search cannot reduce the misfit; carries the last accepted iterate.
class OptimizationError : public Error {
public:
  OptimizationError(const std::string &what, Reconstruction last)
      : Error("optimization", what), last_(std::move(last)) {}
  const Reconstruction &last_stable() const noexcept { return last_; }

private:
  Reconstruction last_;
};

/// J = 1/2 * sum over (s, r, t) of (simulated - target)^2.
double misfit(const SOSField &field, const MeasurementSet &target, const ModelConfig &config,
              const SensorGeometry &geometry, const SourceWaveform &waveform);

/// dJ/dv for v = 1/c^2 via the adjoint-state method; zero outside the interior region.
Grid2Dd gradient(const SOSField &field, const MeasurementSet &target, const ModelConfig &config,
                 const SensorGeometry &geometry, const SourceWaveform &waveform);

/// Slowness-squared entry points shared by the public wrappers and the optimiser.
struct MisfitGradient {
  double misfit = 0.0;
  Grid2Dd gradient;
};

double misfit_v(const Grid2Dd &v, const MeasurementSet &target, const ModelConfig &config,
                const SensorGeometry &geometry, const SourceWaveform &waveform);

MisfitGradient misfit_gradient_v(const Grid2Dd &v, const MeasurementSet &target,
                                 const ModelConfig &config, const SensorGeometry &geometry,
                                 const SourceWaveform &waveform);

/// Gaussian smoothing of an interior-supported grid (zero padding), result kept on the interior.
Grid2Dd smooth_interior(const Grid2Dd &g, const ModelConfig &config, double radius);

/// Iterative descent on J over v. Only the measurement set and `config` are read;
/// the tier that produced the data is never consulted.
Reconstruction reconstruct(const MeasurementSet &target, const ModelConfig &config,
                           const SensorGeometry &geometry, const SourceWaveform &waveform,
                           const InversionOptions &options);

/// iteration,misfit,step_length
std::string history_csv(const std::vector<IterationRecord> &history);

} // namespace nnaee::adjoint
