#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nnaee/adjoint.hpp"
#include "nnaee/scene.hpp"
#include "nnaee/wavesim.hpp"

using namespace nnaee;

namespace {

struct SmallProblem {
  ModelConfig config = ModelConfig::centered(Tier::surrogate, 32, 0.01, 0.05, 0.0, 0.0, 4e-7, 160,
                                             4.5e5, 0.0);
  SensorGeometry geometry = SensorGeometry::ring({0.0, 0.0}, 0.02, 4, 8);
  SourceWaveform waveform;

  SOSField blob(double amp) const {
    SOSField f = SOSField::constant(config, 1500.0);
    for (std::size_t r = 0; r < f.rows(); ++r)
      for (std::size_t c = 0; c < f.cols(); ++c) {
        const double x = f.node_x(c) - 0.004;
        const double y = f.node_y(r) + 0.003;
        f.values(r, c) += amp * std::exp(-(x * x + y * y) / (2 * 0.006 * 0.006));
      }
    return f;
  }
};

} // namespace

TEST(Adjoint, MisfitZeroAtTruth) {
  SmallProblem p;
  const SOSField truth = p.blob(60.0);
  const auto data = wave::simulate_all(truth, p.config, p.geometry, p.waveform);
  EXPECT_EQ(adjoint::misfit(truth, data, p.config, p.geometry, p.waveform), 0.0);
  const Grid2Dd g = adjoint::gradient(truth, data, p.config, p.geometry, p.waveform);
  for (double x : g.flat()) EXPECT_EQ(x, 0.0);
}

TEST(Adjoint, GradientMatchesCentralDifferences) {
  SmallProblem p;
  const auto data = wave::simulate_all(p.blob(60.0), p.config, p.geometry, p.waveform);
  const Grid2Dd v0 = p.blob(-20.0).slowness_squared();
  const auto mg = adjoint::misfit_gradient_v(v0, data, p.config, p.geometry, p.waveform);
  ASSERT_GT(mg.misfit, 0.0);

  const auto interior = wave::interior_range(p.config);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Grid2Dd dir(v0.rows(), v0.cols(), 0.0);
    for (int r = interior.lo; r < interior.hi; ++r)
      for (int c = interior.lo; c < interior.hi; ++c) dir(r, c) = normal(rng);
    double analytic = 0.0;
    for (std::size_t i = 0; i < dir.size(); ++i) analytic += mg.gradient[i] * dir[i];

    const double h = 1e-4 * v0[0];
    Grid2Dd vp = v0, vm = v0;
    for (std::size_t i = 0; i < dir.size(); ++i) {
      vp[i] += h * dir[i];
      vm[i] -= h * dir[i];
    }
    const double jp = adjoint::misfit_v(vp, data, p.config, p.geometry, p.waveform);
    const double jm = adjoint::misfit_v(vm, data, p.config, p.geometry, p.waveform);
    const double fd = (jp - jm) / (2 * h);
    worst = std::max(worst, std::abs(fd - analytic) / std::abs(analytic));
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Adjoint, GradientVanishesOutsideInterior) {
  SmallProblem p;
  const auto data = wave::simulate_all(p.blob(60.0), p.config, p.geometry, p.waveform);
  const Grid2Dd g =
      adjoint::gradient(SOSField::constant(p.config, 1500.0), data, p.config, p.geometry, p.waveform);
  const auto interior = wave::interior_range(p.config);
  bool any = false;
  for (int r = 0; r < p.config.n_grid; ++r)
    for (int c = 0; c < p.config.n_grid; ++c) {
      if (!interior.contains(r, c)) {
        EXPECT_EQ(g(r, c), 0.0);
      } else if (g(r, c) != 0.0) {
        any = true;
      }
    }
  EXPECT_TRUE(any);
}

TEST(Adjoint, ReconstructionLowersMisfitAndError) {
  SmallProblem p;
  const SOSField truth = p.blob(50.0);
  const auto data = wave::simulate_all(truth, p.config, p.geometry, p.waveform);
  adjoint::InversionOptions opt;
  opt.max_iterations = 10;
  opt.smoothing_radius = 0.004;
  const auto rec = adjoint::reconstruct(data, p.config, p.geometry, p.waveform, opt);
  ASSERT_GE(rec.history.size(), 2u);
  EXPECT_LT(rec.history.back().misfit, 0.5 * rec.history.front().misfit);
  const SOSField start = SOSField::constant(p.config, 1500.0);
  EXPECT_LT(scene::rmse(rec.field, truth), scene::rmse(start, truth));
  for (double c : rec.field.values.flat()) {
    EXPECT_GE(c, kMinSoundSpeed - 1e-9);
    EXPECT_LE(c, kMaxSoundSpeed + 1e-9);
  }
}

TEST(Adjoint, RejectsMismatchedMeasurements) {
  SmallProblem p;
  MeasurementSet wrong(4, 8, 100, p.config.dt, 0.02, Tier::surrogate);
  EXPECT_THROW(adjoint::misfit(SOSField::constant(p.config, 1500.0), wrong, p.config, p.geometry,
                               p.waveform),
               DimensionError);
}

TEST(Adjoint, HistoryCsvHasHeader) {
  const std::string csv = adjoint::history_csv({{0, 2.0, 0.0}, {1, 1.0, 5.0}});
  EXPECT_EQ(csv.rfind("iteration,misfit,step_length\n", 0), 0u);
  EXPECT_NE(csv.find("1,1,5"), std::string::npos);
}
