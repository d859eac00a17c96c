#include "nnaee/scene.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace nnaee::scene {

std::string to_string(InclusionShape shape) {
  return shape == InclusionShape::circle ? "circle" : "star";
}

InclusionShape shape_from_string(const std::string &name) {
  if (name == "circle") return InclusionShape::circle;
  if (name == "star") return InclusionShape::star;
  throw InvalidArgument("unknown inclusion shape '" + name + "'");
}

SceneParams SceneParams::training(std::uint64_t seed) {
  SceneParams p;
  p.seed = seed;
  return p;
}

SceneParams SceneParams::test(std::uint64_t seed) {
  SceneParams p;
  p.sigma_background = 23.0;
  p.inclusion_shape = InclusionShape::star;
  p.seed = seed;
  return p;
}

void SceneParams::scale_to_interior(double interior_side) {
  correlation_length = 0.10 * interior_side;
  inclusion_radius_min = 0.05 * interior_side;
  inclusion_radius_max = 0.15 * interior_side;
}

void SceneParams::validate() const {
  std::ostringstream msg;
  if (!(clamp_lo < mean_c && mean_c < clamp_hi)) msg << "need clamp_lo < mean_c < clamp_hi; ";
  if (clamp_lo <= 0.0) msg << "clamp_lo must be positive; ";
  if (sigma_background < 0.0 || inclusion_sigma_c < 0.0) msg << "sigmas must be >= 0; ";
  if (!(correlation_length > 0.0)) msg << "correlation_length must be > 0; ";
  if (n_inclusions < 0) msg << "n_inclusions must be >= 0; ";
  if (!(inclusion_radius_min > 0.0 && inclusion_radius_min <= inclusion_radius_max))
    msg << "inclusion radius range must be positive and ordered; ";
  if (star_points_min < 1 || star_points_min > star_points_max)
    msg << "star point range must be >= 1 and ordered; ";
  if (star_amplitude < 0.0 || star_amplitude >= 1.0) msg << "star_amplitude must be in [0, 1); ";
  if (!(placement_radius > 0.0)) msg << "placement_radius must be > 0; ";
  const std::string s = msg.str();
  if (!s.empty()) throw InvalidArgument("scene params: " + s.substr(0, s.size() - 2));
}

double Inclusion::outer_radius() const {
  return shape == InclusionShape::star ? radius * (1.0 + amplitude) : radius;
}

bool Inclusion::contains(Point p) const {
  const double dx = p.x - center.x;
  const double dy = p.y - center.y;
  const double r = std::hypot(dx, dy);
  if (shape == InclusionShape::circle) return r <= radius;
  const double theta = std::atan2(dy, dx);
  return r <= radius * (1.0 + amplitude * std::cos(points * (theta - phase)));
}

namespace {

std::vector<double> gaussian_kernel(double sigma_cells) {
  const int half = std::max(1, static_cast<int>(std::ceil(4.0 * sigma_cells)));
  std::vector<double> k(2 * half + 1);
  double sum = 0.0;
  for (int i = -half; i <= half; ++i) {
    k[i + half] = std::exp(-0.5 * i * i / (sigma_cells * sigma_cells));
    sum += k[i + half];
  }
  for (double &w : k) w /= sum;
  return k;
}

// Unit-variance stationary field with squared-exponential covariance exp(-r^2 / (2 l^2)),
// obtained by separable Gaussian filtering of white noise (kernel std l / sqrt 2).
Grid2Dd correlated_noise(std::size_t n, double dx, double correlation_length,
                         std::mt19937_64 &rng) {
  const double sigma_cells = correlation_length / std::sqrt(2.0) / dx;
  const auto kernel = gaussian_kernel(sigma_cells);
  const std::size_t half = kernel.size() / 2;
  const std::size_t padded = n + 2 * half;

  std::normal_distribution<double> normal(0.0, 1.0);
  Grid2Dd white(padded, padded);
  for (double &w : white.flat()) w = normal(rng);

  // Rows first, restricted to the columns that survive.
  Grid2Dd tmp(padded, n);
  for (std::size_t r = 0; r < padded; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kernel.size(); ++k) acc += kernel[k] * white(r, c + k);
      tmp(r, c) = acc;
    }
  Grid2Dd out(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kernel.size(); ++k) acc += kernel[k] * tmp(r + k, c);
      out(r, c) = acc;
    }

  double k2 = 0.0;
  for (double w : kernel) k2 += w * w;
  const double inv_std = 1.0 / k2; // variance of the filtered field is (sum k^2)^2
  for (double &v : out.flat()) v *= inv_std;
  return out;
}

} // namespace

Scene generate_scene(const SceneParams &params, const ModelConfig &config) {
  params.validate();
  if (config.n_grid < 16) throw InvalidArgument("scene generation needs n_grid >= 16");
  if (!(config.dx > 0.0)) throw InvalidArgument("scene generation needs dx > 0");

  std::mt19937_64 rng(params.seed);
  const auto n = static_cast<std::size_t>(config.n_grid);

  Scene scene;
  scene.field = SOSField(n, n, config.dx, config.origin_x, config.origin_y, params.mean_c);
  const Grid2Dd noise = correlated_noise(n, config.dx, params.correlation_length, rng);
  for (std::size_t i = 0; i < noise.size(); ++i)
    scene.field.values[i] = std::clamp(params.mean_c + params.sigma_background * noise[i],
                                       params.clamp_lo, params.clamp_hi);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> speed_dist(params.mean_c, params.inclusion_sigma_c);
  std::uniform_int_distribution<int> points_dist(params.star_points_min, params.star_points_max);
  constexpr int kMaxAttempts = 100;

  for (int k = 0; k < params.n_inclusions; ++k) {
    Inclusion inc;
    inc.shape = params.inclusion_shape;
    inc.amplitude = params.star_amplitude;
    inc.speed = static_cast<float>(std::clamp(speed_dist(rng), params.clamp_lo, params.clamp_hi));
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      const double rr = params.placement_radius * std::sqrt(unit(rng));
      const double ang = 2.0 * kPi * unit(rng);
      inc.center = {params.placement_center.x + rr * std::cos(ang),
                    params.placement_center.y + rr * std::sin(ang)};
      inc.radius = params.inclusion_radius_min +
                   (params.inclusion_radius_max - params.inclusion_radius_min) * unit(rng);
      inc.points = points_dist(rng);
      inc.phase = 2.0 * kPi * unit(rng);

      const double reach = std::hypot(inc.center.x - params.placement_center.x,
                                      inc.center.y - params.placement_center.y) +
                           inc.outer_radius();
      if (reach > params.placement_radius) continue;
      placed = std::none_of(scene.inclusions.begin(), scene.inclusions.end(),
                            [&](const Inclusion &o) {
                              return std::hypot(inc.center.x - o.center.x,
                                                inc.center.y - o.center.y) <
                                     inc.outer_radius() + o.outer_radius();
                            });
    }
    if (!placed)
      throw PlacementError("could not place inclusion " + std::to_string(k) + " after " +
                           std::to_string(kMaxAttempts) + " attempts (seed " +
                           std::to_string(params.seed) + ")");
    scene.inclusions.push_back(inc);
  }

  for (const Inclusion &inc : scene.inclusions)
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c)
        if (inc.contains({scene.field.node_x(c), scene.field.node_y(r)}))
          scene.field.values(r, c) = inc.speed;

  quantize_f32(scene.field);
  return scene;
}

SOSField generate_field(const SceneParams &params, const ModelConfig &config) {
  return generate_scene(params, config).field;
}

SOSField generate_test_field(const SceneParams &params, const ModelConfig &config) {
  SceneParams p = params;
  p.inclusion_shape = InclusionShape::star;
  p.sigma_background = 23.0;
  return generate_field(p, config);
}

namespace {

// overlap[t] lists (source index, fraction of target cell t) pairs.
std::vector<std::vector<std::pair<std::size_t, double>>>
overlap_weights(double src_origin, double src_dx, std::size_t src_n, double dst_origin,
                double dst_dx, std::size_t dst_n) {
  std::vector<std::vector<std::pair<std::size_t, double>>> w(dst_n);
  for (std::size_t t = 0; t < dst_n; ++t) {
    const double lo = dst_origin + t * dst_dx;
    const double hi = lo + dst_dx;
    const double first = std::floor((lo - src_origin) / src_dx);
    for (auto j = static_cast<long>(std::max(0.0, first)); j < static_cast<long>(src_n); ++j) {
      const double slo = src_origin + j * src_dx;
      const double shi = slo + src_dx;
      if (slo >= hi) break;
      const double len = std::min(hi, shi) - std::max(lo, slo);
      if (len > 0.0) w[t].emplace_back(static_cast<std::size_t>(j), len / dst_dx);
    }
  }
  return w;
}

} // namespace

SOSField project(const SOSField &field, const ModelConfig &target) {
  if (field.rows() == 0 || field.rows() != field.cols())
    throw ResamplingError("source field must be a non-empty square grid");
  const double tol = 1e-9 * std::max(field.dx, target.dx) * target.n_grid;
  if (target.dx < field.dx * (1.0 - 1e-12))
    throw ResamplingError("target spacing is finer than the source; projection only coarsens");
  const double src_hi_x = field.origin_x + field.cols() * field.dx;
  const double src_hi_y = field.origin_y + field.rows() * field.dx;
  if (target.origin_x < field.origin_x - tol || target.origin_y < field.origin_y - tol ||
      target.origin_x + target.extent() > src_hi_x + tol ||
      target.origin_y + target.extent() > src_hi_y + tol)
    throw ResamplingError("source grid does not cover the target grid footprint");

  const auto n = static_cast<std::size_t>(target.n_grid);
  const auto wx =
      overlap_weights(field.origin_x, field.dx, field.cols(), target.origin_x, target.dx, n);
  const auto wy =
      overlap_weights(field.origin_y, field.dx, field.rows(), target.origin_y, target.dx, n);

  SOSField out(n, n, target.dx, target.origin_x, target.origin_y);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      double acc = 0.0;
      double weight = 0.0;
      for (const auto &[i, fy] : wy[r])
        for (const auto &[j, fx] : wx[c]) {
          acc += fy * fx * field.values(i, j);
          weight += fy * fx;
        }
      // weight is 1 up to rounding when the footprint is covered
      out.values(r, c) = acc / weight;
    }
  return out;
}

double rmse(const SOSField &a, const SOSField &b) {
  if (!a.values.same_shape(b.values))
    throw DimensionError("rmse: fields differ in shape (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
  if (a.values.empty()) throw DimensionError("rmse: empty fields");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.values.size()));
}

} // namespace nnaee::scene
