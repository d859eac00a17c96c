#include "nnaee/model.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace nnaee {

std::string to_string(Tier tier) {
  switch (tier) {
  case Tier::physical:
    return "physical";
  case Tier::accurate:
    return "accurate";
  case Tier::surrogate:
    return "surrogate";
  }
  return "unknown";
}

Tier tier_from_string(const std::string &name) {
  if (name == "physical") return Tier::physical;
  if (name == "accurate") return Tier::accurate;
  if (name == "surrogate") return Tier::surrogate;
  throw InvalidArgument("unknown tier '" + name + "' (expected physical, accurate or surrogate)");
}

ModelConfig ModelConfig::centered(Tier tier, int n_grid, double abc_thickness,
                                  double interior_side, double center_x, double center_y,
                                  double dt, int n_steps, double eta_max,
                                  double noise_variance) {
  ModelConfig c;
  c.tier = tier;
  c.n_grid = n_grid;
  c.dx = (interior_side + 2.0 * abc_thickness) / n_grid;
  c.origin_x = center_x - 0.5 * n_grid * c.dx;
  c.origin_y = center_y - 0.5 * n_grid * c.dx;
  c.dt = dt;
  c.n_steps = n_steps;
  c.abc_thickness = abc_thickness;
  c.eta_max = eta_max;
  c.noise_variance = noise_variance;
  return c;
}

void ModelConfig::validate() const {
  std::ostringstream msg;
  if (n_grid < 3) msg << "n_grid must be >= 3 (got " << n_grid << "); ";
  if (!(dx > 0.0)) msg << "dx must be positive; ";
  if (!(dt > 0.0)) msg << "dt must be positive; ";
  if (n_steps < 1) msg << "n_steps must be >= 1; ";
  if (abc_thickness < 0.0 || !(abc_thickness < 0.5 * n_grid * dx))
    msg << "abc_thickness must lie in [0, n_grid*dx/2); ";
  if (eta_max < 0.0) msg << "eta_max must be non-negative; ";
  if (noise_variance < 0.0) msg << "noise_variance must be non-negative; ";
  if (dx > 0.0 && dt > 0.0 && courant() > 1.0 / std::sqrt(2.0))
    msg << "CFL violated: c_max*dt/dx = " << courant() << " > 1/sqrt(2); ";
  const std::string s = msg.str();
  if (!s.empty()) throw ConfigError(to_string(tier) + " config: " + s.substr(0, s.size() - 2));
}

SOSField SOSField::constant(const ModelConfig &config, double c) {
  return SOSField(config.n_grid, config.n_grid, config.dx, config.origin_x, config.origin_y, c);
}

Grid2Dd SOSField::slowness_squared() const {
  Grid2Dd v(rows(), cols());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / (values[i] * values[i]);
  return v;
}

SOSField SOSField::from_slowness_squared(const Grid2Dd &v, double dx, double ox, double oy) {
  SOSField f(v.rows(), v.cols(), dx, ox, oy);
  for (std::size_t i = 0; i < v.size(); ++i) f.values[i] = 1.0 / std::sqrt(v[i]);
  return f;
}

bool SOSField::matches(const ModelConfig &config) const {
  const double tol = 1e-9 * config.dx;
  return rows() == static_cast<std::size_t>(config.n_grid) &&
         cols() == static_cast<std::size_t>(config.n_grid) && std::abs(dx - config.dx) < tol &&
         std::abs(origin_x - config.origin_x) < tol && std::abs(origin_y - config.origin_y) < tol;
}

double SOSField::min() const {
  return *std::min_element(values.flat().begin(), values.flat().end());
}
double SOSField::max() const {
  return *std::max_element(values.flat().begin(), values.flat().end());
}
double SOSField::mean() const {
  const auto f = values.flat();
  return std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
}

SensorGeometry SensorGeometry::ring(Point center, double radius, int n_transmitters,
                                    int n_receivers) {
  if (n_transmitters < 1 || n_receivers < 1)
    throw InvalidArgument("sensor ring needs at least one transmitter and one receiver");
  SensorGeometry g;
  g.center = center;
  g.radius = radius;
  for (int i = 0; i < n_transmitters; ++i) g.transmitter_angles.push_back(2.0 * kPi * i / n_transmitters);
  for (int i = 0; i < n_receivers; ++i) g.receiver_angles.push_back(2.0 * kPi * i / n_receivers);
  return g;
}

Point SensorGeometry::transmitter(int i) const {
  const double a = transmitter_angles.at(static_cast<std::size_t>(i));
  return {center.x + radius * std::cos(a), center.y + radius * std::sin(a)};
}

Point SensorGeometry::receiver(int i) const {
  const double a = receiver_angles.at(static_cast<std::size_t>(i));
  return {center.x + radius * std::cos(a), center.y + radius * std::sin(a)};
}

namespace {
void check_angles(const std::vector<double> &angles, const char *what) {
  for (std::size_t i = 0; i < angles.size(); ++i) {
    if (angles[i] < 0.0 || angles[i] >= 2.0 * kPi)
      throw ConfigError(std::string(what) + " angle outside [0, 2pi)");
    if (i > 0 && !(angles[i] > angles[i - 1]))
      throw ConfigError(std::string(what) + " angles must be strictly increasing");
  }
}
} // namespace

void SensorGeometry::validate(const ModelConfig &config) const {
  check_angles(transmitter_angles, "transmitter");
  check_angles(receiver_angles, "receiver");
  if (transmitter_angles.empty() || receiver_angles.empty())
    throw ConfigError("sensor geometry has no transmitters or receivers");
  auto inside = [&](Point p) {
    return p.x > config.interior_lo_x() && p.x < config.interior_hi_x() &&
           p.y > config.interior_lo_y() && p.y < config.interior_hi_y();
  };
  for (int i = 0; i < n_transmitters(); ++i)
    if (!inside(transmitter(i)))
      throw ConfigError("transmitter " + std::to_string(i) + " lies outside the " +
                        to_string(config.tier) + " interior region");
  for (int i = 0; i < n_receivers(); ++i)
    if (!inside(receiver(i)))
      throw ConfigError("receiver " + std::to_string(i) + " lies outside the " +
                        to_string(config.tier) + " interior region");
}

void SourceWaveform::validate() const {
  if (!(xi < 0.0)) throw ConfigError("source envelope xi must be negative");
  if (!(f0 > 0.0)) throw ConfigError("source frequency f0 must be positive");
}

bool MeasurementSet::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

void MeasurementSet::quantize_f32() {
  for (double &v : data) v = static_cast<double>(static_cast<float>(v));
}

void quantize_f32(SOSField &field) {
  for (double &v : field.values.flat()) v = static_cast<double>(static_cast<float>(v));
}

} // namespace nnaee
