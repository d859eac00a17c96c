#include "nnaee/serialize.hpp"

#include <algorithm>

namespace nnaee {

void reject_unknown_keys(const json &j, std::initializer_list<const char *> allowed,
                         const char *what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (const auto &item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char *k) { return item.key() == k; });
    if (!known) throw ConfigError("unknown key '" + item.key() + "' in " + what);
  }
}

namespace {

template <typename T>
void read(const json &j, const char *key, T &out, const char *what) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const json::exception &e) {
    throw ConfigError(std::string(what) + "." + key + ": " + e.what());
  }
}

} // namespace

void to_json(json &j, const ModelConfig &c) {
  j = json{{"tier", to_string(c.tier)},
           {"n_grid", c.n_grid},
           {"dx", c.dx},
           {"origin_x", c.origin_x},
           {"origin_y", c.origin_y},
           {"dt", c.dt},
           {"n_steps", c.n_steps},
           {"abc_thickness", c.abc_thickness},
           {"eta_max", c.eta_max},
           {"noise_variance", c.noise_variance}};
}

void from_json(const json &j, ModelConfig &c) {
  constexpr const char *what = "model config";
  reject_unknown_keys(j, {"tier", "n_grid", "dx", "origin_x", "origin_y", "dt", "n_steps",
                          "abc_thickness", "eta_max", "noise_variance"},
                      what);
  std::string tier = to_string(c.tier);
  read(j, "tier", tier, what);
  c.tier = tier_from_string(tier);
  read(j, "n_grid", c.n_grid, what);
  read(j, "dx", c.dx, what);
  read(j, "origin_x", c.origin_x, what);
  read(j, "origin_y", c.origin_y, what);
  read(j, "dt", c.dt, what);
  read(j, "n_steps", c.n_steps, what);
  read(j, "abc_thickness", c.abc_thickness, what);
  read(j, "eta_max", c.eta_max, what);
  read(j, "noise_variance", c.noise_variance, what);
}

void to_json(json &j, const SensorGeometry &g) {
  j = json{{"center", {g.center.x, g.center.y}},
           {"radius", g.radius},
           {"transmitter_angles", g.transmitter_angles},
           {"receiver_angles", g.receiver_angles}};
}

void from_json(const json &j, SensorGeometry &g) {
  constexpr const char *what = "sensor geometry";
  reject_unknown_keys(j, {"center", "radius", "transmitter_angles", "receiver_angles",
                          "n_transmitters", "n_receivers"},
                      what);
  std::vector<double> center{g.center.x, g.center.y};
  read(j, "center", center, what);
  if (center.size() != 2) throw ConfigError("sensor geometry.center needs two coordinates");
  read(j, "radius", g.radius, what);
  if (j.contains("n_transmitters") || j.contains("n_receivers")) {
    int ms = g.n_transmitters();
    int mr = g.n_receivers();
    read(j, "n_transmitters", ms, what);
    read(j, "n_receivers", mr, what);
    g = SensorGeometry::ring({center[0], center[1]}, g.radius, ms, mr);
    return;
  }
  g.center = {center[0], center[1]};
  read(j, "transmitter_angles", g.transmitter_angles, what);
  read(j, "receiver_angles", g.receiver_angles, what);
}

void to_json(json &j, const SourceWaveform &w) {
  j = json{{"xi", w.xi}, {"f0", w.f0}, {"t0", w.t0}, {"amplitude", w.amplitude}};
}

void from_json(const json &j, SourceWaveform &w) {
  constexpr const char *what = "source waveform";
  reject_unknown_keys(j, {"xi", "f0", "t0", "amplitude"}, what);
  read(j, "xi", w.xi, what);
  read(j, "f0", w.f0, what);
  read(j, "t0", w.t0, what);
  read(j, "amplitude", w.amplitude, what);
}

namespace scene {

void to_json(json &j, const SceneParams &p) {
  j = json{{"mean_c", p.mean_c},
           {"sigma_background", p.sigma_background},
           {"clamp_lo", p.clamp_lo},
           {"clamp_hi", p.clamp_hi},
           {"correlation_length", p.correlation_length},
           {"n_inclusions", p.n_inclusions},
           {"inclusion_sigma_c", p.inclusion_sigma_c},
           {"inclusion_radius_range", {p.inclusion_radius_min, p.inclusion_radius_max}},
           {"inclusion_shape", to_string(p.inclusion_shape)},
           {"star_points_range", {p.star_points_min, p.star_points_max}},
           {"star_amplitude", p.star_amplitude},
           {"placement_center", {p.placement_center.x, p.placement_center.y}},
           {"placement_radius", p.placement_radius},
           {"seed", p.seed}};
}

void from_json(const json &j, SceneParams &p) {
  constexpr const char *what = "scene params";
  reject_unknown_keys(j, {"mean_c", "sigma_background", "clamp_lo", "clamp_hi",
                          "correlation_length", "n_inclusions", "inclusion_sigma_c",
                          "inclusion_radius_range", "inclusion_shape", "star_points_range",
                          "star_amplitude", "placement_center", "placement_radius", "seed"},
                      what);
  read(j, "mean_c", p.mean_c, what);
  read(j, "sigma_background", p.sigma_background, what);
  read(j, "clamp_lo", p.clamp_lo, what);
  read(j, "clamp_hi", p.clamp_hi, what);
  read(j, "correlation_length", p.correlation_length, what);
  read(j, "n_inclusions", p.n_inclusions, what);
  read(j, "inclusion_sigma_c", p.inclusion_sigma_c, what);
  std::vector<double> radii{p.inclusion_radius_min, p.inclusion_radius_max};
  read(j, "inclusion_radius_range", radii, what);
  if (radii.size() != 2) throw ConfigError("scene params.inclusion_radius_range needs two values");
  p.inclusion_radius_min = radii[0];
  p.inclusion_radius_max = radii[1];
  std::string shape = to_string(p.inclusion_shape);
  read(j, "inclusion_shape", shape, what);
  p.inclusion_shape = shape_from_string(shape);
  std::vector<int> points{p.star_points_min, p.star_points_max};
  read(j, "star_points_range", points, what);
  if (points.size() != 2) throw ConfigError("scene params.star_points_range needs two values");
  p.star_points_min = points[0];
  p.star_points_max = points[1];
  read(j, "star_amplitude", p.star_amplitude, what);
  std::vector<double> centre{p.placement_center.x, p.placement_center.y};
  read(j, "placement_center", centre, what);
  if (centre.size() != 2) throw ConfigError("scene params.placement_center needs two values");
  p.placement_center = {centre[0], centre[1]};
  read(j, "placement_radius", p.placement_radius, what);
  read(j, "seed", p.seed, what);
}

} // namespace scene

namespace adjoint {

void to_json(json &j, const InversionOptions &o) {
  j = json{{"max_iterations", o.max_iterations},
           {"initial_value", o.initial_value},
           {"step_rule", to_string(o.step_rule)},
           {"initial_step", o.initial_step},
           {"smoothing_radius", o.smoothing_radius},
           {"bounds", {o.c_min, o.c_max}},
           {"convergence_tol", o.convergence_tol},
           {"armijo", o.armijo},
           {"max_backtracks", o.max_backtracks}};
}

void from_json(const json &j, InversionOptions &o) {
  constexpr const char *what = "inversion options";
  reject_unknown_keys(j, {"max_iterations", "initial_value", "step_rule", "initial_step",
                          "smoothing_radius", "bounds", "convergence_tol", "armijo",
                          "max_backtracks"},
                      what);
  read(j, "max_iterations", o.max_iterations, what);
  read(j, "initial_value", o.initial_value, what);
  std::string rule = to_string(o.step_rule);
  read(j, "step_rule", rule, what);
  o.step_rule = step_rule_from_string(rule);
  read(j, "initial_step", o.initial_step, what);
  read(j, "smoothing_radius", o.smoothing_radius, what);
  std::vector<double> bounds{o.c_min, o.c_max};
  read(j, "bounds", bounds, what);
  if (bounds.size() != 2) throw ConfigError("inversion options.bounds needs two values");
  o.c_min = bounds[0];
  o.c_max = bounds[1];
  read(j, "convergence_tol", o.convergence_tol, what);
  read(j, "armijo", o.armijo, what);
  read(j, "max_backtracks", o.max_backtracks, what);
}

} // namespace adjoint

namespace nn {

void to_json(json &j, const TrainOptions &o) {
  j = json{{"learning_rate", o.learning_rate},
           {"beta1", o.beta1},
           {"beta2", o.beta2},
           {"epsilon", o.epsilon},
           {"batch_size", o.batch_size},
           {"epochs", o.epochs},
           {"seed", o.seed},
           {"loss", o.loss},
           {"validation_fraction", o.validation_fraction},
           {"patience", o.patience}};
}

void from_json(const json &j, TrainOptions &o) {
  constexpr const char *what = "train options";
  reject_unknown_keys(j, {"learning_rate", "beta1", "beta2", "epsilon", "batch_size", "epochs",
                          "seed", "loss", "validation_fraction", "patience"},
                      what);
  read(j, "learning_rate", o.learning_rate, what);
  read(j, "beta1", o.beta1, what);
  read(j, "beta2", o.beta2, what);
  read(j, "epsilon", o.epsilon, what);
  read(j, "batch_size", o.batch_size, what);
  read(j, "epochs", o.epochs, what);
  read(j, "seed", o.seed, what);
  read(j, "loss", o.loss, what);
  read(j, "validation_fraction", o.validation_fraction, what);
  read(j, "patience", o.patience, what);
}

json topology_to_json(const NetworkBundle &bundle) {
  json stages = json::array();
  for (const auto &st : bundle.net.stages()) {
    json layers = json::array();
    for (const auto &l : st.layers) {
      json inputs = json::array();
      for (const auto &s : l.inputs) inputs.push_back({s.offset, s.width});
      layers.push_back({{"name", l.name},
                        {"activation", to_string(l.activation)},
                        {"inputs", inputs},
                        {"output_offset", l.output_offset},
                        {"in_width", l.in_width()},
                        {"out_width", l.out_width()}});
    }
    stages.push_back({{"out_width", st.out_width}, {"layers", layers}});
  }
  return json{{"kind", bundle.kind},
              {"input_width", bundle.net.input_width()},
              {"residual", bundle.net.residual()},
              {"stages", stages},
              {"normalization",
               {{"input_scale", bundle.norm.input_scale},
                {"output_scale", bundle.norm.output_scale},
                {"output_offset", bundle.norm.output_offset}}},
              {"optimizer_step", bundle.optimizer.step}};
}

NetworkBundle bundle_from_topology(const json &doc) {
  try {
    NetworkBundle b;
    b.kind = doc.at("kind").get<std::string>();
    b.net = Network(doc.at("input_width").get<int>());
    for (const auto &st : doc.at("stages")) {
      Stage stage;
      stage.out_width = st.at("out_width").get<int>();
      for (const auto &l : st.at("layers")) {
        Layer layer;
        layer.name = l.at("name").get<std::string>();
        layer.activation = activation_from_string(l.at("activation").get<std::string>());
        for (const auto &s : l.at("inputs")) layer.inputs.push_back({s.at(0).get<int>(), s.at(1).get<int>()});
        layer.output_offset = l.at("output_offset").get<int>();
        const int in = l.at("in_width").get<int>();
        const int out = l.at("out_width").get<int>();
        if (in < 1 || out < 1) throw ConfigError("layer widths must be >= 1");
        layer.weight = Matrix::Zero(out, in);
        layer.bias = Vector::Zero(out);
        stage.layers.push_back(std::move(layer));
      }
      b.net.add_stage(std::move(stage));
    }
    b.net.set_residual(doc.at("residual").get<bool>());
    const auto &n = doc.at("normalization");
    b.norm = {n.at("input_scale").get<double>(), n.at("output_scale").get<double>(),
              n.at("output_offset").get<double>()};
    b.optimizer.step = doc.value("optimizer_step", std::int64_t{0});
    return b;
  } catch (const json::exception &e) {
    throw ConfigError(std::string("network topology: ") + e.what());
  }
}

} // namespace nn

} // namespace nnaee
