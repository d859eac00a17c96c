#include "nnaee/preset.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "nnaee/store.hpp"

namespace nnaee::pipeline {

namespace {

constexpr double kEtaMax = 4.5e5;
constexpr double kTrainNoise = 0.0005 * 0.0005;
constexpr double kPhysicalNoise = 0.0006 * 0.0006;

struct Layout {
  double side = 0.2;
  Point centre{0.1, 0.1};
  double dt = 4e-7;
  int steps = 600;
};

ModelConfig tier_config(const Layout &l, Tier tier, int n, double abc, double noise) {
  return ModelConfig::centered(tier, n, abc, l.side, l.centre.x, l.centre.y, l.dt, l.steps,
                               kEtaMax, noise);
}

void common_scenes(Preset &p, const Layout &l) {
  p.training_scene = scene::SceneParams::training();
  p.test_scene = scene::SceneParams::test();
  for (auto *s : {&p.training_scene, &p.test_scene}) {
    s->scale_to_interior(l.side);
    s->placement_center = l.centre;
    s->placement_radius = p.geometry.radius;
  }
}

} // namespace

const ModelConfig &Preset::config(Tier tier) const {
  switch (tier) {
  case Tier::physical:
    return physical;
  case Tier::accurate:
    return accurate;
  case Tier::surrogate:
    break;
  }
  return surrogate;
}

int Preset::max_train() const {
  return n_train_grid.empty() ? 0 : *std::max_element(n_train_grid.begin(), n_train_grid.end());
}

void Preset::validate() const {
  for (const auto *c : {&physical, &accurate, &surrogate}) c->validate();
  if (physical.tier != Tier::physical || accurate.tier != Tier::accurate ||
      surrogate.tier != Tier::surrogate)
    throw ConfigError("preset '" + name + "': tier labels do not match their slots");
  for (const auto *c : {&accurate, &surrogate}) {
    if (c->dt != physical.dt || c->n_steps != physical.n_steps)
      throw ConfigError("preset '" + name + "': all tiers must share dt and n_steps");
    if (std::abs(c->interior_side() - physical.interior_side()) > 1e-9 ||
        std::abs(c->interior_lo_x() - physical.interior_lo_x()) > 1e-9 ||
        std::abs(c->interior_lo_y() - physical.interior_lo_y()) > 1e-9)
      throw ConfigError("preset '" + name + "': tiers must share the interior square");
  }
  for (const auto *c : {&physical, &accurate, &surrogate}) geometry.validate(*c);
  waveform.validate();
  training_scene.validate();
  test_scene.validate();
  const int ms = geometry.n_transmitters();
  if (latent_width < 1 || latent_width >= physical.n_steps)
    throw ConfigError("latent width must lie in [1, n_steps)");
  if (fan_in_1 < 1 || fan_in_1 > ms || fan_in_2 < 1 || fan_in_2 > ms)
    throw ConfigError("fan-ins must lie in [1, M_s]");
  if (ae_widths.hidden.size() != 2) throw ConfigError("autoencoder needs two hidden widths");
  if (n_train_grid.empty()) throw ConfigError("n_train_grid is empty");
  for (int n : n_train_grid)
    if (n < 1) throw ConfigError("n_train values must be >= 1");
  if (n_validation < 1 || n_test < 1) throw ConfigError("validation and test sizes must be >= 1");
  ae_training.validate();
  phi_training.validate();
  direct_training.validate();
  inversion.validate();
}

Preset Preset::desk() {
  const Layout l;
  Preset p;
  p.name = "desk";
  p.physical = tier_config(l, Tier::physical, 264, 0.035, kPhysicalNoise);
  p.accurate = tier_config(l, Tier::accurate, 256, 0.035, kTrainNoise);
  p.surrogate = tier_config(l, Tier::surrogate, 64, 0.0075, kTrainNoise);
  p.geometry = SensorGeometry::ring(l.centre, 0.09, 8, 16);
  common_scenes(p, l);

  p.latent_width = 32;
  p.ae_widths = {{300, 128}};
  p.phi_widths = {128};
  p.direct_widths = {128};
  p.fan_in_1 = 3;
  p.fan_in_2 = 5;

  p.ae_training.epochs = 30;
  p.ae_training.batch_size = 128;
  p.ae_training.patience = 5;
  p.ae_training.seed = 11;
  p.phi_training.epochs = 300;
  p.phi_training.batch_size = 16;
  p.phi_training.patience = 30;
  p.phi_training.seed = 12;
  p.direct_training = p.phi_training;
  p.direct_training.seed = 13;

  p.n_train_grid = {50, 100, 200, 400};
  p.n_validation = 40;
  p.n_test = 10;
  return p;
}

Preset Preset::full() {
  Layout l;
  l.dt = 1e-7;
  l.steps = 2363;
  Preset p;
  p.name = "full";
  p.physical = tier_config(l, Tier::physical, 1056, 0.035, kPhysicalNoise);
  p.accurate = tier_config(l, Tier::accurate, 1024, 0.035, kTrainNoise);
  p.surrogate = tier_config(l, Tier::surrogate, 256, 0.0075, kTrainNoise);
  p.geometry = SensorGeometry::ring(l.centre, 0.09, 16, 64);
  common_scenes(p, l);

  p.latent_width = 50;
  p.ae_widths = {{2363 / 2, 200}};
  p.phi_widths = {256};
  p.direct_widths = {256};
  p.fan_in_1 = 7;
  p.fan_in_2 = 9;
  p.ae_training.epochs = 100;
  p.ae_training.batch_size = 256;
  p.phi_training.epochs = 500;
  p.phi_training.batch_size = 32;
  p.phi_training.patience = 30;
  p.direct_training = p.phi_training;
  p.n_train_grid = {200, 400, 800, 1200, 1800, 2500, 5000, 10000, 25000, 50000};
  p.n_validation = 200;
  p.n_test = 20;
  return p;
}

Preset Preset::mini() {
  const Layout l;
  Preset p;
  p.name = "mini";
  p.physical = tier_config(l, Tier::physical, 66, 0.035, kPhysicalNoise);
  p.accurate = tier_config(l, Tier::accurate, 64, 0.035, kTrainNoise);
  p.surrogate = tier_config(l, Tier::surrogate, 32, 0.0075, kTrainNoise);
  p.geometry = SensorGeometry::ring(l.centre, 0.09, 4, 8);
  common_scenes(p, l);

  p.latent_width = 16;
  p.ae_widths = {{64, 32}};
  p.phi_widths = {16};
  p.direct_widths = {16};
  p.fan_in_1 = 3;
  p.fan_in_2 = 3;
  p.ae_training.epochs = 4;
  p.ae_training.batch_size = 64;
  p.ae_training.patience = 0;
  p.phi_training.epochs = 10;
  p.phi_training.batch_size = 4;
  p.phi_training.patience = 0;
  p.direct_training = p.phi_training;
  p.inversion.max_iterations = 4;
  p.n_train_grid = {4, 8};
  p.n_validation = 4;
  p.n_test = 2;
  p.master_seed = 7;
  return p;
}

Preset Preset::named(const std::string &name) {
  if (name == "desk") return desk();
  if (name == "full") return full();
  if (name == "mini") return mini();
  throw ConfigError("unknown preset '" + name + "' (built-ins: desk, full, mini)");
}

void to_json(json &j, const Preset &p) {
  j = json{{"name", p.name},
           {"physical", p.physical},
           {"accurate", p.accurate},
           {"surrogate", p.surrogate},
           {"geometry", p.geometry},
           {"waveform", p.waveform},
           {"training_scene", p.training_scene},
           {"test_scene", p.test_scene},
           {"latent_width", p.latent_width},
           {"ae_hidden", p.ae_widths.hidden},
           {"phi_hidden", p.phi_widths.hidden},
           {"direct_hidden", p.direct_widths.hidden},
           {"fan_in_1", p.fan_in_1},
           {"fan_in_2", p.fan_in_2},
           {"ae_training", p.ae_training},
           {"phi_training", p.phi_training},
           {"direct_training", p.direct_training},
           {"inversion", p.inversion},
           {"n_train_grid", p.n_train_grid},
           {"n_validation", p.n_validation},
           {"n_test", p.n_test},
           {"master_seed", p.master_seed}};
}

void from_json(const json &j, Preset &p) {
  reject_unknown_keys(j, {"base", "name", "physical", "accurate", "surrogate", "geometry",
                          "waveform", "training_scene", "test_scene", "latent_width", "ae_hidden",
                          "phi_hidden", "direct_hidden", "fan_in_1", "fan_in_2", "ae_training",
                          "phi_training", "direct_training", "inversion", "n_train_grid",
                          "n_validation", "n_test", "master_seed"},
                      "preset");
  try {
    // Partial documents start from a built-in preset.
    p = Preset::named(j.value("base", std::string("desk")));
    p.name = j.value("name", p.name);
    if (j.contains("physical")) j.at("physical").get_to(p.physical);
    if (j.contains("accurate")) j.at("accurate").get_to(p.accurate);
    if (j.contains("surrogate")) j.at("surrogate").get_to(p.surrogate);
    if (j.contains("geometry")) j.at("geometry").get_to(p.geometry);
    if (j.contains("waveform")) j.at("waveform").get_to(p.waveform);
    if (j.contains("training_scene")) j.at("training_scene").get_to(p.training_scene);
    if (j.contains("test_scene")) j.at("test_scene").get_to(p.test_scene);
    p.latent_width = j.value("latent_width", p.latent_width);
    p.ae_widths.hidden = j.value("ae_hidden", p.ae_widths.hidden);
    p.phi_widths.hidden = j.value("phi_hidden", p.phi_widths.hidden);
    p.direct_widths.hidden = j.value("direct_hidden", p.direct_widths.hidden);
    p.fan_in_1 = j.value("fan_in_1", p.fan_in_1);
    p.fan_in_2 = j.value("fan_in_2", p.fan_in_2);
    if (j.contains("ae_training")) j.at("ae_training").get_to(p.ae_training);
    if (j.contains("phi_training")) j.at("phi_training").get_to(p.phi_training);
    if (j.contains("direct_training")) j.at("direct_training").get_to(p.direct_training);
    if (j.contains("inversion")) j.at("inversion").get_to(p.inversion);
    p.n_train_grid = j.value("n_train_grid", p.n_train_grid);
    p.n_validation = j.value("n_validation", p.n_validation);
    p.n_test = j.value("n_test", p.n_test);
    p.master_seed = j.value("master_seed", p.master_seed);
  } catch (const json::exception &e) {
    throw ConfigError(std::string("preset: ") + e.what());
  }
}

Preset load_preset(const std::filesystem::path &path) {
  json doc;
  try {
    doc = json::parse(store::read_text(path));
  } catch (const json::parse_error &e) {
    throw ConfigError(path.string() + ": not valid JSON: " + e.what());
  }
  Preset p = doc.get<Preset>();
  p.validate();
  return p;
}

void save_preset(const std::filesystem::path &path, const Preset &p) {
  store::write_text_atomic(path, json(p).dump(2) + "\n");
}

Preset resolve_preset(const std::string &name_or_path) {
  if (name_or_path == "desk" || name_or_path == "full" || name_or_path == "mini")
    return Preset::named(name_or_path);
  if (!std::filesystem::exists(name_or_path))
    throw ConfigError("preset '" + name_or_path +
                      "' is neither a built-in (desk, full, mini) nor an existing file");
  return load_preset(name_or_path);
}

Preset default_preset() {
  if (const char *env = std::getenv(kPresetEnv); env && *env) return resolve_preset(env);
  return Preset::desk();
}

} // namespace nnaee::pipeline
