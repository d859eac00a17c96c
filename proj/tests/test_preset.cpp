#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "nnaee/preset.hpp"

using namespace nnaee;
using namespace nnaee::pipeline;
namespace fs = std::filesystem;

namespace {

json as_json(const Preset &p) { return json(p); }

fs::path temp_file(const std::string &name) {
  return fs::temp_directory_path() / ("nnaee_preset_" + std::to_string(::getpid()) + "_" + name);
}

} // namespace

TEST(Preset, BuiltinsValidate) {
  for (const char *name : {"desk", "full", "mini"}) {
    const auto p = Preset::named(name);
    EXPECT_EQ(p.name, name);
    EXPECT_NO_THROW(p.validate());
  }
  EXPECT_THROW(Preset::named("huge"), ConfigError);
}

TEST(Preset, DeskScaleShape) {
  const auto p = Preset::desk();
  EXPECT_EQ(p.accurate.n_grid, 256);
  EXPECT_EQ(p.surrogate.n_grid, 64);
  EXPECT_EQ(p.geometry.n_transmitters(), 8);
  EXPECT_EQ(p.geometry.n_receivers(), 16);
  EXPECT_EQ(p.latent_width, 32);
  EXPECT_EQ(p.n_train_grid, (std::vector<int>{50, 100, 200, 400}));
  EXPECT_EQ(p.n_validation, 40);
  EXPECT_EQ(p.n_test, 10);
  EXPECT_DOUBLE_EQ(p.accurate.dt, 4e-7);
  EXPECT_EQ(p.accurate.n_steps, 600);
  EXPECT_NEAR(p.accurate.interior_side(), 0.2, 1e-12);
  EXPECT_NEAR(p.surrogate.dx, 3.359375e-3, 1e-9);
}

TEST(Preset, JsonRoundTrip) {
  for (const char *name : {"desk", "full", "mini"}) {
    const auto p = Preset::named(name);
    const auto j = as_json(p);
    const Preset back = j.get<Preset>();
    EXPECT_EQ(as_json(back), j) << name;
    EXPECT_EQ(back.physical, p.physical);
    EXPECT_EQ(back.geometry, p.geometry);
  }
}

TEST(Preset, BaseKeyOverridesOnlyListedFields) {
  const Preset p = json{{"base", "mini"}, {"latent_width", 12}, {"name", "custom"}}.get<Preset>();
  EXPECT_EQ(p.latent_width, 12);
  EXPECT_EQ(p.name, "custom");
  EXPECT_EQ(p.accurate, Preset::mini().accurate);
  EXPECT_EQ(p.n_train_grid, Preset::mini().n_train_grid);
}

TEST(Preset, UnknownKeyRejected) {
  EXPECT_THROW((json{{"base", "mini"}, {"latent_widht", 12}}.get<Preset>()), ConfigError);
}

TEST(Preset, ValidationCatchesInconsistencies) {
  auto p = Preset::mini();
  p.latent_width = p.accurate.n_steps;
  EXPECT_THROW(p.validate(), ConfigError);
  p = Preset::mini();
  p.surrogate.n_steps += 1;
  EXPECT_THROW(p.validate(), ConfigError);
  p = Preset::mini();
  p.fan_in_1 = p.geometry.n_transmitters() + 1;
  EXPECT_THROW(p.validate(), ConfigError);
  p = Preset::mini();
  p.n_train_grid = {};
  EXPECT_THROW(p.validate(), ConfigError);
  p = Preset::mini();
  std::swap(p.accurate, p.surrogate);
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Preset, FileRoundTripAndResolve) {
  const auto path = temp_file("rt.json");
  auto p = Preset::mini();
  p.name = "saved";
  p.master_seed = 99;
  save_preset(path, p);
  const auto back = load_preset(path);
  EXPECT_EQ(as_json(back), as_json(p));
  EXPECT_EQ(as_json(resolve_preset(path.string())), as_json(p));
  EXPECT_EQ(resolve_preset("mini").name, "mini");
  EXPECT_THROW(resolve_preset(temp_file("missing.json").string()), ConfigError);
  fs::remove(path);
}

TEST(Preset, MalformedFileIsConfigError) {
  const auto path = temp_file("bad.json");
  std::ofstream(path) << "{ \"base\": \"mini\", ";
  EXPECT_THROW(load_preset(path), ConfigError);
  fs::remove(path);
}

TEST(Preset, EnvironmentVariableSelectsDefault) {
  const auto path = temp_file("env.json");
  auto p = Preset::mini();
  p.name = "from-env";
  save_preset(path, p);
  ::setenv(kPresetEnv, path.c_str(), 1);
  EXPECT_EQ(default_preset().name, "from-env");
  ::setenv(kPresetEnv, "mini", 1);
  EXPECT_EQ(default_preset().name, "mini");
  ::unsetenv(kPresetEnv);
  EXPECT_EQ(default_preset().name, "desk");
  fs::remove(path);
}
