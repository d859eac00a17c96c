#include "nnaee/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include "nnaee/parallel.hpp"
#include "nnaee/scene.hpp"
#include "nnaee/serialize.hpp"
#include "nnaee/store.hpp"
#include "nnaee/wavesim.hpp"

namespace nnaee::pipeline {

namespace {

using nn::Matrix;
using nn::NetworkBundle;
using nn::Vector;

constexpr int kAccurateNoiseSalt = 1;
constexpr int kSurrogateNoiseSalt = 2;
constexpr int kPhysicalNoiseSalt = 3;

void report(const Progress &p, const std::string &line) {
  if (p) p(line);
}

std::string numbered(char prefix, int index, const char *suffix) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%c%05d_%s", prefix, index, suffix);
  return buf;
}

const char *const kRecordFiles[] = {"field_accurate.sosf", "field_surrogate.sosf",
                                    "y_accurate_noisy.msig", "y_accurate_clean.msig",
                                    "y_surrogate_clean.msig"};
const char *const kTestFiles[] = {"field_true.sosf", "field_reference.sosf", "y_measured.msig",
                                  "y_surrogate_clean.msig"};

void save_record(const fs::path &dir, const DatasetRecord &r) {
  store::save_field(dir / numbered('r', r.index, kRecordFiles[0]), r.field_accurate);
  store::save_field(dir / numbered('r', r.index, kRecordFiles[1]), r.field_surrogate);
  store::save_measurements(dir / numbered('r', r.index, kRecordFiles[2]), r.y_accurate_noisy);
  store::save_measurements(dir / numbered('r', r.index, kRecordFiles[3]), r.y_accurate_clean);
  store::save_measurements(dir / numbered('r', r.index, kRecordFiles[4]), r.y_surrogate_clean);
}

DatasetRecord load_record(const fs::path &dir, int index, std::uint64_t seed) {
  DatasetRecord r;
  r.index = index;
  r.seed = seed;
  r.field_accurate = store::load_field(dir / numbered('r', index, kRecordFiles[0]));
  r.field_surrogate = store::load_field(dir / numbered('r', index, kRecordFiles[1]));
  r.y_accurate_noisy =
      store::load_measurements(dir / numbered('r', index, kRecordFiles[2]), Tier::accurate);
  r.y_accurate_clean =
      store::load_measurements(dir / numbered('r', index, kRecordFiles[3]), Tier::accurate);
  r.y_surrogate_clean =
      store::load_measurements(dir / numbered('r', index, kRecordFiles[4]), Tier::surrogate);
  return r;
}

TestCase read_test_case(const fs::path &dir, int index, std::uint64_t seed) {
  TestCase c;
  c.index = index;
  c.seed = seed;
  c.field_true = store::load_field(dir / numbered('t', index, kTestFiles[0]));
  c.field_reference = store::load_field(dir / numbered('t', index, kTestFiles[1]));
  c.y_measured = store::load_measurements(dir / numbered('t', index, kTestFiles[2]), Tier::physical);
  c.y_surrogate_clean =
      store::load_measurements(dir / numbered('t', index, kTestFiles[3]), Tier::surrogate);
  return c;
}

bool on_disk(const fs::path &dir, DatasetKind kind, int index) {
  try {
    if (kind == DatasetKind::training)
      load_record(dir, index, 0);
    else
      read_test_case(dir, index, 0);
    return true;
  } catch (const Error &) {
    return false;
  }
}

std::string kind_name(DatasetKind k) { return k == DatasetKind::training ? "training" : "test"; }

double rms(const Matrix &m) {
  return m.size() == 0 ? 0.0 : std::sqrt(m.squaredNorm() / static_cast<double>(m.size()));
}

double inverse_rms(const Matrix &m) {
  const double r = rms(m);
  return r > 0.0 ? 1.0 / r : 1.0;
}

/// Codes of each record's measurement set as matrix columns.
template <typename Get>
Matrix code_columns(std::span<const DatasetRecord> records, const NetworkBundle &encoder, Get get) {
  if (records.empty()) return {};
  const auto first = nn::encode_set(encoder, get(records[0]));
  Matrix out(static_cast<Eigen::Index>(first.size()), static_cast<Eigen::Index>(records.size()));
  parallel_for(records.size(), [&](std::size_t i) {
    const auto codes = i == 0 ? first : nn::encode_set(encoder, get(records[i]));
    out.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Vector>(codes.data(), out.rows());
  });
  return out;
}

Matrix field_columns(std::span<const DatasetRecord> records) {
  if (records.empty()) return {};
  const auto n = static_cast<Eigen::Index>(records[0].field_surrogate.values.size());
  Matrix out(n, static_cast<Eigen::Index>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto flat = records[i].field_surrogate.values.flat();
    if (static_cast<Eigen::Index>(flat.size()) != n)
      throw DimensionError("surrogate fields differ in size across records");
    out.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Vector>(flat.data(), n);
  }
  return out;
}

json training_json(const nn::TrainingRecord &r) {
  json epochs = json::array();
  for (const auto &e : r.epochs) epochs.push_back({e.epoch, e.train_loss, e.validation_loss});
  return {{"best_epoch", r.best_epoch},
          {"best_validation_loss", r.best_validation_loss},
          {"samples", r.samples},
          {"epochs", epochs}};
}

nn::TrainingRecord training_from_json(const json &j) {
  nn::TrainingRecord r;
  r.best_epoch = j.at("best_epoch").get<int>();
  r.best_validation_loss = j.at("best_validation_loss").get<double>();
  r.samples = j.at("samples").get<std::size_t>();
  for (const auto &e : j.at("epochs"))
    r.epochs.push_back({e.at(0).get<int>(), e.at(1).get<double>(), e.at(2).get<double>()});
  return r;
}

std::string preset_hash(const Preset &p) {
  const std::string doc = json(p).dump();
  return store::hex64(store::fnv1a64(doc.data(), doc.size()));
}

} // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t training_seed(std::uint64_t master) { return derive_seed(master, 0x7261696E); }
std::uint64_t validation_seed(std::uint64_t master) { return derive_seed(master, 0x76616C69); }
std::uint64_t test_seed(std::uint64_t master) { return derive_seed(master, 0x74657374); }

DatasetRecord generate_record(const Preset &preset, std::uint64_t base_seed, int index) {
  DatasetRecord r;
  r.index = index;
  r.seed = derive_seed(base_seed, static_cast<std::uint64_t>(index));
  scene::SceneParams params = preset.training_scene;
  params.seed = r.seed;
  r.field_accurate = scene::generate_field(params, preset.accurate);
  quantize_f32(r.field_accurate);
  r.field_surrogate = scene::project(r.field_accurate, preset.surrogate);
  quantize_f32(r.field_surrogate);

  r.y_accurate_clean =
      wave::simulate_all(r.field_accurate, preset.accurate, preset.geometry, preset.waveform);
  r.y_accurate_noisy = wave::add_noise(r.y_accurate_clean, preset.accurate.noise_variance,
                                       derive_seed(r.seed, kAccurateNoiseSalt));
  r.y_surrogate_clean =
      wave::simulate_all(r.field_surrogate, preset.surrogate, preset.geometry, preset.waveform);
  r.y_accurate_clean.quantize_f32();
  r.y_accurate_noisy.quantize_f32();
  r.y_surrogate_clean.quantize_f32();
  return r;
}

std::vector<DatasetRecord> generate_dataset(const Preset &preset, int n, std::uint64_t base_seed,
                                            int first_index) {
  if (n < 1) throw InvalidArgument("dataset size must be >= 1");
  std::vector<DatasetRecord> out(static_cast<std::size_t>(n));
  parallel_for(out.size(), [&](std::size_t i) {
    out[i] = generate_record(preset, base_seed, first_index + static_cast<int>(i));
  });
  return out;
}

TestCase generate_test_case(const Preset &preset, std::uint64_t base_seed, int index) {
  TestCase c;
  c.index = index;
  c.seed = derive_seed(base_seed, static_cast<std::uint64_t>(index));
  scene::SceneParams params = preset.test_scene;
  params.seed = c.seed;
  c.field_true = scene::generate_test_field(params, preset.physical);
  quantize_f32(c.field_true);
  c.field_reference = scene::project(c.field_true, preset.surrogate);
  quantize_f32(c.field_reference);
  const auto clean =
      wave::simulate_all(c.field_true, preset.physical, preset.geometry, preset.waveform);
  c.y_measured = wave::add_noise(clean, preset.physical.noise_variance,
                                 derive_seed(c.seed, kPhysicalNoiseSalt));
  c.y_measured.quantize_f32();
  c.y_surrogate_clean =
      wave::simulate_all(c.field_reference, preset.surrogate, preset.geometry, preset.waveform);
  c.y_surrogate_clean.quantize_f32();
  return c;
}

std::vector<TestCase> generate_test_set(const Preset &preset, int n, std::uint64_t base_seed) {
  if (n < 1) throw InvalidArgument("test set size must be >= 1");
  std::vector<TestCase> out(static_cast<std::size_t>(n));
  parallel_for(out.size(), [&](std::size_t i) {
    out[i] = generate_test_case(preset, base_seed, static_cast<int>(i));
  });
  return out;
}

void save_test_case(const fs::path &dir, const TestCase &c) {
  store::save_field(dir / numbered('t', c.index, kTestFiles[0]), c.field_true);
  store::save_field(dir / numbered('t', c.index, kTestFiles[1]), c.field_reference);
  store::save_measurements(dir / numbered('t', c.index, kTestFiles[2]), c.y_measured);
  store::save_measurements(dir / numbered('t', c.index, kTestFiles[3]), c.y_surrogate_clean);
}

TestCase load_test_case(const fs::path &dir, int index) {
  const auto info = inspect_dataset(dir);
  if (info.kind != DatasetKind::test) throw ConfigError(dir.string() + " is not a test set");
  if (index < 0 || index >= info.count)
    throw InvalidArgument("test case " + std::to_string(index) + " not in " + dir.string() +
                          " (" + std::to_string(info.count) + " cases)");
  return read_test_case(dir, index, derive_seed(info.base_seed, static_cast<std::uint64_t>(index)));
}

int write_dataset(const fs::path &dir, const Preset &preset, DatasetKind kind, int n,
                  std::uint64_t base_seed, const Progress &progress) {
  if (n < 1) throw InvalidArgument("dataset size must be >= 1");
  preset.validate();
  fs::create_directories(dir);
  // A manifest from another preset or seed invalidates every record.
  if (fs::exists(dir / "manifest.json")) {
    const auto m = store::read_manifest(dir);
    const json meta = json::parse(m.meta);
    if (meta.value("preset_hash", "") != preset_hash(preset) || m.master_seed != base_seed ||
        meta.value("kind", "") != kind_name(kind))
      throw ConfigError(dir.string() + " already holds a different dataset");
    fs::remove(dir / "manifest.json");
  }

  std::vector<int> missing;
  for (int i = 0; i < n; ++i)
    if (!on_disk(dir, kind, i)) missing.push_back(i);
  if (missing.size() < static_cast<std::size_t>(n))
    report(progress, "resuming: " + std::to_string(n - static_cast<int>(missing.size())) +
                         " records already present");

  std::atomic<int> done{0};
  parallel_for(missing.size(), [&](std::size_t k) {
    const int index = missing[k];
    if (kind == DatasetKind::training)
      save_record(dir, generate_record(preset, base_seed, index));
    else
      save_test_case(dir, generate_test_case(preset, base_seed, index));
    const int d = ++done;
    if (d % 10 == 0 || d == static_cast<int>(missing.size()))
      report(progress, kind_name(kind) + " records: " + std::to_string(d) + "/" +
                           std::to_string(missing.size()) + " generated");
  });

  store::Manifest m;
  m.created = store::utc_timestamp();
  m.master_seed = base_seed;
  m.config_hashes = {{"physical", store::config_hash(preset.physical)},
                     {"accurate", store::config_hash(preset.accurate)},
                     {"surrogate", store::config_hash(preset.surrogate)}};
  json seeds = json::array();
  for (int i = 0; i < n; ++i) {
    seeds.push_back(derive_seed(base_seed, static_cast<std::uint64_t>(i)));
    if (kind == DatasetKind::training)
      for (const char *f : kRecordFiles) m.files.push_back(store::describe_file(dir, numbered('r', i, f)));
    else
      for (const char *f : kTestFiles) m.files.push_back(store::describe_file(dir, numbered('t', i, f)));
  }
  m.meta = json{{"kind", kind_name(kind)},
                {"count", n},
                {"base_seed", base_seed},
                {"preset_hash", preset_hash(preset)},
                {"preset", preset},
                {"seeds", seeds}}
               .dump();
  store::write_manifest(dir, m);
  return static_cast<int>(missing.size());
}

DatasetInfo inspect_dataset(const fs::path &dir) {
  const auto m = store::read_manifest(dir);
  DatasetInfo info;
  try {
    const json meta = json::parse(m.meta);
    const auto kind = meta.at("kind").get<std::string>();
    if (kind != "training" && kind != "test")
      throw ConfigError(dir.string() + ": unknown dataset kind '" + kind + "'");
    info.kind = kind == "training" ? DatasetKind::training : DatasetKind::test;
    info.count = meta.at("count").get<int>();
    info.base_seed = meta.at("base_seed").get<std::uint64_t>();
    info.preset = meta.at("preset").get<Preset>();
  } catch (const json::exception &e) {
    throw CorruptionError((dir / "manifest.json").string(), std::string("bad dataset meta: ") + e.what());
  }
  return info;
}

std::vector<DatasetRecord> load_dataset(const fs::path &dir, std::optional<int> limit) {
  const auto info = inspect_dataset(dir);
  if (info.kind != DatasetKind::training)
    throw ConfigError(dir.string() + " holds test cases, not training records");
  const int n = limit ? *limit : info.count;
  if (n < 1 || n > info.count)
    throw InvalidArgument(dir.string() + " holds " + std::to_string(info.count) +
                          " records, " + std::to_string(n) + " requested");
  store::verify_manifest(dir, store::read_manifest(dir));
  std::vector<DatasetRecord> out(static_cast<std::size_t>(n));
  parallel_for(out.size(), [&](std::size_t i) {
    out[i] = load_record(dir, static_cast<int>(i), derive_seed(info.base_seed, i));
  });
  return out;
}

std::vector<TestCase> load_test_set(const fs::path &dir) {
  const auto info = inspect_dataset(dir);
  if (info.kind != DatasetKind::test)
    throw ConfigError(dir.string() + " holds training records, not test cases");
  store::verify_manifest(dir, store::read_manifest(dir));
  std::vector<TestCase> out(static_cast<std::size_t>(info.count));
  parallel_for(out.size(), [&](std::size_t i) {
    out[i] = read_test_case(dir, static_cast<int>(i), derive_seed(info.base_seed, i));
  });
  return out;
}

std::pair<Matrix, Matrix> autoencoder_samples(std::span<const DatasetRecord> records,
                                              const Preset &preset) {
  if (records.empty()) throw InvalidArgument("no records");
  const auto &shape = records[0].y_accurate_noisy;
  const Eigen::Index mt = shape.n_samples;
  const Eigen::Index pairs = static_cast<Eigen::Index>(shape.n_transmitters) * shape.n_receivers;
  const Eigen::Index cols = 2 * pairs * static_cast<Eigen::Index>(records.size());
  Matrix inputs(mt, cols);
  Matrix targets(mt, cols);
  parallel_for(records.size(), [&](std::size_t i) {
    const auto &r = records[i];
    if (!r.y_accurate_noisy.same_shape(shape) || !r.y_surrogate_clean.same_shape(shape) ||
        !r.y_accurate_clean.same_shape(shape))
      throw DimensionError("record " + std::to_string(r.index) + " has mismatched measurements");
    const auto noisy_surrogate = wave::add_noise(r.y_surrogate_clean, preset.surrogate.noise_variance,
                                                 derive_seed(r.seed, kSurrogateNoiseSalt));
    const Eigen::Index at = 2 * pairs * static_cast<Eigen::Index>(i);
    inputs.middleCols(at, pairs) = nn::traces_as_columns(r.y_accurate_noisy);
    targets.middleCols(at, pairs) = nn::traces_as_columns(r.y_accurate_clean);
    inputs.middleCols(at + pairs, pairs) = nn::traces_as_columns(noisy_surrogate);
    targets.middleCols(at + pairs, pairs) = nn::traces_as_columns(r.y_surrogate_clean);
  });
  return {std::move(inputs), std::move(targets)};
}

std::pair<NetworkBundle, NetworkBundle> train_autoencoder(std::span<const DatasetRecord> train,
                                                          std::span<const DatasetRecord> valid,
                                                          const Preset &preset,
                                                          nn::TrainingRecord *record) {
  auto [x, y] = autoencoder_samples(train, preset);
  auto [vx, vy] = autoencoder_samples(valid, preset);
  auto [enc, dec] =
      nn::build_autoencoder(static_cast<int>(x.rows()), preset.latent_width, preset.ae_widths);
  const std::size_t enc_stages = enc.stages().size();

  NetworkBundle ae;
  ae.kind = "autoencoder";
  ae.net = enc.then(dec);
  nn::initialize(ae.net, derive_seed(preset.ae_training.seed, 1));
  const double s = inverse_rms(x);
  ae.norm = {s, 1.0 / s, 0.0};
  auto rec = nn::train(ae, x, y, vx, vy, preset.ae_training);
  if (record) *record = std::move(rec);

  NetworkBundle encoder{"encoder", ae.net.slice(0, enc_stages), {s, 1.0, 0.0}, {}};
  NetworkBundle decoder{"decoder", ae.net.slice(enc_stages, ae.net.stages().size()),
                        {1.0, 1.0 / s, 0.0}, {}};
  return {std::move(encoder), std::move(decoder)};
}

NetworkBundle train_phi(std::span<const DatasetRecord> train, std::span<const DatasetRecord> valid,
                        const NetworkBundle &encoder, const Preset &preset,
                        nn::TrainingRecord *record) {
  auto noisy = [](const DatasetRecord &r) -> const MeasurementSet & { return r.y_accurate_noisy; };
  auto clean = [](const DatasetRecord &r) -> const MeasurementSet & { return r.y_surrogate_clean; };
  const Matrix x = code_columns(train, encoder, noisy);
  const Matrix y = code_columns(train, encoder, clean);
  const Matrix vx = code_columns(valid, encoder, noisy);
  const Matrix vy = code_columns(valid, encoder, clean);

  const auto &g = preset.geometry;
  NetworkBundle phi;
  phi.kind = "phi";
  phi.net = nn::build_phi(g.n_transmitters(), g.n_receivers(), preset.latent_width,
                          preset.fan_in_1, preset.fan_in_2, preset.phi_widths);
  nn::initialize(phi.net, derive_seed(preset.phi_training.seed, 2));
  const double s = inverse_rms(x);
  phi.norm = {s, 1.0 / s, 0.0};
  auto rec = nn::train(phi, x, y, vx, vy, preset.phi_training);
  if (record) *record = std::move(rec);
  return phi;
}

StageA train_stage_a(std::span<const DatasetRecord> train, std::span<const DatasetRecord> valid,
                     const Preset &preset) {
  StageA a;
  std::tie(a.encoder, a.decoder) = train_autoencoder(train, valid, preset, &a.ae_record);
  a.phi = train_phi(train, valid, a.encoder, preset, &a.phi_record);
  return a;
}

MeasurementSet convert_signal(const NetworkBundle &encoder, const NetworkBundle &phi,
                              const NetworkBundle &decoder, const MeasurementSet &y) {
  const auto codes = nn::encode_set(encoder, y);
  if (phi.net.input_width() != static_cast<int>(codes.size()))
    throw DimensionError("conversion network expects " + std::to_string(phi.net.input_width()) +
                         " code values, got " + std::to_string(codes.size()));
  const Vector mapped = phi.apply(Vector(Eigen::Map<const Vector>(codes.data(), codes.size())));
  auto out = nn::decode_set(decoder, {mapped.data(), mapped.data() + mapped.size()}, y);
  out.tier = Tier::surrogate;
  return out;
}

adjoint::Reconstruction nnaee_reconstruct(const MeasurementSet &y, const StageA &bundles,
                                          const Preset &preset,
                                          const adjoint::InversionOptions &options) {
  const auto converted = convert_signal(bundles.encoder, bundles.phi, bundles.decoder, y);
  return adjoint::reconstruct(converted, preset.surrogate, preset.geometry, preset.waveform, options);
}

NetworkBundle train_direct_inversion(std::span<const DatasetRecord> train,
                                     std::span<const DatasetRecord> valid,
                                     const NetworkBundle &encoder, const Preset &preset,
                                     nn::TrainingRecord *record) {
  auto noisy = [](const DatasetRecord &r) -> const MeasurementSet & { return r.y_accurate_noisy; };
  const Matrix x = code_columns(train, encoder, noisy);
  const Matrix y = field_columns(train);
  const Matrix vx = code_columns(valid, encoder, noisy);
  const Matrix vy = field_columns(valid);

  const auto &g = preset.geometry;
  const int outputs = preset.surrogate.n_grid * preset.surrogate.n_grid;
  if (y.rows() != outputs)
    throw DimensionError("training fields do not match the surrogate grid");
  NetworkBundle direct;
  direct.kind = "direct";
  direct.net = nn::build_direct(g.n_transmitters(), g.n_receivers(), preset.latent_width,
                                preset.fan_in_1, preset.fan_in_2, outputs, preset.direct_widths);
  nn::initialize(direct.net, derive_seed(preset.direct_training.seed, 3));
  direct.norm = {inverse_rms(x), 100.0, preset.training_scene.mean_c};
  auto rec = nn::train(direct, x, y, vx, vy, preset.direct_training);
  if (record) *record = std::move(rec);
  return direct;
}

SOSField direct_predict(const NetworkBundle &direct, const NetworkBundle &encoder,
                        const MeasurementSet &y, const Preset &preset) {
  const auto codes = nn::encode_set(encoder, y);
  if (direct.net.input_width() != static_cast<int>(codes.size()))
    throw DimensionError("direct network expects " + std::to_string(direct.net.input_width()) +
                         " code values, got " + std::to_string(codes.size()));
  const auto &cfg = preset.surrogate;
  if (direct.net.output_width() != cfg.n_grid * cfg.n_grid)
    throw DimensionError("direct network output does not match the surrogate grid");
  const Vector out = direct.apply(Vector(Eigen::Map<const Vector>(codes.data(), codes.size())));
  SOSField f = SOSField::constant(cfg, preset.inversion.initial_value);
  for (Eigen::Index i = 0; i < out.size(); ++i)
    f.values[static_cast<std::size_t>(i)] =
        std::clamp(out[i], preset.inversion.c_min, preset.inversion.c_max);
  return f;
}

double mean_trace_error(const MeasurementSet &a, const MeasurementSet &b) {
  if (!a.same_shape(b)) throw DimensionError("measurement sets differ in shape");
  double total = 0.0;
  for (int s = 0; s < a.n_transmitters; ++s)
    for (int r = 0; r < a.n_receivers; ++r) {
      const auto ta = a.trace(s, r);
      const auto tb = b.trace(s, r);
      double sq = 0.0;
      for (int t = 0; t < a.n_samples; ++t) sq += (ta[t] - tb[t]) * (ta[t] - tb[t]);
      total += std::sqrt(sq);
    }
  return total / (static_cast<double>(a.n_transmitters) * a.n_receivers);
}

double interior_rmse(const SOSField &a, const SOSField &b, const ModelConfig &config) {
  if (!a.matches(config) || !b.matches(config))
    throw DimensionError("fields do not match the " + nnaee::to_string(config.tier) + " grid");
  const auto in = wave::interior_range(config);
  double sq = 0.0;
  for (int r = in.lo; r < in.hi; ++r)
    for (int c = in.lo; c < in.hi; ++c) {
      const double d = a.values(r, c) - b.values(r, c);
      sq += d * d;
    }
  return std::sqrt(sq / (static_cast<double>(in.size()) * in.size()));
}

std::string to_string(Method m) {
  switch (m) {
  case Method::accurate:
    return "accurate";
  case Method::crm:
    return "crm";
  case Method::nnaee:
    return "nnaee";
  case Method::direct:
    break;
  }
  return "direct";
}

Method method_from_string(const std::string &name) {
  for (Method m : {Method::accurate, Method::crm, Method::nnaee, Method::direct})
    if (to_string(m) == name) return m;
  throw InvalidArgument("unknown method '" + name + "' (expected accurate, crm, nnaee or direct)");
}

fs::path models_subdir(const fs::path &models_dir, int n_train) {
  return models_dir / ("n" + std::to_string(n_train));
}

void save_training_record(const fs::path &path, const nn::TrainingRecord &record) {
  store::write_text_atomic(path, training_json(record).dump(1) + "\n");
}

nn::TrainingRecord load_training_record(const fs::path &path) {
  try {
    return training_from_json(json::parse(store::read_text(path)));
  } catch (const json::exception &e) {
    throw CorruptionError(path.string(), std::string("bad training record: ") + e.what());
  }
}

void write_models_manifest(const fs::path &dir, int n_train) {
  store::Manifest m;
  m.created = store::utc_timestamp();
  for (const char *name : {"encoder.nnet", "decoder.nnet", "phi.nnet", "direct.nnet",
                           "ae_training.json", "phi_training.json", "direct_training.json"})
    if (fs::exists(dir / name)) m.files.push_back(store::describe_file(dir, name));
  m.meta = json{{"kind", "models"}, {"n_train", n_train}}.dump();
  store::write_manifest(dir, m);
}

void save_models(const fs::path &dir, const ModelSet &models) {
  fs::create_directories(dir);
  store::save_network(dir / "encoder.nnet", models.stage_a.encoder);
  store::save_network(dir / "decoder.nnet", models.stage_a.decoder);
  store::save_network(dir / "phi.nnet", models.stage_a.phi);
  save_training_record(dir / "ae_training.json", models.stage_a.ae_record);
  save_training_record(dir / "phi_training.json", models.stage_a.phi_record);
  if (models.direct) store::save_network(dir / "direct.nnet", *models.direct);
  if (models.direct_record) save_training_record(dir / "direct_training.json", *models.direct_record);
  write_models_manifest(dir, models.n_train);
}

ModelSet load_models(const fs::path &dir, int n_train) {
  const auto m = store::read_manifest(dir);
  store::verify_manifest(dir, m);
  ModelSet models;
  try {
    const json meta = json::parse(m.meta);
    if (meta.value("kind", "") != "models")
      throw ConfigError(dir.string() + " is not a models directory");
    models.n_train = meta.at("n_train").get<int>();
  } catch (const json::exception &e) {
    throw CorruptionError((dir / "manifest.json").string(), std::string("bad models meta: ") + e.what());
  }
  if (n_train > 0 && models.n_train != n_train)
    throw ConfigError(dir.string() + " holds models for n_train " + std::to_string(models.n_train) +
                      ", not " + std::to_string(n_train));
  models.stage_a.encoder = store::load_network(dir / "encoder.nnet");
  models.stage_a.decoder = store::load_network(dir / "decoder.nnet");
  models.stage_a.phi = store::load_network(dir / "phi.nnet");
  if (fs::exists(dir / "ae_training.json"))
    models.stage_a.ae_record = load_training_record(dir / "ae_training.json");
  if (fs::exists(dir / "phi_training.json"))
    models.stage_a.phi_record = load_training_record(dir / "phi_training.json");
  if (fs::exists(dir / "direct.nnet")) models.direct = store::load_network(dir / "direct.nnet");
  if (fs::exists(dir / "direct_training.json"))
    models.direct_record = load_training_record(dir / "direct_training.json");
  return models;
}

MethodResult run_method(Method method, const MeasurementSet &y, const Preset &preset,
                        const ModelSet *models) {
  if ((method == Method::nnaee || method == Method::direct) && !models)
    throw InvalidArgument("method " + to_string(method) + " needs trained networks");
  if (method == Method::direct && !models->direct)
    throw InvalidArgument("no direct inversion network in the model set");

  const auto start = std::chrono::steady_clock::now();
  MethodResult result;
  auto solve = [&](const MeasurementSet &data, const ModelConfig &config) {
    try {
      result.reconstruction =
          adjoint::reconstruct(data, config, preset.geometry, preset.waveform, preset.inversion);
    } catch (const adjoint::OptimizationError &e) {
      result.reconstruction = e.last_stable();
    }
    return result.reconstruction->field;
  };
  switch (method) {
  case Method::accurate:
    result.estimate = scene::project(solve(y, preset.accurate), preset.surrogate);
    break;
  case Method::crm:
    result.estimate = solve(y, preset.surrogate);
    break;
  case Method::nnaee: {
    const auto &a = models->stage_a;
    result.estimate = solve(convert_signal(a.encoder, a.phi, a.decoder, y), preset.surrogate);
    break;
  }
  case Method::direct:
    result.estimate = direct_predict(*models->direct, models->stage_a.encoder, y, preset);
    break;
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::vector<CurvePoint> EvaluationReport::learning_curve() const {
  std::vector<CurvePoint> out;
  for (const auto &row : rows) {
    const bool seen = std::any_of(out.begin(), out.end(), [&](const CurvePoint &p) {
      return p.n_train == row.n_train && p.method == row.method;
    });
    if (!seen) out.push_back({row.n_train, row.method, mean_rmse(row.method, row.n_train)});
  }
  return out;
}

double EvaluationReport::mean_rmse(Method method, int n_train) const {
  double sum = 0.0;
  int count = 0;
  for (const auto &row : rows)
    if (row.method == method && row.n_train == n_train) {
      sum += row.rmse;
      ++count;
    }
  if (count == 0)
    throw InvalidArgument("no rows for " + to_string(method) + " at n_train " +
                          std::to_string(n_train));
  return sum / count;
}

double EvaluationReport::mean_seconds(Method method, int n_train) const {
  double sum = 0.0;
  int count = 0;
  for (const auto &row : rows)
    if (row.method == method && row.n_train == n_train) {
      sum += row.seconds;
      ++count;
    }
  if (count == 0)
    throw InvalidArgument("no rows for " + to_string(method) + " at n_train " +
                          std::to_string(n_train));
  return sum / count;
}

EvaluationReport evaluate(const std::vector<TestCase> &cases, const std::vector<ModelSet> &models,
                          const Preset &preset, const EvaluationOptions &options) {
  struct Job {
    Method method;
    const ModelSet *models;
  };
  std::vector<Job> jobs;
  auto wants = [&](Method m) {
    return std::find(options.methods.begin(), options.methods.end(), m) != options.methods.end();
  };
  for (Method m : {Method::accurate, Method::crm})
    if (wants(m)) jobs.push_back({m, nullptr});
  for (const auto &set : models)
    for (Method m : {Method::nnaee, Method::direct})
      if (wants(m) && (m != Method::direct || set.direct)) jobs.push_back({m, &set});

  EvaluationReport rep;
  const std::size_t n_jobs = jobs.size();
  std::vector<ReportRow> rows(cases.size() * n_jobs);
  std::vector<double> unconverted(cases.size(), 0.0);
  std::vector<std::vector<double>> converted(models.size(), std::vector<double>(cases.size(), 0.0));
  std::atomic<int> finished{0};

  parallel_for(cases.size(), [&](std::size_t ci) {
    const auto &tc = cases[ci];
    unconverted[ci] = mean_trace_error(tc.y_measured, tc.y_surrogate_clean);
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
      const auto &a = models[mi].stage_a;
      converted[mi][ci] =
          mean_trace_error(convert_signal(a.encoder, a.phi, a.decoder, tc.y_measured),
                           tc.y_surrogate_clean);
    }
    for (std::size_t j = 0; j < n_jobs; ++j) {
      const auto result = run_method(jobs[j].method, tc.y_measured, preset, jobs[j].models);
      auto &row = rows[ci * n_jobs + j];
      row.case_index = tc.index;
      row.method = jobs[j].method;
      row.n_train = jobs[j].models ? jobs[j].models->n_train : 0;
      row.rmse = interior_rmse(result.estimate, tc.field_reference, preset.surrogate);
      row.seconds = options.deterministic ? 0.0 : result.seconds;
      std::ostringstream line;
      line << "case " << tc.index << ' ' << to_string(row.method);
      if (row.n_train) line << " n_train=" << row.n_train;
      line << " rmse=" << row.rmse << " (" << result.seconds << " s)";
      report(options.progress, line.str());
    }
    const int d = ++finished;
    report(options.progress,
           "evaluated " + std::to_string(d) + "/" + std::to_string(cases.size()) + " cases");
  });

  rep.rows = std::move(rows);
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    SignalError e;
    e.n_train = models[mi].n_train;
    for (std::size_t ci = 0; ci < cases.size(); ++ci) {
      e.unconverted += unconverted[ci];
      e.converted += converted[mi][ci];
    }
    e.unconverted /= static_cast<double>(cases.size());
    e.converted /= static_cast<double>(cases.size());
    rep.signal_errors.push_back(e);
  }
  return rep;
}

std::string report_csv(const EvaluationReport &report) {
  std::ostringstream out;
  out << "case,method,n_train,rmse,seconds\n" << std::setprecision(17);
  for (const auto &r : report.rows)
    out << r.case_index << ',' << to_string(r.method) << ',' << r.n_train << ',' << r.rmse << ','
        << r.seconds << '\n';
  return out.str();
}

std::string learning_curve_csv(const EvaluationReport &report) {
  std::ostringstream out;
  out << "n_train,method,mean_rmse\n" << std::setprecision(17);
  for (const auto &p : report.learning_curve())
    out << p.n_train << ',' << to_string(p.method) << ',' << p.mean_rmse << '\n';
  return out.str();
}

std::string signal_error_csv(const EvaluationReport &report) {
  std::ostringstream out;
  out << "n_train,unconverted,converted\n" << std::setprecision(17);
  for (const auto &e : report.signal_errors)
    out << e.n_train << ',' << e.unconverted << ',' << e.converted << '\n';
  return out.str();
}

void write_report(const fs::path &dir, const EvaluationReport &report) {
  fs::create_directories(dir);
  store::write_text_atomic(dir / "report.csv", report_csv(report));
  store::write_text_atomic(dir / "learning_curve.csv", learning_curve_csv(report));
  store::write_text_atomic(dir / "signal_error.csv", signal_error_csv(report));
}

EvaluationReport run_experiment(const fs::path &work_dir, const Preset &preset,
                                const ExperimentOptions &options) {
  preset.validate();
  const auto &progress = options.progress;
  const fs::path train_dir = work_dir / "data" / "train";
  const fs::path valid_dir = work_dir / "data" / "valid";
  const fs::path test_dir = work_dir / "data" / "test";
  const fs::path models_dir = work_dir / "models";

  report(progress, "generating data");
  write_dataset(train_dir, preset, DatasetKind::training, preset.max_train(),
                training_seed(preset.master_seed), progress);
  write_dataset(valid_dir, preset, DatasetKind::training, preset.n_validation,
                validation_seed(preset.master_seed), progress);
  write_dataset(test_dir, preset, DatasetKind::test, preset.n_test, test_seed(preset.master_seed),
                progress);

  std::vector<ModelSet> models;
  {
    const auto train = load_dataset(train_dir);
    const auto valid = load_dataset(valid_dir);
    std::vector<int> grid = preset.n_train_grid;
    std::sort(grid.begin(), grid.end());
    for (int n : grid) {
      const std::span<const DatasetRecord> subset(train.data(), static_cast<std::size_t>(n));
      ModelSet set;
      set.n_train = n;
      report(progress, "n_train=" + std::to_string(n) + ": training autoencoder");
      std::tie(set.stage_a.encoder, set.stage_a.decoder) =
          train_autoencoder(subset, valid, preset, &set.stage_a.ae_record);
      report(progress, "n_train=" + std::to_string(n) + ": training conversion network");
      set.stage_a.phi = train_phi(subset, valid, set.stage_a.encoder, preset, &set.stage_a.phi_record);
      report(progress, "n_train=" + std::to_string(n) + ": training direct inversion network");
      set.direct_record.emplace();
      set.direct =
          train_direct_inversion(subset, valid, set.stage_a.encoder, preset, &*set.direct_record);
      save_models(models_subdir(models_dir, n), set);
      models.push_back(std::move(set));
    }
  }

  report(progress, "evaluating");
  const auto cases = load_test_set(test_dir);
  EvaluationOptions eval;
  eval.deterministic = options.deterministic;
  eval.progress = progress;
  auto rep = evaluate(cases, models, preset, eval);
  write_report(work_dir / "report", rep);
  return rep;
}

} // namespace nnaee::pipeline
