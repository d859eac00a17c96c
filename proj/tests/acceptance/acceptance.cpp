// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--work-dir DIR] [--only 1,4,6] [--threads N]
//
// Criteria 4 to 7 share one desk-scale experiment under DIR/desk. Existing data there is
// reused after checksum verification; networks and reconstructions are always redone.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "nnaee/adjoint.hpp"
#include "nnaee/neural.hpp"
#include "nnaee/parallel.hpp"
#include "nnaee/pipeline.hpp"
#include "nnaee/preset.hpp"
#include "nnaee/store.hpp"
#include "nnaee/wavesim.hpp"
#include "oracles.hpp"

using namespace nnaee;
using namespace nnaee::pipeline;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string &what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [x]");
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char *f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string pct(double v) { return fmt("%.2f%%", 100.0 * v); }

void log(const std::string &msg) { std::fprintf(stderr, "[acceptance] %s\n", msg.c_str()); }

// ---------------------------------------------------------------------------------------------
// 1. Wave physics

Outcome wave_physics() {
  const auto t0 = Clock::now();
  Outcome o;
  const auto desk = Preset::desk();
  const auto full = Preset::full();

  double worst = 0.0;
  for (const ModelConfig *cfg :
       {&full.physical, &full.accurate, &full.surrogate, &desk.physical, &desk.accurate}) {
    for (double e : oracle::arrival_errors(*cfg, full.waveform, {0.1, 0.1}, 0.045))
      worst = std::max(worst, e);
  }
  o.check(worst < 0.02, "arrival worst " + pct(worst) + " < 2% (1056/1024/256-cell and desk fine tiers)");
  {
    const auto e = oracle::arrival_errors(desk.surrogate, desk.waveform, {0.1, 0.1}, 0.045);
    const double w = *std::max_element(e.begin(), e.end());
    o.detail += "; desk 64-cell surrogate lag " + pct(w) + " (dispersion, not gated)";
  }

  const auto &acc = desk.accurate;
  const auto src = wave::nearest_node(acc, desk.geometry.transmitter(0));
  const auto damped = oracle::interior_energy_history(acc, 1500.0, src, desk.waveform);
  const double ratio = damped.back() / *std::max_element(damped.begin(), damped.end());
  auto hard = acc;
  hard.eta_max = 0.0;
  const auto kept = oracle::interior_energy_history(hard, 1500.0, src, desk.waveform);
  const double kept_ratio = kept.back() / *std::max_element(kept.begin(), kept.end());
  o.check(ratio < 0.05 && kept_ratio > 0.5,
          "final/peak energy " + fmt("%.4f", ratio) + " < 0.05 (no damping " + fmt("%.2f", kept_ratio) + " > 0.5)");

  const auto field = generate_record(desk, derive_seed(desk.master_seed, 0x72656369), 0).field_accurate;
  const double a = desk.geometry.transmitter_angles[0], b = desk.geometry.receiver_angles[5];
  const SensorGeometry ab{desk.geometry.center, desk.geometry.radius, {a}, {b}};
  const SensorGeometry ba{desk.geometry.center, desk.geometry.radius, {b}, {a}};
  const auto t_ab = wave::simulate(field, acc, ab, desk.waveform, 0);
  const auto t_ba = wave::simulate(field, acc, ba, desk.waveform, 0);
  const double recip = oracle::relative_l2(t_ab.row(0), t_ba.row(0));
  o.check(recip < 0.01, "reciprocity in a random training medium " + fmt("%.2e", recip) + " < 1e-2");

  auto bad = acc;
  bad.dt = 1.01 * acc.dx / (std::sqrt(2.0) * kMaxSoundSpeed);
  bool rejected = false;
  try {
    wave::simulate_all(SOSField::constant(bad, 1500.0), bad, desk.geometry, desk.waveform);
  } catch (const ConfigError &) {
    rejected = true;
  }
  o.check(rejected, "CFL violation rejected");

  const double secs = seconds_since(t0);
  o.check(secs < 120.0, "runtime " + fmt("%.0f s", secs) + " < 120 s");
  return o;
}

// ---------------------------------------------------------------------------------------------
// 2. Adjoint gradient

Outcome adjoint_gradient() {
  const auto t0 = Clock::now();
  Outcome o;
  const auto cfg = ModelConfig::centered(Tier::surrogate, 32, 0.01, 0.05, 0.0, 0.0, 4e-7, 160, 4.5e5, 0.0);
  const auto geo = SensorGeometry::ring({0.0, 0.0}, 0.02, 4, 8);
  const SourceWaveform w;
  auto blob = [&](double amp) {
    SOSField f = SOSField::constant(cfg, 1500.0);
    for (std::size_t r = 0; r < f.rows(); ++r)
      for (std::size_t c = 0; c < f.cols(); ++c) {
        const double x = f.node_x(c) - 0.004, y = f.node_y(r) + 0.003;
        f.values(r, c) += amp * std::exp(-(x * x + y * y) / (2 * 0.006 * 0.006));
      }
    return f;
  };
  const auto data = wave::simulate_all(blob(60.0), cfg, geo, w);
  const Grid2Dd v0 = blob(-20.0).slowness_squared();
  const auto mg = adjoint::misfit_gradient_v(v0, data, cfg, geo, w);
  const auto interior = wave::interior_range(cfg);
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  const int directions = 24;
  for (int k = 0; k < directions; ++k) {
    Grid2Dd d(v0.rows(), v0.cols(), 0.0);
    for (int r = interior.lo; r < interior.hi; ++r)
      for (int c = interior.lo; c < interior.hi; ++c) d(r, c) = normal(rng);
    double analytic = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) analytic += mg.gradient[i] * d[i];
    const double h = 1e-4 * v0[0];
    Grid2Dd vp = v0, vm = v0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      vp[i] += h * d[i];
      vm[i] -= h * d[i];
    }
    const double fd = (adjoint::misfit_v(vp, data, cfg, geo, w) - adjoint::misfit_v(vm, data, cfg, geo, w)) / (2 * h);
    worst = std::max(worst, std::abs(fd - analytic) / std::abs(fd));
  }
  o.check(worst < 1e-3, std::to_string(directions) + " directions on 32x32, worst relative error " +
                            fmt("%.2e", worst) + " < 1e-3");
  const double secs = seconds_since(t0);
  o.check(secs < 300.0, "runtime " + fmt("%.0f s", secs) + " < 300 s");
  return o;
}

// ---------------------------------------------------------------------------------------------
// 3. Neural engine

nn::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  nn::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

double backprop_error(nn::Network net, std::uint64_t seed) {
  auto p = net.flat_parameters();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.5);
  for (double &x : p) x = n(rng);
  net.set_flat_parameters(p);
  const nn::Matrix x = random_matrix(net.input_width(), 3, seed + 1);
  const nn::Matrix g = random_matrix(net.output_width(), 3, seed + 2);
  const auto analytic = net.backward(x, g).flat();
  auto objective = [&] { return (net.forward(x).array() * g.array()).sum(); };
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(p[i]));
    const double saved = p[i];
    p[i] = saved + h;
    net.set_flat_parameters(p);
    const double fp = objective();
    p[i] = saved - h;
    net.set_flat_parameters(p);
    const double fm = objective();
    p[i] = saved;
    net.set_flat_parameters(p);
    const double fd = (fp - fm) / (2 * h);
    worst = std::max(worst, std::abs(fd - analytic[i]) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

Outcome neural_engine() {
  const auto t0 = Clock::now();
  Outcome o;
  using nn::Activation;
  const std::vector<nn::Network> nets = {
      nn::dense_chain(5, {{5, 8, Activation::relu}, {8, 6, Activation::relu}, {6, 4, Activation::linear}}),
      nn::build_phi(3, 2, 2, 3, 3, {3}), nn::build_direct(3, 2, 2, 3, 2, 6, {3})};
  double worst = 0.0;
  std::size_t largest = 0;
  for (std::size_t k = 0; k < nets.size(); ++k) {
    largest = std::max(largest, nets[k].parameter_count());
    worst = std::max(worst, backprop_error(nets[k], 100 + k));
  }
  o.check(largest <= 500 && worst < 1e-6, "backprop vs central differences " + fmt("%.1e", worst) +
                                              " < 1e-6 (nets up to " + std::to_string(largest) + " parameters)");

  nn::Network phi = nn::build_phi(4, 3, 2, 3, 3, {5});
  phi.set_flat_parameters(std::vector<double>(phi.parameter_count(), 0.0));
  const nn::Matrix x = random_matrix(phi.input_width(), 7, 3);
  o.check(phi.forward(x) == x, "residual net with zero weights is the exact identity");

  auto run = [] {
    const nn::Matrix xs = random_matrix(6, 300, 1);
    const nn::Matrix ys = xs.topRows(3).array().sin().matrix();
    nn::NetworkBundle b{"n", nn::dense_chain(6, {{6, 8, Activation::relu}, {8, 3, Activation::linear}}), {}, {}};
    nn::initialize(b.net, 5);
    nn::TrainOptions opt;
    opt.epochs = 8;
    opt.seed = 42;
    opt.batch_size = 16;
    const auto rec = nn::train(b, xs, ys, opt);
    return std::make_pair(store::encode_network(b), rec.best_validation_loss);
  };
  const auto a = run(), b = run();
  o.check(a.first == b.first && a.second == b.second, "fixed-seed training bit-reproducible");
  const double secs = seconds_since(t0);
  o.check(secs < 60.0, "runtime " + fmt("%.1f s", secs) + " < 60 s");
  return o;
}

// ---------------------------------------------------------------------------------------------
// Desk experiment shared by 4 to 7

struct DeskRun {
  Preset preset;
  std::vector<ModelSet> models;
  std::map<int, double> ae_seconds;
  double denoise_fraction = 0.0;
  double denoise_seconds = 0.0; // AE training at the largest n_train plus the held-out check
  std::vector<TestCase> cases;
  EvaluationReport report;
  double eval_seconds = 0.0;
  double total_seconds = 0.0;
};

constexpr std::uint64_t kHeldOutSalt = 0x686F6C64;
constexpr int kHeldOutRecords = 20;

DeskRun run_desk(const fs::path &work) {
  DeskRun run;
  run.preset = Preset::desk();
  const auto &p = run.preset;
  const auto t0 = Clock::now();
  const Progress progress = [](const std::string &m) { log(m); };

  write_dataset(work / "data" / "train", p, DatasetKind::training, p.max_train(), training_seed(p.master_seed), progress);
  write_dataset(work / "data" / "valid", p, DatasetKind::training, p.n_validation, validation_seed(p.master_seed), progress);
  write_dataset(work / "data" / "test", p, DatasetKind::test, p.n_test, test_seed(p.master_seed), progress);
  write_dataset(work / "data" / "heldout", p, DatasetKind::training, kHeldOutRecords,
                derive_seed(p.master_seed, kHeldOutSalt), progress);

  const auto train = load_dataset(work / "data" / "train");
  const auto valid = load_dataset(work / "data" / "valid");
  std::vector<int> grid = p.n_train_grid;
  std::sort(grid.begin(), grid.end());
  for (int n : grid) {
    const std::span<const DatasetRecord> subset(train.data(), static_cast<std::size_t>(n));
    ModelSet set;
    set.n_train = n;
    log("n_train=" + std::to_string(n) + ": autoencoder");
    const auto ta = Clock::now();
    std::tie(set.stage_a.encoder, set.stage_a.decoder) = train_autoencoder(subset, valid, p, &set.stage_a.ae_record);
    run.ae_seconds[n] = seconds_since(ta);
    log("n_train=" + std::to_string(n) + ": conversion network");
    set.stage_a.phi = train_phi(subset, valid, set.stage_a.encoder, p, &set.stage_a.phi_record);
    log("n_train=" + std::to_string(n) + ": direct inversion network");
    set.direct_record.emplace();
    set.direct = train_direct_inversion(subset, valid, set.stage_a.encoder, p, &*set.direct_record);
    save_models(models_subdir(work / "models", n), set);
    run.models.push_back(std::move(set));
  }

  // Denoising on records never seen in training or early stopping.
  const auto td = Clock::now();
  const auto &last = run.models.back().stage_a;
  int closer = 0, total = 0;
  for (const auto &r : load_dataset(work / "data" / "heldout")) {
    const auto denoised = nn::decode_set(last.decoder, nn::encode_set(last.encoder, r.y_accurate_noisy), r.y_accurate_noisy);
    for (int s = 0; s < r.y_accurate_noisy.n_transmitters; ++s)
      for (int q = 0; q < r.y_accurate_noisy.n_receivers; ++q) {
        const auto clean = r.y_accurate_clean.trace(s, q);
        const double d_out = oracle::relative_l2(denoised.trace(s, q), clean);
        const double d_in = oracle::relative_l2(r.y_accurate_noisy.trace(s, q), clean);
        closer += d_out < d_in;
        ++total;
      }
  }
  run.denoise_fraction = static_cast<double>(closer) / total;
  run.denoise_seconds = run.ae_seconds[grid.back()] + seconds_since(td);

  log("evaluating");
  const auto te = Clock::now();
  EvaluationOptions eval;
  eval.progress = progress;
  run.cases = load_test_set(work / "data" / "test");
  run.report = evaluate(run.cases, run.models, p, eval);
  run.eval_seconds = seconds_since(te);
  write_report(work / "report", run.report);
  run.total_seconds = seconds_since(t0);
  return run;
}

Outcome denoising(const DeskRun &run) {
  Outcome o;
  const int n = run.preset.n_train_grid.back();
  o.check(run.denoise_fraction >= 0.9, "n_train=" + std::to_string(n) + ": " + pct(run.denoise_fraction) +
                                           " of " + std::to_string(kHeldOutRecords) +
                                           " held-out records' traces closer to clean (>= 90%)");
  o.check(run.denoise_seconds < 1200.0, "training + check " + fmt("%.0f s", run.denoise_seconds) + " < 1200 s");
  return o;
}

Outcome conversion(const DeskRun &run) {
  Outcome o;
  const auto &se = *std::max_element(run.report.signal_errors.begin(), run.report.signal_errors.end(),
                                     [](const SignalError &a, const SignalError &b) { return a.n_train < b.n_train; });
  const double ratio = se.converted / se.unconverted;
  o.check(ratio < 0.3, "n_train=" + std::to_string(se.n_train) + ": converted " + fmt("%.4g", se.converted) +
                           " vs unconverted " + fmt("%.4g", se.unconverted) + ", ratio " + fmt("%.3f", ratio) +
                           " < 0.30");
  return o;
}

Outcome ordering(const DeskRun &run) {
  Outcome o;
  const auto &rep = run.report;
  const double acc = rep.mean_rmse(Method::accurate, 0), crm = rep.mean_rmse(Method::crm, 0);
  std::vector<int> grid = run.preset.n_train_grid;
  std::sort(grid.begin(), grid.end());
  std::string curve;
  for (int n : grid) curve += (curve.empty() ? "" : " ") + std::to_string(n) + ":" + fmt("%.2f", rep.mean_rmse(Method::nnaee, n));
  o.detail = "accurate " + fmt("%.2f", acc) + ", CRM " + fmt("%.2f", crm) + ", NNAEE " + curve;
  for (int n : grid)
    if (n >= 200) {
      const double nn_rmse = rep.mean_rmse(Method::nnaee, n);
      o.check(acc < nn_rmse && nn_rmse < 0.5 * crm, "n=" + std::to_string(n) + " accurate < NNAEE < 0.5 CRM");
    }
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double prev = rep.mean_rmse(Method::nnaee, grid[k - 1]), cur = rep.mean_rmse(Method::nnaee, grid[k]);
    o.check(cur <= 1.05 * prev, "curve " + std::to_string(grid[k - 1]) + "->" + std::to_string(grid[k]) + " within +5%");
  }
  const double nn0 = rep.mean_rmse(Method::nnaee, grid.front()), d0 = rep.mean_rmse(Method::direct, grid.front());
  o.check(nn0 <= d0, "n=" + std::to_string(grid.front()) + " NNAEE " + fmt("%.2f", nn0) + " <= direct " + fmt("%.2f", d0));
  o.check(run.total_seconds <= 8 * 3600.0, "experiment " + fmt("%.0f s", run.total_seconds) + " <= 8 h (" +
                                               std::to_string(thread_count()) + " threads)");
  return o;
}

Outcome runtime_contrast(const DeskRun &run) {
  Outcome o;
  std::map<int, double> acc, crm;
  for (const auto &r : run.report.rows) {
    if (r.method == Method::accurate) acc[r.case_index] = r.seconds;
    if (r.method == Method::crm) crm[r.case_index] = r.seconds;
  }
  double worst_ratio = 0.0;
  for (const auto &[c, a] : acc) worst_ratio = std::max(worst_ratio, crm[c] / a);
  o.check(worst_ratio <= 0.2, "surrogate/accurate wall-clock worst case " + fmt("%.3f", worst_ratio) + " <= 0.2");

  // Seconds per forward/adjoint solve, pooled over the test cases; NNAEE includes the conversion.
  log("timing CRM and NNAEE reconstructions");
  const auto &p = run.preset;
  struct Pool {
    double seconds = 0.0;
    int solves = 0;
    double per_solve() const { return seconds / solves; }
  };
  Pool crm_pool;
  std::vector<Pool> nnaee_pool(run.models.size());
  auto add = [&](Pool &pool, Method m, const TestCase &tc, const ModelSet *models) {
    const auto r = run_method(m, tc.y_measured, p, models);
    pool.seconds += r.seconds;
    pool.solves += r.reconstruction->gradient_evaluations;
  };
  for (const auto &tc : run.cases) {
    add(crm_pool, Method::crm, tc, nullptr);
    for (std::size_t k = 0; k < run.models.size(); ++k) add(nnaee_pool[k], Method::nnaee, tc, &run.models[k]);
  }
  double worst_dev = 0.0;
  for (const auto &pool : nnaee_pool)
    worst_dev = std::max(worst_dev, std::abs(pool.per_solve() - crm_pool.per_solve()) / crm_pool.per_solve());
  o.check(worst_dev <= 0.1, "NNAEE vs CRM seconds per forward/adjoint solve (CRM " +
                                fmt("%.4f s", crm_pool.per_solve()) + "), worst n_train deviation " +
                                pct(worst_dev) + " <= 10%");
  o.detail += "; mean wall-clock CRM " + fmt("%.2f s", crm_pool.seconds / run.cases.size()) + " over " +
              std::to_string(crm_pool.solves) + " solves";
  for (std::size_t k = 0; k < run.models.size(); ++k)
    o.detail += ", NNAEE n=" + std::to_string(run.models[k].n_train) + " " +
                fmt("%.2f s", nnaee_pool[k].seconds / run.cases.size()) + " over " +
                std::to_string(nnaee_pool[k].solves);
  return o;
}

// ---------------------------------------------------------------------------------------------
// 8. Determinism and persistence

Outcome determinism(const fs::path &work) {
  Outcome o;
  const auto mini = Preset::mini();
  ExperimentOptions opt;
  opt.deterministic = true;
  fs::remove_all(work / "repro_a");
  fs::remove_all(work / "repro_b");
  run_experiment(work / "repro_a", mini, opt);
  run_experiment(work / "repro_b", mini, opt);
  for (const char *name : {"report.csv", "learning_curve.csv", "signal_error.csv"}) {
    const auto a = store::read_bytes(work / "repro_a" / "report" / name);
    const auto b = store::read_bytes(work / "repro_b" / "report" / name);
    o.check(a == b && !a.empty(), std::string(name) + " identical across runs (mini preset)");
  }

  const auto dir = work / "roundtrip";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto rec = generate_record(mini, 77, 0);
  store::save_field(dir / "f.sosf", rec.field_accurate);
  store::save_measurements(dir / "m.msig", rec.y_accurate_noisy);
  const auto models = load_models(models_subdir(work / "repro_a" / "models", mini.n_train_grid.back()));
  store::save_network(dir / "phi.nnet", models.stage_a.phi);
  save_preset(dir / "preset.json", mini);
  bool same = store::load_field(dir / "f.sosf") == rec.field_accurate &&
              store::load_measurements(dir / "m.msig", Tier::accurate).data == rec.y_accurate_noisy.data &&
              store::load_network(dir / "phi.nnet") == models.stage_a.phi &&
              json(load_preset(dir / "preset.json")) == json(mini);
  save_models(dir / "models", models);
  const auto back = load_models(dir / "models");
  same = same && back.stage_a.encoder == models.stage_a.encoder && back.stage_a.decoder == models.stage_a.decoder &&
         back.direct == models.direct;
  o.check(same, "field, measurement, network, model-set and preset round trips bit-identical");
  return o;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"acceptance criteria"};
  std::string work = "acceptance_work";
  std::string only;
  int threads = 0;
  app.add_option("--work-dir", work, "scratch directory for generated data and models");
  app.add_option("--only", only, "comma-separated criteria to run (default all)");
  app.add_option("--threads", threads, "worker threads (default 1)");
  CLI11_PARSE(app, argc, argv);
  if (threads > 0) set_thread_count(threads);

  std::set<int> selected;
  {
    std::stringstream s(only);
    std::string item;
    while (std::getline(s, item, ','))
      if (!item.empty()) selected.insert(std::stoi(item));
  }
  auto wanted = [&](int k) { return selected.empty() || selected.count(k) > 0; };
  const fs::path work_dir = fs::absolute(work);
  fs::create_directories(work_dir);

  const std::map<int, std::string> titles = {
      {1, "wave physics"},  {2, "adjoint gradient"},     {3, "neural engine"},     {4, "denoising"},
      {5, "signal conversion"}, {6, "method ordering"}, {7, "runtime contrast"}, {8, "determinism and persistence"}};
  std::optional<DeskRun> desk;
  auto desk_run = [&]() -> const DeskRun & {
    if (!desk) desk = run_desk(work_dir / "desk");
    return *desk;
  };

  bool all = true;
  for (int k = 1; k <= 8; ++k) {
    if (!wanted(k)) continue;
    log("criterion " + std::to_string(k) + ": " + titles.at(k));
    Outcome o;
    try {
      switch (k) {
      case 1: o = wave_physics(); break;
      case 2: o = adjoint_gradient(); break;
      case 3: o = neural_engine(); break;
      case 4: o = denoising(desk_run()); break;
      case 5: o = conversion(desk_run()); break;
      case 6: o = ordering(desk_run()); break;
      case 7: o = runtime_contrast(desk_run()); break;
      case 8: o = determinism(work_dir); break;
      }
    } catch (const std::exception &e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    all = all && o.pass;
    std::printf("criterion %d %s: %s | %s\n", k, o.pass ? "PASS" : "FAIL", titles.at(k).c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
