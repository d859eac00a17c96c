#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "nnaee/adjoint.hpp"
#include "nnaee/errors.hpp"
#include "nnaee/export.hpp"
#include "nnaee/parallel.hpp"
#include "nnaee/pipeline.hpp"
#include "nnaee/preset.hpp"
#include "nnaee/store.hpp"
#include "nnaee/wavesim.hpp"

namespace fs = std::filesystem;
using namespace nnaee;
using nlohmann::json;

namespace {

bool g_quiet = false;

void progress(const std::string &line) {
  if (!g_quiet) std::cerr << "[nnaee] " << line << std::endl;
}

/// The one line a failing run leaves on stderr besides progress output.
int fail(const std::string &kind, const std::string &message, const std::string &path = {}) {
  json line{{"error", kind}, {"message", message}};
  if (!path.empty()) line["path"] = path;
  std::cerr << line.dump() << std::endl;
  return kind == "usage" ? 2 : 1;
}

Tier parse_tier(const std::string &s) { return tier_from_string(s); }

std::vector<pipeline::DatasetRecord> records_or_split(const std::string &dataset,
                                                      const std::string &validation,
                                                      std::optional<int> n_train,
                                                      std::vector<pipeline::DatasetRecord> &valid) {
  auto train = pipeline::load_dataset(dataset, n_train);
  if (!validation.empty()) {
    valid = pipeline::load_dataset(validation);
  } else if (train.size() == 1) {
    valid = train;
  } else {
    const std::size_t hold = std::max<std::size_t>(1, train.size() / 10);
    valid.assign(train.end() - static_cast<std::ptrdiff_t>(hold), train.end());
    train.resize(train.size() - hold);
    progress("no validation set given; holding out the last " + std::to_string(hold) + " records");
  }
  return train;
}

struct TrainArgs {
  std::string dataset;
  std::string validation;
  std::optional<int> n_train;
  std::optional<int> epochs;
  std::string ae_model;
  std::string out_model;
};

void add_train_flags(CLI::App *cmd, TrainArgs &a, bool needs_ae) {
  cmd->add_option("--dataset", a.dataset, "training dataset directory")->required();
  cmd->add_option("--validation", a.validation,
                  "validation dataset directory (default: last tenth of --dataset)");
  cmd->add_option("--n-train", a.n_train, "use only the first N training records")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--epochs", a.epochs, "override the preset epoch budget")
      ->check(CLI::PositiveNumber);
  if (needs_ae)
    cmd->add_option("--ae-model", a.ae_model, "model directory holding encoder.nnet")->required();
  cmd->add_option("--out-model", a.out_model,
                  needs_ae ? "model directory to write into (default: --ae-model)"
                           : "model directory to write into")
      ->required(!needs_ae);
}

std::vector<int> parse_int_list(const std::string &text) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception &) {
      throw InvalidArgument("'" + item + "' is not an integer");
    }
  }
  if (out.empty()) throw InvalidArgument("empty list");
  return out;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Learned signal conversion for ultrasound sound-speed tomography"};
  app.require_subcommand(1);
  std::string preset_arg;
  int threads = 1;
  app.add_option("--preset", preset_arg,
                 std::string("built-in preset (desk, full, mini) or JSON file; default: $") +
                     pipeline::kPresetEnv + ", else desk");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", g_quiet, "suppress progress output");

  // preset
  auto *cmd_preset = app.add_subcommand("preset", "write the active preset as JSON");
  std::string preset_out;
  cmd_preset->add_option("--out", preset_out, "output file (default: standard output)");

  // gen-data
  auto *cmd_gen = app.add_subcommand("gen-data", "generate a training, validation or test set");
  std::string gen_kind = "training";
  std::optional<int> gen_n;
  std::optional<std::uint64_t> gen_seed;
  std::string gen_out;
  cmd_gen->add_option("--kind", gen_kind, "training, validation or test")
      ->check(CLI::IsMember({"training", "validation", "test"}));
  cmd_gen->add_option("--n", gen_n, "number of records (default from the preset)")
      ->check(CLI::PositiveNumber);
  cmd_gen->add_option("--seed", gen_seed, "base seed (default derived from the preset master seed)");
  cmd_gen->add_option("--out-dir", gen_out, "dataset directory")->required();

  // train-ae / train-phi / train-direct
  TrainArgs ae_args, phi_args, direct_args;
  auto *cmd_ae = app.add_subcommand("train-ae", "train the trace autoencoder");
  add_train_flags(cmd_ae, ae_args, false);
  auto *cmd_phi = app.add_subcommand("train-phi", "train the code-space conversion network");
  add_train_flags(cmd_phi, phi_args, true);
  auto *cmd_direct = app.add_subcommand("train-direct", "train the direct inversion network");
  add_train_flags(cmd_direct, direct_args, true);

  // simulate
  auto *cmd_sim = app.add_subcommand("simulate", "simulate measurements for a field");
  std::string sim_field, sim_tier = "physical", sim_out;
  std::optional<std::uint64_t> sim_noise_seed;
  cmd_sim->add_option("--field", sim_field, "SOSF field on the tier grid")->required();
  cmd_sim->add_option("--tier", sim_tier, "physical, accurate or surrogate")
      ->check(CLI::IsMember({"physical", "accurate", "surrogate"}));
  cmd_sim->add_option("--noise-seed", sim_noise_seed, "add the tier's measurement noise");
  cmd_sim->add_option("--out", sim_out, "output MSIG file")->required();

  // reconstruct
  auto *cmd_rec = app.add_subcommand("reconstruct", "reconstruct a field from measurements");
  std::string rec_meas, rec_method = "nnaee", rec_models, rec_out, rec_history;
  std::optional<int> rec_iterations;
  cmd_rec->add_option("--measurement", rec_meas, "MSIG measurement file")->required();
  cmd_rec->add_option("--method", rec_method, "crm, accurate, nnaee or direct")
      ->check(CLI::IsMember({"crm", "accurate", "nnaee", "direct"}));
  cmd_rec->add_option("--models", rec_models, "model directory (nnaee and direct)");
  cmd_rec->add_option("--max-iterations", rec_iterations, "override the iteration budget")
      ->check(CLI::NonNegativeNumber);
  cmd_rec->add_option("--history", rec_history, "misfit history CSV");
  cmd_rec->add_option("--out", rec_out, "output SOSF field on the surrogate grid")->required();

  // evaluate
  auto *cmd_eval = app.add_subcommand("evaluate", "compare methods on a test set");
  std::string eval_test, eval_models, eval_grid, eval_methods, eval_out;
  bool eval_det = false;
  cmd_eval->add_option("--test-dir", eval_test, "test set directory")->required();
  cmd_eval->add_option("--models-dir", eval_models, "directory with one n<N_train> model directory each");
  cmd_eval->add_option("--n-train-grid", eval_grid, "comma-separated n_train values (default from the preset)");
  cmd_eval->add_option("--methods", eval_methods, "comma-separated subset of accurate,crm,nnaee,direct");
  cmd_eval->add_option("--out-report", eval_out, "report directory")->required();
  cmd_eval->add_flag("--deterministic", eval_det, "write zero timings so reports compare exactly");

  // experiment
  auto *cmd_exp = app.add_subcommand("experiment", "generate data, train every n_train, evaluate");
  std::string exp_dir;
  bool exp_det = false;
  cmd_exp->add_option("--work-dir", exp_dir, "working directory")->required();
  cmd_exp->add_flag("--deterministic", exp_det, "write zero timings so reports compare exactly");

  // export
  auto *cmd_export = app.add_subcommand("export", "export a field, trace or report");
  std::string ex_what, ex_in, ex_out, ex_format;
  int ex_tx = 0, ex_rx = 0;
  cmd_export->add_option("what", ex_what, "field, trace or report")
      ->required()
      ->check(CLI::IsMember({"field", "trace", "report"}));
  cmd_export->add_option("--in", ex_in, "SOSF, MSIG or report.csv input")->required();
  cmd_export->add_option("--out", ex_out, "output file")->required();
  cmd_export->add_option("--format", ex_format, "csv or pgm (default from the output extension)")
      ->check(CLI::IsMember({"csv", "pgm"}));
  cmd_export->add_option("--transmitter", ex_tx, "trace transmitter index");
  cmd_export->add_option("--receiver", ex_rx, "trace receiver index");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    return fail("usage", e.what());
  }

  try {
    set_thread_count(threads);
    const pipeline::Preset preset =
        preset_arg.empty() ? pipeline::default_preset() : pipeline::resolve_preset(preset_arg);
    preset.validate();

    if (*cmd_preset) {
      const std::string text = json(preset).dump(2) + "\n";
      if (preset_out.empty())
        std::cout << text;
      else
        store::write_text_atomic(preset_out, text);
    } else if (*cmd_gen) {
      pipeline::DatasetKind kind =
          gen_kind == "test" ? pipeline::DatasetKind::test : pipeline::DatasetKind::training;
      int n = gen_kind == "training" ? preset.max_train()
              : gen_kind == "validation" ? preset.n_validation
                                         : preset.n_test;
      std::uint64_t seed = gen_kind == "training"     ? pipeline::training_seed(preset.master_seed)
                           : gen_kind == "validation" ? pipeline::validation_seed(preset.master_seed)
                                                      : pipeline::test_seed(preset.master_seed);
      if (gen_n) n = *gen_n;
      if (gen_seed) seed = *gen_seed;
      progress("generating " + std::to_string(n) + " " + gen_kind + " records into " + gen_out);
      pipeline::write_dataset(gen_out, preset, kind, n, seed, progress);
    } else if (*cmd_ae) {
      auto p = preset;
      if (ae_args.epochs) p.ae_training.epochs = *ae_args.epochs;
      p.ae_training.verbose = !g_quiet;
      std::vector<pipeline::DatasetRecord> valid;
      const auto train = records_or_split(ae_args.dataset, ae_args.validation, ae_args.n_train, valid);
      progress("training autoencoder on " + std::to_string(train.size()) + " records");
      nn::TrainingRecord record;
      auto [encoder, decoder] = pipeline::train_autoencoder(train, valid, p, &record);
      const fs::path dir = ae_args.out_model;
      fs::create_directories(dir);
      store::save_network(dir / "encoder.nnet", encoder);
      store::save_network(dir / "decoder.nnet", decoder);
      pipeline::save_training_record(dir / "ae_training.json", record);
      pipeline::write_models_manifest(dir, static_cast<int>(train.size()));
    } else if (*cmd_phi || *cmd_direct) {
      const bool phi = cmd_phi->parsed();
      TrainArgs &a = phi ? phi_args : direct_args;
      auto p = preset;
      auto &opts = phi ? p.phi_training : p.direct_training;
      if (a.epochs) opts.epochs = *a.epochs;
      opts.verbose = !g_quiet;
      const fs::path ae_dir = a.ae_model;
      const fs::path dir = a.out_model.empty() ? ae_dir : fs::path(a.out_model);
      const auto encoder = store::load_network(ae_dir / "encoder.nnet");
      std::vector<pipeline::DatasetRecord> valid;
      const auto train = records_or_split(a.dataset, a.validation, a.n_train, valid);
      progress(std::string("training ") + (phi ? "conversion" : "direct inversion") +
               " network on " + std::to_string(train.size()) + " records");
      nn::TrainingRecord record;
      fs::create_directories(dir);
      if (phi) {
        store::save_network(dir / "phi.nnet", pipeline::train_phi(train, valid, encoder, p, &record));
        pipeline::save_training_record(dir / "phi_training.json", record);
      } else {
        store::save_network(dir / "direct.nnet",
                            pipeline::train_direct_inversion(train, valid, encoder, p, &record));
        pipeline::save_training_record(dir / "direct_training.json", record);
      }
      if (dir != ae_dir) {
        for (const char *f : {"encoder.nnet", "decoder.nnet", "ae_training.json"})
          if (fs::exists(ae_dir / f))
            fs::copy_file(ae_dir / f, dir / f, fs::copy_options::overwrite_existing);
      }
      pipeline::write_models_manifest(dir, static_cast<int>(train.size()));
    } else if (*cmd_sim) {
      const auto &config = preset.config(parse_tier(sim_tier));
      const auto field = store::load_field(sim_field);
      auto y = wave::simulate_all(field, config, preset.geometry, preset.waveform);
      if (sim_noise_seed) y = wave::add_noise(y, config.noise_variance, *sim_noise_seed);
      store::save_measurements(sim_out, y);
    } else if (*cmd_rec) {
      auto p = preset;
      if (rec_iterations) p.inversion.max_iterations = *rec_iterations;
      const auto method = pipeline::method_from_string(rec_method);
      const auto y = store::load_measurements(rec_meas);
      std::optional<pipeline::ModelSet> models;
      if (method == pipeline::Method::nnaee || method == pipeline::Method::direct) {
        if (rec_models.empty()) throw InvalidArgument("--models is required for method " + rec_method);
        models = pipeline::load_models(rec_models);
      }
      progress("reconstructing with " + rec_method);
      const auto result = pipeline::run_method(method, y, p, models ? &*models : nullptr);
      store::save_field(rec_out, result.estimate);
      if (!rec_history.empty()) {
        if (!result.reconstruction) throw InvalidArgument("method direct has no misfit history");
        store::write_text_atomic(rec_history, adjoint::history_csv(result.reconstruction->history));
      }
      if (result.reconstruction)
        progress("stopped after " + std::to_string(result.reconstruction->history.size() - 1) +
                 " iterations: " + result.reconstruction->stop_reason);
    } else if (*cmd_eval) {
      pipeline::EvaluationOptions opts;
      opts.deterministic = eval_det;
      opts.progress = progress;
      if (!eval_methods.empty()) {
        opts.methods.clear();
        std::stringstream in(eval_methods);
        std::string item;
        while (std::getline(in, item, ',')) opts.methods.push_back(pipeline::method_from_string(item));
      }
      const bool trained = std::any_of(opts.methods.begin(), opts.methods.end(), [](auto m) {
        return m == pipeline::Method::nnaee || m == pipeline::Method::direct;
      });
      std::vector<pipeline::ModelSet> models;
      if (trained) {
        if (eval_models.empty()) throw InvalidArgument("--models-dir is required for trained methods");
        const auto grid = eval_grid.empty() ? preset.n_train_grid : parse_int_list(eval_grid);
        for (int n : grid)
          models.push_back(pipeline::load_models(pipeline::models_subdir(eval_models, n), n));
      }
      const auto cases = pipeline::load_test_set(eval_test);
      const auto report = pipeline::evaluate(cases, models, preset, opts);
      pipeline::write_report(eval_out, report);
    } else if (*cmd_exp) {
      pipeline::ExperimentOptions opts;
      opts.deterministic = exp_det;
      opts.progress = progress;
      pipeline::run_experiment(exp_dir, preset, opts);
    } else if (*cmd_export) {
      std::string format = ex_format;
      if (format.empty()) format = fs::path(ex_out).extension() == ".pgm" ? "pgm" : "csv";
      if (ex_what == "field") {
        const auto field = store::load_field(ex_in);
        if (format == "pgm")
          store::write_atomic(ex_out, exporting::field_pgm(field));
        else
          store::write_text_atomic(ex_out, exporting::field_csv(field));
      } else {
        if (format == "pgm") throw InvalidArgument("only fields export as pgm");
        if (ex_what == "trace")
          store::write_text_atomic(
              ex_out, exporting::trace_csv(store::load_measurements(ex_in), ex_tx, ex_rx));
        else
          store::write_text_atomic(ex_out, exporting::report_table_csv(store::read_text(ex_in)));
      }
    }
  } catch (const StoreError &e) {
    return fail(e.kind(), e.what(), e.path());
  } catch (const Error &e) {
    return fail(e.kind(), e.what());
  } catch (const fs::filesystem_error &e) {
    return fail("io", e.what(), e.path1().string());
  } catch (const std::exception &e) {
    return fail("internal", e.what());
  }
  return 0;
}
