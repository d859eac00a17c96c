#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nnaee/adjoint.hpp"
#include "nnaee/model.hpp"
#include "nnaee/neural.hpp"
#include "nnaee/preset.hpp"

namespace nnaee::pipeline {

namespace fs = std::filesystem;

/// Deterministic 64-bit mix of a base seed and an index.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

/// Base seeds of the three data sets drawn from one master seed.
std::uint64_t training_seed(std::uint64_t master);
std::uint64_t validation_seed(std::uint64_t master);
std::uint64_t test_seed(std::uint64_t master);

/// One training or validation sample. All numeric payloads are rounded to binary32 so a
/// record in memory equals the same record read back from disk.
struct DatasetRecord {
  int index = 0;
  std::uint64_t seed = 0;
  SOSField field_accurate;
  SOSField field_surrogate; // project(field_accurate) onto the surrogate grid
  MeasurementSet y_accurate_noisy;
  MeasurementSet y_accurate_clean;
  MeasurementSet y_surrogate_clean;
};

/// Record `index` of the set whose base seed is `base_seed`.
DatasetRecord generate_record(const Preset &preset, std::uint64_t base_seed, int index);

/// Records first_index .. first_index + n - 1, generated in parallel.
std::vector<DatasetRecord> generate_dataset(const Preset &preset, int n, std::uint64_t base_seed,
                                            int first_index = 0);

/// One held-out case: a test-scene field simulated on the physical tier.
struct TestCase {
  int index = 0;
  std::uint64_t seed = 0;
  SOSField field_true;      // physical grid
  SOSField field_reference; // project(field_true) onto the surrogate grid
  MeasurementSet y_measured;        // physical tier, noisy
  MeasurementSet y_surrogate_clean; // surrogate simulation of field_reference
};

TestCase generate_test_case(const Preset &preset, std::uint64_t base_seed, int index);
std::vector<TestCase> generate_test_set(const Preset &preset, int n, std::uint64_t base_seed);

/// Progress callback: short human-readable lines.
using Progress = std::function<void(const std::string &)>;

enum class DatasetKind { training, test };

/// Writes records into `dir` (skipping those already complete on disk) and then the manifest.
/// Returns the number of records generated in this call.
int write_dataset(const fs::path &dir, const Preset &preset, DatasetKind kind, int n,
                  std::uint64_t base_seed, const Progress &progress = {});

struct DatasetInfo {
  DatasetKind kind = DatasetKind::training;
  int count = 0;
  std::uint64_t base_seed = 0;
  Preset preset;
};

/// Reads and verifies the manifest of a dataset directory.
DatasetInfo inspect_dataset(const fs::path &dir);

/// Loads the first `limit` records (all when unset) after checksum verification.
std::vector<DatasetRecord> load_dataset(const fs::path &dir, std::optional<int> limit = {});
std::vector<TestCase> load_test_set(const fs::path &dir);

void save_test_case(const fs::path &dir, const TestCase &c);
TestCase load_test_case(const fs::path &dir, int index);

/// Trained signal-conversion networks.
struct StageA {
  nn::NetworkBundle encoder;
  nn::NetworkBundle decoder;
  nn::NetworkBundle phi;
  nn::TrainingRecord ae_record;
  nn::TrainingRecord phi_record;
};

/// Input and target traces of the autoencoder, one sample per column: noisy accurate traces
/// with clean targets, then surrogate traces with fresh noise and clean targets.
std::pair<nn::Matrix, nn::Matrix> autoencoder_samples(std::span<const DatasetRecord> records,
                                                      const Preset &preset);

/// Trains the autoencoder and returns the encoder and decoder halves.
std::pair<nn::NetworkBundle, nn::NetworkBundle>
train_autoencoder(std::span<const DatasetRecord> train, std::span<const DatasetRecord> valid,
                  const Preset &preset, nn::TrainingRecord *record = nullptr);

/// Code-space conversion network from encoded noisy accurate signals to encoded clean
/// surrogate signals.
nn::NetworkBundle train_phi(std::span<const DatasetRecord> train,
                            std::span<const DatasetRecord> valid, const nn::NetworkBundle &encoder,
                            const Preset &preset, nn::TrainingRecord *record = nullptr);

StageA train_stage_a(std::span<const DatasetRecord> train, std::span<const DatasetRecord> valid,
                     const Preset &preset);

/// decoder(phi(encoder(y))) trace by trace; the result is labelled as surrogate-tier data.
MeasurementSet convert_signal(const nn::NetworkBundle &encoder, const nn::NetworkBundle &phi,
                              const nn::NetworkBundle &decoder, const MeasurementSet &y);

/// Signal conversion followed by adjoint reconstruction on the surrogate tier.
adjoint::Reconstruction nnaee_reconstruct(const MeasurementSet &y, const StageA &bundles,
                                          const Preset &preset,
                                          const adjoint::InversionOptions &options);

/// Block-sparse net from codes of the noisy accurate signals to the flattened surrogate field.
nn::NetworkBundle train_direct_inversion(std::span<const DatasetRecord> train,
                                         std::span<const DatasetRecord> valid,
                                         const nn::NetworkBundle &encoder, const Preset &preset,
                                         nn::TrainingRecord *record = nullptr);

/// Direct-network estimate on the surrogate grid, clamped to the inversion bounds.
SOSField direct_predict(const nn::NetworkBundle &direct, const nn::NetworkBundle &encoder,
                        const MeasurementSet &y, const Preset &preset);

/// Mean over (s, r) of the L2 norm of the trace difference.
double mean_trace_error(const MeasurementSet &a, const MeasurementSet &b);

/// RMSE over the interior region of two fields on the grid of `config`.
double interior_rmse(const SOSField &a, const SOSField &b, const ModelConfig &config);

enum class Method { accurate, crm, nnaee, direct };
std::string to_string(Method m);
Method method_from_string(const std::string &name);

/// Networks trained on the first n_train records.
struct ModelSet {
  int n_train = 0;
  StageA stage_a;
  std::optional<nn::NetworkBundle> direct;
  std::optional<nn::TrainingRecord> direct_record;
};

void save_training_record(const fs::path &path, const nn::TrainingRecord &record);
nn::TrainingRecord load_training_record(const fs::path &path);

/// Lists the networks and training records present in `dir`.
void write_models_manifest(const fs::path &dir, int n_train);
/// encoder.nnet, decoder.nnet, phi.nnet, optional direct.nnet, training records, manifest.
void save_models(const fs::path &dir, const ModelSet &models);
/// Verifies the manifest; a positive n_train must match the stored one.
ModelSet load_models(const fs::path &dir, int n_train = 0);
/// Subdirectory of a models directory holding the networks for n_train.
fs::path models_subdir(const fs::path &models_dir, int n_train);

/// Any one method applied to one measurement set; returns a surrogate-grid estimate.
struct MethodResult {
  SOSField estimate;
  std::optional<adjoint::Reconstruction> reconstruction;
  double seconds = 0.0;
};
MethodResult run_method(Method method, const MeasurementSet &y, const Preset &preset,
                        const ModelSet *models);

struct ReportRow {
  int case_index = 0;
  Method method = Method::crm;
  int n_train = 0; // 0 for methods without training
  double rmse = 0.0;
  double seconds = 0.0;
};

struct CurvePoint {
  int n_train = 0;
  Method method = Method::crm;
  double mean_rmse = 0.0;
};

struct SignalError {
  int n_train = 0;
  double unconverted = 0.0; // mean over cases of mean_trace_error(y_measured, y_surrogate_clean)
  double converted = 0.0;   // same with the converted signal
};

struct EvaluationReport {
  std::vector<ReportRow> rows;
  std::vector<SignalError> signal_errors;

  /// Mean RMSE per (n_train, method), in first-appearance order.
  std::vector<CurvePoint> learning_curve() const;
  double mean_rmse(Method method, int n_train) const;
  double mean_seconds(Method method, int n_train) const;
};

struct EvaluationOptions {
  std::vector<Method> methods{Method::accurate, Method::crm, Method::nnaee, Method::direct};
  /// Zero every timing column so reports compare byte for byte.
  bool deterministic = false;
  Progress progress;
};

/// Every method on every test case; trained methods once per model set.
EvaluationReport evaluate(const std::vector<TestCase> &cases, const std::vector<ModelSet> &models,
                          const Preset &preset, const EvaluationOptions &options);

std::string report_csv(const EvaluationReport &report);
std::string learning_curve_csv(const EvaluationReport &report);
std::string signal_error_csv(const EvaluationReport &report);
/// report.csv, learning_curve.csv and signal_error.csv.
void write_report(const fs::path &dir, const EvaluationReport &report);

struct ExperimentOptions {
  bool deterministic = false;
  Progress progress;
};

/// Data generation, training for every n_train, and evaluation under `work_dir`.
EvaluationReport run_experiment(const fs::path &work_dir, const Preset &preset,
                                const ExperimentOptions &options);

} // namespace nnaee::pipeline
