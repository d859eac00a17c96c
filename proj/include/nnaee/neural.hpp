#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nnaee/model.hpp"

namespace nnaee::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { relu, linear };

std::string to_string(Activation a);
Activation activation_from_string(const std::string &name);

struct LayerSpec {
  int in_width = 0;
  int out_width = 0;
  Activation activation = Activation::linear;
};

/// Contiguous slice of a stage's input vector.
struct Segment {
  int offset = 0;
  int width = 0;
  friend bool operator==(const Segment &, const Segment &) = default;
};

/// Dense affine map reading a list of input segments (concatenated in order) and writing
/// a contiguous slice of its stage's output.
struct Layer {
  std::string name;
  Activation activation = Activation::linear;
  std::vector<Segment> inputs;
  int output_offset = 0;
  Matrix weight; // out x in
  Vector bias;

  int in_width() const { return static_cast<int>(weight.cols()); }
  int out_width() const { return static_cast<int>(weight.rows()); }
  LayerSpec spec() const { return {in_width(), out_width(), activation}; }

  friend bool operator==(const Layer &a, const Layer &b) {
    return a.name == b.name && a.activation == b.activation && a.inputs == b.inputs &&
           a.output_offset == b.output_offset && a.weight.rows() == b.weight.rows() &&
           a.weight.cols() == b.weight.cols() && a.bias.size() == b.bias.size() &&
           a.weight == b.weight && a.bias == b.bias;
  }
};

/// Layers evaluated side by side on the same input; their outputs tile [0, out_width).
struct Stage {
  int out_width = 0;
  std::vector<Layer> layers;
  friend bool operator==(const Stage &, const Stage &) = default;
};

/// Feed-forward network of stages. A dense chain has one layer per stage; block-sparse
/// networks route input blocks to parallel subnets. With `residual` set the network input
/// is added to the final output.
///
/// Batched calls take one sample per column.
class Network {
public:
  Network() = default;
  explicit Network(int input_width) : input_width_(input_width) {}

  /// Appends a stage; throws DimensionError when its wiring does not fit the current output.
  void add_stage(Stage stage);
  void set_residual(bool on);

  int input_width() const { return input_width_; }
  int output_width() const;
  bool residual() const { return residual_; }
  const std::vector<Stage> &stages() const { return stages_; }
  std::vector<Stage> &stages() { return stages_; }
  std::size_t parameter_count() const;

  Matrix forward(const Matrix &x) const;
  Vector forward(const Vector &x) const;
  /// Output of every stage; element 0 is the input itself.
  std::vector<Matrix> forward_trace(const Matrix &x) const;

  struct Gradients {
    std::vector<std::vector<Matrix>> weight; // [stage][layer]
    std::vector<std::vector<Vector>> bias;
    Matrix input;
    std::vector<double> flat() const;
  };
  /// Reverse-mode gradients of sum(output_grad .* forward(x)).
  Gradients backward(const Matrix &x, const Matrix &output_grad) const;
  Gradients backward(const std::vector<Matrix> &trace, const Matrix &output_grad) const;

  /// Parameters in stage, layer, weight (column-major), bias order.
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(const std::vector<double> &p);
  bool all_finite() const;

  /// Stages [first, last) as a standalone network; residual is dropped.
  Network slice(std::size_t first, std::size_t last) const;
  /// Chains `next` after this network. Neither may be residual.
  Network then(const Network &next) const;

  friend bool operator==(const Network &, const Network &) = default;

private:
  int input_width_ = 0;
  bool residual_ = false;
  std::vector<Stage> stages_;
};

/// Affine scaling wrapped around a network: y = output_scale * net(input_scale * x) + output_offset.
struct Normalization {
  double input_scale = 1.0;
  double output_scale = 1.0;
  double output_offset = 0.0;
  friend bool operator==(const Normalization &, const Normalization &) = default;
};

/// Adam moment accumulators, laid out like Network::flat_parameters().
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  friend bool operator==(const AdamState &, const AdamState &) = default;
};

struct NetworkBundle {
  std::string kind; // encoder, decoder, autoencoder, phi, direct, ...
  Network net;
  Normalization norm;
  AdamState optimizer;

  Matrix apply(const Matrix &x) const;
  Vector apply(const Vector &x) const;
  friend bool operator==(const NetworkBundle &, const NetworkBundle &) = default;
};

struct TrainOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 64;
  int epochs = 50;
  std::uint64_t seed = 0;
  std::string loss = "mse";
  /// Used when no explicit validation set is given.
  double validation_fraction = 0.1;
  /// Stop after this many epochs without a new best validation loss; 0 disables.
  int patience = 10;
  bool verbose = false;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0; // 0 is the untrained network
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainingRecord {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_validation_loss = 0.0;
  std::size_t samples = 0;
};

/// Mean squared error over all entries.
double mse(const Matrix &prediction, const Matrix &target);

/// Mini-batch Adam on MSE. Inputs and targets are raw (unnormalized) values, one sample per
/// column; the bundle's normalization is applied before the network sees them. Keeps the
/// parameters of the best validation epoch. Throws DivergenceError on a non-finite loss.
TrainingRecord train(NetworkBundle &bundle, const Matrix &inputs, const Matrix &targets,
                     const TrainOptions &options);
TrainingRecord train(NetworkBundle &bundle, const Matrix &inputs, const Matrix &targets,
                     const Matrix &val_inputs, const Matrix &val_targets,
                     const TrainOptions &options);

/// Kaiming initialization for ReLU layers, Glorot for linear ones, zero biases.
void initialize(Network &net, std::uint64_t seed);

Network dense_chain(int input_width, const std::vector<LayerSpec> &layers);

struct AutoencoderWidths {
  std::vector<int> hidden; // encoder hidden widths, mirrored by the decoder
};

/// Encoder m_t -> m_t/2 -> 4 m_p -> m_p and the mirrored decoder, both ReLU, ReLU, linear.
std::pair<Network, Network> build_autoencoder(int m_t, int m_p);
std::pair<Network, Network> build_autoencoder(int m_t, int m_p, const AutoencoderWidths &widths);

struct PhiWidths {
  int hidden = 256; // width of every subnet in the three ReLU stages
};

/// Block-sparse residual network on m_s blocks of width m_r * m_p.
///
/// Stage 1 subnet k reads the fan_in_1 input blocks centred on k (cyclic), stages 2 and 3
/// read fan_in_2 adjacent subnet outputs of the previous stage, stage 4 maps each subnet
/// linearly back to a block, and the input is added to the output.
Network build_phi(int m_s, int m_r, int m_p, int fan_in_1, int fan_in_2,
                  const PhiWidths &widths = {});

/// Cyclic neighbourhood of `centre` with `count` members, offsets -(count-1)/2 .. count/2.
std::vector<int> cyclic_window(int centre, int count, int n);

/// build_phi's sparse stages followed by one dense linear layer to `outputs`.
Network build_direct(int m_s, int m_r, int m_p, int fan_in_1, int fan_in_2, int outputs,
                     const PhiWidths &widths = {});

/// Parameter count of build_phi without building it.
std::size_t phi_parameters(int m_s, int m_r, int m_p, int fan_in_1, int fan_in_2,
                           const PhiWidths &widths = {});

/// Parameter count of a fully connected net with the same stage widths as build_phi.
std::size_t dense_equivalent_parameters(int m_s, int m_r, int m_p, const PhiWidths &widths = {});

/// Codes of every trace, laid out M_s x M_r x M_p (row-major) in the returned vector.
std::vector<double> encode_set(const NetworkBundle &encoder, const MeasurementSet &m);

/// Inverse of encode_set; `like` supplies shape, dt, radius and tier.
MeasurementSet decode_set(const NetworkBundle &decoder, const std::vector<double> &codes,
                          const MeasurementSet &like);

/// Traces of a measurement set as matrix columns, (s, r) order.
Matrix traces_as_columns(const MeasurementSet &m);

} // namespace nnaee::nn
