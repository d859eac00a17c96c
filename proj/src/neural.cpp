#include "nnaee/neural.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

namespace nnaee::nn {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "linear"; }

Activation activation_from_string(const std::string &name) {
  if (name == "relu") return Activation::relu;
  if (name == "linear") return Activation::linear;
  throw InvalidArgument("unknown activation '" + name + "'");
}

namespace {

// Rows of `src` selected by the segments, stacked in order.
Matrix gather_rows(const Matrix &src, const std::vector<Segment> &segments, int width) {
  Matrix out(width, src.cols());
  int row = 0;
  for (const auto &s : segments) {
    out.middleRows(row, s.width) = src.middleRows(s.offset, s.width);
    row += s.width;
  }
  return out;
}

bool covers_whole(const std::vector<Segment> &segments, Eigen::Index rows) {
  return segments.size() == 1 && segments[0].offset == 0 && segments[0].width == rows;
}

void apply_layer(const Layer &layer, const Matrix &stage_input, Matrix &stage_output) {
  auto out = stage_output.middleRows(layer.output_offset, layer.out_width());
  if (covers_whole(layer.inputs, stage_input.rows())) {
    out.noalias() = layer.weight * stage_input;
  } else {
    const Matrix in = gather_rows(stage_input, layer.inputs, layer.in_width());
    out.noalias() = layer.weight * in;
  }
  out.colwise() += layer.bias;
  if (layer.activation == Activation::relu) out = out.cwiseMax(0.0);
}

} // namespace

void Network::add_stage(Stage stage) {
  const int in = output_width();
  if (stage.out_width < 1) throw DimensionError("stage output width must be >= 1");
  std::vector<std::pair<int, int>> slices;
  for (const auto &layer : stage.layers) {
    if (layer.weight.rows() < 1 || layer.weight.cols() < 1)
      throw DimensionError("layer '" + layer.name + "' has an empty weight matrix");
    if (layer.bias.size() != layer.weight.rows())
      throw DimensionError("layer '" + layer.name + "' bias does not match its output width");
    int total = 0;
    for (const auto &s : layer.inputs) {
      if (s.width < 1 || s.offset < 0 || s.offset + s.width > in)
        throw DimensionError("layer '" + layer.name + "' reads outside its stage input of width " +
                             std::to_string(in));
      total += s.width;
    }
    if (total != layer.in_width())
      throw DimensionError("layer '" + layer.name + "' input segments sum to " +
                           std::to_string(total) + ", weight expects " +
                           std::to_string(layer.in_width()));
    slices.emplace_back(layer.output_offset, layer.out_width());
  }
  std::sort(slices.begin(), slices.end());
  int next = 0;
  for (const auto &[offset, width] : slices) {
    if (offset != next) throw DimensionError("stage outputs must tile the stage width");
    next += width;
  }
  if (next != stage.out_width) throw DimensionError("stage outputs must tile the stage width");
  stages_.push_back(std::move(stage));
}

void Network::set_residual(bool on) {
  if (on && output_width() != input_width_)
    throw DimensionError("residual sum needs equal input and output widths");
  residual_ = on;
}

int Network::output_width() const {
  return stages_.empty() ? input_width_ : stages_.back().out_width;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto &st : stages_)
    for (const auto &l : st.layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

std::vector<Matrix> Network::forward_trace(const Matrix &x) const {
  if (x.rows() != input_width_)
    throw DimensionError("network expects input width " + std::to_string(input_width_) +
                         ", got " + std::to_string(x.rows()));
  std::vector<Matrix> trace;
  trace.reserve(stages_.size() + 1);
  trace.push_back(x);
  for (const auto &stage : stages_) {
    Matrix out(stage.out_width, x.cols());
    for (const auto &layer : stage.layers) apply_layer(layer, trace.back(), out);
    trace.push_back(std::move(out));
  }
  return trace;
}

Matrix Network::forward(const Matrix &x) const {
  if (x.rows() != input_width_)
    throw DimensionError("network expects input width " + std::to_string(input_width_) +
                         ", got " + std::to_string(x.rows()));
  Matrix cur = x;
  for (const auto &stage : stages_) {
    Matrix out(stage.out_width, x.cols());
    for (const auto &layer : stage.layers) apply_layer(layer, cur, out);
    cur = std::move(out);
  }
  if (residual_) cur += x;
  return cur;
}

Vector Network::forward(const Vector &x) const {
  const Matrix m = x;
  return forward(m).col(0);
}

Network::Gradients Network::backward(const Matrix &x, const Matrix &output_grad) const {
  return backward(forward_trace(x), output_grad);
}

Network::Gradients Network::backward(const std::vector<Matrix> &trace,
                                     const Matrix &output_grad) const {
  if (trace.size() != stages_.size() + 1)
    throw DimensionError("forward trace does not match the network depth");
  if (output_grad.rows() != output_width() || output_grad.cols() != trace.front().cols())
    throw DimensionError("output gradient shape does not match the network output");

  Gradients g;
  g.weight.resize(stages_.size());
  g.bias.resize(stages_.size());
  Matrix upstream = output_grad;
  for (std::size_t s = stages_.size(); s-- > 0;) {
    const Stage &stage = stages_[s];
    const Matrix &in = trace[s];
    const Matrix &out = trace[s + 1];
    Matrix d_in = Matrix::Zero(in.rows(), in.cols());
    g.weight[s].resize(stage.layers.size());
    g.bias[s].resize(stage.layers.size());
    for (std::size_t li = 0; li < stage.layers.size(); ++li) {
      const Layer &layer = stage.layers[li];
      Matrix dz = upstream.middleRows(layer.output_offset, layer.out_width());
      if (layer.activation == Activation::relu)
        dz.array() *= (out.middleRows(layer.output_offset, layer.out_width()).array() > 0.0)
                          .cast<double>();
      g.bias[s][li] = dz.rowwise().sum();
      const bool whole = covers_whole(layer.inputs, in.rows());
      if (whole) {
        g.weight[s][li].noalias() = dz * in.transpose();
        d_in.noalias() += layer.weight.transpose() * dz;
      } else {
        const Matrix gathered = gather_rows(in, layer.inputs, layer.in_width());
        g.weight[s][li].noalias() = dz * gathered.transpose();
        const Matrix d_gathered = layer.weight.transpose() * dz;
        int row = 0;
        for (const auto &seg : layer.inputs) {
          d_in.middleRows(seg.offset, seg.width) += d_gathered.middleRows(row, seg.width);
          row += seg.width;
        }
      }
    }
    upstream = std::move(d_in);
  }
  g.input = std::move(upstream);
  if (residual_) g.input += output_grad;
  return g;
}

std::vector<double> Network::Gradients::flat() const {
  std::vector<double> out;
  for (std::size_t s = 0; s < weight.size(); ++s)
    for (std::size_t l = 0; l < weight[s].size(); ++l) {
      out.insert(out.end(), weight[s][l].data(), weight[s][l].data() + weight[s][l].size());
      out.insert(out.end(), bias[s][l].data(), bias[s][l].data() + bias[s][l].size());
    }
  return out;
}

std::vector<double> Network::flat_parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto &st : stages_)
    for (const auto &l : st.layers) {
      out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
      out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
  return out;
}

void Network::set_flat_parameters(const std::vector<double> &p) {
  if (p.size() != parameter_count())
    throw DimensionError("expected " + std::to_string(parameter_count()) + " parameters, got " +
                         std::to_string(p.size()));
  std::size_t i = 0;
  for (auto &st : stages_)
    for (auto &l : st.layers) {
      std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(i), l.weight.size(), l.weight.data());
      i += static_cast<std::size_t>(l.weight.size());
      std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(i), l.bias.size(), l.bias.data());
      i += static_cast<std::size_t>(l.bias.size());
    }
}

bool Network::all_finite() const {
  for (const auto &st : stages_)
    for (const auto &l : st.layers)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

Network Network::slice(std::size_t first, std::size_t last) const {
  if (first >= last || last > stages_.size()) throw InvalidArgument("invalid stage range");
  const int in = first == 0 ? input_width_ : stages_[first - 1].out_width;
  Network out(in);
  for (std::size_t s = first; s < last; ++s) out.add_stage(stages_[s]);
  return out;
}

Network Network::then(const Network &next) const {
  if (residual_ || next.residual_) throw InvalidArgument("cannot chain residual networks");
  if (next.input_width_ != output_width())
    throw DimensionError("chained network expects width " + std::to_string(next.input_width_) +
                         ", got " + std::to_string(output_width()));
  Network out = *this;
  for (const auto &st : next.stages_) out.add_stage(st);
  return out;
}

Matrix NetworkBundle::apply(const Matrix &x) const {
  Matrix y = net.forward(Matrix(x * norm.input_scale));
  y *= norm.output_scale;
  y.array() += norm.output_offset;
  return y;
}

Vector NetworkBundle::apply(const Vector &x) const {
  const Matrix m = x;
  return apply(m).col(0);
}

void TrainOptions::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw InvalidArgument("Adam betas must lie in [0, 1)");
  if (loss != "mse") throw InvalidArgument("unsupported loss '" + loss + "'");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw InvalidArgument("validation_fraction must lie in [0, 1)");
  if (patience < 0) throw InvalidArgument("patience must be >= 0");
}

double mse(const Matrix &prediction, const Matrix &target) {
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols())
    throw DimensionError("mse: shape mismatch");
  if (prediction.size() == 0) return 0.0;
  return (prediction - target).squaredNorm() / static_cast<double>(prediction.size());
}

namespace {

using Index = Eigen::Index;

struct SampleView {
  const Matrix *inputs = nullptr;
  const Matrix *targets = nullptr;
  std::vector<Index> columns;
};

void gather_batch(const SampleView &view, const Normalization &norm, std::size_t begin,
                  std::size_t end, Matrix &x, Matrix &t) {
  const auto n = static_cast<Index>(end - begin);
  x.resize(view.inputs->rows(), n);
  t.resize(view.targets->rows(), n);
  const double inv_out = 1.0 / norm.output_scale;
  for (Index j = 0; j < n; ++j) {
    const Index c = view.columns[begin + static_cast<std::size_t>(j)];
    x.col(j) = view.inputs->col(c) * norm.input_scale;
    t.col(j) = (view.targets->col(c).array() - norm.output_offset) * inv_out;
  }
}

// Loss in the normalized space the network is trained in.
double view_loss(const Network &net, const SampleView &view, const Normalization &norm) {
  if (view.columns.empty()) return 0.0;
  constexpr std::size_t chunk = 2048;
  double sum = 0.0;
  Matrix x, t;
  for (std::size_t b = 0; b < view.columns.size(); b += chunk) {
    const std::size_t e = std::min(view.columns.size(), b + chunk);
    gather_batch(view, norm, b, e, x, t);
    sum += (net.forward(x) - t).squaredNorm();
  }
  return sum / (static_cast<double>(view.columns.size()) * static_cast<double>(view.targets->rows()));
}

void adam_step(Network &net, const Network::Gradients &g, AdamState &state,
               const TrainOptions &o) {
  const std::size_t n = net.parameter_count();
  if (state.m.size() != n) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
    state.step = 0;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  const double lr = o.learning_rate * std::sqrt(c2) / c1;
  const double eps = o.epsilon * std::sqrt(c2);
  std::size_t offset = 0;
  auto update = [&](double *param, const double *grad, Index count) {
    double *m = state.m.data() + offset;
    double *v = state.v.data() + offset;
    for (Index i = 0; i < count; ++i) {
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * grad[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * grad[i] * grad[i];
      param[i] -= lr * m[i] / (std::sqrt(v[i]) + eps);
    }
    offset += static_cast<std::size_t>(count);
  };
  auto &stages = net.stages();
  for (std::size_t s = 0; s < stages.size(); ++s)
    for (std::size_t l = 0; l < stages[s].layers.size(); ++l) {
      Layer &layer = stages[s].layers[l];
      update(layer.weight.data(), g.weight[s][l].data(), layer.weight.size());
      update(layer.bias.data(), g.bias[s][l].data(), layer.bias.size());
    }
}

TrainingRecord run_training(NetworkBundle &bundle, SampleView train_view, const SampleView &val,
                            const TrainOptions &options) {
  options.validate();
  Network &net = bundle.net;
  if (train_view.inputs->rows() != net.input_width() ||
      train_view.targets->rows() != net.output_width())
    throw DimensionError("training data widths " + std::to_string(train_view.inputs->rows()) +
                         " -> " + std::to_string(train_view.targets->rows()) +
                         " do not match the network " + std::to_string(net.input_width()) +
                         " -> " + std::to_string(net.output_width()));
  if (train_view.columns.empty()) throw InvalidArgument("training set is empty");

  TrainingRecord record;
  record.samples = train_view.columns.size();
  const SampleView &val_view = val.columns.empty() ? train_view : val;
  auto check = [&](double loss, int epoch) {
    if (!std::isfinite(loss))
      throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch), epoch);
  };

  EpochRecord first{0, view_loss(net, train_view, bundle.norm),
                    view_loss(net, val_view, bundle.norm)};
  check(first.train_loss, 0);
  check(first.validation_loss, 0);
  record.epochs.push_back(first);
  record.best_epoch = 0;
  record.best_validation_loss = first.validation_loss;
  Network best = net;
  AdamState best_state = bundle.optimizer;

  std::mt19937_64 rng(options.seed);
  int stale = 0;
  Matrix x, t;
  const auto bs = static_cast<std::size_t>(options.batch_size);
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    std::shuffle(train_view.columns.begin(), train_view.columns.end(), rng);
    double sum = 0.0;
    for (std::size_t b = 0; b < train_view.columns.size(); b += bs) {
      const std::size_t e = std::min(train_view.columns.size(), b + bs);
      gather_batch(train_view, bundle.norm, b, e, x, t);
      const auto trace = net.forward_trace(x);
      Matrix out = trace.back();
      if (net.residual()) out += x;
      Matrix diff = out - t;
      sum += diff.squaredNorm();
      diff *= 2.0 / static_cast<double>(diff.size());
      const auto grads = net.backward(trace, diff);
      adam_step(net, grads, bundle.optimizer, options);
    }
    EpochRecord rec{epoch,
                    sum / (static_cast<double>(train_view.columns.size()) *
                           static_cast<double>(train_view.targets->rows())),
                    view_loss(net, val_view, bundle.norm)};
    check(rec.train_loss, epoch);
    check(rec.validation_loss, epoch);
    record.epochs.push_back(rec);
    if (options.verbose)
      std::cerr << "  epoch " << epoch << " train " << rec.train_loss << " val "
                << rec.validation_loss << '\n';
    if (rec.validation_loss < record.best_validation_loss) {
      record.best_validation_loss = rec.validation_loss;
      record.best_epoch = epoch;
      best = net;
      best_state = bundle.optimizer;
      stale = 0;
    } else if (options.patience > 0 && ++stale >= options.patience) {
      break;
    }
  }
  net = std::move(best);
  bundle.optimizer = std::move(best_state);
  return record;
}

std::vector<Index> iota_columns(Index n) {
  std::vector<Index> c(static_cast<std::size_t>(n));
  std::iota(c.begin(), c.end(), Index{0});
  return c;
}

} // namespace

TrainingRecord train(NetworkBundle &bundle, const Matrix &inputs, const Matrix &targets,
                     const TrainOptions &options) {
  if (inputs.cols() != targets.cols()) throw DimensionError("inputs and targets differ in count");
  auto columns = iota_columns(inputs.cols());
  std::mt19937_64 rng(options.seed ^ 0x5a17u);
  std::shuffle(columns.begin(), columns.end(), rng);
  auto n_val = static_cast<std::size_t>(std::floor(options.validation_fraction *
                                                   static_cast<double>(columns.size())));
  if (n_val >= columns.size()) n_val = 0;
  SampleView val{&inputs, &targets, {columns.end() - static_cast<std::ptrdiff_t>(n_val), columns.end()}};
  columns.resize(columns.size() - n_val);
  std::sort(columns.begin(), columns.end());
  std::sort(val.columns.begin(), val.columns.end());
  return run_training(bundle, {&inputs, &targets, std::move(columns)}, val, options);
}

TrainingRecord train(NetworkBundle &bundle, const Matrix &inputs, const Matrix &targets,
                     const Matrix &val_inputs, const Matrix &val_targets,
                     const TrainOptions &options) {
  if (inputs.cols() != targets.cols() || val_inputs.cols() != val_targets.cols())
    throw DimensionError("inputs and targets differ in count");
  if (val_inputs.rows() != inputs.rows() || val_targets.rows() != targets.rows())
    throw DimensionError("validation widths differ from training widths");
  return run_training(bundle, {&inputs, &targets, iota_columns(inputs.cols())},
                      {&val_inputs, &val_targets, iota_columns(val_inputs.cols())}, options);
}

void initialize(Network &net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto &stages = net.stages();
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const bool zero = net.residual() && s + 1 == stages.size();
    for (auto &layer : stages[s].layers) {
      layer.bias.setZero();
      if (zero) {
        layer.weight.setZero();
        continue;
      }
      const double fan_in = layer.in_width();
      const double fan_out = layer.out_width();
      const double stddev = layer.activation == Activation::relu
                                ? std::sqrt(2.0 / fan_in)
                                : std::sqrt(2.0 / (fan_in + fan_out));
      std::normal_distribution<double> dist(0.0, stddev);
      for (Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = dist(rng);
    }
  }
}

namespace {

Layer make_layer(std::string name, Activation act, std::vector<Segment> inputs, int out_offset,
                 int out_width) {
  int in = 0;
  for (const auto &s : inputs) in += s.width;
  Layer l;
  l.name = std::move(name);
  l.activation = act;
  l.inputs = std::move(inputs);
  l.output_offset = out_offset;
  l.weight = Matrix::Zero(out_width, in);
  l.bias = Vector::Zero(out_width);
  return l;
}

} // namespace

Network dense_chain(int input_width, const std::vector<LayerSpec> &layers) {
  if (input_width < 1) throw DimensionError("input width must be >= 1");
  Network net(input_width);
  int width = input_width;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto &spec = layers[i];
    if (spec.in_width != width)
      throw DimensionError("layer " + std::to_string(i) + " expects width " +
                           std::to_string(spec.in_width) + ", previous layer gives " +
                           std::to_string(width));
    if (spec.out_width < 1) throw DimensionError("layer widths must be >= 1");
    Stage st;
    st.out_width = spec.out_width;
    st.layers.push_back(make_layer("dense" + std::to_string(i), spec.activation, {{0, width}}, 0,
                                   spec.out_width));
    net.add_stage(std::move(st));
    width = spec.out_width;
  }
  return net;
}

std::pair<Network, Network> build_autoencoder(int m_t, int m_p) {
  return build_autoencoder(m_t, m_p, {{std::max(1, m_t / 2), 4 * m_p}});
}

std::pair<Network, Network> build_autoencoder(int m_t, int m_p, const AutoencoderWidths &widths) {
  if (m_p < 1 || m_p >= m_t) throw InvalidArgument("autoencoder needs 1 <= m_p < m_t");
  if (widths.hidden.size() != 2) throw InvalidArgument("autoencoder needs two hidden widths");
  const int h1 = widths.hidden[0];
  const int h2 = widths.hidden[1];
  Network enc = dense_chain(m_t, {{m_t, h1, Activation::relu},
                                  {h1, h2, Activation::relu},
                                  {h2, m_p, Activation::linear}});
  Network dec = dense_chain(m_p, {{m_p, h2, Activation::relu},
                                  {h2, h1, Activation::relu},
                                  {h1, m_t, Activation::linear}});
  return {std::move(enc), std::move(dec)};
}

std::vector<int> cyclic_window(int centre, int count, int n) {
  std::vector<int> out;
  for (int k = -(count - 1) / 2; k <= count / 2; ++k) out.push_back(((centre + k) % n + n) % n);
  return out;
}

namespace {

void check_fan_in(int m_s, int fan_in_1, int fan_in_2) {
  if (m_s < 1) throw InvalidArgument("need at least one transmitter block");
  if (fan_in_1 < 1 || fan_in_1 > m_s)
    throw InvalidArgument("fan_in_1 must lie in [1, " + std::to_string(m_s) + "], got " +
                          std::to_string(fan_in_1));
  if (fan_in_2 < 1 || fan_in_2 > m_s)
    throw InvalidArgument("fan_in_2 must lie in [1, " + std::to_string(m_s) + "], got " +
                          std::to_string(fan_in_2));
}

// Three ReLU stages of m_s parallel subnets with cyclic wiring.
Network sparse_trunk(int m_s, int block, int fan_in_1, int fan_in_2, int hidden) {
  Network net(m_s * block);
  for (int stage = 0; stage < 3; ++stage) {
    const int fan_in = stage == 0 ? fan_in_1 : fan_in_2;
    const int width = stage == 0 ? block : hidden;
    Stage st;
    st.out_width = m_s * hidden;
    for (int k = 0; k < m_s; ++k) {
      std::vector<Segment> in;
      for (int j : cyclic_window(k, fan_in, m_s)) in.push_back({j * width, width});
      st.layers.push_back(make_layer("s" + std::to_string(stage + 1) + "." + std::to_string(k),
                                     Activation::relu, std::move(in), k * hidden, hidden));
    }
    net.add_stage(std::move(st));
  }
  return net;
}

} // namespace

Network build_phi(int m_s, int m_r, int m_p, int fan_in_1, int fan_in_2, const PhiWidths &widths) {
  check_fan_in(m_s, fan_in_1, fan_in_2);
  if (m_r < 1 || m_p < 1 || widths.hidden < 1) throw InvalidArgument("widths must be >= 1");
  const int block = m_r * m_p;
  Network net = sparse_trunk(m_s, block, fan_in_1, fan_in_2, widths.hidden);
  Stage out;
  out.out_width = m_s * block;
  for (int k = 0; k < m_s; ++k)
    out.layers.push_back(make_layer("s4." + std::to_string(k), Activation::linear,
                                    {{k * widths.hidden, widths.hidden}}, k * block, block));
  net.add_stage(std::move(out));
  net.set_residual(true);
  return net;
}

Network build_direct(int m_s, int m_r, int m_p, int fan_in_1, int fan_in_2, int outputs,
                     const PhiWidths &widths) {
  check_fan_in(m_s, fan_in_1, fan_in_2);
  if (m_r < 1 || m_p < 1 || widths.hidden < 1 || outputs < 1)
    throw InvalidArgument("widths must be >= 1");
  Network net = sparse_trunk(m_s, m_r * m_p, fan_in_1, fan_in_2, widths.hidden);
  Stage out;
  out.out_width = outputs;
  out.layers.push_back(
      make_layer("s4", Activation::linear, {{0, m_s * widths.hidden}}, 0, outputs));
  net.add_stage(std::move(out));
  return net;
}

std::size_t phi_parameters(int m_s, int m_r, int m_p, int fan_in_1, int fan_in_2,
                           const PhiWidths &widths) {
  const auto s = static_cast<std::size_t>(m_s);
  const auto block = static_cast<std::size_t>(m_r) * m_p;
  const auto h = static_cast<std::size_t>(widths.hidden);
  return s * (fan_in_1 * block * h + h) + 2 * s * (fan_in_2 * h * h + h) + s * (h * block + block);
}

std::size_t dense_equivalent_parameters(int m_s, int m_r, int m_p, const PhiWidths &widths) {
  const auto io = static_cast<std::size_t>(m_s) * m_r * m_p;
  const auto h = static_cast<std::size_t>(m_s) * widths.hidden;
  return (io * h + h) + 2 * (h * h + h) + (h * io + io);
}

Matrix traces_as_columns(const MeasurementSet &m) {
  const Index pairs = static_cast<Index>(m.n_transmitters) * m.n_receivers;
  return Eigen::Map<const Matrix>(m.data.data(), m.n_samples, pairs);
}

std::vector<double> encode_set(const NetworkBundle &encoder, const MeasurementSet &m) {
  if (encoder.net.input_width() != m.n_samples)
    throw DimensionError("encoder expects traces of " + std::to_string(encoder.net.input_width()) +
                         " samples, measurement has " + std::to_string(m.n_samples));
  const Matrix codes = encoder.apply(traces_as_columns(m));
  return {codes.data(), codes.data() + codes.size()};
}

MeasurementSet decode_set(const NetworkBundle &decoder, const std::vector<double> &codes,
                          const MeasurementSet &like) {
  const Index pairs = static_cast<Index>(like.n_transmitters) * like.n_receivers;
  const Index width = decoder.net.input_width();
  if (static_cast<Index>(codes.size()) != width * pairs)
    throw DimensionError("code vector has " + std::to_string(codes.size()) + " values, expected " +
                         std::to_string(width * pairs));
  if (decoder.net.output_width() != like.n_samples)
    throw DimensionError("decoder emits " + std::to_string(decoder.net.output_width()) +
                         " samples per trace, expected " + std::to_string(like.n_samples));
  const Matrix traces = decoder.apply(Matrix(Eigen::Map<const Matrix>(codes.data(), width, pairs)));
  MeasurementSet out = like;
  std::copy(traces.data(), traces.data() + traces.size(), out.data.begin());
  return out;
}

} // namespace nnaee::nn
