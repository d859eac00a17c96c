#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nnaee/neural.hpp"

using namespace nnaee;
using namespace nnaee::nn;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

void randomize(Network &net, std::uint64_t seed, double scale = 0.5) {
  auto p = net.flat_parameters();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (double &x : p) x = n(rng);
  net.set_flat_parameters(p);
}

// Plain loops, independent of the Eigen path.
std::vector<double> reference_forward(const Network &net, const std::vector<double> &x) {
  std::vector<double> cur = x;
  for (const auto &stage : net.stages()) {
    std::vector<double> out(static_cast<std::size_t>(stage.out_width), 0.0);
    for (const auto &layer : stage.layers) {
      std::vector<double> in;
      for (const auto &seg : layer.inputs)
        for (int i = 0; i < seg.width; ++i) in.push_back(cur[static_cast<std::size_t>(seg.offset + i)]);
      for (int o = 0; o < layer.out_width(); ++o) {
        double acc = layer.bias(o);
        for (int i = 0; i < layer.in_width(); ++i) acc += layer.weight(o, i) * in[static_cast<std::size_t>(i)];
        if (layer.activation == Activation::relu && acc < 0.0) acc = 0.0;
        out[static_cast<std::size_t>(layer.output_offset + o)] = acc;
      }
    }
    cur = out;
  }
  if (net.residual())
    for (std::size_t i = 0; i < cur.size(); ++i) cur[i] += x[i];
  return cur;
}

// sum(w .* forward(x)) as a scalar objective for finite differences.
double objective(const Network &net, const Matrix &x, const Matrix &w) {
  return (net.forward(x).array() * w.array()).sum();
}

double max_relative_gradient_error(Network net, const Matrix &x, const Matrix &w) {
  const auto analytic = net.backward(x, w).flat();
  auto p = net.flat_parameters();
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(p[i]));
    const double saved = p[i];
    p[i] = saved + h;
    net.set_flat_parameters(p);
    const double fp = objective(net, x, w);
    p[i] = saved - h;
    net.set_flat_parameters(p);
    const double fm = objective(net, x, w);
    p[i] = saved;
    const double fd = (fp - fm) / (2 * h);
    num = std::max(num, std::abs(fd - analytic[i]));
    den = std::max(den, std::abs(analytic[i]));
  }
  return num / den;
}

} // namespace

TEST(Network, ZeroDenseChainGivesZero) {
  Network net = dense_chain(4, {{4, 3, Activation::relu}, {3, 2, Activation::linear}});
  const Vector y = net.forward(Vector(Vector::Constant(4, 2.5)));
  EXPECT_EQ(y, Vector::Zero(2));
}

TEST(Network, ZeroPhiIsIdentity) {
  const Network net = build_phi(4, 3, 2, 3, 3, {5});
  const Matrix x = random_matrix(net.input_width(), 7, 3);
  EXPECT_EQ(net.forward(x), x);
}

TEST(Network, ReluClipsNegativeInput) {
  Network net = dense_chain(1, {{1, 1, Activation::relu}});
  net.stages()[0].layers[0].weight(0, 0) = 1.0;
  EXPECT_EQ(net.forward(Vector(Vector::Constant(1, -3.0)))(0), 0.0);
  EXPECT_EQ(net.forward(Vector(Vector::Constant(1, 2.0)))(0), 2.0);
}

TEST(Network, ForwardMatchesReferenceLoops) {
  std::vector<Network> nets = {
      dense_chain(6, {{6, 5, Activation::relu}, {5, 4, Activation::relu}, {4, 3, Activation::linear}}),
      build_phi(5, 2, 3, 3, 5, {4}),
      build_direct(4, 2, 2, 3, 2, 7, {3})};
  for (std::size_t k = 0; k < nets.size(); ++k) {
    randomize(nets[k], 10 + k);
    const Matrix x = random_matrix(nets[k].input_width(), 5, 20 + k);
    const Matrix y = nets[k].forward(x);
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const std::vector<double> xin(x.col(c).data(), x.col(c).data() + x.rows());
      const auto ref = reference_forward(nets[k], xin);
      for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y(static_cast<Eigen::Index>(i), c), ref[i], 1e-12);
    }
  }
}

TEST(Network, LinearLayerWeightGradientIsOuterProduct) {
  Network net = dense_chain(3, {{3, 2, Activation::linear}});
  randomize(net, 1);
  const Matrix x = random_matrix(3, 1, 2);
  const Matrix g = random_matrix(2, 1, 3);
  const auto grads = net.backward(x, g);
  const Matrix expected = g * x.transpose();
  EXPECT_TRUE(grads.weight[0][0].isApprox(expected, 1e-15));
  EXPECT_TRUE(grads.bias[0][0].isApprox(Vector(g.col(0)), 1e-15));
  const Matrix w = net.stages()[0].layers[0].weight;
  EXPECT_TRUE(grads.input.isApprox(w.transpose() * g, 1e-15));
}

TEST(Network, BackpropMatchesFiniteDifferences) {
  struct Case {
    Network net;
    const char *label;
  };
  std::vector<Case> cases;
  cases.push_back({dense_chain(5, {{5, 8, Activation::relu}, {8, 6, Activation::relu},
                                   {6, 4, Activation::linear}}),
                   "dense"});
  cases.push_back({build_phi(3, 2, 2, 3, 3, {3}), "phi"});
  cases.push_back({build_direct(3, 2, 2, 3, 2, 6, {3}), "direct"});
  {
    auto [enc, dec] = build_autoencoder(12, 2, {{6, 4}});
    cases.push_back({enc.then(dec), "autoencoder"});
  }
  for (std::size_t k = 0; k < cases.size(); ++k) {
    Network &net = cases[k].net;
    ASSERT_LE(net.parameter_count(), 500u) << cases[k].label;
    randomize(net, 100 + k);
    const Matrix x = random_matrix(net.input_width(), 3, 200 + k);
    const Matrix w = random_matrix(net.output_width(), 3, 300 + k);
    EXPECT_LT(max_relative_gradient_error(net, x, w), 1e-6) << cases[k].label;
  }
}

TEST(Network, InputGradientMatchesFiniteDifferences) {
  Network net = build_phi(3, 2, 2, 3, 2, {3});
  randomize(net, 5);
  Matrix x = random_matrix(net.input_width(), 1, 6);
  const Matrix w = random_matrix(net.output_width(), 1, 7);
  const Matrix g = net.backward(x, w).input;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Matrix xp = x, xm = x;
    xp(i, 0) += 1e-6;
    xm(i, 0) -= 1e-6;
    const double fd = (objective(net, xp, w) - objective(net, xm, w)) / 2e-6;
    EXPECT_NEAR(fd, g(i, 0), 1e-6 * std::max(1.0, std::abs(g(i, 0))));
  }
}

TEST(Network, ReluKinkUsesZeroSubgradient) {
  Network net = dense_chain(1, {{1, 1, Activation::relu}, {1, 1, Activation::linear}});
  net.stages()[0].layers[0].weight(0, 0) = 2.0;
  net.stages()[0].layers[0].bias(0) = -2.0; // pre-activation is exactly 0 at x = 1
  net.stages()[1].layers[0].weight(0, 0) = 3.0;
  const Matrix x = Matrix::Constant(1, 1, 1.0);
  const Matrix w = Matrix::Constant(1, 1, 1.0);
  const auto g = net.backward(x, w);
  const double h = 1e-7;
  const double below = (objective(net, x, w) - objective(net, Matrix::Constant(1, 1, 1.0 - h), w)) / h;
  EXPECT_EQ(g.input(0, 0), 0.0);
  EXPECT_EQ(below, 0.0);
  EXPECT_EQ(g.weight[0][0](0, 0), 0.0);
}

TEST(Network, SliceAndChainRoundTrip) {
  auto [enc, dec] = build_autoencoder(10, 2, {{6, 4}});
  Network ae = enc.then(dec);
  randomize(ae, 9);
  EXPECT_EQ(ae.slice(0, 3).then(ae.slice(3, 6)), ae);
  const Matrix x = random_matrix(10, 4, 1);
  EXPECT_EQ(ae.slice(3, 6).forward(ae.slice(0, 3).forward(x)), ae.forward(x));
}

TEST(Network, RejectsWidthMismatch) {
  Network net = dense_chain(3, {{3, 2, Activation::linear}});
  EXPECT_THROW(net.forward(Vector(Vector::Zero(4))), DimensionError);
  EXPECT_THROW(dense_chain(3, {{4, 2, Activation::linear}}), DimensionError);
  EXPECT_THROW(net.backward(Matrix::Zero(3, 1), Matrix::Zero(3, 1)), DimensionError);
  EXPECT_THROW(build_phi(4, 2, 2, 5, 3), InvalidArgument);
  EXPECT_THROW(build_phi(4, 2, 2, 3, 0), InvalidArgument);
}

TEST(Autoencoder, ShapesFollowTheBottleneck) {
  auto [enc, dec] = build_autoencoder(600, 32);
  EXPECT_EQ(enc.input_width(), 600);
  EXPECT_EQ(enc.output_width(), 32);
  EXPECT_EQ(dec.input_width(), 32);
  EXPECT_EQ(dec.output_width(), 600);
  ASSERT_EQ(enc.stages().size(), 3u);
  EXPECT_EQ(enc.stages()[0].layers[0].activation, Activation::relu);
  EXPECT_EQ(enc.stages()[1].layers[0].activation, Activation::relu);
  EXPECT_EQ(enc.stages()[2].layers[0].activation, Activation::linear);
  EXPECT_EQ(dec.stages()[2].layers[0].activation, Activation::linear);
  EXPECT_EQ(enc.stages()[0].out_width, 300);
  EXPECT_EQ(enc.stages()[1].out_width, 128);
}

TEST(Autoencoder, AcceptsLongTraces) {
  auto [enc, dec] = build_autoencoder(2363, 50);
  EXPECT_EQ(enc.output_width(), 50);
  EXPECT_EQ(dec.output_width(), 2363);
  EXPECT_THROW(build_autoencoder(50, 50), InvalidArgument);
}

TEST(Phi, WiringIsCyclicAndCentred) {
  EXPECT_EQ(cyclic_window(0, 7, 16), (std::vector<int>{13, 14, 15, 0, 1, 2, 3}));
  EXPECT_EQ(cyclic_window(15, 3, 16), (std::vector<int>{14, 15, 0}));
  const Network net = build_phi(16, 64, 50, 7, 9, {8});
  const int block = 64 * 50;
  const auto &s1 = net.stages()[0].layers;
  ASSERT_EQ(s1.size(), 16u);
  ASSERT_EQ(s1[0].inputs.size(), 7u);
  EXPECT_EQ(s1[0].inputs[0].offset, 13 * block);
  EXPECT_EQ(net.stages()[1].layers[4].inputs.size(), 9u);
  EXPECT_EQ(net.stages()[2].layers[4].inputs.size(), 9u);
  EXPECT_EQ(net.input_width(), 16 * block);
  EXPECT_EQ(net.parameter_count(), phi_parameters(16, 64, 50, 7, 9, {8}));
}

TEST(Phi, ConnectivityCommutesWithCyclicShift) {
  const int ms = 6;
  const Network net = build_phi(ms, 2, 2, 3, 5, {3});
  for (std::size_t st = 0; st < 3; ++st) {
    const auto &layers = net.stages()[st].layers;
    const int width = net.stages()[st].layers[0].inputs[0].width;
    for (int k = 0; k < ms; ++k) {
      const auto &a = layers[static_cast<std::size_t>(k)].inputs;
      const auto &b = layers[static_cast<std::size_t>((k + 1) % ms)].inputs;
      ASSERT_EQ(a.size(), b.size());
      for (std::size_t i = 0; i < a.size(); ++i)
        EXPECT_EQ((a[i].offset / width + 1) % ms, b[i].offset / width);
    }
  }
}

TEST(Phi, SparseCountBelowDenseEquivalent) {
  for (int hidden : {8, 64, 256}) {
    const std::size_t sparse = phi_parameters(16, 64, 50, 7, 9, {hidden});
    const std::size_t dense = dense_equivalent_parameters(16, 64, 50, {hidden});
    EXPECT_LT(sparse, dense);
  }
  // Stage 1 dominates and reads 7 of 16 blocks, so the saving is near 16/7 there.
  const double ratio = static_cast<double>(dense_equivalent_parameters(16, 64, 50)) /
                       static_cast<double>(phi_parameters(16, 64, 50, 7, 9));
  EXPECT_NEAR(ratio, 3.66, 0.01);
  const Network small = build_phi(5, 3, 2, 3, 3, {4});
  EXPECT_EQ(small.parameter_count(), phi_parameters(5, 3, 2, 3, 3, {4}));
}

TEST(Direct, OutputCoversTheGrid) {
  const Network net = build_direct(8, 16, 32, 3, 5, 64 * 64, {16});
  EXPECT_EQ(net.output_width(), 64 * 64);
  EXPECT_FALSE(net.residual());
}

TEST(Training, ResidualIdentityIsExactFromTheStart) {
  NetworkBundle b{"phi", build_phi(4, 2, 2, 3, 3, {6}), {}, {}};
  initialize(b.net, 1);
  const Matrix x = random_matrix(b.net.input_width(), 200, 4);
  TrainOptions o;
  o.epochs = 5;
  const auto rec = train(b, x, x, o);
  const double var = x.array().square().mean() - std::pow(x.mean(), 2);
  EXPECT_LT(rec.best_validation_loss, 1e-6 * var);
}

TEST(Training, LinearNetRecoversGeneratingMatrix) {
  const Matrix a = random_matrix(3, 4, 11);
  const Matrix x = random_matrix(4, 2000, 12);
  const Matrix y = a * x;
  NetworkBundle b{"linear", dense_chain(4, {{4, 3, Activation::linear}}), {}, {}};
  initialize(b.net, 2);
  TrainOptions o;
  o.epochs = 300;
  o.learning_rate = 1e-2;
  o.patience = 0;
  train(b, x, y, o);
  const Matrix w = b.net.stages()[0].layers[0].weight;
  EXPECT_LT((w - a).norm() / a.norm(), 0.01);
}

TEST(Training, FixedSeedIsBitReproducible) {
  const Matrix x = random_matrix(6, 300, 1);
  const Matrix y = x.topRows(3).array().sin().matrix();
  auto run = [&] {
    NetworkBundle b{"n", dense_chain(6, {{6, 8, Activation::relu}, {8, 3, Activation::linear}}), {}, {}};
    initialize(b.net, 5);
    TrainOptions o;
    o.epochs = 8;
    o.seed = 42;
    o.batch_size = 16;
    auto rec = train(b, x, y, o);
    return std::make_pair(rec, b);
  };
  const auto [r1, b1] = run();
  const auto [r2, b2] = run();
  ASSERT_EQ(r1.epochs.size(), r2.epochs.size());
  for (std::size_t i = 0; i < r1.epochs.size(); ++i) {
    EXPECT_EQ(r1.epochs[i].train_loss, r2.epochs[i].train_loss);
    EXPECT_EQ(r1.epochs[i].validation_loss, r2.epochs[i].validation_loss);
  }
  EXPECT_EQ(b1, b2);
}

TEST(Training, KeepsBestValidationParameters) {
  const Matrix x = random_matrix(4, 100, 1);
  const Matrix y = random_matrix(2, 100, 2); // pure noise: validation only gets worse eventually
  NetworkBundle b{"n", dense_chain(4, {{4, 32, Activation::relu}, {32, 2, Activation::linear}}), {}, {}};
  initialize(b.net, 3);
  TrainOptions o;
  o.epochs = 60;
  o.learning_rate = 1e-2;
  o.patience = 0;
  const auto rec = train(b, x, y, o);
  double best = rec.epochs[0].validation_loss;
  for (const auto &e : rec.epochs) best = std::min(best, e.validation_loss);
  EXPECT_EQ(rec.best_validation_loss, best);
  EXPECT_EQ(rec.epochs[static_cast<std::size_t>(rec.best_epoch)].validation_loss, best);
}

TEST(Training, NonFiniteLossReportsEpoch) {
  const Matrix x = random_matrix(2, 50, 1);
  Matrix y = random_matrix(1, 50, 2);
  y(0, 3) = std::nan("");
  NetworkBundle b{"n", dense_chain(2, {{2, 1, Activation::linear}}), {}, {}};
  TrainOptions o;
  o.validation_fraction = 0.0;
  try {
    train(b, x, y, o);
    FAIL() << "expected divergence";
  } catch (const DivergenceError &e) {
    EXPECT_EQ(e.epoch(), 0);
  }
}

TEST(Bundle, NormalizationWrapsTheNetwork) {
  NetworkBundle b{"n", dense_chain(2, {{2, 1, Activation::linear}}), {2.0, 10.0, 1500.0}, {}};
  b.net.stages()[0].layers[0].weight << 1.0, -1.0;
  const Vector y = b.apply(Vector((Vector(2) << 3.0, 1.0).finished()));
  EXPECT_DOUBLE_EQ(y(0), 10.0 * (2.0 * 3.0 - 2.0 * 1.0) + 1500.0);
}

TEST(EncodeSet, ShapeAndSinglePair) {
  auto [enc, dec] = build_autoencoder(20, 4, {{10, 8}});
  NetworkBundle alpha{"encoder", enc, {0.5, 1.0, 0.0}, {}};
  NetworkBundle beta{"decoder", dec, {1.0, 2.0, 0.0}, {}};
  randomize(alpha.net, 1);
  randomize(beta.net, 2);
  MeasurementSet m(3, 5, 20, 1e-7, 0.09, Tier::accurate);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (double &v : m.data) v = n(rng);
  const auto codes = encode_set(alpha, m);
  EXPECT_EQ(codes.size(), 3u * 5u * 4u);
  // code of pair (s=2, r=1) is a single forward call
  const Vector trace = Eigen::Map<const Vector>(m.trace(2, 1).data(), 20);
  const Vector code = alpha.apply(trace);
  for (int p = 0; p < 4; ++p) EXPECT_DOUBLE_EQ(codes[static_cast<std::size_t>((2 * 5 + 1) * 4 + p)], code(p));
  const MeasurementSet back = decode_set(beta, codes, m);
  EXPECT_TRUE(back.same_shape(m));
  EXPECT_THROW(decode_set(beta, std::vector<double>(7), m), DimensionError);
  MeasurementSet wrong(1, 1, 19, 1e-7, 0.09, Tier::accurate);
  EXPECT_THROW(encode_set(alpha, wrong), DimensionError);
}
