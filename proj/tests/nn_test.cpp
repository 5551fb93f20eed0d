#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "morphoglot/encoder.hpp"
#include "morphoglot/nn/checkpoint.hpp"
#include "morphoglot/nn/gradcheck.hpp"
#include "morphoglot/nn/optim.hpp"
#include "morphoglot/nn/transformer.hpp"
#include "test_support.hpp"

namespace morphoglot::nn {
namespace {

TEST(SinusoidalPositions, ZeroRowIsSinZeroCosZero) {
  const auto pe = sinusoidal_positions<double>(5, 8);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(pe(0, 2 * i), 0.0);
    EXPECT_EQ(pe(0, 2 * i + 1), 1.0);
  }
  for (int pos = 0; pos < 5; ++pos) EXPECT_EQ(pe(pos, 0), std::sin(static_cast<double>(pos)));
}

TEST(SinusoidalPositions, MatchesFormulaTranscription) {
  const auto pe = sinusoidal_positions<float>(4, 4);
  for (int pos = 0; pos < 4; ++pos)
    for (int col = 0; col < 4; ++col) {
      const int i = col / 2;
      const double angle = pos / std::pow(10000.0, 2.0 * i / 4.0);
      const double expected = col % 2 == 0 ? std::sin(angle) : std::cos(angle);
      EXPECT_NEAR(pe(pos, col), expected, 1e-6);
    }
}

TEST(SinusoidalPositions, OddWidthIsRejected) {
  EXPECT_THROW(sinusoidal_positions<float>(4, 5), std::invalid_argument);
}

TransformerConfig tiny_config(int d_model, int layers, int heads, bool causal) {
  TransformerConfig cfg;
  cfg.vocab_size = 11;
  cfg.d_model = d_model;
  cfg.n_layers = layers;
  cfg.n_heads = heads;
  cfg.d_ff = 2 * d_model;
  cfg.max_seq_len = 32;
  cfg.causal = causal;
  return cfg;
}

TEST(Attention, RowsAreDistributions) {
  const auto cfg = tiny_config(8, 1, 2, false);
  ParameterSet<float> params;
  Rng rng(3);
  init_transformer_stack(params, "t", cfg, rng);
  Tape<float> tape;
  Matrix<float> x(9, 8);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<float>(rng.normal());
  std::vector<Matrix<float>> probe;
  transformer_stack(tape, params, "t", cfg, tape.constant(x),
                    SequenceLayout::from_lengths({4, 5}), &probe);
  ASSERT_EQ(probe.size(), 4u);  // 2 sequences x 2 heads
  for (const auto& p : probe) {
    EXPECT_GE(p.minCoeff(), 0.0f);
    for (Index r = 0; r < p.rows(); ++r) EXPECT_NEAR(p.row(r).sum(), 1.0f, 1e-6f);
  }
}

TEST(LayerNorm, NormalizedRowsHaveZeroMeanUnitVariance) {
  Tape<double> tape;
  Rng rng(5);
  Matrix<double> x(6, 16);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = 3.0 + 4.0 * rng.normal();
  Matrix<double> ones = Matrix<double>::Ones(1, 16), zeros = Matrix<double>::Zero(1, 16);
  auto y = layer_norm(tape.constant(x), tape.constant(ones), tape.constant(zeros));
  for (Index r = 0; r < 6; ++r) {
    const double mean = y.value().row(r).mean();
    const double var = (y.value().row(r).array() - mean).square().mean();
    EXPECT_NEAR(mean, 0.0, 1e-5);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(Attention, CausalOutputIgnoresLaterPositions) {
  const auto cfg = tiny_config(8, 2, 2, true);
  ParameterSet<double> params;
  Rng rng(7);
  init_transformer_stack(params, "t", cfg, rng);
  Matrix<double> x(6, 8);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  const auto layout = SequenceLayout::from_lengths({6});
  Tape<double> t1;
  const Matrix<double> base = transformer_stack(t1, params, "t", cfg, t1.constant(x), layout).value();
  for (Index t = 0; t < 5; ++t) {
    Matrix<double> perturbed = x;
    for (Index r = t + 1; r < 6; ++r) perturbed.row(r).setRandom();
    Tape<double> t2;
    const Matrix<double> out =
        transformer_stack(t2, params, "t", cfg, t2.constant(perturbed), layout).value();
    EXPECT_TRUE(out.topRows(t + 1).isApprox(base.topRows(t + 1), 1e-12)) << "position " << t;
  }
}

TEST(GradCheck, LinearModelWithSquaredLossAgrees) {
  ParameterSet<double> params;
  auto& w = params.add("w", 3, 1);
  w.value << 0.5, -1.0, 2.0;
  Matrix<double> x(4, 3);
  x << 1, 2, 3, -1, 0, 1, 0.5, 0.5, -2, 2, -3, 1;
  Matrix<double> y(4, 1);
  y << 1, 0, -1, 2;
  const LossBuilder build = [&](Tape<double>& tape, ParameterSet<double>& p) {
    return sum_squares(subtract(matmul(tape.constant(x), tape.parameter(p["w"])), tape.constant(y)));
  };
  const auto report = finite_difference_check(params, build, 1e-9);
  EXPECT_TRUE(report.passed) << report.max_relative_error;
  EXPECT_LT(report.max_relative_error, 1e-9);
}

TEST(GradCheck, ZeroToleranceFailsOnNonlinearModel) {
  ParameterSet<double> params;
  auto& w = params.add("w", 2, 2);
  w.value << 0.3, -0.7, 1.1, 0.2;
  const LossBuilder build = [&](Tape<double>& tape, ParameterSet<double>& p) {
    Matrix<double> x(1, 2);
    x << 1.0, -2.0;
    return sum_squares(gelu(matmul(tape.constant(x), tape.parameter(p["w"]))));
  };
  EXPECT_FALSE(finite_difference_check(params, build, 0.0).passed);
}

TEST(GradCheck, OneLayerEncoderMatchesFiniteDifferences) {
  const auto fixture = test::tiny_encoder_fixture(4, 1, 2);
  auto params = fixture.model.params.cast<double>();
  const LossBuilder build = [&](Tape<double>& tape, ParameterSet<double>& p) {
    return contrastive_loss(tape, p, fixture.model.config, fixture.model.vocab, fixture.batch);
  };
  const auto report = finite_difference_check(params, build, 1e-4);
  for (const auto& entry : report.parameters)
    EXPECT_LT(entry.max_relative_error, 1e-4)
        << entry.name << " analytic " << entry.analytic << " numeric " << entry.numeric;
  EXPECT_TRUE(report.passed);
}

TEST(BackpropStep, ConstantLossOnlyDecaysWeights) {
  ParameterSet<float> params;
  params.add("w", 2, 2).value << 1, 2, 3, 4;
  params.add("b", 1, 2, false).value << 5, 6;
  const auto before = params;
  Tape<float> tape(true);
  tape.parameter(params["w"]);
  Var<float> loss = tape.constant(Matrix<float>::Zero(1, 1));
  OptimizerConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.01;
  const auto report = backprop_step(tape, loss, params, cfg);
  EXPECT_EQ(report.grad_norm, 0.0);
  EXPECT_TRUE(params["w"].value.isApprox(before["w"].value * (1.0f - 0.1f * 0.01f)));
  EXPECT_EQ(params["b"].value, before["b"].value);
  EXPECT_EQ(params.step, 1);
}

TEST(BackpropStep, ClippedNormNeverExceedsThreshold) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    ParameterSet<float> params;
    auto& w = params.add("w", 3, 3);
    for (Index i = 0; i < 9; ++i) w.value.data()[i] = static_cast<float>(10.0 * rng.normal());
    Tape<float> tape(true);
    auto loss = sum_squares(tape.parameter(params["w"]));
    OptimizerConfig cfg;
    cfg.clip_norm = 1.0;
    const auto report = backprop_step(tape, loss, params, cfg);
    EXPECT_LE(report.clipped_norm, 1.0 + 1e-6);
  }
}

TEST(BackpropStep, NonFiniteLossLeavesParametersUnchanged) {
  ParameterSet<float> params;
  params.add("w", 1, 2).value << 1, 2;
  const auto before = params["w"].value;
  Tape<float> tape(true);
  Matrix<float> bad(1, 1);
  bad(0, 0) = std::numeric_limits<float>::quiet_NaN();
  auto loss = add(tape.constant(bad), sum_squares(tape.parameter(params["w"])));
  EXPECT_THROW(backprop_step(tape, loss, params, OptimizerConfig{}), NonFiniteLoss);
  EXPECT_EQ(params["w"].value, before);
  EXPECT_EQ(params.step, 0);
}

TEST(Checkpoint, RoundTripIsByteExact) {
  const auto fixture = test::tiny_encoder_fixture(8, 2, 2);
  const std::string bytes = serialize_checkpoint(fixture.model.params, "kind=test\n");
  const Checkpoint loaded = deserialize_checkpoint(bytes);
  EXPECT_EQ(loaded.metadata, "kind=test\n");
  EXPECT_EQ(serialize_checkpoint(loaded.params, loaded.metadata), bytes);
  for (const auto& p : fixture.model.params.all())
    EXPECT_EQ(p.value, loaded.params[p.name].value) << p.name;
}

TEST(Checkpoint, CorruptMagicAndTruncationAreRejected) {
  const auto fixture = test::tiny_encoder_fixture(8, 1, 2);
  std::string bytes = serialize_checkpoint(fixture.model.params, "");
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad), FormatError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
}

}  // namespace
}  // namespace morphoglot::nn
