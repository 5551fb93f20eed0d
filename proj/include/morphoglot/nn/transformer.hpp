#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "morphoglot/nn/ops.hpp"
#include "morphoglot/random.hpp"

namespace morphoglot::nn {

struct TransformerConfig {
  int vocab_size = 0;
  int d_model = 128;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 512;
  int max_seq_len = 256;
  double dropout_rate = 0.0;
  bool causal = false;

  void validate() const {
    if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0)
      throw std::invalid_argument("transformer: d_model must be divisible by n_heads");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw std::invalid_argument("transformer: dropout_rate must lie in [0,1)");
    if (n_layers < 0 || d_ff <= 0 || max_seq_len <= 0)
      throw std::invalid_argument("transformer: invalid layer sizes");
  }

  bool operator==(const TransformerConfig&) const = default;
};

/// PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(same).
template <typename T = float>
Matrix<T> sinusoidal_positions(int max_len, int d_model) {
  if (d_model % 2 != 0) throw std::invalid_argument("sinusoidal_positions: odd d_model");
  Matrix<T> pe(max_len, d_model);
  for (int pos = 0; pos < max_len; ++pos)
    for (int i = 0; i < d_model / 2; ++i) {
      const double angle =
          pos / std::pow(10000.0, 2.0 * i / static_cast<double>(d_model));
      pe(pos, 2 * i) = static_cast<T>(std::sin(angle));
      pe(pos, 2 * i + 1) = static_cast<T>(std::cos(angle));
    }
  return pe;
}

// Rows of the position table for each packed position id.
template <typename T>
Matrix<T> position_rows(const std::vector<Index>& positions, int d_model) {
  Index max_pos = 0;
  for (Index p : positions) max_pos = std::max(max_pos, p);
  const Matrix<T> table = sinusoidal_positions<T>(static_cast<int>(max_pos) + 1, d_model);
  Matrix<T> out(static_cast<Index>(positions.size()), d_model);
  for (std::size_t i = 0; i < positions.size(); ++i)
    out.row(static_cast<Index>(i)) = table.row(positions[i]);
  return out;
}

template <typename T>
void init_normal(Parameter<T>& p, Rng& rng, double stddev) {
  for (Index i = 0; i < p.value.size(); ++i)
    p.value.data()[i] = static_cast<T>(rng.normal() * stddev);
}

template <typename T>
void add_linear(ParameterSet<T>& params, const std::string& name, int in, int out,
                Rng& rng, bool bias = true) {
  init_normal(params.add(name + ".w", in, out), rng, 1.0 / std::sqrt(static_cast<double>(in)));
  if (bias) params.add(name + ".b", 1, out, false);
}

template <typename T>
void add_layer_norm(ParameterSet<T>& params, const std::string& name, int d) {
  params.add(name + ".gain", 1, d, false).value.setOnes();
  params.add(name + ".bias", 1, d, false);
}

/// Adds the pre-norm blocks and final normalization under `prefix`.
template <typename T>
void init_transformer_stack(ParameterSet<T>& params, const std::string& prefix,
                            const TransformerConfig& cfg, Rng& rng) {
  cfg.validate();
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    add_layer_norm(params, p + ".ln1", cfg.d_model);
    add_linear(params, p + ".qkv", cfg.d_model, 3 * cfg.d_model, rng);
    add_linear(params, p + ".attn_out", cfg.d_model, cfg.d_model, rng);
    add_layer_norm(params, p + ".ln2", cfg.d_model);
    add_linear(params, p + ".ff1", cfg.d_model, cfg.d_ff, rng);
    add_linear(params, p + ".ff2", cfg.d_ff, cfg.d_model, rng);
  }
  add_layer_norm(params, prefix + ".final_ln", cfg.d_model);
}

template <typename T>
Var<T> linear(Tape<T>& tape, ParameterSet<T>& params, const std::string& name, Var<T> x) {
  Var<T> y = matmul(x, tape.parameter(params[name + ".w"]));
  if (params.contains(name + ".b")) y = add_row(y, tape.parameter(params[name + ".b"]));
  return y;
}

template <typename T>
Var<T> apply_layer_norm(Tape<T>& tape, ParameterSet<T>& params, const std::string& name,
                        Var<T> x) {
  return layer_norm(x, tape.parameter(params[name + ".gain"]),
                    tape.parameter(params[name + ".bias"]));
}

/// x -> n_layers x [x + Attn(LN(x)), x + FF(LN(x))] -> LN.
template <typename T>
Var<T> transformer_stack(Tape<T>& tape, ParameterSet<T>& params, const std::string& prefix,
                         const TransformerConfig& cfg, Var<T> x, const SequenceLayout& layout,
                         std::vector<Matrix<T>>* attention_probe = nullptr) {
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    Var<T> h = apply_layer_norm(tape, params, p + ".ln1", x);
    Var<T> qkv = linear(tape, params, p + ".qkv", h);
    Var<T> att = self_attention(qkv, layout, cfg.n_heads, cfg.causal,
                                l == 0 ? attention_probe : nullptr);
    att = dropout(linear(tape, params, p + ".attn_out", att), cfg.dropout_rate);
    x = x + att;
    h = apply_layer_norm(tape, params, p + ".ln2", x);
    h = gelu(linear(tape, params, p + ".ff1", h));
    h = dropout(linear(tape, params, p + ".ff2", h), cfg.dropout_rate);
    x = x + h;
  }
  return apply_layer_norm(tape, params, prefix + ".final_ln", x);
}

}  // namespace morphoglot::nn
