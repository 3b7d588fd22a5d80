// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "moodpipe/nn/rng.hpp"
#include "moodpipe/nn/tape.hpp"
#include "moodpipe/nn/tensor.hpp"

namespace moodpipe::nn {

using ParamList = std::vector<Parameter*>;

/// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) with fan_in = rows of the
/// weight. Biases are left at zero.
void init_weight(Parameter& w, Rng& rng);

/// x (B x I) * W (I x O) + b (O).
Var fc_forward(Var x, Var weight, Var bias);

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out);

  Var forward(Var x) const;
  void init(Rng& rng);
  void collect(ParamList& out);

  std::size_t in_features() const { return weight_.value.rows(); }
  std::size_t out_features() const { return weight_.value.cols(); }

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  mutable Parameter weight_;
  mutable Parameter bias_;
};

/// Gated recurrent unit.
///
///   z  = sigmoid(x W_z + h U_z + b_z)
///   r  = sigmoid(x W_r + h U_r + b_r)
///   h~ = tanh(x W_h + (r * h) U_h + b_h)
///   h' = (1 - z) * h + z * h~
///
/// The z and r blocks share one weight matrix each for input and state,
/// with z in the first H columns.
class GruCell {
 public:
  GruCell() = default;
  GruCell(const std::string& name, std::size_t input, std::size_t hidden);

  Var step(Var x, Var h) const;
  void init(Rng& rng);
  void collect(ParamList& out);

  std::size_t input_size() const { return w_zr_.value.rows(); }
  std::size_t hidden_size() const { return u_h_.value.rows(); }

  Parameter& w_zr() { return w_zr_; }
  Parameter& u_zr() { return u_zr_; }
  Parameter& b_zr() { return b_zr_; }
  Parameter& w_h() { return w_h_; }
  Parameter& u_h() { return u_h_; }
  Parameter& b_h() { return b_h_; }

 private:
  mutable Parameter w_zr_, u_zr_, b_zr_, w_h_, u_h_, b_h_;
};

/// Standard LSTM cell, gate column order (input, forget, cell, output).
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(const std::string& name, std::size_t input, std::size_t hidden);

  /// Returns (h', c').
  std::pair<Var, Var> step(Var x, Var h, Var c) const;
  void init(Rng& rng);
  void collect(ParamList& out);

  std::size_t input_size() const { return w_.value.rows(); }
  std::size_t hidden_size() const { return u_.value.rows(); }

  Parameter& w() { return w_; }
  Parameter& u() { return u_; }
  Parameter& b() { return b_; }

 private:
  mutable Parameter w_, u_, b_;
};

struct GruOutput {
  std::vector<Var> outputs;  // top layer, one B x H per step
  Var final_hidden;          // top layer, last step
};

/// Stacked GRU with dropout between layers in training mode.
class Gru {
 public:
  Gru() = default;
  Gru(const std::string& name, std::size_t input, std::size_t hidden,
      std::size_t layers, double dropout);

  GruOutput forward(std::span<const Var> steps, Rng& rng,
                    bool training) const;
  void init(Rng& rng);
  void collect(ParamList& out);

  std::size_t hidden_size() const { return cells_.front().hidden_size(); }
  std::vector<GruCell>& cells() { return cells_; }

 private:
  std::vector<GruCell> cells_;
  double dropout_ = 0.0;
};

struct BiLstmOutput {
  std::vector<Var> forward;   // left-to-right, one B x H per step
  std::vector<Var> backward;  // right-to-left, time-aligned with the input
};

/// Stacked bidirectional LSTM; layer l > 0 reads [forward | backward] of
/// layer l - 1, with dropout between layers in training mode.
class BiLstm {
 public:
  BiLstm() = default;
  BiLstm(const std::string& name, std::size_t input, std::size_t hidden,
         std::size_t layers, double dropout);

  BiLstmOutput forward(std::span<const Var> steps, Rng& rng,
                       bool training) const;
  void init(Rng& rng);
  void collect(ParamList& out);

  std::size_t hidden_size() const { return forward_.front().hidden_size(); }
  std::size_t layers() const { return forward_.size(); }
  LstmCell& forward_cell(std::size_t layer) { return forward_[layer]; }
  LstmCell& backward_cell(std::size_t layer) { return backward_[layer]; }

 private:
  std::vector<LstmCell> forward_;
  std::vector<LstmCell> backward_;
  double dropout_ = 0.0;
};

}  // namespace moodpipe::nn
