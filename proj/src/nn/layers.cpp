// SPDX-License-Identifier: Apache-2.0
#include "moodpipe/nn/layers.hpp"

#include <cmath>

namespace moodpipe::nn {

namespace {

Parameter make_param(const std::string& name, Shape shape) {
  return Parameter(name, Tensor(std::move(shape)));
}

Var zeros_like_state(Var x, std::size_t hidden) {
  return x.tape->constant(Tensor({x.rows(), hidden}));
}

void check_input(Var x, std::size_t expected, const char* who) {
  if (x.cols() != expected) {
    throw ShapeError(std::string(who) + ": expected " +
                     std::to_string(expected) + " input features, got " +
                     to_string(x.shape()));
  }
}

}  // namespace

void init_weight(Parameter& w, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(w.value.rows()));
  for (double& v : w.value.values()) v = rng.uniform(-bound, bound);
}

Var fc_forward(Var x, Var weight, Var bias) {
  return add_row(matmul(x, weight), bias);
}

Linear::Linear(const std::string& name, std::size_t in, std::size_t out)
    : weight_(make_param(name + ".weight", {in, out})),
      bias_(make_param(name + ".bias", {out})) {}

Var Linear::forward(Var x) const {
  Tape& t = *x.tape;
  check_input(x, in_features(), weight_.name.c_str());
  return fc_forward(x, t.param(weight_), t.param(bias_));
}

void Linear::init(Rng& rng) { init_weight(weight_, rng); }

void Linear::collect(ParamList& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

GruCell::GruCell(const std::string& name, std::size_t input,
                 std::size_t hidden)
    : w_zr_(make_param(name + ".w_zr", {input, 2 * hidden})),
      u_zr_(make_param(name + ".u_zr", {hidden, 2 * hidden})),
      b_zr_(make_param(name + ".b_zr", {2 * hidden})),
      w_h_(make_param(name + ".w_h", {input, hidden})),
      u_h_(make_param(name + ".u_h", {hidden, hidden})),
      b_h_(make_param(name + ".b_h", {hidden})) {}

Var GruCell::step(Var x, Var h) const {
  Tape& t = *x.tape;
  const std::size_t hidden = hidden_size();
  check_input(x, input_size(), w_zr_.name.c_str());
  if (h.cols() != hidden || h.rows() != x.rows()) {
    throw ShapeError(u_zr_.name + ": state " + to_string(h.shape()));
  }
  Var zr = sigmoid(add(fc_forward(x, t.param(w_zr_), t.param(b_zr_)),
                       matmul(h, t.param(u_zr_))));
  Var z = slice_cols(zr, 0, hidden);
  Var r = slice_cols(zr, hidden, hidden);
  Var candidate = tanh(add(fc_forward(x, t.param(w_h_), t.param(b_h_)),
                           matmul(mul(r, h), t.param(u_h_))));
  return add(mul(one_minus(z), h), mul(z, candidate));
}

void GruCell::init(Rng& rng) {
  init_weight(w_zr_, rng);
  init_weight(u_zr_, rng);
  init_weight(w_h_, rng);
  init_weight(u_h_, rng);
}

void GruCell::collect(ParamList& out) {
  for (Parameter* p : {&w_zr_, &u_zr_, &b_zr_, &w_h_, &u_h_, &b_h_})
    out.push_back(p);
}

LstmCell::LstmCell(const std::string& name, std::size_t input,
                   std::size_t hidden)
    : w_(make_param(name + ".w", {input, 4 * hidden})),
      u_(make_param(name + ".u", {hidden, 4 * hidden})),
      b_(make_param(name + ".b", {4 * hidden})) {}

std::pair<Var, Var> LstmCell::step(Var x, Var h, Var c) const {
  Tape& t = *x.tape;
  const std::size_t hidden = hidden_size();
  check_input(x, input_size(), w_.name.c_str());
  Var gates = add(fc_forward(x, t.param(w_), t.param(b_)),
                  matmul(h, t.param(u_)));
  Var in_gate = sigmoid(slice_cols(gates, 0, hidden));
  Var forget_gate = sigmoid(slice_cols(gates, hidden, hidden));
  Var cell_in = tanh(slice_cols(gates, 2 * hidden, hidden));
  Var out_gate = sigmoid(slice_cols(gates, 3 * hidden, hidden));
  Var c_next = add(mul(forget_gate, c), mul(in_gate, cell_in));
  Var h_next = mul(out_gate, tanh(c_next));
  return {h_next, c_next};
}

void LstmCell::init(Rng& rng) {
  init_weight(w_, rng);
  init_weight(u_, rng);
}

void LstmCell::collect(ParamList& out) {
  out.push_back(&w_);
  out.push_back(&u_);
  out.push_back(&b_);
}

Gru::Gru(const std::string& name, std::size_t input, std::size_t hidden,
         std::size_t layers, double dropout)
    : dropout_(dropout) {
  if (layers == 0) throw ShapeError(name + ": at least one layer required");
  for (std::size_t l = 0; l < layers; ++l) {
    cells_.emplace_back(name + ".l" + std::to_string(l),
                        l == 0 ? input : hidden, hidden);
  }
}

GruOutput Gru::forward(std::span<const Var> steps, Rng& rng,
                       bool training) const {
  if (steps.empty()) throw ShapeError("gru: empty sequence");
  std::vector<Var> layer_in(steps.begin(), steps.end());
  std::vector<Var> layer_out;
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    if (l > 0) {
      for (Var& v : layer_in) v = dropout(v, dropout_, rng, training);
    }
    layer_out.clear();
    Var h = zeros_like_state(layer_in.front(), cells_[l].hidden_size());
    for (Var x : layer_in) {
      h = cells_[l].step(x, h);
      layer_out.push_back(h);
    }
    layer_in = layer_out;
  }
  return GruOutput{layer_out, layer_out.back()};
}

void Gru::init(Rng& rng) {
  for (GruCell& c : cells_) c.init(rng);
}

void Gru::collect(ParamList& out) {
  for (GruCell& c : cells_) c.collect(out);
}

BiLstm::BiLstm(const std::string& name, std::size_t input, std::size_t hidden,
               std::size_t layers, double dropout)
    : dropout_(dropout) {
  if (layers == 0) throw ShapeError(name + ": at least one layer required");
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = l == 0 ? input : 2 * hidden;
    const std::string prefix = name + ".l" + std::to_string(l);
    forward_.emplace_back(prefix + ".fwd", in, hidden);
    backward_.emplace_back(prefix + ".bwd", in, hidden);
  }
}

BiLstmOutput BiLstm::forward(std::span<const Var> steps, Rng& rng,
                             bool training) const {
  if (steps.empty()) throw ShapeError("bilstm: empty sequence");
  const std::size_t steps_n = steps.size();
  std::vector<Var> layer_in(steps.begin(), steps.end());
  BiLstmOutput out;
  for (std::size_t l = 0; l < forward_.size(); ++l) {
    if (l > 0) {
      for (std::size_t t = 0; t < steps_n; ++t) {
        const Var both[2] = {out.forward[t], out.backward[t]};
        layer_in[t] = dropout(concat_cols(both), dropout_, rng, training);
      }
    }
    const std::size_t hidden = forward_[l].hidden_size();
    std::vector<Var> fwd(steps_n), bwd(steps_n);

    Var h = zeros_like_state(layer_in.front(), hidden);
    Var c = h;
    for (std::size_t t = 0; t < steps_n; ++t) {
      std::tie(h, c) = forward_[l].step(layer_in[t], h, c);
      fwd[t] = h;
    }
    h = zeros_like_state(layer_in.front(), hidden);
    c = h;
    for (std::size_t t = steps_n; t-- > 0;) {
      std::tie(h, c) = backward_[l].step(layer_in[t], h, c);
      bwd[t] = h;
    }
    out.forward = std::move(fwd);
    out.backward = std::move(bwd);
  }
  return out;
}

void BiLstm::init(Rng& rng) {
  for (std::size_t l = 0; l < forward_.size(); ++l) {
    forward_[l].init(rng);
    backward_[l].init(rng);
  }
}

void BiLstm::collect(ParamList& out) {
  for (std::size_t l = 0; l < forward_.size(); ++l) {
    forward_[l].collect(out);
    backward_[l].collect(out);
  }
}

}  // namespace moodpipe::nn
