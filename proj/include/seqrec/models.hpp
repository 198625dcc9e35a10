// Copyright 2026 The seqrec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// The four neural sequence scorers (GRU, NARM, SASRec, BERT4Rec) plus two
// non-neural baselines, all behind the ScoreFunction interface. Scoring is
// always evaluation-mode (no dropout); training losses are built on a fresh
// graph per batch by build_loss.
#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "seqrec/autodiff.hpp"
#include "seqrec/rng.hpp"
#include "seqrec/scorer.hpp"

namespace seqrec {

enum class LossReduction { Sum, MeanPerTerm };

// A ScoreFunction with parameters and a training objective.
class TrainableModel : public ScoreFunction {
 public:
  virtual std::vector<ad::Param*> parameters() = 0;
  virtual std::vector<const ad::Param*> parameters() const = 0;

  // Builds the training loss for a mini-batch of item-index sequences on the
  // given graph. Losses that draw randomness (BPR negatives, cloze masks)
  // consume it from `rng` only, so a copied generator reproduces the loss.
  virtual ad::Graph::Id build_loss(ad::Graph& g, std::span<const std::vector<int>> batch,
                                   Rng& rng) = 0;

  std::size_t parameter_count() const override {
    std::size_t n = 0;
    for (const ad::Param* p : parameters()) n += p->value.size();
    return n;
  }
};

namespace detail {

inline std::vector<int> tail_window(std::span<const int> xs, int max_len) {
  int take = std::min<int>(static_cast<int>(xs.size()), max_len);
  return std::vector<int>(xs.end() - take, xs.end());
}

inline std::vector<double> gather_scores(const ad::Tensor& logits, std::span<const int> candidates) {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (int c : candidates) out.push_back(logits.at(0, c));
  return out;
}

// Shared GRU cell (update gate z, reset gate r):
//   z_t = sigmoid(e_t Wz + h_{t-1} Rz + bz)
//   r_t = sigmoid(e_t Wr + h_{t-1} Rr + br)
//   h_t = (1 - z_t) . h_{t-1} + z_t . tanh(e_t Wh + (r_t . h_{t-1}) Rh + bh)
struct GruCell {
  ad::Param Wz, Wr, Wh;  // e x d
  ad::Param Rz, Rr, Rh;  // d x d
  ad::Param bz, br, bh;  // 1 x d

  GruCell(const std::string& prefix, int e, int d)
      : Wz(prefix + ".Wz", ad::Tensor::zeros(e, d)),
        Wr(prefix + ".Wr", ad::Tensor::zeros(e, d)),
        Wh(prefix + ".Wh", ad::Tensor::zeros(e, d)),
        Rz(prefix + ".Rz", ad::Tensor::zeros(d, d)),
        Rr(prefix + ".Rr", ad::Tensor::zeros(d, d)),
        Rh(prefix + ".Rh", ad::Tensor::zeros(d, d)),
        bz(prefix + ".bz", ad::Tensor::zeros(1, d)),
        br(prefix + ".br", ad::Tensor::zeros(1, d)),
        bh(prefix + ".bh", ad::Tensor::zeros(1, d)) {}

  void init(Rng& rng) {
    for (ad::Param* p : {&Wz, &Wr, &Wh, &Rz, &Rr, &Rh}) p->init_uniform(rng);
  }

  void collect(std::vector<ad::Param*>& out) {
    for (ad::Param* p : {&Wz, &Wr, &Wh, &Rz, &Rr, &Rh, &bz, &br, &bh}) out.push_back(p);
  }
  void collect(std::vector<const ad::Param*>& out) const {
    for (const ad::Param* p : {&Wz, &Wr, &Wh, &Rz, &Rr, &Rh, &bz, &br, &bh}) out.push_back(p);
  }

  ad::Graph::Id step(ad::Graph& g, ad::Graph::Id et, ad::Graph::Id h_prev) const {
    auto& mut = const_cast<GruCell&>(*this);
    auto z = g.sigmoid(g.add(g.add(g.matmul(et, g.param(mut.Wz)), g.matmul(h_prev, g.param(mut.Rz))),
                             g.param(mut.bz)));
    auto r = g.sigmoid(g.add(g.add(g.matmul(et, g.param(mut.Wr)), g.matmul(h_prev, g.param(mut.Rr))),
                             g.param(mut.br)));
    auto cand = g.tanh_(g.add(
        g.add(g.matmul(et, g.param(mut.Wh)), g.matmul(g.mul(r, h_prev), g.param(mut.Rh))),
        g.param(mut.bh)));
    auto keep = g.mul(g.affine(z, -1.0, 1.0), h_prev);  // (1 - z) . h_{t-1}
    return g.add(keep, g.mul(z, cand));
  }

  // hidden states h_1..h_T for an embedded sequence (T x e), h_0 = 0
  std::vector<ad::Graph::Id> chain(ad::Graph& g, ad::Graph::Id emb, int steps, int d) const {
    std::vector<ad::Graph::Id> hs;
    hs.reserve(static_cast<std::size_t>(steps));
    ad::Graph::Id h = g.constant(ad::Tensor::zeros(1, d));
    for (int t = 0; t < steps; ++t) {
      h = step(g, g.narrow_rows(emb, t, 1), h);
      hs.push_back(h);
    }
    return hs;
  }
};

inline void require_prefix(std::span<const int> prefix) {
  if (prefix.empty()) throw std::invalid_argument("model scoring requires a non-empty prefix");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// GRU
// ---------------------------------------------------------------------------

struct GruConfig {
  int n_items = 0;
  int embedding = 64;
  int hidden = 64;
  LossReduction reduction = LossReduction::Sum;
};

class GruModel final : public TrainableModel {
 public:
  GruModel(GruConfig cfg, std::uint64_t init_seed, std::string name = "gru")
      : cfg_(cfg),
        name_(std::move(name)),
        M_("M", ad::Tensor::zeros(cfg.n_items, cfg.embedding)),
        cell_("gru", cfg.embedding, cfg.hidden),
        Wout_("Wout", ad::Tensor::zeros(cfg.hidden, cfg.n_items)),
        bout_("bout", ad::Tensor::zeros(1, cfg.n_items)) {
    if (cfg.n_items < 1) throw std::invalid_argument("GruModel: empty catalog");
    Rng rng = Rng::stream(init_seed, {0x677275});
    M_.init_uniform_bound(rng, 1.0 / std::sqrt(static_cast<double>(cfg.embedding)));
    cell_.init(rng);
    Wout_.init_uniform(rng);
  }

  const std::string& name() const override { return name_; }
  const GruConfig& config() const { return cfg_; }

  std::vector<ad::Param*> parameters() override {
    std::vector<ad::Param*> out{&M_};
    cell_.collect(out);
    out.push_back(&Wout_);
    out.push_back(&bout_);
    return out;
  }
  std::vector<const ad::Param*> parameters() const override {
    std::vector<const ad::Param*> out{&M_};
    cell_.collect(out);
    out.push_back(&Wout_);
    out.push_back(&bout_);
    return out;
  }

  std::vector<double> score(std::span<const int> prefix,
                            std::span<const int> candidates) const override {
    detail::require_prefix(prefix);
    ad::Graph g;
    auto logits = logits_after(g, prefix);
    return detail::gather_scores(g.value(logits), candidates);
  }

  // Next-item cross entropy over every prefix of every batch sequence.
  ad::Graph::Id build_loss(ad::Graph& g, std::span<const std::vector<int>> batch, Rng&) override {
    ad::Graph::Id loss = g.constant(ad::Tensor::scalar(0.0));
    std::int64_t terms = 0;
    for (const auto& s : batch) {
      if (s.size() < 2) continue;
      int steps = static_cast<int>(s.size()) - 1;
      auto emb = g.embedding(g.param(M_), std::vector<int>(s.begin(), s.end() - 1));
      auto hs = cell_.chain(g, emb, steps, cfg_.hidden);
      for (int t = 0; t < steps; ++t) {
        auto logits = g.add(g.matmul(hs[static_cast<std::size_t>(t)], g.param(Wout_)), g.param(bout_));
        auto lp = g.gather_entries(g.log_softmax_rows(logits), {{0, s[static_cast<std::size_t>(t) + 1]}});
        loss = g.add(loss, g.affine(lp, -1.0, 0.0));
        ++terms;
      }
    }
    if (terms == 0) throw std::invalid_argument("build_loss: batch has no training pairs");
    if (cfg_.reduction == LossReduction::MeanPerTerm) {
      loss = g.affine(loss, 1.0 / static_cast<double>(terms), 0.0);
    }
    return loss;
  }

 private:
  ad::Graph::Id logits_after(ad::Graph& g, std::span<const int> prefix) const {
    auto& mut = const_cast<GruModel&>(*this);
    auto emb = g.embedding(g.param(mut.M_), std::vector<int>(prefix.begin(), prefix.end()));
    auto hs = cell_.chain(g, emb, static_cast<int>(prefix.size()), cfg_.hidden);
    return g.add(g.matmul(hs.back(), g.param(mut.Wout_)), g.param(mut.bout_));
  }

  GruConfig cfg_;
  std::string name_;
  ad::Param M_;
  detail::GruCell cell_;
  ad::Param Wout_;
  ad::Param bout_;
};

// ---------------------------------------------------------------------------
// NARM: global GRU + local GRU with additive alignment over hidden states
// ---------------------------------------------------------------------------

struct NarmConfig {
  int n_items = 0;
  int embedding = 64;
  int hidden = 64;
  // The alignment scores are applied as-is by default, matching the original
  // model; softmax normalization over positions is available as a variant.
  bool softmax_attention = false;
  LossReduction reduction = LossReduction::Sum;
};

class NarmModel final : public TrainableModel {
 public:
  NarmModel(NarmConfig cfg, std::uint64_t init_seed, std::string name = "narm")
      : cfg_(cfg),
        name_(std::move(name)),
        M_("M", ad::Tensor::zeros(cfg.n_items, cfg.embedding)),
        global_("global", cfg.embedding, cfg.hidden),
        local_("local", cfg.embedding, cfg.hidden),
        A1_("A1", ad::Tensor::zeros(cfg.hidden, cfg.hidden)),
        A2_("A2", ad::Tensor::zeros(cfg.hidden, cfg.hidden)),
        V_("V", ad::Tensor::zeros(cfg.hidden, 1)),
        B_("B", ad::Tensor::zeros(2 * cfg.hidden, cfg.embedding)) {
    if (cfg.n_items < 1) throw std::invalid_argument("NarmModel: empty catalog");
    Rng rng = Rng::stream(init_seed, {0x6e61726d});
    M_.init_uniform_bound(rng, 1.0 / std::sqrt(static_cast<double>(cfg.embedding)));
    global_.init(rng);
    local_.init(rng);
    A1_.init_uniform(rng);
    A2_.init_uniform(rng);
    V_.init_uniform(rng);
    B_.init_uniform(rng);
  }

  const std::string& name() const override { return name_; }
  const NarmConfig& config() const { return cfg_; }

  std::vector<ad::Param*> parameters() override {
    std::vector<ad::Param*> out{&M_};
    global_.collect(out);
    local_.collect(out);
    for (ad::Param* p : {&A1_, &A2_, &V_, &B_}) out.push_back(p);
    return out;
  }
  std::vector<const ad::Param*> parameters() const override {
    std::vector<const ad::Param*> out{&M_};
    global_.collect(out);
    local_.collect(out);
    for (const ad::Param* p : {&A1_, &A2_, &V_, &B_}) out.push_back(p);
    return out;
  }

  std::vector<double> score(std::span<const int> prefix,
                            std::span<const int> candidates) const override {
    detail::require_prefix(prefix);
    ad::Graph g;
    auto& mut = const_cast<NarmModel&>(*this);
    auto emb = g.embedding(g.param(mut.M_), std::vector<int>(prefix.begin(), prefix.end()));
    int steps = static_cast<int>(prefix.size());
    auto hg = global_.chain(g, emb, steps, cfg_.hidden);
    auto hl = local_.chain(g, emb, steps, cfg_.hidden);
    auto logits = logits_at(g, hg, hl, steps - 1);
    return detail::gather_scores(g.value(logits), candidates);
  }

  ad::Graph::Id build_loss(ad::Graph& g, std::span<const std::vector<int>> batch, Rng&) override {
    ad::Graph::Id loss = g.constant(ad::Tensor::scalar(0.0));
    std::int64_t terms = 0;
    for (const auto& s : batch) {
      if (s.size() < 2) continue;
      int steps = static_cast<int>(s.size()) - 1;
      auto emb = g.embedding(g.param(M_), std::vector<int>(s.begin(), s.end() - 1));
      auto hg = global_.chain(g, emb, steps, cfg_.hidden);
      auto hl = local_.chain(g, emb, steps, cfg_.hidden);
      for (int t = 0; t < steps; ++t) {
        auto logits = logits_at(g, hg, hl, t);
        auto lp = g.gather_entries(g.log_softmax_rows(logits), {{0, s[static_cast<std::size_t>(t) + 1]}});
        loss = g.add(loss, g.affine(lp, -1.0, 0.0));
        ++terms;
      }
    }
    if (terms == 0) throw std::invalid_argument("build_loss: batch has no training pairs");
    if (cfg_.reduction == LossReduction::MeanPerTerm) {
      loss = g.affine(loss, 1.0 / static_cast<double>(terms), 0.0);
    }
    return loss;
  }

 private:
  // c = [h^G_t ; sum_j alpha_{t,j} h^L_j], o = (c B) M^T with
  // alpha_{t,j} = V^T sigmoid(A1 h^L_t + A2 h^L_j)
  ad::Graph::Id logits_at(ad::Graph& g, const std::vector<ad::Graph::Id>& hg,
                          const std::vector<ad::Graph::Id>& hl, int t) const {
    auto& mut = const_cast<NarmModel&>(*this);
    auto last = hl[static_cast<std::size_t>(t)];
    auto q1 = g.matmul(last, g.param(mut.A1_));
    std::vector<ad::Graph::Id> alphas;
    alphas.reserve(static_cast<std::size_t>(t) + 1);
    for (int j = 0; j <= t; ++j) {
      auto act = g.sigmoid(g.add(q1, g.matmul(hl[static_cast<std::size_t>(j)], g.param(mut.A2_))));
      alphas.push_back(g.matmul(act, g.param(mut.V_)));  // 1x1
    }
    if (cfg_.softmax_attention) {
      ad::Graph::Id row = alphas[0];
      for (int j = 1; j <= t; ++j) row = g.concat_cols(row, alphas[static_cast<std::size_t>(j)]);
      auto sm = g.softmax_rows(row);
      for (int j = 0; j <= t; ++j) alphas[static_cast<std::size_t>(j)] = g.narrow_cols(sm, j, 1);
    }
    ad::Graph::Id local = g.mul(hl[0], alphas[0]);
    for (int j = 1; j <= t; ++j) {
      local = g.add(local, g.mul(hl[static_cast<std::size_t>(j)], alphas[static_cast<std::size_t>(j)]));
    }
    auto c = g.concat_cols(hg[static_cast<std::size_t>(t)], local);
    auto proj = g.matmul(c, g.param(mut.B_));
    return g.matmul_nt(proj, g.param(mut.M_));
  }

  NarmConfig cfg_;
  std::string name_;
  ad::Param M_;
  detail::GruCell global_;
  detail::GruCell local_;
  ad::Param A1_, A2_, V_, B_;
};

// ---------------------------------------------------------------------------
// Transformer building block shared by SASRec and BERT4Rec
// ---------------------------------------------------------------------------

namespace detail {

enum class FeedForwardAct { Relu, Gelu };

// One pre-norm block: x + Dropout(MH(LN(x))), then y + Dropout(FF(LN(y))).
// Attention is scaled dot product with per-head projections to d/H.
struct TransformerBlock {
  int d = 0;
  int heads = 0;
  FeedForwardAct act = FeedForwardAct::Relu;
  std::vector<ad::Param> Wq, Wk, Wv, bq, bk, bv;
  ad::Param Wo, bo;
  ad::Param W1, b1, W2, b2;
  ad::Param ln1_g, ln1_b, ln2_g, ln2_b;

  TransformerBlock(const std::string& prefix, int d_, int heads_, FeedForwardAct act_)
      : d(d_),
        heads(heads_),
        act(act_),
        Wo(prefix + ".Wo", ad::Tensor::zeros(d_, d_)),
        bo(prefix + ".bo", ad::Tensor::zeros(1, d_)),
        W1(prefix + ".W1", ad::Tensor::zeros(d_, d_)),
        b1(prefix + ".b1", ad::Tensor::zeros(1, d_)),
        W2(prefix + ".W2", ad::Tensor::zeros(d_, d_)),
        b2(prefix + ".b2", ad::Tensor::zeros(1, d_)),
        ln1_g(prefix + ".ln1_g", ad::Tensor::full(1, d_, 1.0)),
        ln1_b(prefix + ".ln1_b", ad::Tensor::zeros(1, d_)),
        ln2_g(prefix + ".ln2_g", ad::Tensor::full(1, d_, 1.0)),
        ln2_b(prefix + ".ln2_b", ad::Tensor::zeros(1, d_)) {
    if (d_ % heads_ != 0) throw std::invalid_argument("hidden size must be divisible by heads");
    int dh = d_ / heads_;
    for (int h = 0; h < heads_; ++h) {
      std::string hp = prefix + ".h" + std::to_string(h);
      Wq.emplace_back(hp + ".Wq", ad::Tensor::zeros(d_, dh));
      Wk.emplace_back(hp + ".Wk", ad::Tensor::zeros(d_, dh));
      Wv.emplace_back(hp + ".Wv", ad::Tensor::zeros(d_, dh));
      bq.emplace_back(hp + ".bq", ad::Tensor::zeros(1, dh));
      bk.emplace_back(hp + ".bk", ad::Tensor::zeros(1, dh));
      bv.emplace_back(hp + ".bv", ad::Tensor::zeros(1, dh));
    }
  }

  void init(Rng& rng) {
    for (int h = 0; h < heads; ++h) {
      Wq[static_cast<std::size_t>(h)].init_uniform(rng);
      Wk[static_cast<std::size_t>(h)].init_uniform(rng);
      Wv[static_cast<std::size_t>(h)].init_uniform(rng);
    }
    Wo.init_uniform(rng);
    W1.init_uniform(rng);
    W2.init_uniform(rng);
  }

  template <typename Out>
  void collect_into(std::vector<Out>& out) const {
    auto& mut = const_cast<TransformerBlock&>(*this);
    for (int h = 0; h < heads; ++h) {
      out.push_back(&mut.Wq[static_cast<std::size_t>(h)]);
      out.push_back(&mut.bq[static_cast<std::size_t>(h)]);
      out.push_back(&mut.Wk[static_cast<std::size_t>(h)]);
      out.push_back(&mut.bk[static_cast<std::size_t>(h)]);
      out.push_back(&mut.Wv[static_cast<std::size_t>(h)]);
      out.push_back(&mut.bv[static_cast<std::size_t>(h)]);
    }
    for (auto* p : {&mut.Wo, &mut.bo, &mut.W1, &mut.b1, &mut.W2, &mut.b2, &mut.ln1_g, &mut.ln1_b,
                    &mut.ln2_g, &mut.ln2_b}) {
      out.push_back(p);
    }
  }

  // causal_mask: null for bidirectional attention, else a T x T tensor with
  // nonzero entries marking forbidden (future) connections.
  ad::Graph::Id apply(ad::Graph& g, ad::Graph::Id x, const ad::Tensor* causal_mask, double dropout_p,
                      Rng* rng, bool training) const {
    auto& mut = const_cast<TransformerBlock&>(*this);
    auto dropped = [&](ad::Graph::Id id) {
      return (training && rng != nullptr) ? g.dropout(id, dropout_p, *rng, true) : id;
    };
    double scale = 1.0 / std::sqrt(static_cast<double>(d));

    auto normed = g.layer_norm(x, g.param(mut.ln1_g), g.param(mut.ln1_b));
    ad::Graph::Id concat = -1;
    for (int h = 0; h < heads; ++h) {
      auto q = g.add(g.matmul(normed, g.param(mut.Wq[static_cast<std::size_t>(h)])),
                     g.param(mut.bq[static_cast<std::size_t>(h)]));
      auto k = g.add(g.matmul(normed, g.param(mut.Wk[static_cast<std::size_t>(h)])),
                     g.param(mut.bk[static_cast<std::size_t>(h)]));
      auto v = g.add(g.matmul(normed, g.param(mut.Wv[static_cast<std::size_t>(h)])),
                     g.param(mut.bv[static_cast<std::size_t>(h)]));
      auto scores = g.affine(g.matmul_nt(q, k), scale, 0.0);
      if (causal_mask != nullptr) scores = g.masked_fill(scores, *causal_mask, -1e9);
      auto head = g.matmul(g.softmax_rows(scores), v);
      concat = (h == 0) ? head : g.concat_cols(concat, head);
    }
    auto mh = g.add(g.matmul(concat, g.param(mut.Wo)), g.param(mut.bo));
    auto after_attention = g.add(x, dropped(mh));

    auto normed2 = g.layer_norm(after_attention, g.param(mut.ln2_g), g.param(mut.ln2_b));
    auto hidden = g.add(g.matmul(normed2, g.param(mut.W1)), g.param(mut.b1));
    hidden = act == FeedForwardAct::Relu ? g.relu(hidden) : g.gelu(hidden);
    auto ff = g.add(g.matmul(hidden, g.param(mut.W2)), g.param(mut.b2));
    return g.add(after_attention, dropped(ff));
  }
};

inline ad::Tensor causal_mask(int len) {
  ad::Tensor mask(len, len);
  for (int i = 0; i < len; ++i) {
    for (int j = i + 1; j < len; ++j) mask.at(i, j) = 1.0;  // queries never see later keys
  }
  return mask;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// SASRec: causal transformer trained with a BPR loss
// ---------------------------------------------------------------------------

struct SasRecConfig {
  int n_items = 0;
  int d = 64;        // embedding and hidden size
  int max_len = 50;  // T
  int layers = 2;
  int heads = 2;
  double dropout = 0.2;
  // BPR negatives exclude the whole training sequence by default; the
  // per-step variant excludes only that step's target.
  bool per_step_negative_only = false;
};

class SasRecModel final : public TrainableModel {
 public:
  SasRecModel(SasRecConfig cfg, std::uint64_t init_seed, std::string name = "sasrec")
      : cfg_(cfg),
        name_(std::move(name)),
        M_("M", ad::Tensor::zeros(cfg.n_items, cfg.d)),
        P_("P", ad::Tensor::zeros(cfg.max_len, cfg.d)) {
    if (cfg.n_items < 1) throw std::invalid_argument("SasRecModel: empty catalog");
    if (cfg.max_len < 1) throw std::invalid_argument("SasRecModel: max_len must be >= 1");
    for (int l = 0; l < cfg.layers; ++l) {
      blocks_.emplace_back("block" + std::to_string(l), cfg.d, cfg.heads,
                           detail::FeedForwardAct::Relu);
    }
    Rng rng = Rng::stream(init_seed, {0x736173});
    M_.init_uniform_bound(rng, 1.0 / std::sqrt(static_cast<double>(cfg.d)));
    P_.init_uniform_bound(rng, 1.0 / std::sqrt(static_cast<double>(cfg.d)));
    for (auto& b : blocks_) b.init(rng);
  }

  const std::string& name() const override { return name_; }
  const SasRecConfig& config() const { return cfg_; }

  std::vector<ad::Param*> parameters() override {
    std::vector<ad::Param*> out{&M_, &P_};
    for (const auto& b : blocks_) b.collect_into(out);
    return out;
  }
  std::vector<const ad::Param*> parameters() const override {
    std::vector<const ad::Param*> out{&M_, &P_};
    for (const auto& b : blocks_) b.collect_into(out);
    return out;
  }

  std::vector<double> score(std::span<const int> prefix,
                            std::span<const int> candidates) const override {
    detail::require_prefix(prefix);
    ad::Graph g;
    auto window = detail::tail_window(prefix, cfg_.max_len);
    auto enc = encode(g, window, nullptr);
    auto& mut = const_cast<SasRecModel&>(*this);
    auto last = g.narrow_rows(enc, static_cast<int>(window.size()) - 1, 1);
    auto logits = g.matmul_nt(last, g.param(mut.M_));  // tied output embedding
    return detail::gather_scores(g.value(logits), candidates);
  }

  // BPR over every step: -log sigmoid(o_pos) - log(1 - sigmoid(o_neg)), one
  // uniformly drawn negative per step.
  ad::Graph::Id build_loss(ad::Graph& g, std::span<const std::vector<int>> batch, Rng& rng) override {
    ad::Graph::Id loss = g.constant(ad::Tensor::scalar(0.0));
    std::int64_t terms = 0;
    for (const auto& s : batch) {
      if (s.size() < 2) continue;
      // inputs are the last max_len items of s without its final item;
      // targets are the items one step later
      int t_len = std::min<int>(static_cast<int>(s.size()) - 1, cfg_.max_len);
      std::vector<int> inputs(s.end() - 1 - t_len, s.end() - 1);
      std::vector<int> targets(s.end() - t_len, s.end());
      std::vector<int> negatives = draw_negatives(s, targets, rng);

      auto enc = encode(g, inputs, &rng);
      auto pos_emb = g.embedding(g.param(M_), targets);
      auto neg_emb = g.embedding(g.param(M_), negatives);
      auto pos = g.sum_cols(g.mul(enc, pos_emb));  // t_len x 1 of dot products
      auto neg = g.sum_cols(g.mul(enc, neg_emb));
      auto term = g.add(g.softplus(g.affine(pos, -1.0, 0.0)), g.softplus(neg));
      loss = g.add(loss, g.sum_all(term));
      terms += t_len;
    }
    if (terms == 0) throw std::invalid_argument("build_loss: batch has no training pairs");
    return loss;
  }

 private:
  // Positions are right-aligned against max_len, which is exactly left
  // padding with the pad rows never materialized (they would be masked from
  // attention and loss anyway).
  ad::Graph::Id encode(ad::Graph& g, const std::vector<int>& items, Rng* rng) const {
    auto& mut = const_cast<SasRecModel&>(*this);
    int len = static_cast<int>(items.size());
    auto emb = g.embedding(g.param(mut.M_), items);
    auto pos = g.narrow_rows(g.param(mut.P_), cfg_.max_len - len, len);
    auto x = g.add(emb, pos);
    ad::Tensor mask = detail::causal_mask(len);
    bool training = rng != nullptr;
    for (const auto& b : blocks_) {
      x = b.apply(g, x, &mask, cfg_.dropout, rng, training);
    }
    return x;
  }

  std::vector<int> draw_negatives(const std::vector<int>& sequence, const std::vector<int>& targets,
                                  Rng& rng) const {
    std::unordered_set<int> forbidden;
    if (!cfg_.per_step_negative_only) {
      forbidden.insert(sequence.begin(), sequence.end());
    }
    std::vector<int> negs;
    negs.reserve(targets.size());
    for (int target : targets) {
      int neg = -1;
      for (int attempt = 0; attempt < 64 * cfg_.n_items; ++attempt) {
        int cand = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(cfg_.n_items)));
        bool bad = cand == target || (!cfg_.per_step_negative_only && forbidden.count(cand) > 0);
        if (!bad) {
          neg = cand;
          break;
        }
      }
      if (neg < 0) {
        // sequence covers the catalog; fall back to excluding the target only
        neg = (target + 1) % cfg_.n_items;
      }
      negs.push_back(neg);
    }
    return negs;
  }

  SasRecConfig cfg_;
  std::string name_;
  ad::Param M_;
  ad::Param P_;
  std::vector<detail::TransformerBlock> blocks_;
};

// ---------------------------------------------------------------------------
// BERT4Rec: bidirectional transformer with GELU, trained on a cloze objective
// ---------------------------------------------------------------------------

struct Bert4RecConfig {
  int n_items = 0;
  int d = 64;
  int max_len = 50;
  int layers = 2;
  int heads = 2;
  double dropout = 0.2;
  double mask_prob = 0.2;       // rho: per-position masking probability
  double last_mask_prob = 0.1;  // lambda: probability of masking only the last item
};

class Bert4RecModel final : public TrainableModel {
 public:
  Bert4RecModel(Bert4RecConfig cfg, std::uint64_t init_seed, std::string name = "bert4rec")
      : cfg_(cfg),
        name_(std::move(name)),
        // one extra embedding row for the mask token
        M_("M", ad::Tensor::zeros(cfg.n_items + 1, cfg.d)),
        P_("P", ad::Tensor::zeros(cfg.max_len, cfg.d)),
        bout_("bout", ad::Tensor::zeros(1, cfg.n_items)) {
    if (cfg.n_items < 1) throw std::invalid_argument("Bert4RecModel: empty catalog");
    if (cfg.max_len < 1) throw std::invalid_argument("Bert4RecModel: max_len must be >= 1");
    if (cfg.mask_prob <= 0.0 || cfg.mask_prob >= 1.0) {
      throw std::invalid_argument("Bert4RecModel: mask_prob must be in (0,1)");
    }
    if (cfg.last_mask_prob < 0.0 || cfg.last_mask_prob > 1.0) {
      throw std::invalid_argument("Bert4RecModel: last_mask_prob must be in [0,1]");
    }
    for (int l = 0; l < cfg.layers; ++l) {
      blocks_.emplace_back("block" + std::to_string(l), cfg.d, cfg.heads,
                           detail::FeedForwardAct::Gelu);
    }
    Rng rng = Rng::stream(init_seed, {0x62657274});
    M_.init_uniform_bound(rng, 1.0 / std::sqrt(static_cast<double>(cfg.d)));
    P_.init_uniform_bound(rng, 1.0 / std::sqrt(static_cast<double>(cfg.d)));
    for (auto& b : blocks_) b.init(rng);
  }

  const std::string& name() const override { return name_; }
  const Bert4RecConfig& config() const { return cfg_; }
  int mask_token() const { return cfg_.n_items; }

  std::vector<ad::Param*> parameters() override {
    std::vector<ad::Param*> out{&M_, &P_};
    for (const auto& b : blocks_) b.collect_into(out);
    out.push_back(&bout_);
    return out;
  }
  std::vector<const ad::Param*> parameters() const override {
    std::vector<const ad::Param*> out{&M_, &P_};
    for (const auto& b : blocks_) b.collect_into(out);
    out.push_back(&bout_);
    return out;
  }

  // Candidate scores at every masked position of an already-masked sequence
  // (mask token = n_items). Throws when the sequence holds no mask token.
  std::vector<std::vector<double>> masked_scores(std::span<const int> masked_sequence,
                                                 std::span<const int> candidates) const {
    auto window = detail::tail_window(masked_sequence, cfg_.max_len);
    ad::Graph g;
    auto enc = encode(g, window, nullptr);
    std::vector<std::vector<double>> out;
    for (std::size_t pos = 0; pos < window.size(); ++pos) {
      if (window[pos] != mask_token()) continue;
      auto row = g.narrow_rows(enc, static_cast<int>(pos), 1);
      out.push_back(detail::gather_scores(g.value(item_logits(g, row)), candidates));
    }
    return out;
  }

  // Inference masks the next position: the prefix window plus a trailing mask
  // token, scored at that mask position.
  std::vector<double> score(std::span<const int> prefix,
                            std::span<const int> candidates) const override {
    detail::require_prefix(prefix);
    ad::Graph g;
    auto window = detail::tail_window(prefix, cfg_.max_len - 1);
    window.push_back(mask_token());
    auto enc = encode(g, window, nullptr);
    auto last = g.narrow_rows(enc, static_cast<int>(window.size()) - 1, 1);
    auto logits = item_logits(g, last);
    return detail::gather_scores(g.value(logits), candidates);
  }

  // Cross entropy at masked positions only.
  ad::Graph::Id build_loss(ad::Graph& g, std::span<const std::vector<int>> batch, Rng& rng) override {
    ad::Graph::Id loss = g.constant(ad::Tensor::scalar(0.0));
    std::int64_t terms = 0;
    for (const auto& s : batch) {
      if (s.empty()) continue;
      auto window = detail::tail_window(s, cfg_.max_len);
      int len = static_cast<int>(window.size());
      std::vector<int> masked_positions = draw_mask_positions(len, rng);
      std::vector<int> inputs = window;
      for (int pos : masked_positions) inputs[static_cast<std::size_t>(pos)] = mask_token();

      auto enc = encode(g, inputs, &rng);
      std::vector<std::pair<int, int>> picks;
      picks.reserve(masked_positions.size());
      for (int pos : masked_positions) {
        picks.emplace_back(pos, window[static_cast<std::size_t>(pos)]);
      }
      auto logits = item_logits(g, enc);
      auto lp = g.gather_entries(g.log_softmax_rows(logits), std::move(picks));
      loss = g.add(loss, g.affine(g.sum_all(lp), -1.0, 0.0));
      terms += static_cast<std::int64_t>(masked_positions.size());
    }
    if (terms == 0) throw std::invalid_argument("build_loss: batch has no training pairs");
    return loss;
  }

 private:
  ad::Graph::Id encode(ad::Graph& g, const std::vector<int>& items, Rng* rng) const {
    auto& mut = const_cast<Bert4RecModel&>(*this);
    bool has_mask = false;
    for (int it : items) has_mask = has_mask || it == mask_token();
    if (!has_mask) throw std::invalid_argument("bert4rec forward requires at least one mask token");
    int len = static_cast<int>(items.size());
    auto emb = g.embedding(g.param(mut.M_), items);
    auto pos = g.narrow_rows(g.param(mut.P_), cfg_.max_len - len, len);
    auto x = g.add(emb, pos);
    bool training = rng != nullptr;
    for (const auto& b : blocks_) {
      x = b.apply(g, x, nullptr, cfg_.dropout, rng, training);  // bidirectional
    }
    return x;
  }

  // Projects encoder rows onto the item vocabulary (mask row excluded).
  ad::Graph::Id item_logits(ad::Graph& g, ad::Graph::Id rows) const {
    auto& mut = const_cast<Bert4RecModel&>(*this);
    auto items_only = g.narrow_rows(g.param(mut.M_), 0, cfg_.n_items);
    return g.add(g.matmul_nt(rows, items_only), g.param(mut.bout_));
  }

  std::vector<int> draw_mask_positions(int len, Rng& rng) const {
    if (rng.next_double() < cfg_.last_mask_prob) {
      return {len - 1};
    }
    std::vector<int> out;
    for (int i = 0; i < len; ++i) {
      if (rng.next_double() < cfg_.mask_prob) out.push_back(i);
    }
    if (out.empty()) {
      out.push_back(static_cast<int>(rng.next_below(static_cast<std::uint64_t>(len))));
    }
    return out;
  }

  Bert4RecConfig cfg_;
  std::string name_;
  ad::Param M_;
  ad::Param P_;
  ad::Param bout_;
  std::vector<detail::TransformerBlock> blocks_;
};

// ---------------------------------------------------------------------------
// Non-neural baselines
// ---------------------------------------------------------------------------

// Scores every candidate by its global interaction count, prefix-independent.
class PopularityScorer final : public ScoreFunction {
 public:
  explicit PopularityScorer(std::span<const std::int64_t> counts, std::string name = "popularity")
      : name_(std::move(name)), counts_(counts.begin(), counts.end()) {
    if (counts_.empty()) throw std::invalid_argument("PopularityScorer: empty counts");
  }

  const std::string& name() const override { return name_; }

  std::vector<double> score(std::span<const int>, std::span<const int> candidates) const override {
    std::vector<double> out;
    out.reserve(candidates.size());
    for (int c : candidates) out.push_back(static_cast<double>(counts_[static_cast<std::size_t>(c)]));
    return out;
  }

 private:
  std::string name_;
  std::vector<std::int64_t> counts_;
};

// First-order Markov chain over training transitions with add-one smoothing.
class MarkovScorer final : public ScoreFunction {
 public:
  MarkovScorer(std::span<const std::vector<int>> train_sequences, int n_items,
               std::string name = "markov")
      : name_(std::move(name)), n_items_(n_items), transitions_(static_cast<std::size_t>(n_items)),
        row_totals_(static_cast<std::size_t>(n_items), 0) {
    if (train_sequences.empty()) throw std::invalid_argument("MarkovScorer: no training sequences");
    for (const auto& s : train_sequences) {
      for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        transitions_[static_cast<std::size_t>(s[i])][s[i + 1]]++;
        row_totals_[static_cast<std::size_t>(s[i])]++;
      }
    }
  }

  const std::string& name() const override { return name_; }

  std::vector<double> score(std::span<const int> prefix,
                            std::span<const int> candidates) const override {
    detail::require_prefix(prefix);
    int last = prefix.back();
    const auto& row = transitions_[static_cast<std::size_t>(last)];
    double denom = static_cast<double>(row_totals_[static_cast<std::size_t>(last)] + n_items_);
    std::vector<double> out;
    out.reserve(candidates.size());
    for (int c : candidates) {
      auto hit = row.find(c);
      double count = hit == row.end() ? 0.0 : static_cast<double>(hit->second);
      out.push_back((count + 1.0) / denom);
    }
    return out;
  }

 private:
  std::string name_;
  int n_items_;
  std::vector<std::unordered_map<int, std::int64_t>> transitions_;
  std::vector<std::int64_t> row_totals_;
};

}  // namespace seqrec
