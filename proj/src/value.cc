// Copyright 2026 The M3PC Authors
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

#include "m3pc/value.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "m3pc/ops.h"

namespace m3pc {

void to_json(nlohmann::json& j, const ValueConfig& c) {
  j = {{"hidden", c.hidden},
       {"gamma", c.gamma},
       {"expectile", c.expectile},
       {"lr", c.lr},
       {"target_rate", c.target_rate}};
}

void from_json(const nlohmann::json& j, ValueConfig& c) {
  ValueConfig d;
  c.hidden = j.value("hidden", d.hidden);
  c.gamma = j.value("gamma", d.gamma);
  c.expectile = j.value("expectile", d.expectile);
  c.lr = j.value("lr", d.lr);
  c.target_rate = j.value("target_rate", d.target_rate);
}

TransitionBatch TransitionsFromSegments(
    std::span<const TrajectorySegment> segments) {
  TransitionBatch b;
  if (segments.empty()) return b;
  b.state_dim = segments[0].state_dim;
  b.action_dim = segments[0].action_dim;
  for (const TrajectorySegment& s : segments) {
    for (int t = 0; t < s.length; ++t) {
      if (!s.valid[t]) continue;
      const bool last = t == s.episode_end;
      const bool has_next = t + 1 < s.length && s.valid[t + 1];
      if (!has_next && !(last && s.episode_terminal)) continue;
      b.states.insert(b.states.end(), s.state(t).begin(), s.state(t).end());
      b.actions.insert(b.actions.end(), s.action(t).begin(), s.action(t).end());
      b.rewards.push_back(s.rewards[t]);
      if (has_next) {
        b.next_states.insert(b.next_states.end(), s.state(t + 1).begin(),
                             s.state(t + 1).end());
      } else {
        b.next_states.insert(b.next_states.end(), s.state_dim, 0.0);
      }
      b.terminal.push_back(!has_next);
      ++b.size;
    }
  }
  return b;
}

Tensor ExpectileLoss(const Tensor& q, const Tensor& v, double tau) {
  if (q.shape() != v.shape()) throw ShapeError("expectile", q.shape(), v.shape());
  Tensor u = Sub(q, v);
  std::vector<double> w(u.numel());
  for (int64_t i = 0; i < u.numel(); ++i) {
    w[i] = u.at(i) < 0.0 ? 1.0 - tau : tau;
  }
  return Mean(Mul(Square(u), Tensor::FromData(u.shape(), std::move(w))));
}

QvModel::QvModel(int state_dim, int action_dim, const ValueConfig& config,
                 uint64_t seed)
    : state_dim_(state_dim), action_dim_(action_dim), config_(config) {
  if (state_dim < 1 || action_dim < 1 || config.hidden < 1) {
    throw std::invalid_argument("QvModel: bad dimensions");
  }
  if (config.expectile <= 0.0 || config.expectile >= 1.0) {
    throw std::invalid_argument("QvModel: expectile must lie in (0, 1)");
  }
  stats = NormalizationStats::Identity(state_dim);
  Rng rng(seed);
  q_ = MakeMlp(state_dim + action_dim, "q", rng);
  v_ = MakeMlp(state_dim, "v", rng);
  for (const auto& p : params_) {
    std::vector<double> copy(p.tensor.data().begin(), p.tensor.data().end());
    target_params_.push_back(
        {p.name + ".target", Tensor::FromData(p.tensor.shape(), copy)});
  }
  auto bind = [&](int offset) {
    Mlp m;
    Tensor* fields[] = {&m.w1, &m.b1, &m.w2, &m.b2, &m.w3, &m.b3};
    for (int i = 0; i < 6; ++i) *fields[i] = target_params_[offset + i].tensor;
    return m;
  };
  q_target_ = bind(0);
  v_target_ = bind(6);
  optimizer_ = std::make_unique<Adam>(params_);
}

QvModel::Mlp QvModel::MakeMlp(int in, const std::string& prefix, Rng& rng) {
  const int h = config_.hidden;
  auto uniform = [&](const Shape& shape, int fan_in) {
    const double bound = 1.0 / std::sqrt(double(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> v(NumElements(shape));
    for (double& x : v) x = u(rng);
    return Tensor::FromData(shape, std::move(v), true);
  };
  Mlp m;
  m.w1 = uniform({in, h}, in);
  m.b1 = Tensor::Zeros({h}, true);
  m.w2 = uniform({h, h}, h);
  m.b2 = Tensor::Zeros({h}, true);
  m.w3 = uniform({h, 1}, h);
  m.b3 = Tensor::Zeros({1}, true);
  params_.push_back({prefix + ".fc1.weight", m.w1});
  params_.push_back({prefix + ".fc1.bias", m.b1});
  params_.push_back({prefix + ".fc2.weight", m.w2});
  params_.push_back({prefix + ".fc2.bias", m.b2});
  params_.push_back({prefix + ".fc3.weight", m.w3});
  params_.push_back({prefix + ".fc3.bias", m.b3});
  return m;
}

void QvModel::FitScales(std::span<const Episode> episodes) {
  stats = NormalizationStats::Compute(episodes);
  const double per_step =
      std::max(std::abs(stats.reward_mean) + stats.reward_std, 1e-3);
  value_scale = per_step / (1.0 - config_.gamma);
}

Tensor QvModel::RunMlp(const Mlp& m, const Tensor& x) const {
  Tensor h = Gelu(Linear(x, m.w1, m.b1));
  h = Gelu(Linear(h, m.w2, m.b2));
  Tensor out = Linear(h, m.w3, m.b3);
  return Scale(Reshape(out, {out.dim(0)}), value_scale);
}

Tensor QvModel::StateInput(std::span<const double> states) const {
  const int n = static_cast<int>(states.size() / state_dim_);
  std::vector<double> z(states.size());
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < state_dim_; ++k) {
      z[size_t(i) * state_dim_ + k] =
          stats.NormalizeState(states[size_t(i) * state_dim_ + k], k);
    }
  }
  return Tensor::FromData({n, state_dim_}, std::move(z));
}

Tensor QvModel::Q(std::span<const double> states,
                  std::span<const double> actions, bool target) const {
  const int n = static_cast<int>(states.size() / state_dim_);
  if (int64_t(actions.size()) != int64_t(n) * action_dim_) {
    throw ShapeError("q_eval", "states for " + std::to_string(n) +
                                   " rows but " +
                                   std::to_string(actions.size()) + " actions");
  }
  Tensor a = Tensor::FromData(
      {n, action_dim_}, std::vector<double>(actions.begin(), actions.end()));
  Tensor x = Concat({StateInput(states), a}, 1);
  return RunMlp(target ? q_target_ : q_, x);
}

Tensor QvModel::V(std::span<const double> states, bool target) const {
  return RunMlp(target ? v_target_ : v_, StateInput(states));
}

std::vector<double> QvModel::QTargets(const TransitionBatch& batch) const {
  NoGradGuard no_grad;
  std::vector<double> y(batch.rewards);
  if (config_.gamma == 0.0 || batch.size == 0) return y;
  Tensor v_next = V(batch.next_states, /*target=*/true);
  for (int i = 0; i < batch.size; ++i) {
    if (!batch.terminal[i]) y[i] += config_.gamma * v_next.at(i);
  }
  return y;
}

Tensor QvModel::QLoss(const TransitionBatch& batch) const {
  const std::vector<double> y = QTargets(batch);
  Tensor q = Q(batch.states, batch.actions, false);
  std::vector<double> scaled(y.size());
  for (size_t i = 0; i < y.size(); ++i) scaled[i] = y[i] / value_scale;
  Tensor target = Tensor::FromData({batch.size}, std::move(scaled));
  return Mean(Square(Sub(Scale(q, 1.0 / value_scale), target)));
}

Tensor QvModel::VLoss(const TransitionBatch& batch) const {
  std::vector<double> qt;
  {
    NoGradGuard no_grad;
    Tensor q = Q(batch.states, batch.actions, /*target=*/true);
    qt.assign(q.data().begin(), q.data().end());
  }
  for (double& x : qt) x /= value_scale;
  Tensor v = Scale(V(batch.states, false), 1.0 / value_scale);
  return ExpectileLoss(Tensor::FromData({batch.size}, std::move(qt)), v,
                       config_.expectile);
}

std::pair<double, double> QvModel::TrainStep(const TransitionBatch& batch) {
  if (batch.size == 0) return {0.0, 0.0};
  optimizer_->ZeroGrad();
  Tensor lq = QLoss(batch);
  Tensor lv = VLoss(batch);
  Backward(Add(lq, lv));
  optimizer_->Step(config_.lr, 0.0);
  UpdateTargets(config_.target_rate);
  return {lq.item(), lv.item()};
}

void QvModel::UpdateTargets(double rate) {
  for (size_t i = 0; i < params_.size(); ++i) {
    auto live = params_[i].tensor.data();
    auto tgt = target_params_[i].tensor.mutable_data();
    for (size_t k = 0; k < tgt.size(); ++k) {
      tgt[k] += rate * (live[k] - tgt[k]);
    }
  }
}

std::vector<double> QvModel::QEval(std::span<const double> states,
                                   std::span<const double> actions) const {
  NoGradGuard no_grad;
  Tensor q = Q(states, actions, false);
  return {q.data().begin(), q.data().end()};
}

}  // namespace m3pc
