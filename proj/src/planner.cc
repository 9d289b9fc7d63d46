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

#include "m3pc/planner.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "m3pc/masking.h"
#include "m3pc/tensor.h"

namespace m3pc {
namespace {

// Runs `fn(first, count)` over [0, n) in chunks of at most `max_batch`.
template <typename F>
void ForChunks(int n, int max_batch, F&& fn) {
  const int chunk = max_batch > 0 ? max_batch : n;
  for (int first = 0; first < n; first += chunk) {
    fn(first, std::min(chunk, n - first));
  }
}

MaskPattern ValidMask(MaskKind kind, const DecisionContext& ctx) {
  MaskPattern m = NamedMask(kind, ctx.t_now, ctx.segment.length);
  m.RestrictToValid(ctx.segment.valid);
  return m;
}

}  // namespace

const char* PlannerModeName(PlannerMode mode) {
  switch (mode) {
    case PlannerMode::kRcbcOnly:
      return "rcbc-only";
    case PlannerMode::kM:
      return "m3pc-m";
    case PlannerMode::kQ:
      return "m3pc-q";
  }
  return "?";
}

PlannerMode ParsePlannerMode(std::string_view name) {
  for (PlannerMode m : {PlannerMode::kRcbcOnly, PlannerMode::kM,
                        PlannerMode::kQ}) {
    if (name == PlannerModeName(m)) return m;
  }
  throw std::invalid_argument("unknown planner mode '" + std::string(name) +
                              "' (rcbc-only|m3pc-m|m3pc-q)");
}

void PlannerConfig::Validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("planner lambda must lie in [0, 1]");
  }
  if (num_candidates < 1) {
    throw std::invalid_argument("planner needs at least one candidate");
  }
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("softmax temperature must be positive");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("gamma must lie in [0, 1]");
  }
}

void to_json(nlohmann::json& j, const PlannerConfig& c) {
  j = {{"gamma", c.gamma},
       {"lambda", c.lambda},
       {"num_candidates", c.num_candidates},
       {"temperature", c.temperature},
       {"mode", PlannerModeName(c.mode)},
       {"phase", c.phase == Phase::kOffline ? "offline" : "online"},
       {"q_utility", c.q_utility == QUtility::kFull ? "full" : "q-only"},
       {"decrement_rtg", c.decrement_rtg},
       {"target_return_scale", c.target_return_scale},
       {"max_batch", c.max_batch}};
}

void from_json(const nlohmann::json& j, PlannerConfig& c) {
  PlannerConfig d;
  c.gamma = j.value("gamma", d.gamma);
  c.lambda = j.value("lambda", d.lambda);
  c.num_candidates = j.value("num_candidates", d.num_candidates);
  c.temperature = j.value("temperature", d.temperature);
  c.mode = ParsePlannerMode(j.value("mode", std::string("m3pc-m")));
  const std::string phase = j.value("phase", std::string("offline"));
  if (phase != "offline" && phase != "online") {
    throw std::invalid_argument("phase must be offline or online");
  }
  c.phase = phase == "offline" ? Phase::kOffline : Phase::kOnline;
  const std::string qu = j.value("q_utility", std::string("full"));
  if (qu != "full" && qu != "q-only") {
    throw std::invalid_argument("q_utility must be full or q-only");
  }
  c.q_utility = qu == "full" ? QUtility::kFull : QUtility::kQOnly;
  c.decrement_rtg = j.value("decrement_rtg", d.decrement_rtg);
  c.target_return_scale = j.value("target_return_scale", d.target_return_scale);
  c.max_batch = j.value("max_batch", d.max_batch);
}

double Utility(std::span<const double> r, std::span<const double> g,
               double gamma, double lambda) {
  const int H = static_cast<int>(r.size());
  if (static_cast<int>(g.size()) != H + 1) {
    throw std::invalid_argument("utility: need |g| = |r| + 1");
  }
  if (H == 0) return g[0];
  // G_{t:t+n} built incrementally: reward prefix plus discounted bootstrap
  double u = 0.0;
  double prefix = 0.0;    // sum_{k<n} gamma^k r_{t+k}
  double discount = 1.0;  // gamma^n
  double weight = 1.0 - lambda;
  double lambda_n = 1.0;
  for (int n = 0; n < H; ++n) {
    u += weight * lambda_n * (prefix + discount * g[n]);
    prefix += discount * r[n];
    discount *= gamma;
    lambda_n *= lambda;
  }
  return u + lambda_n * (prefix + discount * g[H]);
}

std::vector<double> SelectionProbabilities(std::span<const double> utilities,
                                           double temperature) {
  if (utilities.empty()) throw std::invalid_argument("no utilities");
  double top = -std::numeric_limits<double>::infinity();
  for (double u : utilities) {
    if (std::isnan(u)) throw std::invalid_argument("NaN utility");
    top = std::max(top, u);
  }
  std::vector<double> p(utilities.size());
  double total = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(temperature * (utilities[i] - top));
    total += p[i];
  }
  for (double& x : p) x /= total;
  return p;
}

std::vector<double> SelectAction(std::span<const double> probabilities,
                                 std::span<const double> first_actions,
                                 int action_dim, Phase phase, Rng& rng) {
  const size_t n = probabilities.size();
  if (first_actions.size() != n * action_dim) {
    throw std::invalid_argument("select: candidate/probability mismatch");
  }
  std::vector<double> a(action_dim, 0.0);
  if (phase == Phase::kOffline) {
    for (size_t i = 0; i < n; ++i) {
      for (int k = 0; k < action_dim; ++k) {
        a[k] += probabilities[i] * first_actions[i * action_dim + k];
      }
    }
    return a;
  }
  std::discrete_distribution<size_t> pick(probabilities.begin(),
                                          probabilities.end());
  const size_t i = pick(rng);
  std::copy_n(first_actions.begin() + i * action_dim, action_dim, a.begin());
  return a;
}

void History::Start(std::span<const double> s0, int sd, int ad) {
  state_dim = sd;
  action_dim = ad;
  states.assign(s0.begin(), s0.end());
  actions.clear();
  rewards.clear();
}

void History::Append(std::span<const double> action, double reward,
                     std::span<const double> next_state) {
  actions.insert(actions.end(), action.begin(), action.end());
  rewards.push_back(reward);
  states.insert(states.end(), next_state.begin(), next_state.end());
}

DecisionContext BuildDecisionContext(const History& h, int segment_length,
                                     int context_length, int env_horizon,
                                     double target_return, bool decrement) {
  const int k = h.steps();
  const int T = segment_length;
  const int start = std::max(0, k - (context_length - 1));
  DecisionContext ctx;
  ctx.t_now = k - start + 1;
  ctx.segment = TrajectorySegment::Empty(T, h.state_dim, h.action_dim);
  TrajectorySegment& seg = ctx.segment;
  std::vector<double> collected(k + 1, 0.0);  // rewards before each step
  for (int j = 0; j < k; ++j) collected[j + 1] = collected[j] + h.rewards[j];
  auto token = [&](int step) {
    return decrement ? target_return - collected[std::min(step, k)]
                     : target_return;
  };
  ctx.horizon = 0;
  for (int p = 0; p < T; ++p) {
    const int step = start + p;
    seg.timesteps[p] = step;
    if (step >= env_horizon) continue;
    seg.valid[p] = 1;
    seg.rtgs[p] = token(step);
    if (step <= k) {
      std::copy_n(h.states.begin() + size_t(step) * h.state_dim, h.state_dim,
                  seg.state(p).begin());
    }
    if (step < k) {
      std::copy_n(h.actions.begin() + size_t(step) * h.action_dim,
                  h.action_dim, seg.action(p).begin());
      seg.rewards[p] = h.rewards[step];
    }
    if (p >= ctx.t_now - 1) ++ctx.horizon;
  }
  if (ctx.horizon < 1) {
    throw std::invalid_argument("decision requested past the env horizon");
  }
  return ctx;
}

ForwardPlanner::ForwardPlanner(const Btm& model, const QvModel* value,
                               const PlannerConfig& config, const EnvSpec& env)
    : model_(model), value_(value), env_(env) {
  set_config(config);
}

void ForwardPlanner::set_config(const PlannerConfig& config) {
  config.Validate();
  if (config.mode == PlannerMode::kQ && value_ == nullptr) {
    throw std::invalid_argument("mode m3pc-q needs a value estimator");
  }
  config_ = config;
}

std::vector<double> ForwardPlanner::ClampToSpec(
    std::span<const double> a) const {
  std::vector<double> out(a.begin(), a.end());
  for (size_t k = 0; k < out.size(); ++k) {
    out[k] = std::clamp(out[k], env_.action_low[k], env_.action_high[k]);
  }
  return out;
}

DecisionContext ForwardPlanner::Context(const History& history) const {
  const BtmConfig& mc = model_.config();
  return BuildDecisionContext(history, mc.segment_length, mc.context_length,
                              env_.horizon, target_return_,
                              config_.decrement_rtg);
}

CandidateSet ForwardPlanner::Propose(const DecisionContext& ctx, int n,
                                     Rng& rng) const {
  NoGradGuard no_grad;
  const int ad = ctx.segment.action_dim, sd = ctx.segment.state_dim;
  const int now = ctx.t_now - 1;
  const std::vector<TrajectorySegment> one = {ctx.segment};
  const std::vector<MaskPattern> mask = {ValidMask(MaskKind::kRcbc, ctx)};
  const BtmOutput out = model_.Forward(MakeBatch(one, mask, model_.stats));

  CandidateSet c;
  c.n = n;
  c.horizon = ctx.horizon;
  c.state_dim = sd;
  c.action_dim = ad;
  c.actions.resize(size_t(n) * c.horizon * ad);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    for (int s = 0; s < c.horizon; ++s) {
      for (int k = 0; k < ad; ++k) {
        const int64_t cell = int64_t(now + s) * ad + k;
        const double mean = out.action_mean.at(cell);
        const double std = std::exp(out.action_log_std.at(cell));
        c.actions[(size_t(i) * c.horizon + s) * ad + k] =
            std::clamp(mean + std * normal(rng), env_.action_low[k],
                       env_.action_high[k]);
      }
    }
  }
  return c;
}

void ForwardPlanner::RolloutAndScore(const DecisionContext& ctx,
                                     CandidateSet& c) const {
  NoGradGuard no_grad;
  const int T = ctx.segment.length, now = ctx.t_now - 1, h = c.horizon;
  const int sd = c.state_dim;
  const NormalizationStats& st = model_.stats;

  // candidate segments: context plus the candidate's actions
  std::vector<TrajectorySegment> segs(c.n, ctx.segment);
  for (int i = 0; i < c.n; ++i) {
    for (int s = 0; s < h; ++s) {
      auto a = c.action(i, s);
      std::copy(a.begin(), a.end(), segs[i].action(now + s).begin());
    }
  }

  // forward dynamics: s_{t+1..}
  c.states.assign(size_t(c.n) * h * sd, 0.0);
  const std::vector<MaskPattern> fd = {ValidMask(MaskKind::kFd, ctx)};
  ForChunks(c.n, config_.max_batch, [&](int first, int count) {
    std::span<const TrajectorySegment> part(segs.data() + first, count);
    const BtmOutput out = model_.Forward(MakeBatch(part, fd, st));
    for (int b = 0; b < count; ++b) {
      TrajectorySegment& seg = segs[first + b];
      for (int s = 1; s < h; ++s) {
        for (int k = 0; k < sd; ++k) {
          seg.state(now + s)[k] = st.DenormalizeState(
              out.state.at((int64_t(b) * T + now + s) * sd + k), k);
        }
      }
    }
  });
  for (int i = 0; i < c.n; ++i) {
    for (int s = 0; s < h; ++s) {
      std::copy_n(segs[i].state(now + s).begin(), sd,
                  c.states.begin() + (size_t(i) * h + s) * sd);
    }
  }

  // rewards and returns over the rolled-out sequences
  c.rewards.assign(size_t(c.n) * h, 0.0);
  c.returns.assign(size_t(c.n) * h, 0.0);
  const std::vector<MaskPattern> rp = {ValidMask(MaskKind::kRp, ctx)};
  ForChunks(c.n, config_.max_batch, [&](int first, int count) {
    std::span<const TrajectorySegment> part(segs.data() + first, count);
    const BtmOutput out = model_.Forward(MakeBatch(part, rp, st));
    for (int b = 0; b < count; ++b) {
      for (int s = 0; s < h; ++s) {
        const int64_t cell = int64_t(b) * T + now + s;
        c.rewards[size_t(first + b) * h + s] =
            st.DenormalizeReward(out.reward.at(cell));
        c.returns[size_t(first + b) * h + s] =
            st.DenormalizeRtg(out.rtg.at(cell));
      }
    }
  });

  if (config_.mode == PlannerMode::kQ) {
    const std::vector<double> q = value_->QEval(c.states, c.actions);
    ++value_batches_;
    std::copy(q.begin(), q.end(), c.returns.begin());
  }

  c.utilities.resize(c.n);
  for (int i = 0; i < c.n; ++i) {
    std::span<const double> r(c.rewards.data() + size_t(i) * h, h - 1);
    std::span<const double> g(c.returns.data() + size_t(i) * h, h);
    if (config_.mode == PlannerMode::kQ &&
        config_.q_utility == QUtility::kQOnly) {
      c.utilities[i] = g[0];
    } else {
      c.utilities[i] = Utility(r, g, config_.gamma, config_.lambda);
    }
  }
  c.probabilities = SelectionProbabilities(c.utilities, config_.temperature);
}

std::vector<double> ForwardPlanner::Plan(const DecisionContext& ctx, Rng& rng,
                                         CandidateSet* out) const {
  const int ad = ctx.segment.action_dim, now = ctx.t_now - 1;
  if (config_.mode == PlannerMode::kRcbcOnly) {
    NoGradGuard no_grad;
    const std::vector<TrajectorySegment> one = {ctx.segment};
    const std::vector<MaskPattern> mask = {ValidMask(MaskKind::kRcbc, ctx)};
    const BtmOutput o = model_.Forward(MakeBatch(one, mask, model_.stats));
    std::vector<double> a(ad);
    for (int k = 0; k < ad; ++k) a[k] = o.action_mean.at(int64_t(now) * ad + k);
    if (config_.phase == Phase::kOnline) {
      std::normal_distribution<double> normal(0.0, 1.0);
      for (int k = 0; k < ad; ++k) {
        a[k] += std::exp(o.action_log_std.at(int64_t(now) * ad + k)) *
                normal(rng);
      }
    }
    return ClampToSpec(a);
  }
  CandidateSet c = Propose(ctx, config_.num_candidates, rng);
  RolloutAndScore(ctx, c);
  std::vector<double> first(size_t(c.n) * ad);
  for (int i = 0; i < c.n; ++i) {
    auto a = c.action(i, 0);
    std::copy(a.begin(), a.end(), first.begin() + size_t(i) * ad);
  }
  std::vector<double> a =
      SelectAction(c.probabilities, first, ad, config_.phase, rng);
  if (out != nullptr) *out = std::move(c);
  return ClampToSpec(a);
}

std::vector<double> ForwardPlanner::Act(const History& history, Rng& rng) {
  return Plan(Context(history), rng, &last_);
}

}  // namespace m3pc
