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

#include "m3pc/o2o.h"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "m3pc/checkpoint.h"
#include "m3pc/evaluation.h"

namespace m3pc {

void O2OConfig::Validate() const {
  if (env_steps < 0) throw std::invalid_argument("o2o.env_steps must be >= 0");
  if (!(updates_per_env_step > 0.0)) {
    throw std::invalid_argument("o2o.updates_per_env_step must be > 0");
  }
  if (eval_every < 1) throw std::invalid_argument("o2o.eval_every must be >= 1");
  if (eval_episodes < 1) {
    throw std::invalid_argument("o2o.eval_episodes must be >= 1");
  }
  if (buffer_capacity < 1) {
    throw std::invalid_argument("o2o.buffer_capacity must be >= 1");
  }
  if (offline_fraction < 0.0 || offline_fraction > 1.0) {
    throw std::invalid_argument("o2o.offline_fraction must be in [0, 1]");
  }
  if (!(lr > 0.0)) throw std::invalid_argument("o2o.lr must be > 0");
}

void to_json(nlohmann::json& j, const O2OConfig& c) {
  j = {{"env_steps", c.env_steps},
       {"updates_per_env_step", c.updates_per_env_step},
       {"eval_every", c.eval_every},
       {"eval_episodes", c.eval_episodes},
       {"buffer_capacity", c.buffer_capacity},
       {"offline_fraction", c.offline_fraction},
       {"lr", c.lr}};
}

void from_json(const nlohmann::json& j, O2OConfig& c) {
  const O2OConfig d;
  c.env_steps = j.value("env_steps", d.env_steps);
  c.updates_per_env_step =
      j.value("updates_per_env_step", d.updates_per_env_step);
  c.eval_every = j.value("eval_every", d.eval_every);
  c.eval_episodes = j.value("eval_episodes", d.eval_episodes);
  c.buffer_capacity = j.value("buffer_capacity", d.buffer_capacity);
  c.offline_fraction = j.value("offline_fraction", d.offline_fraction);
  c.lr = j.value("lr", d.lr);
}

MixedSampler::MixedSampler(const ReplayBuffer& offline,
                           const ReplayBuffer& online, double offline_fraction)
    : offline_(offline),
      online_(online),
      offline_fraction_(offline_fraction) {}

TrajectorySegment MixedSampler::Sample(int segment_length, Rng& rng,
                                       bool* from_offline) const {
  std::bernoulli_distribution pick_offline(offline_fraction_);
  bool use_offline = pick_offline(rng);
  if (online_.empty()) use_offline = true;
  if (offline_.empty()) use_offline = false;
  if (from_offline != nullptr) *from_offline = use_offline;
  return (use_offline ? offline_ : online_).SampleSegment(segment_length, rng);
}

O2OMetricsWriter::O2OMetricsWriter(std::ostream* out) : out_(out) {
  if (out_ != nullptr) {
    *out_ << "env_steps,eval_return_mean,eval_return_std,explore_return_mean,"
             "entropy,sigma\n";
  }
}

void O2OMetricsWriter::Write(const O2ORow& r) {
  if (out_ == nullptr) return;
  *out_ << r.env_steps << ',' << r.eval_return_mean << ','
        << r.eval_return_std << ',' << r.explore_return_mean << ','
        << r.entropy << ',' << r.sigma << '\n';
  out_->flush();
}

FinetuneResult Finetune(Btm& model, QvModel* value, const Env& env,
                        std::span<const Episode> offline,
                        const PlannerConfig& planner_config,
                        double target_return, const TrainConfig& train,
                        const O2OConfig& config, uint64_t seed,
                        const FinetuneOptions& options) {
  config.Validate();
  planner_config.Validate();
  if (planner_config.mode == PlannerMode::kQ && value == nullptr) {
    throw std::invalid_argument("finetune: mode m3pc-q needs a value model");
  }
  const int T = model.config().segment_length;

  ReplayBuffer offline_store(std::max<int>(1, offline.size()));
  offline_store.AddAll(offline);
  ReplayBuffer online_store(config.buffer_capacity);
  MixedSampler sampler(offline_store, online_store, config.offline_fraction);

  PlannerConfig explore_cfg = planner_config;
  explore_cfg.phase = Phase::kOnline;
  PlannerConfig greedy_cfg = planner_config;
  greedy_cfg.phase = Phase::kOffline;
  ForwardPlanner explorer(model, value, explore_cfg, env.spec());
  ForwardPlanner greedy(model, value, greedy_cfg, env.spec());
  explorer.set_target_return(target_return);
  greedy.set_target_return(target_return);

  TrainConfig tc = train;
  tc.train_value = train.train_value && value != nullptr;
  Trainer trainer(model, value, tc, seed);
  if (options.initial_log_sigma) {
    trainer.dual().set_log_sigma(*options.initial_log_sigma);
  }

  FinetuneResult result;
  O2OMetricsWriter metrics(options.metrics);
  LossReport last;
  last.sigma = trainer.dual().sigma();
  size_t explore_mark = 0;
  const uint64_t eval_seed = SplitSeed(seed, SeedStream::kEvaluation);
  auto evaluate = [&] {
    const ReturnStats s =
        EvaluatePlanner(env, greedy, config.eval_episodes, eval_seed);
    O2ORow row;
    row.env_steps = result.env_steps;
    row.eval_return_mean = s.mean;
    row.eval_return_std = s.stddev;
    if (result.explore_returns.size() > explore_mark) {
      row.explore_return_mean =
          std::accumulate(result.explore_returns.begin() + explore_mark,
                          result.explore_returns.end(), 0.0) /
          (result.explore_returns.size() - explore_mark);
      explore_mark = result.explore_returns.size();
    }
    row.entropy = last.entropy;
    row.sigma = last.sigma;
    result.rows.push_back(row);
    metrics.Write(row);
    if (options.on_eval) options.on_eval(row);
  };

  evaluate();
  const uint64_t explore_root = SplitSeed(seed, SeedStream::kExploration);
  int64_t next_eval = config.eval_every;
  double update_debt = 0.0;
  for (int episode = 0; result.env_steps < config.env_steps; ++episode) {
    Rng env_rng(SplitSeed(explore_root, SeedStream::kEnv, episode));
    Rng policy_rng(SplitSeed(explore_root, SeedStream::kPlanner, episode));
    Policy policy = [&](const History& h, Rng& rng) {
      return explorer.Act(h, rng);
    };
    Episode ep;
    try {
      ep = RunEpisode(env, policy, env_rng, policy_rng);
    } catch (const std::exception& e) {
      std::cerr << "finetune: dropped episode " << episode << ": " << e.what()
                << '\n';
      ++result.dropped_episodes;
      continue;
    }
    const int steps = ep.length();
    result.env_steps += steps;
    result.explore_returns.push_back(ep.Return());
    online_store.Add(std::move(ep));

    update_debt += config.updates_per_env_step * steps;
    std::vector<TrajectorySegment> batch(tc.batch_size);
    for (; update_debt >= 1.0; update_debt -= 1.0) {
      for (auto& s : batch) {
        bool from_offline = false;
        s = sampler.Sample(T, trainer.rng(), &from_offline);
        ++(from_offline ? result.offline_draws : result.online_draws);
      }
      last = trainer.Step(batch, config.lr);
      ++result.grad_steps;
    }
    if (result.env_steps >= next_eval || result.env_steps >= config.env_steps) {
      evaluate();
      while (next_eval <= result.env_steps) next_eval += config.eval_every;
    }
  }
  result.final_log_sigma = trainer.dual().log_sigma();

  if (options.checkpoint_path) {
    CheckpointHeader h;
    h.config = ModelConfigJson(model.config(),
                               value ? &value->config() : nullptr);
    h.step = result.grad_steps;
    h.log_sigma = result.final_log_sigma;
    h.extra = options.checkpoint_extra;
    h.extra["phase"] = "finetune";
    h.extra["env_steps"] = result.env_steps;
    WriteCheckpoint(*options.checkpoint_path, h, model, value);
  }
  return result;
}

namespace {

double Quantile(std::vector<double> sorted, double q) {
  // linear interpolation between order statistics
  const double pos = q * (sorted.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
}

}  // namespace

RolloutStats ComputeRolloutStats(std::span<const double> returns, int bins,
                                 std::optional<double> lo,
                                 std::optional<double> hi) {
  RolloutStats s;
  if (returns.empty()) return s;
  if (bins < 1) throw std::invalid_argument("rollout stats: bins must be >= 1");
  s.returns.assign(returns.begin(), returns.end());
  std::vector<double> sorted = s.returns;
  std::sort(sorted.begin(), sorted.end());
  s.median = Quantile(sorted, 0.5);
  s.q25 = Quantile(sorted, 0.25);
  s.q75 = Quantile(sorted, 0.75);
  const double a = lo.value_or(sorted.front());
  double b = hi.value_or(sorted.back());
  if (b <= a) b = a + 1.0;
  s.bin_edges.resize(bins + 1);
  for (int i = 0; i <= bins; ++i) s.bin_edges[i] = a + (b - a) * i / bins;
  s.histogram.assign(bins, 0);
  for (double r : s.returns) {
    // out-of-range values land in the edge bins so mass is preserved
    int k = static_cast<int>(std::floor((r - a) / (b - a) * bins));
    ++s.histogram[std::clamp(k, 0, bins - 1)];
  }
  return s;
}

ExplorationComparison CompareExploration(const Btm& model,
                                         const QvModel* value, const Env& env,
                                         const PlannerConfig& planner_config,
                                         double target_return, int episodes,
                                         std::span<const uint64_t> seeds) {
  if (planner_config.mode == PlannerMode::kRcbcOnly) {
    throw std::invalid_argument("exploration comparison needs a planning mode");
  }
  const int ad = env.spec().action_dim;
  PlannerConfig online = planner_config;
  online.phase = Phase::kOnline;
  ForwardPlanner planner(model, value, online, env.spec());
  planner.set_target_return(target_return);
  PlannerConfig bc = planner_config;
  bc.mode = PlannerMode::kRcbcOnly;
  bc.phase = Phase::kOffline;
  ForwardPlanner rcbc(model, value, bc, env.spec());
  rcbc.set_target_return(target_return);

  ExplorationComparison out;
  // planner: spread of the sampled candidate around the P-weighted mean
  double var_sum = 0.0;
  int64_t decisions = 0;
  std::vector<double> planner_returns;
  for (uint64_t seed : seeds) {
    for (int e = 0; e < episodes; ++e) {
      Rng env_rng(SplitSeed(seed, SeedStream::kEnv, e));
      Rng policy_rng(SplitSeed(seed, SeedStream::kExploration, e));
      Policy policy = [&](const History& h, Rng& rng) {
        std::vector<double> a = planner.Act(h, rng);
        const CandidateSet& c = planner.last_candidates();
        for (int k = 0; k < ad; ++k) {
          double mean = 0.0;
          for (int i = 0; i < c.n; ++i) {
            mean += c.probabilities[i] * c.action(i, 0)[k];
          }
          for (int i = 0; i < c.n; ++i) {
            const double d = c.action(i, 0)[k] - mean;
            var_sum += c.probabilities[i] * d * d / ad;
          }
        }
        ++decisions;
        return a;
      };
      planner_returns.push_back(
          RunEpisode(env, policy, env_rng, policy_rng).Return());
    }
  }
  out.planner_action_variance = decisions > 0 ? var_sum / decisions : 0.0;

  // Gaussian explorer around the RCBC mean; re-scale sigma until the
  // executed spread matches
  std::vector<double> gaussian_returns;
  double sigma = std::sqrt(out.planner_action_variance);
  for (int round = 0; round < 8; ++round) {
    ++out.calibration_rounds;
    gaussian_returns.clear();
    double sq = 0.0;
    int64_t n = 0;
    for (uint64_t seed : seeds) {
      for (int e = 0; e < episodes; ++e) {
        Rng env_rng(SplitSeed(seed, SeedStream::kEnv, e));
        Rng policy_rng(SplitSeed(seed, SeedStream::kExploration, e));
        std::normal_distribution<double> noise(0.0, sigma);
        Policy policy = [&](const History& h, Rng& rng) {
          std::vector<double> mean = rcbc.Act(h, rng);
          std::vector<double> a = mean;
          for (int k = 0; k < ad; ++k) {
            a[k] = std::clamp(mean[k] + noise(rng), env.spec().action_low[k],
                              env.spec().action_high[k]);
            sq += (a[k] - mean[k]) * (a[k] - mean[k]) / ad;
          }
          ++n;
          return a;
        };
        gaussian_returns.push_back(
            RunEpisode(env, policy, env_rng, policy_rng).Return());
      }
    }
    out.gaussian_action_variance = n > 0 ? sq / n : 0.0;
    out.gaussian_sigma = sigma;
    const double target = out.planner_action_variance;
    if (target <= 0.0 ||
        std::abs(out.gaussian_action_variance - target) <= 0.05 * target) {
      break;
    }
    sigma *= std::sqrt(target / std::max(out.gaussian_action_variance, 1e-300));
  }

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double r : planner_returns) lo = std::min(lo, r), hi = std::max(hi, r);
  for (double r : gaussian_returns) lo = std::min(lo, r), hi = std::max(hi, r);
  out.planner = ComputeRolloutStats(planner_returns, 20, lo, hi);
  out.gaussian = ComputeRolloutStats(gaussian_returns, 20, lo, hi);
  return out;
}

}  // namespace m3pc
