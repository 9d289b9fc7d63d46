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

// m3pc: dataset generation, pretraining, evaluation, finetuning, goal
// reaching, ablations and the model-call benchmark.
//
// Every config leaf can be set with --section.key=value (kebab or snake
// case). Results are appended to <output_dir>/results.jsonl, one row per
// result with the full config embedded, plus <output_dir>/<command>.csv.
//
// Exit codes: 0 ok, 1 user error, 2 internal error.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "m3pc/backward.h"
#include "m3pc/btm.h"
#include "m3pc/checkpoint.h"
#include "m3pc/datagen.h"
#include "m3pc/dataset_io.h"
#include "m3pc/envs.h"
#include "m3pc/evaluation.h"
#include "m3pc/o2o.h"
#include "m3pc/planner.h"
#include "m3pc/rng.h"
#include "m3pc/run_config.h"
#include "m3pc/training.h"
#include "m3pc/value.h"

namespace m3pc {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- plumbing

struct Run {
  RunConfig config;
  json tree;
  std::string fingerprint;
  std::unique_ptr<Env> env;
};

Run MakeRun(const std::optional<fs::path>& config_path,
            const std::vector<std::pair<std::string, std::string>>& overrides,
            std::optional<uint64_t> seed) {
  auto ov = overrides;
  if (seed) ov.emplace_back("seed", std::to_string(*seed));
  Run run;
  run.config = LoadRunConfig(config_path, ov);
  run.tree = run.config;
  run.fingerprint = RunFingerprint(run.config);
  run.env = MakeEnv(run.config.data.env);
  return run;
}

struct Models {
  std::unique_ptr<Btm> btm;
  std::unique_ptr<QvModel> value;
};

Models MakeModels(const RunConfig& c) {
  Models m;
  m.btm = std::make_unique<Btm>(c.model,
                                SplitSeed(c.seed, SeedStream::kModelInit, 0));
  m.value = std::make_unique<QvModel>(
      c.model.state_dim, c.model.action_dim, c.value,
      SplitSeed(c.seed, SeedStream::kModelInit, 1));
  return m;
}

std::string ModelFingerprint(const RunConfig& c) {
  return ConfigFingerprint(ModelConfigJson(c.model, &c.value));
}

// Refuses checkpoints written under a different model layout.
CheckpointHeader LoadCheckpoint(const fs::path& path, const RunConfig& c,
                                Models& m) {
  const CheckpointHeader h = ReadCheckpointHeader(path);
  const std::string want = ModelFingerprint(c);
  if (h.fingerprint != want) {
    throw CheckpointError(
        "checkpoint " + path.string() + " has config fingerprint " +
        h.fingerprint + " but this run's model config is " + want +
        "; pass the config it was trained with (--config or --model.*)");
  }
  return ReadCheckpointInto(path, want, *m.btm, m.value.get());
}

Dataset LoadData(const std::string& path, const RunConfig& c) {
  if (path.empty()) throw UsageError("--data is required");
  Dataset ds = ReadDataset(fs::path(path));
  if (!ds.header.env_id.empty() && ds.header.env_id != c.data.env) {
    throw UsageError("dataset was generated on " + ds.header.env_id +
                     " but data.env is " + c.data.env);
  }
  return ds;
}

double TargetReturn(const RunConfig& c, const Dataset* ds) {
  if (c.eval.target_return) return *c.eval.target_return;
  if (ds == nullptr || ds->episodes.empty()) {
    throw UsageError("need --data or --eval.target_return for the target");
  }
  return c.planner.target_return_scale * MaxReturn(ds->episodes);
}

fs::path OutputDir(const RunConfig& c) {
  fs::path dir(c.output_dir);
  fs::create_directories(dir);
  return dir;
}

// Appends one row to results.jsonl.
void EmitResult(const Run& run, const std::string& command,
                const std::string& mode, const json& metrics) {
  json row = {{"command", command},
              {"config_fingerprint", run.fingerprint},
              {"seed", run.config.seed},
              {"mode", mode},
              {"metrics", metrics},
              {"config", run.tree}};
  std::ofstream out(OutputDir(run.config) / "results.jsonl", std::ios::app);
  out << row.dump() << '\n';
  if (!out) throw std::runtime_error("cannot write results.jsonl");
}

// CSV companion; the header is written when the file is new.
class Csv {
 public:
  Csv(const RunConfig& c, const std::string& name, const std::string& header) {
    const fs::path p = OutputDir(c) / (name + ".csv");
    const bool fresh = !fs::exists(p) || fs::file_size(p) == 0;
    out_.open(p, std::ios::app);
    if (!out_) throw std::runtime_error("cannot write " + p.string());
    if (fresh) out_ << header << '\n';
  }
  template <typename... Ts>
  void Row(const Ts&... v) {
    std::ostringstream s;
    s.precision(10);
    int i = 0;
    ((s << (i++ ? "," : "") << v), ...);
    out_ << s.str() << '\n';
  }

 private:
  std::ofstream out_;
};

json StatsJson(const ReturnStats& s) {
  return {{"mean", s.mean}, {"std", s.stddev}, {"returns", s.returns}};
}

// Greedy evaluation over eval.seeds root seeds derived from the run seed.
ReturnStats EvaluateMode(const Run& run, const Models& m, PlannerConfig pc,
                         double target, std::vector<double>* per_seed) {
  pc.phase = Phase::kOffline;
  ForwardPlanner planner(*m.btm, m.value.get(), pc, run.env->spec());
  planner.set_target_return(target);
  std::vector<double> all;
  for (int s = 0; s < run.config.eval.seeds; ++s) {
    const uint64_t seed = SplitSeed(run.config.seed, SeedStream::kEvaluation,
                                    static_cast<uint64_t>(s));
    ReturnStats r =
        EvaluatePlanner(*run.env, planner, run.config.eval.episodes, seed);
    if (per_seed) per_seed->push_back(r.mean);
    all.insert(all.end(), r.returns.begin(), r.returns.end());
  }
  return SummarizeReturns(all);
}

std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// ---------------------------------------------------------------- commands

struct Common {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::vector<std::pair<std::string, std::string>> overrides;

  Run Make() const {
    std::optional<fs::path> p;
    if (!config_path.empty()) p = config_path;
    return MakeRun(p, overrides, seed);
  }
};

int GenData(const Common& common, const std::string& out_path) {
  Run run = common.Make();
  const RunConfig& c = run.config;
  const Dataset ds = GenerateDataset(*run.env, NamedPolicyMix(c.data.mix),
                                     c.data.episodes, c.data.seed);
  const fs::path out = out_path.empty()
                           ? ResolveDataPath(c.data.env + "-" + c.data.mix +
                                             ".jsonl")
                           : ResolveDataPath(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  WriteDataset(out, ds);
  std::vector<double> returns;
  for (const Episode& e : ds.episodes) returns.push_back(e.Return());
  const ReturnStats s = SummarizeReturns(returns);
  std::printf("wrote %zu episodes to %s (return %.3f +- %.3f, max %.3f)\n",
              ds.episodes.size(), out.string().c_str(), s.mean, s.stddev,
              MaxReturn(ds.episodes));
  EmitResult(run, "gen-data", c.data.mix,
             {{"path", out.string()},
              {"episodes", ds.episodes.size()},
              {"return_mean", s.mean},
              {"return_std", s.stddev},
              {"return_max", MaxReturn(ds.episodes)}});
  return 0;
}

int PretrainCmd(const Common& common, const std::string& data,
                const std::string& out_path) {
  Run run = common.Make();
  const RunConfig& c = run.config;
  const Dataset ds = LoadData(data, c);
  Models m = MakeModels(c);
  const fs::path dir = OutputDir(c);
  const fs::path ckpt =
      out_path.empty() ? dir / (c.name + ".ckpt") : fs::path(out_path);
  std::ofstream metrics(dir / (c.name + "_pretrain.csv"));
  metrics << "# config_fingerprint " << run.fingerprint << '\n';

  PretrainOptions po;
  po.metrics = &metrics;
  po.checkpoint_path = ckpt;
  po.checkpoint_extra = {{"run_config", run.tree},
                         {"run_fingerprint", run.fingerprint}};
  const int64_t report = std::max<int64_t>(1, c.train.steps / 20);
  const auto t0 = std::chrono::steady_clock::now();
  po.on_step = [&](int64_t step, const LossReport& r) {
    if (step % report == 0 || step == c.train.steps) {
      const double el = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
      std::printf("step %7lld  nll %8.4f  entropy %7.3f  sigma %.4f  %6.0fs\n",
                  static_cast<long long>(step), r.nll_action, r.entropy,
                  r.sigma, el);
      std::fflush(stdout);
    }
    return true;
  };
  const PretrainResult res =
      Pretrain(*m.btm, m.value.get(), ds.episodes, c.train,
               SplitSeed(c.seed, SeedStream::kTraining), po);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  std::ofstream(dir / (c.name + ".config.json")) << run.tree.dump(2) << '\n';
  std::printf("wrote %s after %lld steps (%.0f s)\n", ckpt.string().c_str(),
              static_cast<long long>(res.steps), secs);
  EmitResult(run, "pretrain", "",
             {{"checkpoint", ckpt.string()},
              {"steps", res.steps},
              {"seconds", secs},
              {"final_nll", res.last.nll_action},
              {"final_entropy", res.last.entropy},
              {"final_sigma", res.last.sigma}});
  return 0;
}

int EvalCmd(const Common& common, const std::string& ckpt,
            const std::string& data, const std::string& modes) {
  Run run = common.Make();
  const RunConfig& c = run.config;
  Models m = MakeModels(c);
  LoadCheckpoint(ckpt, c, m);
  std::optional<Dataset> ds;
  if (!data.empty()) ds = LoadData(data, c);
  const double target = TargetReturn(c, ds ? &*ds : nullptr);
  std::vector<std::string> list =
      modes.empty() ? std::vector<std::string>{PlannerModeName(c.planner.mode)}
                    : SplitList(modes);
  if (modes == "all") list = {"rcbc-only", "m3pc-m", "m3pc-q"};

  Csv csv(c, "eval", "config_fingerprint,seed,mode,return_mean,return_std,n");
  for (const std::string& name : list) {
    PlannerConfig pc = c.planner;
    pc.mode = ParsePlannerMode(name);
    std::vector<double> per_seed;
    const ReturnStats s = EvaluateMode(run, m, pc, target, &per_seed);
    std::printf("%-10s return %9.4f +- %.4f  (n=%zu, target %.3f)\n",
                name.c_str(), s.mean, s.stddev, s.returns.size(), target);
    json metrics = StatsJson(s);
    metrics["per_seed_mean"] = per_seed;
    metrics["target_return"] = target;
    EmitResult(run, "eval", name, metrics);
    csv.Row(run.fingerprint, c.seed, name, s.mean, s.stddev,
            s.returns.size());
  }
  return 0;
}

int FinetuneCmd(const Common& common, const std::string& ckpt,
                const std::string& data, const std::string& out_path) {
  Run run = common.Make();
  const RunConfig& c = run.config;
  Models m = MakeModels(c);
  const CheckpointHeader h = LoadCheckpoint(ckpt, c, m);
  const Dataset ds = LoadData(data, c);
  const double target = TargetReturn(c, &ds);
  const fs::path dir = OutputDir(c);
  std::ofstream metrics(dir / (c.name + "_o2o.csv"));

  FinetuneOptions fo;
  fo.metrics = &metrics;
  fo.checkpoint_path =
      out_path.empty() ? dir / (c.name + "_o2o.ckpt") : fs::path(out_path);
  fo.checkpoint_extra = {{"run_config", run.tree},
                         {"run_fingerprint", run.fingerprint},
                         {"initialized_from", ckpt}};
  fo.initial_log_sigma = h.log_sigma;
  fo.on_eval = [](const O2ORow& r) {
    std::printf("env steps %7lld  eval %9.4f +- %.4f  explore %9.4f\n",
                static_cast<long long>(r.env_steps), r.eval_return_mean,
                r.eval_return_std, r.explore_return_mean);
    std::fflush(stdout);
  };
  const FinetuneResult res =
      Finetune(*m.btm, m.value.get(), *run.env, ds.episodes, c.planner, target,
               c.train, c.o2o, c.seed, fo);
  json rows = json::array();
  for (const O2ORow& r : res.rows) {
    rows.push_back({{"env_steps", r.env_steps},
                    {"eval_return_mean", r.eval_return_mean},
                    {"eval_return_std", r.eval_return_std},
                    {"explore_return_mean", r.explore_return_mean},
                    {"entropy", r.entropy},
                    {"sigma", r.sigma}});
  }
  EmitResult(run, "finetune", PlannerModeName(c.planner.mode),
             {{"rows", rows},
              {"env_steps", res.env_steps},
              {"grad_steps", res.grad_steps},
              {"offline_draws", res.offline_draws},
              {"online_draws", res.online_draws},
              {"checkpoint", fo.checkpoint_path->string()}});
  return 0;
}

int GoalCmd(const Common& common, const std::string& ckpt,
            const std::string& data, const std::string& modes,
            const std::string& kind_name, const std::string& goal_file,
            const std::string& write_goal) {
  Run run = common.Make();
  const RunConfig& c = run.config;
  Models m = MakeModels(c);
  LoadCheckpoint(ckpt, c, m);
  std::optional<Dataset> ds;
  if (goal_file.empty()) ds = LoadData(data, c);
  std::optional<GoalFile> fixed;
  if (!goal_file.empty()) fixed = ReadGoalFile(ResolveDataPath(goal_file));
  if (kind_name != "id" && kind_name != "ood") {
    throw UsageError("--kind must be id or ood");
  }
  const GoalKind kind = kind_name == "id" ? GoalKind::kInDistribution
                                          : GoalKind::kOutOfDistribution;

  BackwardPlanner backward(*m.btm, run.env->spec());
  GoalReachingBaseline baseline(*m.btm, run.env->spec());
  std::vector<std::string> list = SplitList(modes);
  Csv csv(c, "goal",
          "config_fingerprint,seed,mode,kind,trial,success,steps_to_goal,"
          "final_distance,min_distance");
  const int trials = fixed ? 1 : c.goal.trials;
  for (const std::string& name : list) {
    GoalPolicy policy;
    if (name == "backward") {
      policy = [&](const History& h, std::span<const double> g) {
        return backward.Act(h, g);
      };
    } else if (name == "gr-baseline") {
      policy = [&](const History& h, std::span<const double> g) {
        return baseline.Act(h, g);
      };
    } else {
      throw UsageError("unknown goal mode '" + name +
                       "' (backward|gr-baseline)");
    }
    int successes = 0;
    double min_dist = 0.0;
    for (int i = 0; i < trials; ++i) {
      GoalFile gf;
      std::vector<double> start;
      if (fixed) {
        gf = *fixed;
        start = gf.guidance.front();
      } else {
        Rng rng(SplitSeed(c.seed, SeedStream::kEnv, static_cast<uint64_t>(i)));
        start = run.env->Reset(rng);
        gf = GoalFileFromGuidance(
            CraftGoalTrajectory(*run.env, ds->episodes, kind, start,
                                c.goal.steps),
            c.goal.interval);
        if (i == 0 && !write_goal.empty()) WriteGoalFile(write_goal, gf);
      }
      const GoalEpisodeResult r = RunGoalEpisode(
          *run.env, policy, start, gf.guidance, gf.spec, gf.subgoal_interval);
      successes += r.success;
      min_dist += r.min_distance;
      csv.Row(run.fingerprint, c.seed, name, kind_name, i, int(r.success),
              r.steps_to_goal, r.final_distance, r.min_distance);
    }
    const double rate = double(successes) / trials;
    std::printf("%-12s %s success %d/%d (%.2f)  mean min distance %.3f\n",
                name.c_str(), kind_name.c_str(), successes, trials, rate,
                min_dist / trials);
    EmitResult(run, "goal", name,
               {{"kind", kind_name},
                {"trials", trials},
                {"successes", successes},
                {"success_rate", rate},
                {"mean_min_distance", min_dist / trials}});
  }
  return 0;
}

// A history of `steps` random steps from a seeded start.
History RandomHistory(const Env& env, int steps, uint64_t seed) {
  Rng rng(seed);
  const EnvSpec& spec = env.spec();
  History h;
  std::vector<double> s = env.Reset(rng);
  h.Start(s, spec.state_dim, spec.action_dim);
  for (int k = 0; k < steps; ++k) {
    std::vector<double> a(spec.action_dim);
    for (int j = 0; j < spec.action_dim; ++j) {
      a[j] = std::uniform_real_distribution<double>(
          spec.action_low[j], spec.action_high[j])(rng);
    }
    const StepResult r = env.Step(s, a, k);
    h.Append(a, r.reward, r.next_state);
    s = r.next_state;
  }
  return h;
}

int BenchPassesCmd(const Common& common, const std::string& ckpt,
                   const std::vector<int>& horizons, int reps) {
  Run run = common.Make();
  const RunConfig& c = run.config;
  Models m = MakeModels(c);
  if (!ckpt.empty()) LoadCheckpoint(ckpt, c, m);
  const EnvSpec& spec = run.env->spec();
  const int T = c.model.segment_length;
  const int C = c.model.context_length;

  // horizon h -> number of completed steps that leaves h planned steps
  auto steps_for = [&](int h) -> int {
    for (int k = spec.horizon - 1; k >= 0; --k) {
      DecisionContext ctx =
          BuildDecisionContext(RandomHistory(*run.env, k, 1), T, C,
                               spec.horizon, 0.0, true);
      if (ctx.horizon == h) return k;
    }
    return -1;
  };

  Csv csv(c, "bench_passes",
          "config_fingerprint,mode,horizon,model_calls,value_batches,"
          "ms_per_decision");
  std::printf("%-12s %7s %11s %13s %9s\n", "mode", "horizon", "model calls",
              "value batches", "ms/act");
  for (int h : horizons) {
    const int k = steps_for(h);
    if (k < 0) throw UsageError("horizon " + std::to_string(h) +
                                " is not reachable with this model/env");
    const History hist = RandomHistory(*run.env, k, SplitSeed(c.seed, 0, k));
    const double target = c.eval.target_return.value_or(0.0);
    for (const char* name :
         {"rcbc-only", "m3pc-m", "m3pc-q", "backward", "gr-baseline"}) {
      const std::string mode = name;
      int64_t calls = 0, batches = 0;
      const auto t0 = std::chrono::steady_clock::now();
      for (int r = 0; r < reps; ++r) {
        m.btm->ResetPassCounter();
        if (mode == "backward" || mode == "gr-baseline") {
          const std::vector<double> goal(hist.current_state().begin(),
                                         hist.current_state().end());
          if (mode == "backward") {
            BackwardPlanner p(*m.btm, spec);
            p.Act(hist, goal);
          } else {
            GoalReachingBaseline p(*m.btm, spec);
            p.Act(hist, goal);
          }
        } else {
          PlannerConfig pc = c.planner;
          pc.mode = ParsePlannerMode(mode);
          ForwardPlanner p(*m.btm, m.value.get(), pc, spec);
          p.set_target_return(target);
          Rng rng(SplitSeed(c.seed, SeedStream::kPlanner, r));
          p.Act(hist, rng);
          batches = p.value_batches();
        }
        calls = m.btm->forward_passes();
      }
      const double ms = 1e3 *
                        std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - t0)
                            .count() /
                        reps;
      std::printf("%-12s %7d %11lld %13lld %9.2f\n", name, h,
                  static_cast<long long>(calls),
                  static_cast<long long>(batches), ms);
      csv.Row(run.fingerprint, mode, h, calls, batches, ms);
      EmitResult(run, "bench-passes", mode,
                 {{"horizon", h},
                  {"model_calls", calls},
                  {"value_batches", batches},
                  {"ms_per_decision", ms},
                  {"num_candidates", c.planner.num_candidates}});
    }
  }
  return 0;
}

int AblateCmd(const Common& common, const std::string& ckpt,
              const std::string& data, const std::string& lambdas,
              bool lambda_sweep, bool grid) {
  if (!lambda_sweep && !grid) {
    throw UsageError("ablate needs --lambda-sweep and/or --grid");
  }
  Run run = common.Make();
  const RunConfig& c = run.config;
  Models m = MakeModels(c);
  LoadCheckpoint(ckpt, c, m);
  const Dataset ds = LoadData(data, c);
  const double target = TargetReturn(c, &ds);

  if (lambda_sweep) {
    Csv csv(c, "ablate_lambda",
            "config_fingerprint,seed,mode,lambda,return_mean,return_std");
    for (const std::string& item : SplitList(lambdas)) {
      PlannerConfig pc = c.planner;
      try {
        pc.lambda = std::stod(item);
      } catch (const std::exception&) {
        throw UsageError("bad lambda '" + item + "'");
      }
      pc.Validate();
      const ReturnStats s = EvaluateMode(run, m, pc, target, nullptr);
      std::printf("lambda %.2f  %-8s return %9.4f +- %.4f\n", pc.lambda,
                  PlannerModeName(pc.mode), s.mean, s.stddev);
      json metrics = StatsJson(s);
      metrics["lambda"] = pc.lambda;
      metrics["target_return"] = target;
      EmitResult(run, "ablate-lambda", PlannerModeName(pc.mode), metrics);
      csv.Row(run.fingerprint, c.seed, PlannerModeName(pc.mode), pc.lambda,
              s.mean, s.stddev);
    }
  }
  if (grid) {
    // exploration cells: planning on/off x sampled proposals vs the
    // mean action plus matched Gaussian noise
    Csv csv(c, "ablate_grid",
            "config_fingerprint,seed,planning,uncertainty,median,q25,q75,"
            "action_variance");
    std::vector<uint64_t> seeds;
    for (int s = 0; s < c.eval.seeds; ++s) {
      seeds.push_back(SplitSeed(c.seed, SeedStream::kExploration, s));
    }
    PlannerConfig pc = c.planner;
    if (pc.mode == PlannerMode::kRcbcOnly) pc.mode = PlannerMode::kM;
    const ExplorationComparison cmp = CompareExploration(
        *m.btm, m.value.get(), *run.env, pc, target, c.eval.episodes, seeds);
    // no planning, sampled proposals: RCBC in the online phase on the same
    // start states
    PlannerConfig bc = pc;
    bc.mode = PlannerMode::kRcbcOnly;
    bc.phase = Phase::kOnline;
    ForwardPlanner rcbc(*m.btm, m.value.get(), bc, run.env->spec());
    rcbc.set_target_return(target);
    std::vector<double> rcbc_returns;
    for (uint64_t seed : seeds) {
      for (int e = 0; e < c.eval.episodes; ++e) {
        Rng env_rng(SplitSeed(seed, SeedStream::kEnv, e));
        Rng policy_rng(SplitSeed(seed, SeedStream::kExploration, e));
        Policy policy = [&](const History& h, Rng& rng) {
          return rcbc.Act(h, rng);
        };
        rcbc_returns.push_back(
            RunEpisode(*run.env, policy, env_rng, policy_rng).Return());
      }
    }
    auto emit = [&](const char* planning, const char* unc,
                    const RolloutStats& r, std::optional<double> var) {
      std::printf("planning %-3s uncertainty %-3s median %9.4f  "
                  "[%9.4f, %9.4f]  action var %s\n",
                  planning, unc, r.median, r.q25, r.q75,
                  var ? std::to_string(*var).c_str() : "-");
      EmitResult(run, "ablate-grid",
                 std::string("planning-") + planning + "/uncertainty-" + unc,
                 {{"median", r.median},
                  {"q25", r.q25},
                  {"q75", r.q75},
                  {"returns", r.returns},
                  {"action_variance", var ? json(*var) : json(nullptr)}});
      csv.Row(run.fingerprint, c.seed, planning, unc, r.median, r.q25, r.q75,
              var ? std::to_string(*var) : std::string());
    };
    emit("on", "on", cmp.planner, cmp.planner_action_variance);
    emit("off", "on", ComputeRolloutStats(rcbc_returns), std::nullopt);
    emit("off", "off", cmp.gaussian, cmp.gaussian_action_variance);
  }
  return 0;
}

// Pulls --a.b=value / --a.b value out of argv; the rest goes to CLI11.
std::vector<std::pair<std::string, std::string>> ExtractOverrides(
    std::vector<std::string>& args) {
  std::vector<std::pair<std::string, std::string>> out;
  std::vector<std::string> rest;
  for (size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    const size_t eq = a.find('=');
    const std::string key =
        a.rfind("--", 0) == 0 ? a.substr(2, eq == std::string::npos
                                                ? std::string::npos
                                                : eq - 2)
                              : std::string();
    std::string norm = key;
    std::replace(norm.begin(), norm.end(), '-', '_');
    // dotted leaves, plus the root-level ones that have no dedicated flag
    if (norm.find('.') == std::string::npos && norm != "name" &&
        norm != "output_dir") {
      rest.push_back(a);
      continue;
    }
    if (eq != std::string::npos) {
      out.emplace_back(norm, a.substr(eq + 1));
    } else if (i + 1 < args.size()) {
      out.emplace_back(norm, args[++i]);
    } else {
      throw UsageError("--" + key + " needs a value");
    }
  }
  args = std::move(rest);
  return out;
}

int Main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  Common common;
  try {
    common.overrides = ExtractOverrides(args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  CLI::App app{"m3pc: masked trajectory model planning"};
  app.require_subcommand(1);
  app.footer(
      "Any config leaf can be set with --section.key=value, e.g. "
      "--planner.num-candidates=64. Relative data paths resolve against "
      "$M3PC_DATA_DIR.");
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON run config")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "root seed");
  };

  std::string out, data, ckpt, modes, kind = "id", goal_file, write_goal;
  std::string lambdas = "0.0,0.1,0.3,0.5,0.7,0.9";
  std::vector<int> horizons = {1, 2, 3, 4, 5, 6, 7, 8};
  int reps = 3;
  bool lambda_sweep = false, grid = false;

  auto* gen = app.add_subcommand("gen-data", "generate an offline dataset");
  add_common(gen);
  gen->add_option("--out", out, "dataset path (.jsonl)");

  auto* pre = app.add_subcommand("pretrain", "pretrain the trajectory model");
  add_common(pre);
  pre->add_option("--data", data, "dataset path")->required();
  pre->add_option("--out", out, "checkpoint path");

  auto* ev = app.add_subcommand("eval", "greedy evaluation");
  add_common(ev);
  ev->add_option("--checkpoint", ckpt)->required();
  ev->add_option("--data", data, "dataset (sets the target return)");
  ev->add_option("--mode", modes,
                 "rcbc-only|m3pc-m|m3pc-q, comma list, or all");

  auto* ft = app.add_subcommand("finetune", "offline-to-online finetuning");
  add_common(ft);
  ft->add_option("--checkpoint", ckpt)->required();
  ft->add_option("--data", data, "offline dataset")->required();
  ft->add_option("--out", out, "finetuned checkpoint path");

  auto* goal = app.add_subcommand("goal", "goal reaching");
  add_common(goal);
  goal->add_option("--checkpoint", ckpt)->required();
  goal->add_option("--data", data, "dataset used to craft goals");
  goal->add_option("--mode", modes, "backward|gr-baseline, comma list")
      ->default_val("backward,gr-baseline");
  goal->add_option("--kind", kind, "id|ood crafted goals")
      ->default_val("id");
  goal->add_option("--goal-file", goal_file, "run one fixed goal file");
  goal->add_option("--write-goal", write_goal,
                   "save the first crafted goal file");

  auto* bench = app.add_subcommand("bench-passes",
                                   "model calls and time per decision");
  add_common(bench);
  bench->add_option("--checkpoint", ckpt, "optional; random weights if unset");
  bench->add_option("--horizon", horizons, "horizons 1..T")->delimiter(',');
  bench->add_option("--reps", reps, "decisions timed per cell")
      ->check(CLI::PositiveNumber);

  auto* ab = app.add_subcommand("ablate", "lambda sweep and exploration grid");
  add_common(ab);
  ab->add_option("--checkpoint", ckpt)->required();
  ab->add_option("--data", data)->required();
  ab->add_flag("--lambda-sweep", lambda_sweep, "one row per lambda");
  ab->add_option("--lambdas", lambdas, "comma list");
  ab->add_flag("--grid", grid, "planning x uncertainty exploration grid");

  std::vector<const char*> cargs = {argv[0]};
  for (const std::string& a : args) cargs.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* sub = &app;
    for (CLI::App* s : app.get_subcommands({})) {
      if (!args.empty() && s->get_name() == args.front()) sub = s;
    }
    std::cerr << sub->help();
    return 1;
  }

  try {
    if (*gen) return GenData(common, out);
    if (*pre) return PretrainCmd(common, data, out);
    if (*ev) return EvalCmd(common, ckpt, data, modes);
    if (*ft) return FinetuneCmd(common, ckpt, data, out);
    if (*goal) {
      return GoalCmd(common, ckpt, data, modes, kind, goal_file, write_goal);
    }
    if (*bench) return BenchPassesCmd(common, ckpt, horizons, reps);
    if (*ab) return AblateCmd(common, ckpt, data, lambdas, lambda_sweep, grid);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 1;
  } catch (const DatasetError& e) {
    std::cerr << "dataset error: " << e.what() << "\n";
    return 1;
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace
}  // namespace m3pc

int main(int argc, char** argv) { return m3pc::Main(argc, argv); }
