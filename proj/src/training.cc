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

#include "m3pc/training.h"

#include <cmath>
#include <ostream>

#include "m3pc/checkpoint.h"

namespace m3pc {

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"steps", c.steps},
       {"batch_size", c.batch_size},
       {"lr", c.lr},
       {"weight_decay", c.weight_decay},
       {"warmup_steps", c.warmup_steps},
       {"cosine_schedule", c.cosine_schedule},
       {"target_entropy", c.target_entropy},
       {"dual_lr", c.dual_lr},
       {"initial_sigma", c.initial_sigma},
       {"mask_min_ratio", c.mask.min_ratio},
       {"mask_max_ratio", c.mask.max_ratio},
       {"train_value", c.train_value},
       {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.steps = j.value("steps", d.steps);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lr = j.value("lr", d.lr);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.warmup_steps = j.value("warmup_steps", d.warmup_steps);
  c.cosine_schedule = j.value("cosine_schedule", d.cosine_schedule);
  c.target_entropy = j.value("target_entropy", d.target_entropy);
  c.dual_lr = j.value("dual_lr", d.dual_lr);
  c.initial_sigma = j.value("initial_sigma", d.initial_sigma);
  c.mask.min_ratio = j.value("mask_min_ratio", d.mask.min_ratio);
  c.mask.max_ratio = j.value("mask_max_ratio", d.mask.max_ratio);
  c.train_value = j.value("train_value", d.train_value);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
}

Trainer::Trainer(Btm& model, QvModel* value, const TrainConfig& config,
                 uint64_t seed)
    : model_(model),
      value_(value),
      config_(config),
      optimizer_(model.params()),
      dual_(config.initial_sigma),
      rng_(SplitSeed(seed, SeedStream::kTraining)) {
  if (config_.batch_size < 1) {
    throw std::invalid_argument("batch_size must be >= 1");
  }
}

double Trainer::ScheduledLr() const {
  return CosineWarmupLr(step_, config_.warmup_steps, config_.steps,
                        config_.lr, config_.cosine_schedule);
}

LossReport Trainer::Step(std::span<const TrajectorySegment> segments,
                         double lr) {
  const int T = model_.config().segment_length;
  std::vector<MaskPattern> masks;
  masks.reserve(segments.size());
  for (const auto& s : segments) {
    masks.push_back(TrainingMask(T, rng_, config_.mask, s.valid));
  }
  const BtmBatch batch = MakeBatch(segments, masks, model_.stats);
  const LossTargets targets = MakeTargets(segments, masks, model_.stats);

  ForwardOptions fo;
  fo.training = true;
  fo.dropout_rng = &rng_;
  const double sigma = dual_.sigma();
  optimizer_.ZeroGrad();
  ModelLoss loss = ComputeModelLoss(model_.Forward(batch, fo), targets, sigma);
  if (!std::isfinite(loss.report.total)) {
    throw TrainingDiverged(step_, "non-finite loss");
  }
  Backward(loss.total);
  try {
    optimizer_.Step(lr, config_.weight_decay);
  } catch (const NonFiniteGradient& e) {
    throw TrainingDiverged(step_, e.what());
  }
  // sigma step sees a plain number: no path back into theta
  loss.report.dual_loss =
      dual_.Update(loss.report.entropy, config_.target_entropy,
                   config_.dual_lr);
  loss.report.sigma = dual_.sigma();

  if (value_ != nullptr && config_.train_value) {
    auto [lq, lv] = value_->TrainStep(TransitionsFromSegments(segments));
    last_q_loss_ = lq;
    last_v_loss_ = lv;
  }
  ++step_;
  return loss.report;
}

LossReport Trainer::Step(const ReplayBuffer& buffer) {
  const int T = model_.config().segment_length;
  std::vector<TrajectorySegment> segments;
  segments.reserve(config_.batch_size);
  for (int i = 0; i < config_.batch_size; ++i) {
    segments.push_back(buffer.SampleSegment(T, rng_));
  }
  return Step(segments, ScheduledLr());
}

MetricsWriter::MetricsWriter(std::ostream* out) : out_(out) {
  if (out_ != nullptr) *out_ << "step,nll,recon,entropy,sigma,lr,total\n";
}

void MetricsWriter::Write(int64_t step, const LossReport& r, double lr) {
  if (out_ == nullptr) return;
  *out_ << step << ',' << r.nll_action << ',' << r.recon() << ','
        << r.entropy << ',' << r.sigma << ',' << lr << ',' << r.total << '\n';
  if (++rows_ % 100 == 0) out_->flush();
}

void MetricsWriter::Flush() {
  if (out_ != nullptr) out_->flush();
}

namespace {

bool AllFinite(const std::vector<NamedParameter>& params) {
  for (const auto& p : params) {
    for (double v : p.tensor.data()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

}  // namespace

PretrainResult Pretrain(Btm& model, QvModel* value,
                        std::span<const Episode> episodes,
                        const TrainConfig& config, uint64_t seed,
                        const PretrainOptions& options) {
  if (episodes.empty()) throw std::invalid_argument("pretrain: empty dataset");
  model.stats = NormalizationStats::Compute(episodes);
  if (value != nullptr) value->FitScales(episodes);
  ReplayBuffer buffer(episodes.size());
  for (const Episode& ep : episodes) buffer.Add(ep);

  Trainer trainer(model, value, config, seed);
  MetricsWriter metrics(options.metrics);
  PretrainResult result;
  const nlohmann::json model_config =
      ModelConfigJson(model.config(), value ? &value->config() : nullptr);
  auto save = [&](int64_t step) {
    if (!options.checkpoint_path) return;
    CheckpointHeader h;
    h.config = model_config;
    h.step = step;
    h.log_sigma = trainer.dual().log_sigma();
    h.extra = options.checkpoint_extra;
    WriteCheckpoint(*options.checkpoint_path, h, model, value);
  };

  for (int64_t s = 0; s < config.steps; ++s) {
    const double lr = trainer.ScheduledLr();
    LossReport r;
    try {
      r = trainer.Step(buffer);
    } catch (const TrainingDiverged&) {
      // keep whatever good checkpoint is on disk if the weights are gone
      if (AllFinite(model.params())) save(trainer.step());
      metrics.Flush();
      throw;
    }
    metrics.Write(trainer.step(), r, lr);
    result.entropy.push_back(r.entropy);
    result.sigma.push_back(r.sigma);
    result.total.push_back(r.total);
    result.last = r;
    if (config.checkpoint_every > 0 &&
        trainer.step() % config.checkpoint_every == 0) {
      save(trainer.step());
    }
    if (options.on_step && !options.on_step(trainer.step(), r)) break;
  }
  metrics.Flush();
  result.final_log_sigma = trainer.dual().log_sigma();
  result.steps = trainer.step();
  save(trainer.step());
  return result;
}

}  // namespace m3pc
