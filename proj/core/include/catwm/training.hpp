#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>
#include <torch/optim/adamw.h>
#include <torch/types.h>

#include "catwm/adversary.hpp"
#include "catwm/attacks.hpp"
#include "catwm/dataset.hpp"
#include "catwm/watermark.hpp"

namespace catwm {

enum class AdversaryMode { Cat, RandomAug, NoAug, Ucb };

std::string_view mode_name(AdversaryMode mode);  // cat, random, noaug, ucb
AdversaryMode parse_mode(std::string_view name);

struct TrainConfig {
  std::int64_t steps = 5000;
  std::int64_t warmup_steps = 250;  // lr warmup; the adversary starts afterwards
  std::int64_t batch_size = 32;
  std::int64_t accumulation = 1;    // micro-batches per optimizer step
  double lr = 5e-4;
  double lr_floor = 1e-6;
  double weight_decay = 0.01;
  double lambda_dec = 1.0;
  double lambda_i = 0.1;
  AdversaryMode mode = AdversaryMode::Cat;
  std::uint64_t seed = 0;
  std::int64_t eval_interval = 250;        // steps between log rows
  std::int64_t checkpoint_interval = 1000;  // 0 keeps only the final one
  std::int64_t val_images = 256;
  double ucb_c = std::sqrt(2.0);
  AlphaSchedule alpha;
  bool freeze_watermark = false;  // skip the embedder/extractor update

  void validate() const;
};

/// Linear warmup from 0 to lr, then cosine from lr down to lr_floor at the
/// final step.
double lr_schedule(std::int64_t step, const TrainConfig& config);

struct UcbState {
  std::vector<std::int64_t> pulls;
  std::vector<double> mean_reward;
  double c = std::sqrt(2.0);
  std::int64_t total = 0;

  UcbState() = default;
  UcbState(std::size_t arms, double exploration) : pulls(arms, 0), mean_reward(arms, 0.0), c(exploration) {}
};

/// First unpulled arm, else argmax of mean + c * sqrt(ln(total) / n).
std::size_t ucb_select(const UcbState& state);
void ucb_update(UcbState& state, std::size_t arm, double reward);
/// Primitive indices of an arm over K^T sequences, first step most significant.
std::vector<std::int64_t> ucb_arm_sequence(std::size_t arm, std::int64_t num_primitives, int depth);

struct StepMetrics {
  std::int64_t step = 0;
  double lr = 0.0;
  double alpha = 0.0;
  double msg_loss = 0.0;
  double perc_loss = 0.0;
  double entropy = std::nan("");  // mean policy entropy per step, CAT only
  double bit_accuracy = 0.0;
  bool adversary_active = false;
  std::vector<std::int64_t> selections;  // per primitive, summed over batch and steps
};

/// Losses of one shared forward pass: embed, attack rollout, extract.
struct JointForward {
  torch::Tensor messages;
  torch::Tensor watermarked;
  torch::Tensor attacked;
  torch::Tensor scores;
  torch::Tensor msg_loss;
  torch::Tensor perc_loss;
  torch::Tensor entropy_loss;  // -sum_t mean H_t; undefined without rollout
  AdversaryTrajectory trajectory;
};

JointForward joint_forward(WatermarkModel& model, AttackController& controller, const torch::Tensor& x, Rng& rng,
                           double alpha, std::span<const AttackPrimitive> primitives, bool adversary_active);

/// Owns the watermark model, the controller and both optimizers and runs
/// one update per call to step(). Randomness for step s is drawn from a
/// stream derived from (seed, s), so any step can be replayed.
class Trainer {
 public:
  Trainer(const TrainConfig& train, const AdversaryConfig& adversary, const WatermarkConfig& watermark,
          std::vector<AttackPrimitive> primitives = registry());

  /// One optimizer step in the configured mode on a full batch.
  StepMetrics step(const torch::Tensor& x);

  StepMetrics joint_step(const torch::Tensor& x);
  StepMetrics random_aug_step(const torch::Tensor& x);
  StepMetrics noaug_step(const torch::Tensor& x);
  StepMetrics ucb_step(const torch::Tensor& x);

  /// L_msg of the CAT forward pass for `step` without updating anything.
  double replay_message_loss(const torch::Tensor& x, std::int64_t step);

  bool adversary_active() const { return step_ >= train_.warmup_steps; }
  std::int64_t current_step() const { return step_; }
  void set_step(std::int64_t step) { step_ = step; }
  double current_alpha() const;
  Rng step_rng(std::int64_t step) const;

  WatermarkModel& model() { return model_; }
  AttackController& controller() { return controller_; }
  UcbState& ucb() { return ucb_; }
  const TrainConfig& train_config() const { return train_; }
  const AdversaryConfig& adversary_config() const { return adversary_; }
  std::span<const AttackPrimitive> primitives() const { return primitives_; }
  torch::optim::AdamW& watermark_optimizer() { return *wm_opt_; }
  torch::optim::AdamW& adversary_optimizer() { return *adv_opt_; }

  /// Writes model.pt, optim_wm.pt, optim_adv.pt and state.json into dir.
  void save(const std::filesystem::path& dir, const nlohmann::json& extra) const;
  /// Restores weights, optimizer moments, UCB state and the step counter;
  /// returns the stored `extra` object.
  nlohmann::json load(const std::filesystem::path& dir);

 private:
  template <class Attack>
  StepMetrics supervised_step(const torch::Tensor& x, Attack&& attack);
  void set_lr(double lr);
  void apply_watermark_update();

  TrainConfig train_;
  AdversaryConfig adversary_;
  std::vector<AttackPrimitive> primitives_;
  WatermarkModel model_;
  AttackController controller_{nullptr};
  std::unique_ptr<torch::optim::AdamW> wm_opt_;
  std::unique_ptr<torch::optim::AdamW> adv_opt_;
  UcbState ucb_;
  std::int64_t step_ = 0;
};

struct TrainLogRow {
  std::int64_t step = 0;
  double lr = 0.0;
  double alpha = 0.0;
  double msg_loss = 0.0;
  double perc_loss = 0.0;
  double entropy = std::nan("");
  double val_bit_error = 0.0;
};

std::string log_header();
std::string log_line(const TrainLogRow& row);
std::vector<TrainLogRow> read_log(const std::filesystem::path& csv);

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: keep everything in memory
  bool resume = false;
  std::string config_hash;
  const nlohmann::json* config = nullptr;  // embedded in checkpoints and the manifest
  std::function<void(const TrainLogRow&)> on_log;
  std::function<void(const StepMetrics&)> on_step;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  std::filesystem::path final_checkpoint;
  std::int64_t skipped_steps = 0;  // steps replayed from a checkpoint
};

/// Run the configured number of steps over the train split, logging the
/// validation bit error on the val split under validation_cells(depth).
TrainResult train(Trainer& trainer, const DatasetSplits& data, const TrainOptions& options);

/// Rebuild a watermark model from a checkpoint directory; fills `state` with
/// the stored state.json.
WatermarkModel load_watermark(const std::filesystem::path& dir, nlohmann::json* state = nullptr);

}  // namespace catwm
