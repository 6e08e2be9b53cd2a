#include "catwm/runner.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <torch/torch.h>

#include "catwm/dataset.hpp"
#include "catwm/error.hpp"

namespace catwm {
namespace {

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream f(path);
  if (!f) throw IOError("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

}  // namespace

std::filesystem::path output_root(const std::filesystem::path& fallback) {
  if (const char* env = std::getenv("CATWM_OUTPUT_ROOT"); env && *env) return env;
  return fallback;
}

std::string run_name(const RunConfig& c) {
  return std::string(mode_name(c.train.mode)) + "_d" + std::to_string(c.adversary.depth) + "_s" +
         std::to_string(c.seed()) + "_" + c.hash().substr(0, 8);
}

RunSummary run_training(const RunConfig& config, const std::filesystem::path& dir, bool resume,
                        const std::function<void(const TrainLogRow&)>& on_log) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  RunSummary summary;
  summary.dir = dir;
  summary.config_hash = config.hash();

  auto data = ingest(config.data, config.seed());
  for (const auto& w : data.warnings) std::cerr << "warning: " << w << "\n";

  Trainer trainer(config.train, config.adversary, config.watermark);
  const auto cfg_json = config.to_json();
  TrainOptions opts;
  opts.out_dir = dir;
  opts.resume = resume;
  opts.config_hash = summary.config_hash;
  opts.config = &cfg_json;
  opts.on_log = on_log;
  auto result = train(trainer, data, opts);
  summary.checkpoint = result.final_checkpoint;
  summary.log = std::move(result.log);
  summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  nlohmann::json manifest{{"config_hash", summary.config_hash},
                          {"config", cfg_json},
                          {"mode", mode_name(config.train.mode)},
                          {"depth", config.adversary.depth},
                          {"seed", config.seed()},
                          {"steps", trainer.current_step()},
                          {"resumed_from_step", result.skipped_steps},
                          {"final_checkpoint", std::filesystem::relative(summary.checkpoint, dir).string()},
                          {"log", "log.csv"},
                          {"train_images", data.train.size()},
                          {"val_images", data.val.size()},
                          {"test_images", data.test.size()},
                          {"skipped_images", data.skipped},
                          {"seconds", summary.seconds}};
  if (!summary.log.empty()) manifest["final_val_bit_error"] = summary.log.back().val_bit_error;
  write_json(dir / "manifest.json", manifest);
  return summary;
}

std::filesystem::path resolve_checkpoint(const std::filesystem::path& path) {
  if (std::filesystem::exists(path / "state.json")) return path;
  const auto root = path / "checkpoints";
  std::filesystem::path best;
  if (std::filesystem::is_directory(root))
    for (const auto& e : std::filesystem::directory_iterator(root))
      if (std::filesystem::exists(e.path() / "state.json") && (best.empty() || e.path().filename() > best.filename()))
        best = e.path();
  if (best.empty()) throw IOError("no checkpoint found at " + path.string());
  return best;
}

EvalReport run_eval(const EvalRequest& req) {
  const auto ckpt = resolve_checkpoint(req.checkpoint);
  nlohmann::json state;
  auto model = load_watermark(ckpt, &state);
  const auto& extra = state.value("extra", nlohmann::json::object());
  RunConfig config = extra.contains("config") ? config_from_json(extra.at("config")) : RunConfig{};
  const auto res = config.data.resolution;

  torch::Tensor images;
  if (req.data_dir) {
    std::int64_t skipped = 0;
    std::vector<std::string> warnings;
    images = load_image_directory(*req.data_dir, res, skipped, warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  } else if (req.ood) {
    images = synthetic_ood_images(config.ood.size, res, mix_seed(config.seed(), 0x00d));
  } else {
    images = ingest(config.data, config.seed()).test.images;
  }
  if (req.max_images > 0 && images.size(0) > req.max_images) images = images.narrow(0, 0, req.max_images);

  EvalOptions opts;
  opts.seed = req.seed;
  opts.alpha = req.alpha >= 0 ? req.alpha : config.train.alpha.alpha_end;
  opts.config_hash = extra.value("config_hash", std::string());
  opts.checkpoint_id = opts.config_hash + "@step" + std::to_string(state.at("step").get<std::int64_t>());
  opts.kind = req.mode;

  if (req.mode == "single") return evaluate(model, images, build_grid(GridMode::SingleStep, config.grid), opts);
  if (req.mode == "compositional") return evaluate(model, images, build_grid(GridMode::Compositional, config.grid), opts);
  if (req.mode == "forward" || req.mode == "backward") {
    const int train_depth = config.adversary.depth;
    const int eval_depth = req.mode == "forward" ? 2 : 1;
    if (transfer_name(transfer_direction(train_depth, eval_depth)) != req.mode)
      throw ValidationError(req.mode + " transfer needs a checkpoint trained at depth " + (req.mode == "forward" ? "1" : "2") +
                            ", this one used depth " + std::to_string(train_depth));
    return transfer_eval(model, train_depth, eval_depth, images, config.grid, opts);
  }
  throw ValidationError("unknown eval mode '" + req.mode + "' (single, compositional, forward, backward)");
}

}  // namespace catwm
