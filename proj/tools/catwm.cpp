// catwm: train, evaluate, plot and ablate compositional-attack watermarking.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "catwm/config.hpp"
#include "catwm/error.hpp"
#include "catwm/plot.hpp"
#include "catwm/runner.hpp"

namespace fs = std::filesystem;
using namespace catwm;

namespace {

struct TrainArgs {
  std::string config;
  std::string mode;
  int depth = 0;
  int payload = 0;
  std::optional<std::uint64_t> seed;
  std::int64_t steps = 0;
  std::string out;
  bool resume = false;
};

RunConfig resolve(const TrainArgs& a) {
  RunConfig c = a.config.empty() ? config_from_json(nlohmann::json::object()) : load_config(a.config);
  if (!a.mode.empty()) c.train.mode = parse_mode(a.mode);
  if (a.depth) c.adversary.depth = a.depth;
  if (a.payload) c.watermark.payload_bits = a.payload;
  if (a.seed) c.train.seed = *a.seed;
  if (a.steps) {
    c.train.steps = a.steps;
    c.train.warmup_steps = std::min(c.train.warmup_steps, a.steps / 20);
    c.train.eval_interval = std::min(c.train.eval_interval, std::max<std::int64_t>(1, a.steps / 10));
    c.train.checkpoint_interval = 0;
  }
  c.validate();
  return c;
}

void print_row(const TrainLogRow& r) {
  std::printf("step %6lld  lr %.2e  alpha %.3f  L_msg %.4f  L_perc %.5f  entropy %.3f  val_bit_error %.4f\n",
              static_cast<long long>(r.step), r.lr, r.alpha, r.msg_loss, r.perc_loss, r.entropy, r.val_bit_error);
  std::fflush(stdout);
}

RunSummary train_one(const RunConfig& c, const fs::path& dir, bool resume) {
  std::printf("run %s -> %s\n", c.hash().c_str(), dir.string().c_str());
  auto s = run_training(c, dir, resume, print_row);
  std::printf("checkpoint %s (%.1f s)\n", s.checkpoint.string().c_str(), s.seconds);
  return s;
}

fs::path run_dir(const TrainArgs& a, const RunConfig& c, const std::string& suffix = "") {
  if (!a.out.empty()) return suffix.empty() ? fs::path(a.out) : fs::path(a.out) / suffix;
  const auto root = output_root(c.output_dir);
  return suffix.empty() ? root / run_name(c) : root / suffix;
}

void add_train_flags(CLI::App* cmd, TrainArgs& a, bool with_mode) {
  cmd->add_option("--config", a.config, "JSON run config (defaults when omitted)")->check(CLI::ExistingFile);
  if (with_mode) cmd->add_option("--mode", a.mode, "Adversary mode")->check(CLI::IsMember({"cat", "random", "noaug", "ucb"}));
  cmd->add_option("--depth", a.depth, "Attack steps T")->check(CLI::IsMember({1, 2}));
  cmd->add_option("--payload", a.payload, "Message bits d_m")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", a.seed, "Run seed");
  cmd->add_option("--steps", a.steps, "Override the step budget")->check(CLI::PositiveNumber);
  cmd->add_option("--out", a.out, "Run directory (default: <output root>/<run name>)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compositional adversarial training for image watermarking"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a watermark model");
  add_train_flags(train_cmd, train_args, true);
  train_cmd->add_flag("--resume", train_args.resume, "Continue from the newest checkpoint in --out");

  EvalRequest eval_req;
  std::string eval_out, eval_format = "both", eval_data;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on an attack grid");
  eval_cmd->add_option("--checkpoint", eval_req.checkpoint, "Checkpoint or run directory")->required();
  eval_cmd->add_option("--mode", eval_req.mode, "Grid")->check(
      CLI::IsMember({"single", "compositional", "forward", "backward"}));
  eval_cmd->add_option("--data", eval_data, "Image directory (default: held-out synthetic split)");
  eval_cmd->add_flag("--ood", eval_req.ood, "Use the synthetic out-of-distribution source");
  eval_cmd->add_option("--out", eval_out, "Report directory")->required();
  eval_cmd->add_option("--seed", eval_req.seed, "Evaluation seed");
  eval_cmd->add_option("--format", eval_format, "Report format")->check(CLI::IsMember({"csv", "json", "both"}));
  eval_cmd->add_option("--images", eval_req.max_images, "Use at most this many images");
  eval_cmd->add_option("--alpha", eval_req.alpha, "Embedding strength (default: final schedule value)");

  std::string report_log, report_json, report_out;
  auto* report_cmd = app.add_subcommand("report", "Render plots from a training log and/or an eval report");
  report_cmd->add_option("--log", report_log, "Training log CSV or run directory");
  report_cmd->add_option("--report", report_json, "Eval report JSON");
  report_cmd->add_option("--out", report_out, "Plot directory")->required();

  TrainArgs ablate_args;
  std::string which = "all";
  auto* ablate_cmd = app.add_subcommand("ablate", "Run the ablation matrix as sequential training runs");
  add_train_flags(ablate_cmd, ablate_args, false);
  ablate_cmd->add_option("--which", which, "Ablation")->check(CLI::IsMember({"entropy", "backbone", "ucb", "all"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train_cmd) {
      const auto c = resolve(train_args);
      train_one(c, run_dir(train_args, c), train_args.resume);
    } else if (*eval_cmd) {
      if (!eval_data.empty()) eval_req.data_dir = eval_data;
      const auto report = run_eval(eval_req);
      const auto fmt = eval_format == "csv" ? ReportFormat::Csv : eval_format == "json" ? ReportFormat::Json : ReportFormat::Both;
      for (const auto& p : export_report(report, eval_out, eval_req.mode, fmt)) std::printf("wrote %s\n", p.string().c_str());
      for (const auto& f : report.families)
        std::printf("%-12s bit_acc %.4f  capacity %.3f  (%lld cells)\n", f.label.c_str(), f.bit_accuracy, f.capacity,
                    static_cast<long long>(f.cells));
      std::printf("%-12s bit_acc %.4f  capacity %.3f  (%lld cells)\n", "Overall", report.overall.bit_accuracy,
                  report.overall.capacity, static_cast<long long>(report.overall.cells));
    } else if (*report_cmd) {
      if (report_log.empty() && report_json.empty()) throw ValidationError("report needs --log and/or --report");
      std::vector<fs::path> written;
      if (!report_log.empty()) {
        fs::path log = report_log;
        if (fs::is_directory(log)) log /= "log.csv";
        auto w = plot_training_log(log, report_out);
        written.insert(written.end(), w.begin(), w.end());
      }
      if (!report_json.empty()) {
        std::ifstream f(report_json);
        if (!f) throw IOError("cannot read " + report_json);
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(f);
        } catch (const nlohmann::json::exception& e) {
          throw ParseError(report_json + ": " + e.what());
        }
        const auto report = report_from_json(j);
        auto w = plot_report(report, report_out, fs::path(report_json).stem().string());
        written.insert(written.end(), w.begin(), w.end());
      }
      for (const auto& p : written) std::printf("wrote %s\n", p.string().c_str());
    } else if (*ablate_cmd) {
      const auto base = resolve(ablate_args);
      const fs::path root = ablate_args.out.empty() ? output_root(base.output_dir) / ("ablate_" + base.hash().substr(0, 8))
                                                    : fs::path(ablate_args.out);
      struct Variant {
        std::string name;
        RunConfig config;
      };
      std::vector<Variant> variants;
      auto cat = base;
      cat.train.mode = AdversaryMode::Cat;
      if (which == "entropy" || which == "all") {
        auto on = cat, off = cat;
        on.adversary.lambda_ent = 0.1;
        off.adversary.lambda_ent = 0.0;
        variants.push_back({"entropy_0.1", on});
        variants.push_back({"entropy_0", off});
      }
      if (which == "backbone" || which == "all") {
        auto conv = cat, resnet = cat;
        conv.adversary.backbone = BackboneKind::Conv;
        resnet.adversary.backbone = BackboneKind::ResNet;
        variants.push_back({"backbone_conv", conv});
        variants.push_back({"backbone_resnet", resnet});
      }
      if (which == "ucb" || which == "all") {
        auto ucb = cat;
        ucb.train.mode = AdversaryMode::Ucb;
        variants.push_back({"adversary_cat", cat});
        variants.push_back({"adversary_ucb", ucb});
      }
      nlohmann::json summary = nlohmann::json::array();
      for (const auto& v : variants) {
        const auto s = train_one(v.config, root / v.name, ablate_args.resume);
        summary.push_back({{"name", v.name},
                           {"dir", s.dir.string()},
                           {"config_hash", s.config_hash},
                           {"final_val_bit_error", s.log.empty() ? 0.0 : s.log.back().val_bit_error},
                           {"final_entropy", s.log.empty() ? 0.0 : s.log.back().entropy}});
      }
      std::ofstream f(root / "ablation.json");
      f << summary.dump(2) << "\n";
      std::printf("wrote %s\n", (root / "ablation.json").string().c_str());
    }
  } catch (const catwm::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
