#include "catwm/training.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "catwm/error.hpp"
#include "catwm/evalharness.hpp"

namespace catwm {
namespace {

constexpr std::uint64_t kStepStream = 0x57e9000000000000ULL;
constexpr std::uint64_t kValStream = 0x7a11ULL;

void check_finite(double value, const char* what, std::int64_t step) {
  if (!std::isfinite(value)) throw NonFiniteLoss(std::string(what) + " is not finite at step " + std::to_string(step));
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::nan("");
  return std::stod(s);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IOError("cannot write " + path.string());
  f << text;
  if (!f) throw IOError("failed writing " + path.string());
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IOError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

nlohmann::json watermark_config_json(const WatermarkConfig& c) {
  return {{"payload_bits", c.payload_bits}, {"channels", c.channels}, {"res_blocks", c.res_blocks},
          {"resolution", c.resolution}, {"init_seed", c.init_seed}};
}

WatermarkConfig watermark_config_from(const nlohmann::json& j) {
  WatermarkConfig c;
  c.payload_bits = j.at("payload_bits").get<int>();
  c.channels = j.at("channels").get<int>();
  c.res_blocks = j.at("res_blocks").get<int>();
  c.resolution = j.at("resolution").get<int>();
  c.init_seed = j.at("init_seed").get<std::uint64_t>();
  return c;
}

void save_watermark(const WatermarkModel& model, torch::serialize::OutputArchive& archive) {
  torch::serialize::OutputArchive emb, ext;
  const_cast<WatermarkModel&>(model).embedder()->save(emb);
  const_cast<WatermarkModel&>(model).extractor()->save(ext);
  archive.write("embedder", emb);
  archive.write("extractor", ext);
}

void load_watermark_weights(WatermarkModel& model, torch::serialize::InputArchive& archive) {
  torch::serialize::InputArchive emb, ext;
  archive.read("embedder", emb);
  archive.read("extractor", ext);
  model.embedder()->load(emb);
  model.extractor()->load(ext);
}

WatermarkConfig seeded(WatermarkConfig c, std::uint64_t seed) {
  c.init_seed = mix_seed(c.init_seed, seed);
  return c;
}

}  // namespace

std::string_view mode_name(AdversaryMode mode) {
  switch (mode) {
    case AdversaryMode::Cat: return "cat";
    case AdversaryMode::RandomAug: return "random";
    case AdversaryMode::NoAug: return "noaug";
    case AdversaryMode::Ucb: return "ucb";
  }
  return "?";
}

AdversaryMode parse_mode(std::string_view name) {
  for (auto m : {AdversaryMode::Cat, AdversaryMode::RandomAug, AdversaryMode::NoAug, AdversaryMode::Ucb})
    if (mode_name(m) == name) return m;
  throw ParseError("unknown adversary mode '" + std::string(name) + "' (cat, random, noaug, ucb)");
}

void TrainConfig::validate() const {
  std::ostringstream errs;
  if (steps <= 0) errs << " steps must be > 0;";
  if (warmup_steps < 0 || warmup_steps >= steps) errs << " warmup_steps must lie in [0, steps);";
  if (batch_size <= 0) errs << " batch_size must be > 0;";
  if (accumulation <= 0 || (batch_size > 0 && batch_size % accumulation != 0))
    errs << " accumulation must be > 0 and divide batch_size;";
  if (!(lr > 0)) errs << " lr must be > 0;";
  if (!(lr_floor >= 0 && lr_floor < lr)) errs << " lr_floor must lie in [0, lr);";
  if (!(weight_decay >= 0)) errs << " weight_decay must be >= 0;";
  if (!(lambda_dec > 0)) errs << " lambda_dec must be > 0;";
  if (!(lambda_i >= 0)) errs << " lambda_i must be >= 0;";
  if (eval_interval <= 0) errs << " eval_interval must be > 0;";
  if (checkpoint_interval < 0 || (eval_interval > 0 && checkpoint_interval % eval_interval != 0))
    errs << " checkpoint_interval must be a non-negative multiple of eval_interval;";
  if (val_images <= 0) errs << " val_images must be > 0;";
  if (!(ucb_c >= 0)) errs << " ucb_c must be >= 0;";
  if (!(alpha.alpha_end >= 0 && alpha.alpha_end <= alpha.alpha_start)) errs << " alpha_end must lie in [0, alpha_start];";
  if (!(alpha.decay_fraction > 0 && alpha.decay_fraction <= 1)) errs << " alpha decay_fraction must lie in (0, 1];";
  if (!errs.str().empty()) throw ValidationError("train:" + errs.str());
}

double lr_schedule(std::int64_t step, const TrainConfig& c) {
  if (step < 0) throw DomainError("negative step");
  if (step <= c.warmup_steps) {
    if (c.warmup_steps == 0) return c.lr;
    return c.lr * static_cast<double>(step) / static_cast<double>(c.warmup_steps);
  }
  const double span = static_cast<double>(c.steps - c.warmup_steps);
  const double progress = std::min(1.0, static_cast<double>(step - c.warmup_steps) / span);
  return c.lr_floor + (c.lr - c.lr_floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

std::size_t ucb_select(const UcbState& s) {
  for (std::size_t i = 0; i < s.pulls.size(); ++i)
    if (s.pulls[i] == 0) return i;
  const double log_total = std::log(static_cast<double>(std::max<std::int64_t>(s.total, 1)));
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.pulls.size(); ++i) {
    const double score = s.mean_reward[i] + s.c * std::sqrt(log_total / static_cast<double>(s.pulls[i]));
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return best;
}

void ucb_update(UcbState& s, std::size_t arm, double reward) {
  if (arm >= s.pulls.size()) throw LengthMismatch("arm index out of range");
  ++s.pulls[arm];
  ++s.total;
  s.mean_reward[arm] += (reward - s.mean_reward[arm]) / static_cast<double>(s.pulls[arm]);
}

std::vector<std::int64_t> ucb_arm_sequence(std::size_t arm, std::int64_t k, int depth) {
  std::vector<std::int64_t> seq(static_cast<std::size_t>(depth));
  auto rest = static_cast<std::int64_t>(arm);
  for (int t = depth - 1; t >= 0; --t) {
    seq[static_cast<std::size_t>(t)] = rest % k;
    rest /= k;
  }
  if (rest != 0) throw LengthMismatch("arm index out of range");
  return seq;
}

JointForward joint_forward(WatermarkModel& model, AttackController& controller, const torch::Tensor& x, Rng& rng,
                           double alpha, std::span<const AttackPrimitive> primitives, bool adversary_active) {
  JointForward f;
  f.messages = random_messages(x.size(0), model.config().payload_bits, rng);
  f.watermarked = model.embed(x, f.messages, alpha);
  if (adversary_active) {
    auto r = rollout(controller, f.watermarked, primitives, rng);
    f.attacked = r.image;
    f.trajectory = std::move(r.trajectory);
    f.entropy_loss = -f.trajectory.total_entropy();
  } else {
    f.attacked = f.watermarked;
  }
  f.scores = model.extract(f.attacked);
  f.msg_loss = message_loss(f.scores, f.messages);
  f.perc_loss = perceptual_loss(x, f.watermarked);
  return f;
}

Trainer::Trainer(const TrainConfig& train, const AdversaryConfig& adversary, const WatermarkConfig& watermark,
                 std::vector<AttackPrimitive> primitives)
    : train_(train),
      adversary_(adversary),
      primitives_(std::move(primitives)),
      model_(seeded(watermark, train.seed)) {
  train_.validate();
  adversary_.validate();
  if (primitives_.empty()) throw ValidationError("empty primitive library");
  torch::manual_seed(mix_seed(train_.seed, 0xad));
  controller_ = AttackController(adversary_, static_cast<std::int64_t>(primitives_.size()));
  auto opts = torch::optim::AdamWOptions(train_.lr).weight_decay(train_.weight_decay);
  wm_opt_ = std::make_unique<torch::optim::AdamW>(model_.parameters(), opts);
  adv_opt_ = std::make_unique<torch::optim::AdamW>(controller_->trainable_parameters(), opts);
  std::size_t arms = 1;
  for (int t = 0; t < adversary_.depth; ++t) arms *= primitives_.size();
  ucb_ = UcbState(arms, train_.ucb_c);
}

Rng Trainer::step_rng(std::int64_t step) const { return Rng::derive(train_.seed, kStepStream + static_cast<std::uint64_t>(step)); }

double Trainer::current_alpha() const {
  return alpha_schedule(static_cast<double>(std::min(step_, train_.steps)), static_cast<double>(train_.steps), train_.alpha);
}

void Trainer::set_lr(double lr) {
  for (auto* opt : {wm_opt_.get(), adv_opt_.get()})
    for (auto& group : opt->param_groups()) static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
}

void Trainer::apply_watermark_update() {
  if (!train_.freeze_watermark) wm_opt_->step();
  wm_opt_->zero_grad();
}

StepMetrics Trainer::step(const torch::Tensor& x) {
  switch (train_.mode) {
    case AdversaryMode::Cat: return joint_step(x);
    case AdversaryMode::RandomAug: return random_aug_step(x);
    case AdversaryMode::NoAug: return noaug_step(x);
    case AdversaryMode::Ucb: return ucb_step(x);
  }
  throw ValidationError("bad mode");
}

StepMetrics Trainer::joint_step(const torch::Tensor& x) {
  StepMetrics m;
  m.step = step_;
  m.lr = lr_schedule(step_, train_);
  m.alpha = current_alpha();
  m.adversary_active = adversary_active();
  m.selections.assign(primitives_.size(), 0);
  set_lr(m.lr);
  model_.train(true);

  Rng rng = step_rng(step_);
  const auto phi = controller_->trainable_parameters();
  wm_opt_->zero_grad();
  adv_opt_->zero_grad();
  const auto micro = train_.accumulation;
  const auto chunk = x.size(0) / micro;
  double entropy = 0.0;
  std::int64_t correct = 0;
  for (std::int64_t i = 0; i < micro; ++i) {
    auto xb = x.narrow(0, i * chunk, chunk);
    auto f = joint_forward(model_, controller_, xb, rng, m.alpha, primitives_, m.adversary_active);
    // One backward serves both players: theta and psi descend on the task
    // loss; the entropy term touches only phi because the controller sees
    // detached images, and phi's gradient is sign-reversed afterwards.
    auto objective = train_.lambda_dec * f.msg_loss + train_.lambda_i * f.perc_loss;
    if (m.adversary_active) objective = objective - train_.lambda_dec * adversary_.lambda_ent * f.entropy_loss;
    const double total = objective.item<double>();
    if (!std::isfinite(total)) {
      wm_opt_->zero_grad();
      adv_opt_->zero_grad();
      check_finite(total, "joint loss", step_);
    }
    (objective / static_cast<double>(micro)).backward();

    m.msg_loss += f.msg_loss.item<double>() / static_cast<double>(micro);
    m.perc_loss += f.perc_loss.item<double>() / static_cast<double>(micro);
    correct += count_correct_bits(f.scores.detach(), f.messages);
    if (m.adversary_active) {
      entropy += -f.entropy_loss.item<double>() / static_cast<double>(adversary_.depth * micro);
      for (const auto& s : f.trajectory.steps)
        for (auto idx : s.index) ++m.selections[static_cast<std::size_t>(idx)];
    }
  }
  if (m.adversary_active) {
    torch::NoGradGuard guard;
    for (const auto& p : phi)
      if (p.grad().defined()) p.mutable_grad().mul_(-1.0 / train_.lambda_dec);
    adv_opt_->step();
    m.entropy = entropy;
  }
  adv_opt_->zero_grad();
  apply_watermark_update();
  m.bit_accuracy = static_cast<double>(correct) / static_cast<double>(x.size(0) * model_.config().payload_bits);
  ++step_;
  return m;
}

double Trainer::replay_message_loss(const torch::Tensor& x, std::int64_t step) {
  torch::NoGradGuard guard;
  model_.train(true);
  Rng rng = step_rng(step);
  const double alpha =
      alpha_schedule(static_cast<double>(std::min(step, train_.steps)), static_cast<double>(train_.steps), train_.alpha);
  const auto micro = train_.accumulation;
  const auto chunk = x.size(0) / micro;
  double loss = 0.0;
  for (std::int64_t i = 0; i < micro; ++i) {
    auto f = joint_forward(model_, controller_, x.narrow(0, i * chunk, chunk), rng, alpha, primitives_,
                           step >= train_.warmup_steps);
    loss += f.msg_loss.item<double>() / static_cast<double>(micro);
  }
  return loss;
}

template <class Attack>
StepMetrics Trainer::supervised_step(const torch::Tensor& x, Attack&& attack) {
  StepMetrics m;
  m.step = step_;
  m.lr = lr_schedule(step_, train_);
  m.alpha = current_alpha();
  m.adversary_active = adversary_active();
  m.selections.assign(primitives_.size(), 0);
  set_lr(m.lr);
  model_.train(true);

  Rng rng = step_rng(step_);
  wm_opt_->zero_grad();
  const auto micro = train_.accumulation;
  const auto chunk = x.size(0) / micro;
  std::int64_t correct = 0;
  for (std::int64_t i = 0; i < micro; ++i) {
    auto xb = x.narrow(0, i * chunk, chunk);
    auto bits = random_messages(chunk, model_.config().payload_bits, rng);
    auto xw = model_.embed(xb, bits, m.alpha);
    torch::Tensor xa = m.adversary_active ? attack(xw, rng, m.selections) : xw;
    torch::Tensor scores = model_.extract(xa);
    torch::Tensor l_msg = message_loss(scores, bits);
    torch::Tensor l_perc = perceptual_loss(xb, xw);
    torch::Tensor objective = train_.lambda_dec * l_msg + train_.lambda_i * l_perc;
    const double total = objective.item<double>();
    if (!std::isfinite(total)) {
      wm_opt_->zero_grad();
      check_finite(total, "watermark loss", step_);
    }
    (objective / static_cast<double>(micro)).backward();
    m.msg_loss += l_msg.item<double>() / static_cast<double>(micro);
    m.perc_loss += l_perc.item<double>() / static_cast<double>(micro);
    correct += count_correct_bits(scores.detach(), bits);
  }
  apply_watermark_update();
  m.bit_accuracy = static_cast<double>(correct) / static_cast<double>(x.size(0) * model_.config().payload_bits);
  ++step_;
  return m;
}

StepMetrics Trainer::random_aug_step(const torch::Tensor& x) {
  const auto k = static_cast<std::int64_t>(primitives_.size());
  return supervised_step(x, [&](torch::Tensor xw, Rng& rng, std::vector<std::int64_t>& counts) {
    for (int t = 0; t < adversary_.depth; ++t) {
      std::vector<std::int64_t> index(static_cast<std::size_t>(xw.size(0)));
      for (auto& i : index) {
        i = rng.index(k);
        ++counts[static_cast<std::size_t>(i)];
      }
      auto params = sample_all_params(primitives_, rng);
      xw = apply_selected(xw, index, primitives_, params);
    }
    return xw;
  });
}

StepMetrics Trainer::noaug_step(const torch::Tensor& x) {
  return supervised_step(x, [](const torch::Tensor& xw, Rng&, std::vector<std::int64_t>&) { return xw; });
}

StepMetrics Trainer::ucb_step(const torch::Tensor& x) {
  const bool active = adversary_active();
  const auto arm = ucb_select(ucb_);
  const auto seq = ucb_arm_sequence(arm, static_cast<std::int64_t>(primitives_.size()), adversary_.depth);
  auto m = supervised_step(x, [&](torch::Tensor xw, Rng& rng, std::vector<std::int64_t>& counts) {
    for (auto idx : seq) {
      auto params = sample_all_params(primitives_, rng);
      const auto i = static_cast<std::size_t>(idx);
      counts[i] += xw.size(0);
      xw = apply(primitives_[i], xw, params[i]);
    }
    return xw;
  });
  if (active) ucb_update(ucb_, arm, m.msg_loss);
  return m;
}

void Trainer::save(const std::filesystem::path& dir, const nlohmann::json& extra) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IOError("cannot create " + dir.string() + ": " + ec.message());
  try {
    torch::serialize::OutputArchive weights;
    save_watermark(model_, weights);
    torch::serialize::OutputArchive ctrl;
    controller_->save(ctrl);
    weights.write("controller", ctrl);
    weights.save_to((dir / "model.pt").string());
    torch::serialize::OutputArchive wm_state, adv_state;
    wm_opt_->save(wm_state);
    adv_opt_->save(adv_state);
    wm_state.save_to((dir / "optim_wm.pt").string());
    adv_state.save_to((dir / "optim_adv.pt").string());
  } catch (const c10::Error& e) {
    throw IOError("writing checkpoint " + dir.string() + ": " + e.what_without_backtrace());
  }
  nlohmann::json state{{"step", step_},
                       {"mode", mode_name(train_.mode)},
                       {"watermark", watermark_config_json(model_.config())},
                       {"ucb", {{"pulls", ucb_.pulls}, {"mean_reward", ucb_.mean_reward}, {"c", ucb_.c}, {"total", ucb_.total}}},
                       {"extra", extra}};
  write_text(dir / "state.json", state.dump(2) + "\n");
}

nlohmann::json Trainer::load(const std::filesystem::path& dir) {
  const auto state = read_json(dir / "state.json");
  try {
    torch::serialize::InputArchive weights;
    weights.load_from((dir / "model.pt").string());
    load_watermark_weights(model_, weights);
    torch::serialize::InputArchive ctrl;
    weights.read("controller", ctrl);
    controller_->load(ctrl);
    torch::serialize::InputArchive wm_state, adv_state;
    wm_state.load_from((dir / "optim_wm.pt").string());
    adv_state.load_from((dir / "optim_adv.pt").string());
    wm_opt_->load(wm_state);
    adv_opt_->load(adv_state);
  } catch (const c10::Error& e) {
    throw IOError("reading checkpoint " + dir.string() + ": " + e.what_without_backtrace());
  }
  step_ = state.at("step").get<std::int64_t>();
  const auto& u = state.at("ucb");
  ucb_.pulls = u.at("pulls").get<std::vector<std::int64_t>>();
  ucb_.mean_reward = u.at("mean_reward").get<std::vector<double>>();
  ucb_.c = u.at("c").get<double>();
  ucb_.total = u.at("total").get<std::int64_t>();
  return state.value("extra", nlohmann::json::object());
}

WatermarkModel load_watermark(const std::filesystem::path& dir, nlohmann::json* state_out) {
  auto state = read_json(dir / "state.json");
  WatermarkModel model(watermark_config_from(state.at("watermark")));
  try {
    torch::serialize::InputArchive weights;
    weights.load_from((dir / "model.pt").string());
    load_watermark_weights(model, weights);
  } catch (const c10::Error& e) {
    throw IOError("reading checkpoint " + dir.string() + ": " + e.what_without_backtrace());
  }
  if (state_out) *state_out = std::move(state);
  return model;
}

std::string log_header() { return "step,lr,alpha,L_msg,L_perc,entropy,val_bit_error"; }

std::string log_line(const TrainLogRow& r) {
  return std::to_string(r.step) + "," + fmt(r.lr) + "," + fmt(r.alpha) + "," + fmt(r.msg_loss) + "," + fmt(r.perc_loss) +
         "," + fmt(r.entropy) + "," + fmt(r.val_bit_error);
}

std::vector<TrainLogRow> read_log(const std::filesystem::path& csv) {
  std::ifstream f(csv);
  if (!f) throw IOError("cannot read " + csv.string());
  std::string line;
  std::getline(f, line);
  if (line != log_header()) throw ParseError(csv.string() + ": unexpected header");
  std::vector<TrainLogRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    if (cols.size() != 7) throw ParseError(csv.string() + ": expected 7 columns in '" + line + "'");
    try {
      rows.push_back({std::stoll(cols[0]), parse_double(cols[1]), parse_double(cols[2]), parse_double(cols[3]),
                      parse_double(cols[4]), parse_double(cols[5]), parse_double(cols[6])});
    } catch (const std::exception&) {
      throw ParseError(csv.string() + ": bad number in '" + line + "'");
    }
  }
  return rows;
}

namespace {

nlohmann::json rows_to_json(const std::vector<TrainLogRow>& rows) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) arr.push_back(log_line(r));
  return arr;
}

std::filesystem::path latest_checkpoint(const std::filesystem::path& root) {
  std::filesystem::path best;
  if (!std::filesystem::exists(root)) return best;
  for (const auto& e : std::filesystem::directory_iterator(root)) {
    if (!e.is_directory() || !std::filesystem::exists(e.path() / "state.json")) continue;
    if (e.path().filename().string().rfind("step_", 0) != 0) continue;
    if (best.empty() || e.path().filename() > best.filename()) best = e.path();
  }
  return best;
}

std::string step_dir_name(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%08lld", static_cast<long long>(step));
  return buf;
}

}  // namespace

TrainResult train(Trainer& trainer, const DatasetSplits& data, const TrainOptions& options) {
  if (data.train.size() == 0) throw EmptyDataset("training split is empty");
  if (data.val.size() == 0) throw EmptyDataset("validation split is empty");
  const auto& cfg = trainer.train_config();
  if (data.train.size() < cfg.batch_size) throw EmptyDataset("training split smaller than one batch");

  TrainResult result;
  BatchSampler sampler(data.train.size(), cfg.batch_size, cfg.seed);
  const auto val = data.val.images.narrow(0, 0, std::min(cfg.val_images, data.val.size()));
  const auto val_cells = validation_cells(trainer.adversary_config().depth);
  const auto val_seed = mix_seed(cfg.seed, kValStream);

  const bool persist = !options.out_dir.empty();
  const auto ckpt_root = options.out_dir / "checkpoints";
  nlohmann::json extra{{"config_hash", options.config_hash}};
  if (options.config) extra["config"] = *options.config;

  if (persist && options.resume) {
    const auto latest = latest_checkpoint(ckpt_root);
    if (!latest.empty()) {
      const auto stored = trainer.load(latest);
      if (stored.value("config_hash", std::string()) != options.config_hash)
        throw ValidationError("checkpoint " + latest.string() + " was written by a different config");
      for (const auto& line : stored.at("log")) {
        std::stringstream ss(line.get<std::string>());
        std::vector<std::string> cols;
        for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
        result.log.push_back({std::stoll(cols[0]), parse_double(cols[1]), parse_double(cols[2]), parse_double(cols[3]),
                              parse_double(cols[4]), parse_double(cols[5]), parse_double(cols[6])});
      }
      result.skipped_steps = trainer.current_step();
      sampler.skip(trainer.current_step());
    }
  }
  if (persist) {
    std::error_code ec;
    std::filesystem::create_directories(options.out_dir, ec);
    if (ec) throw IOError("cannot create " + options.out_dir.string() + ": " + ec.message());
  }

  auto write_log = [&] {
    if (!persist) return;
    std::string text = log_header() + "\n";
    for (const auto& r : result.log) text += log_line(r) + "\n";
    write_text(options.out_dir / "log.csv", text);
  };
  auto checkpoint = [&](const std::string& name) {
    if (!persist) return std::filesystem::path();
    auto ex = extra;
    ex["log"] = rows_to_json(result.log);
    const auto dir = ckpt_root / name;
    trainer.save(dir, ex);
    return dir;
  };

  double msg = 0.0, perc = 0.0, ent = 0.0;
  std::int64_t n = 0, n_ent = 0;
  while (trainer.current_step() < cfg.steps) {
    const auto rows = sampler.next();
    const auto metrics = trainer.step(data.train.batch(rows));
    if (options.on_step) options.on_step(metrics);
    msg += metrics.msg_loss;
    perc += metrics.perc_loss;
    ++n;
    if (!std::isnan(metrics.entropy)) {
      ent += metrics.entropy;
      ++n_ent;
    }
    const auto done = trainer.current_step();
    if (done % cfg.eval_interval == 0 || done == cfg.steps) {
      TrainLogRow row;
      row.step = done;
      row.lr = metrics.lr;
      row.alpha = trainer.current_alpha();
      row.msg_loss = msg / static_cast<double>(n);
      row.perc_loss = perc / static_cast<double>(n);
      row.entropy = n_ent > 0 ? ent / static_cast<double>(n_ent) : std::nan("");
      row.val_bit_error = validation_bit_error(trainer.model(), val, val_cells, row.alpha, val_seed);
      result.log.push_back(row);
      if (options.on_log) options.on_log(row);
      write_log();
      msg = perc = ent = 0.0;
      n = n_ent = 0;
    }
    if (persist && cfg.checkpoint_interval > 0 && done % cfg.checkpoint_interval == 0 && done != cfg.steps)
      checkpoint(step_dir_name(done));
  }
  write_log();
  result.final_checkpoint = checkpoint(step_dir_name(trainer.current_step()));
  return result;
}

}  // namespace catwm
