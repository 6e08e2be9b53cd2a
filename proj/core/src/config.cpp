#include "catwm/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "catwm/error.hpp"

namespace catwm {
namespace {

class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ParseError(where() + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path_ + "." + key + ": " + e.what());
    }
  }

  bool has(const char* key) {
    known_.insert(key);
    return j_.contains(key);
  }

  Section child(const char* key) {
    known_.insert(key);
    return Section(j_.at(key), path_ + "." + key);
  }

  const nlohmann::json& raw(const char* key) {
    known_.insert(key);
    return j_.at(key);
  }

  std::string field(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!known_.count(k)) throw ParseError(path_ + "." + k + ": unknown field");
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> known_;
};

std::string kind_name(DatasetSource::Kind k) {
  switch (k) {
    case DatasetSource::Kind::Synthetic: return "synthetic";
    case DatasetSource::Kind::SyntheticOod: return "synthetic_ood";
    case DatasetSource::Kind::ImageDirectory: return "image_directory";
  }
  return "?";
}

DatasetSource::Kind parse_kind(const std::string& s, const std::string& field) {
  for (auto k : {DatasetSource::Kind::Synthetic, DatasetSource::Kind::SyntheticOod, DatasetSource::Kind::ImageDirectory})
    if (kind_name(k) == s) return k;
  throw ParseError(field + ": unknown dataset kind '" + s + "'");
}

nlohmann::json source_json(const DatasetSource& s) {
  return {{"kind", kind_name(s.kind)},
          {"size", s.size},
          {"resolution", s.resolution},
          {"directory", s.directory.string()},
          {"train_fraction", s.train_fraction},
          {"val_fraction", s.val_fraction}};
}

void read_source(Section sec, DatasetSource& s) {
  std::string kind = kind_name(s.kind), dir = s.directory.string();
  sec.get("kind", kind);
  s.kind = parse_kind(kind, sec.field("kind"));
  sec.get("size", s.size);
  sec.get("resolution", s.resolution);
  sec.get("directory", dir);
  s.directory = dir;
  sec.get("train_fraction", s.train_fraction);
  sec.get("val_fraction", s.val_fraction);
  sec.finish();
}

void check_source(const DatasetSource& s, const char* name, std::ostringstream& errs) {
  if (s.kind != DatasetSource::Kind::ImageDirectory && s.size <= 0) errs << " " << name << ".size must be > 0;";
  if (s.kind == DatasetSource::Kind::ImageDirectory && s.directory.empty())
    errs << " " << name << ".directory is required for image_directory;";
  if (s.resolution <= 0 || s.resolution % 4 != 0) errs << " " << name << ".resolution must be a positive multiple of 4;";
  if (!(s.train_fraction > 0 && s.val_fraction > 0 && s.train_fraction + s.val_fraction < 1))
    errs << " " << name << " split fractions must be positive and leave room for a test split;";
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  const auto& t = train;
  const auto& a = adversary;
  const auto& w = watermark;
  return {
      {"seed", t.seed},
      {"output_dir", output_dir.string()},
      {"train",
       {{"steps", t.steps},
        {"warmup_steps", t.warmup_steps},
        {"batch_size", t.batch_size},
        {"accumulation", t.accumulation},
        {"lr", t.lr},
        {"lr_floor", t.lr_floor},
        {"weight_decay", t.weight_decay},
        {"lambda_dec", t.lambda_dec},
        {"lambda_i", t.lambda_i},
        {"mode", mode_name(t.mode)},
        {"eval_interval", t.eval_interval},
        {"checkpoint_interval", t.checkpoint_interval},
        {"val_images", t.val_images},
        {"ucb_c", t.ucb_c},
        {"alpha_start", t.alpha.alpha_start},
        {"alpha_end", t.alpha.alpha_end},
        {"alpha_decay_fraction", t.alpha.decay_fraction},
        {"freeze_watermark", t.freeze_watermark}}},
      {"adversary",
       {{"depth", a.depth},
        {"tau", a.tau},
        {"tau_ent", a.tau_ent},
        {"lambda_ent", a.lambda_ent},
        {"hidden_dim", a.hidden_dim},
        {"projection_hidden", a.projection_hidden},
        {"head_hidden", a.head_hidden},
        {"backbone", backbone_name(a.backbone)},
        {"backbone_seed", a.backbone_seed}}},
      {"watermark",
       {{"payload_bits", w.payload_bits}, {"channels", w.channels}, {"res_blocks", w.res_blocks}, {"init_seed", w.init_seed}}},
      {"data", source_json(data)},
      {"ood", source_json(ood)},
      {"grid", grid.to_json()},
  };
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string RunConfig::hash() const { return fnv1a_hex(to_json().dump()); }

void RunConfig::validate() const {
  std::ostringstream errs;
  auto collect = [&](auto&& fn) {
    try {
      fn();
    } catch (const ValidationError& e) {
      errs << " " << e.what() << ";";
    }
  };
  collect([&] { train.validate(); });
  collect([&] { adversary.validate(); });
  collect([&] { watermark.validate(); });
  check_source(data, "data", errs);
  check_source(ood, "ood", errs);
  if (watermark.resolution != data.resolution) errs << " watermark resolution must equal data.resolution;";
  collect([&] {
    try {
      (void)build_grid(GridMode::SingleStep, grid);
      (void)build_grid(GridMode::Compositional, grid);
    } catch (const Error& e) {
      throw ValidationError(std::string("grid: ") + e.what());
    }
  });
  if (!errs.str().empty()) throw ValidationError("config:" + errs.str());
}

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  Section root(j, "");
  root.get("seed", c.train.seed);
  std::string out = c.output_dir.string();
  root.get("output_dir", out);
  c.output_dir = out;

  if (root.has("train")) {
    auto s = root.child("train");
    auto& t = c.train;
    s.get("steps", t.steps);
    s.get("warmup_steps", t.warmup_steps);
    s.get("batch_size", t.batch_size);
    s.get("accumulation", t.accumulation);
    s.get("lr", t.lr);
    s.get("lr_floor", t.lr_floor);
    s.get("weight_decay", t.weight_decay);
    s.get("lambda_dec", t.lambda_dec);
    s.get("lambda_i", t.lambda_i);
    std::string mode(mode_name(t.mode));
    s.get("mode", mode);
    try {
      t.mode = parse_mode(mode);
    } catch (const ParseError& e) {
      throw ParseError(s.field("mode") + ": " + e.what());
    }
    s.get("eval_interval", t.eval_interval);
    s.get("checkpoint_interval", t.checkpoint_interval);
    s.get("val_images", t.val_images);
    s.get("ucb_c", t.ucb_c);
    s.get("alpha_start", t.alpha.alpha_start);
    s.get("alpha_end", t.alpha.alpha_end);
    s.get("alpha_decay_fraction", t.alpha.decay_fraction);
    s.get("freeze_watermark", t.freeze_watermark);
    s.finish();
  }
  if (root.has("adversary")) {
    auto s = root.child("adversary");
    auto& a = c.adversary;
    s.get("depth", a.depth);
    s.get("tau", a.tau);
    s.get("tau_ent", a.tau_ent);
    s.get("lambda_ent", a.lambda_ent);
    s.get("hidden_dim", a.hidden_dim);
    s.get("projection_hidden", a.projection_hidden);
    s.get("head_hidden", a.head_hidden);
    std::string bb(backbone_name(a.backbone));
    s.get("backbone", bb);
    try {
      a.backbone = parse_backbone(bb);
    } catch (const Error& e) {
      throw ParseError(s.field("backbone") + ": " + e.what());
    }
    s.get("backbone_seed", a.backbone_seed);
    s.finish();
  }
  if (root.has("watermark")) {
    auto s = root.child("watermark");
    auto& w = c.watermark;
    s.get("payload_bits", w.payload_bits);
    s.get("channels", w.channels);
    s.get("res_blocks", w.res_blocks);
    s.get("init_seed", w.init_seed);
    s.finish();
  }
  if (root.has("data")) read_source(root.child("data"), c.data);
  if (root.has("ood")) read_source(root.child("ood"), c.ood);
  c.watermark.resolution = static_cast<int>(c.data.resolution);
  if (root.has("grid")) c.grid = GridConfig::from_json(root.raw("grid"));
  root.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IOError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace catwm
