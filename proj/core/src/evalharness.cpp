#include "catwm/evalharness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "catwm/error.hpp"
#include "catwm/watermark.hpp"

namespace catwm {
namespace {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string short_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string op_label(const AttackSpec& op) {
  if (!op.params.strength) return op.id;
  return op.id + "(" + short_number(*op.params.strength) + ")";
}

std::string chain_label(std::span<const AttackSpec> ops) {
  std::string out;
  for (const auto& op : ops) {
    if (!out.empty()) out += ">";
    out += op_label(op);
  }
  return out;
}

const AttackPrimitive& lookup(std::string_view id, std::span<const AttackPrimitive> primitives) {
  for (const auto& p : primitives)
    if (p.id == id) return p;
  throw UnknownPrimitive(std::string(id));
}

AttackSpec make_spec(const AttackPrimitive& p, double value) {
  AttackSpec s{p.id, p.kind == AttackKind::Identity ? AttackParams::none() : AttackParams::of(value)};
  validate_params(p, s.params);
  return s;
}

int family_rank(Family f) {
  switch (f) {
    case Family::Value: return 0;
    case Family::Compression: return 1;
    case Family::Geometric: return 2;
    case Family::Identity: return 3;
  }
  return 4;
}

nlohmann::json ops_to_json(std::span<const AttackSpec> ops) {
  auto arr = nlohmann::json::array();
  for (const auto& op : ops) {
    nlohmann::json o{{"id", op.id}};
    if (op.params.strength) o["value"] = *op.params.strength;
    if (op.params.offset_x != 0.5 || op.params.offset_y != 0.5) {
      o["offset_x"] = op.params.offset_x;
      o["offset_y"] = op.params.offset_y;
    }
    arr.push_back(std::move(o));
  }
  return arr;
}

std::vector<AttackSpec> ops_from_json(const nlohmann::json& arr) {
  std::vector<AttackSpec> ops;
  for (const auto& o : arr) {
    AttackSpec s;
    s.id = o.at("id").get<std::string>();
    if (o.contains("value")) s.params.strength = o.at("value").get<double>();
    s.params.offset_x = o.value("offset_x", 0.5);
    s.params.offset_y = o.value("offset_y", 0.5);
    ops.push_back(std::move(s));
  }
  return ops;
}

nlohmann::json decode_to_json(const DecodeResult& d) {
  return {{"bit_accuracy", d.bit_accuracy}, {"n_bits", d.n_bits},     {"n_correct", d.n_correct},
          {"capacity", d.capacity},         {"p_value", d.p_value}};
}

DecodeResult decode_from_json(const nlohmann::json& j) {
  DecodeResult d;
  d.bit_accuracy = j.at("bit_accuracy").get<double>();
  d.n_bits = j.at("n_bits").get<std::int64_t>();
  d.n_correct = j.at("n_correct").get<std::int64_t>();
  d.capacity = j.at("capacity").get<double>();
  d.p_value = j.at("p_value").get<double>();
  return d;
}

}  // namespace

std::string_view grid_mode_name(GridMode mode) {
  return mode == GridMode::SingleStep ? "single" : "compositional";
}

GridConfig GridConfig::defaults() {
  GridConfig c;
  const std::vector<double> scales{0.32, 0.45, 0.55, 0.63, 0.71, 0.77, 0.84, 0.89, 0.95, 1.00};
  const std::vector<double> factors{0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0};
  c.single_step = {
      {"identity", {0.0}},
      {"rotate", {5, 10, 30, 45, 90}},
      {"resize", scales},
      {"crop", scales},
      {"perspective", {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}},
      {"hflip", {0, 1}},
      {"brightness", factors},
      {"contrast", factors},
      {"hue", {-0.4, -0.3, -0.2, -0.1, 0.0, 0.1, 0.2, 0.3, 0.4, 0.5}},
      {"grayscale", {0, 1}},
      {"gaussian_blur", {3, 5, 9, 13, 17}},
      {"jpeg", {40, 50, 60, 70, 80, 90}},
  };
  c.compositional = {
      {"rotate", {5, 10}},
      {"resize", {0.71, 0.77, 0.84, 0.89}},
      {"crop", {0.71, 0.77, 0.84, 0.89}},
      {"perspective", {0.1, 0.2, 0.3, 0.4}},
      {"hflip", {1}},
      {"brightness", {0.5, 0.75, 1.25, 1.5}},
      {"contrast", {0.5, 0.75, 1.25, 1.5}},
      {"hue", {-0.3, -0.2, -0.1, 0.1, 0.2, 0.3}},
      {"grayscale", {1}},
      {"gaussian_blur", {3, 5, 9}},
      {"jpeg", {60, 70, 80}},
  };
  c.combined_chain = {{"jpeg", 70}, {"crop", 0.77}, {"brightness", 0.75}};
  return c;
}

GridConfig GridConfig::from_json(const nlohmann::json& j) {
  GridConfig c = defaults();
  try {
    if (j.contains("single_step")) c.single_step = j.at("single_step").get<std::map<std::string, std::vector<double>>>();
    if (j.contains("compositional"))
      c.compositional = j.at("compositional").get<std::map<std::string, std::vector<double>>>();
    if (j.contains("combined_chain")) {
      c.combined_chain.clear();
      for (const auto& op : j.at("combined_chain"))
        c.combined_chain.emplace_back(op.at("id").get<std::string>(), op.at("value").get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("grid: ") + e.what());
  }
  return c;
}

nlohmann::json GridConfig::to_json() const {
  auto chain = nlohmann::json::array();
  for (const auto& [id, v] : combined_chain) chain.push_back({{"id", id}, {"value", v}});
  return {{"single_step", single_step}, {"compositional", compositional}, {"combined_chain", chain}};
}

Family classify_family(std::string_view id, std::span<const AttackPrimitive> primitives) {
  return lookup(id, primitives).family;
}

std::string classify_pair(std::string_view first, std::string_view second, std::span<const AttackPrimitive> primitives) {
  Family a = classify_family(first, primitives), b = classify_family(second, primitives);
  if (family_rank(b) < family_rank(a)) std::swap(a, b);
  return std::string(family_short_name(a)) + "+" + std::string(family_short_name(b));
}

std::vector<std::string> single_step_family_labels() { return {"Identity", "Value", "Compression", "Geometric", "Combined"}; }

std::vector<std::string> pair_family_labels() {
  return {"Val+Val", "Val+Comp", "Val+Geom", "Comp+Comp", "Comp+Geom", "Geom+Geom"};
}

EvalGrid build_grid(GridMode mode, const GridConfig& config, std::span<const AttackPrimitive> primitives) {
  EvalGrid grid;
  grid.mode = mode;
  const auto& lists = mode == GridMode::SingleStep ? config.single_step : config.compositional;
  for (const auto& [id, values] : lists) (void)lookup(id, primitives);

  if (mode == GridMode::SingleStep) {
    for (const auto& p : primitives) {
      auto it = lists.find(p.id);
      if (it == lists.end()) continue;
      if (p.kind == AttackKind::Identity) {
        grid.cells.push_back({p.id, std::string(family_name(p.family)), {make_spec(p, 0.0)}});
        continue;
      }
      for (double v : it->second) {
        std::vector<AttackSpec> ops{make_spec(p, v)};
        grid.cells.push_back({chain_label(ops), std::string(family_name(p.family)), ops});
      }
    }
    if (!config.combined_chain.empty()) {
      std::vector<AttackSpec> ops;
      for (const auto& [id, v] : config.combined_chain) ops.push_back(make_spec(lookup(id, primitives), v));
      grid.cells.push_back({chain_label(ops), "Combined", ops});
    }
    return grid;
  }

  for (const auto& a : primitives) {
    if (a.kind == AttackKind::Identity) continue;
    auto ia = lists.find(a.id);
    if (ia == lists.end()) continue;
    for (const auto& b : primitives) {
      if (b.kind == AttackKind::Identity) continue;
      if (a.id == b.id && a.is_binary) continue;
      auto ib = lists.find(b.id);
      if (ib == lists.end()) continue;
      const auto family = classify_pair(a.id, b.id, primitives);
      for (double va : ia->second)
        for (double vb : ib->second) {
          std::vector<AttackSpec> ops{make_spec(a, va), make_spec(b, vb)};
          grid.cells.push_back({chain_label(ops), family, ops});
        }
    }
  }
  return grid;
}

torch::Tensor apply_ops(std::span<const AttackSpec> ops, const torch::Tensor& x) {
  torch::Tensor out = x;
  for (const auto& op : ops) out = apply(find_primitive(op.id), out, op.params);
  return out;
}

void aggregate(EvalReport& report, GridMode mode) {
  const auto labels = mode == GridMode::SingleStep ? single_step_family_labels() : pair_family_labels();
  report.families.clear();
  for (const auto& label : labels) {
    AggregateRow row{label, 0.0, 0.0, 0};
    for (const auto& c : report.cells)
      if (c.family == label) {
        row.bit_accuracy += c.decode.bit_accuracy;
        row.capacity += c.decode.capacity;
        ++row.cells;
      }
    if (row.cells == 0) continue;
    row.bit_accuracy /= static_cast<double>(row.cells);
    row.capacity /= static_cast<double>(row.cells);
    report.families.push_back(row);
  }
  AggregateRow overall{"Overall", 0.0, 0.0, 0};
  for (const auto& c : report.cells) {
    if (c.family == "Identity") continue;
    overall.bit_accuracy += c.decode.bit_accuracy;
    overall.capacity += c.decode.capacity;
    ++overall.cells;
  }
  if (overall.cells > 0) {
    overall.bit_accuracy /= static_cast<double>(overall.cells);
    overall.capacity /= static_cast<double>(overall.cells);
  }
  report.overall = overall;
}

EvalReport evaluate(WatermarkModel& model, const torch::Tensor& images, const EvalGrid& grid, const EvalOptions& options) {
  if (!images.defined() || images.size(0) == 0) throw EmptyDataset("evaluation needs at least one image");
  torch::NoGradGuard no_grad;
  model.train(false);
  EvalReport report;
  report.kind = options.kind.empty() ? std::string(grid_mode_name(grid.mode)) : options.kind;
  report.seed = options.seed;
  report.config_hash = options.config_hash;
  report.checkpoint_id = options.checkpoint_id;
  report.payload_bits = model.config().payload_bits;

  const auto n = images.size(0);
  const auto bits = model.config().payload_bits;
  for (std::size_t i = 0; i < grid.cells.size(); ++i) {
    const auto& cell = grid.cells[i];
    Rng rng = Rng::derive(options.seed, i);
    std::int64_t correct = 0;
    for (std::int64_t start = 0; start < n; start += options.chunk) {
      const auto len = std::min(options.chunk, n - start);
      auto x = images.narrow(0, start, len);
      auto m = random_messages(len, bits, rng);
      auto scores = model.extract(apply_ops(cell.ops, model.embed(x, m, options.alpha)));
      correct += count_correct_bits(scores, m);
    }
    CellResult r;
    r.index = i;
    r.label = cell.label;
    r.family = cell.family;
    r.ops = cell.ops;
    r.samples = n;
    r.decode = decode_result(correct, n * bits, bits);
    report.cells.push_back(std::move(r));
  }
  aggregate(report, grid.mode);
  return report;
}

TransferDirection transfer_direction(int train_depth, int eval_depth) {
  if ((train_depth != 1 && train_depth != 2) || (eval_depth != 1 && eval_depth != 2))
    throw ValidationError("transfer depths must be 1 or 2");
  if (train_depth == eval_depth) return TransferDirection::Matched;
  return train_depth < eval_depth ? TransferDirection::Forward : TransferDirection::Backward;
}

std::string_view transfer_name(TransferDirection d) {
  switch (d) {
    case TransferDirection::Forward: return "forward";
    case TransferDirection::Backward: return "backward";
    case TransferDirection::Matched: return "matched";
  }
  return "?";
}

EvalReport transfer_eval(WatermarkModel& model, int train_depth, int eval_depth, const torch::Tensor& images,
                         const GridConfig& config, EvalOptions options) {
  const auto direction = transfer_direction(train_depth, eval_depth);
  const auto grid = build_grid(eval_depth == 1 ? GridMode::SingleStep : GridMode::Compositional, config);
  options.kind = std::string(transfer_name(direction));
  return evaluate(model, images, grid, options);
}

std::vector<GridCell> validation_cells(int depth) {
  const std::vector<AttackSpec> per_family{
      {"brightness", AttackParams::of(0.75)},
      {"jpeg", AttackParams::of(70)},
      {"crop", AttackParams::of(0.77)},
  };
  std::vector<GridCell> cells;
  if (depth <= 1) {
    cells.push_back({"identity", "Identity", {{"identity", AttackParams::none()}}});
    for (const auto& op : per_family)
      cells.push_back({op_label(op), std::string(family_name(classify_family(op.id))), {op}});
    return cells;
  }
  for (const auto& a : per_family)
    for (const auto& b : per_family) {
      std::vector<AttackSpec> ops{a, b};
      cells.push_back({chain_label(ops), classify_pair(a.id, b.id), ops});
    }
  return cells;
}

double validation_bit_error(WatermarkModel& model, const torch::Tensor& images, std::span<const GridCell> cells,
                            double alpha, std::uint64_t seed) {
  EvalGrid grid{GridMode::SingleStep, std::vector<GridCell>(cells.begin(), cells.end())};
  EvalOptions opts;
  opts.seed = seed;
  opts.alpha = alpha;
  const auto report = evaluate(model, images, grid, opts);
  double acc = 0.0;
  for (const auto& c : report.cells) acc += c.decode.bit_accuracy;
  return 1.0 - acc / static_cast<double>(report.cells.size());
}

std::string report_to_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "kind,row_type,index,label,family,samples,n_bits,n_correct,bit_accuracy,capacity,p_value,config_hash,seed,"
         "checkpoint\n";
  const auto tail = "," + r.config_hash + "," + std::to_string(r.seed) + "," + r.checkpoint_id + "\n";
  for (const auto& c : r.cells) {
    out << r.kind << ",cell," << c.index << "," << c.label << "," << c.family << "," << c.samples << "," << c.decode.n_bits
        << "," << c.decode.n_correct << "," << format_number(c.decode.bit_accuracy) << ","
        << format_number(c.decode.capacity) << "," << format_number(c.decode.p_value) << tail;
  }
  for (const auto& f : r.families)
    out << r.kind << ",family,," << f.label << "," << f.label << "," << f.cells << ",,," << format_number(f.bit_accuracy)
        << "," << format_number(f.capacity) << "," << tail;
  out << r.kind << ",overall,," << r.overall.label << ",," << r.overall.cells << ",,,"
      << format_number(r.overall.bit_accuracy) << "," << format_number(r.overall.capacity) << "," << tail;
  return out.str();
}

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json families = nlohmann::json::object();
  for (const auto& f : r.families)
    families[f.label] = {{"bit_accuracy", f.bit_accuracy}, {"capacity", f.capacity}, {"n_cells", f.cells},
                         {"cells", nlohmann::json::array()}};
  for (const auto& c : r.cells) {
    if (!families.contains(c.family))
      families[c.family] = {{"bit_accuracy", 0.0}, {"capacity", 0.0}, {"n_cells", 0}, {"cells", nlohmann::json::array()},
                            {"aggregated", false}};
    families[c.family]["cells"].push_back({{"index", c.index},
                                           {"label", c.label},
                                           {"ops", ops_to_json(c.ops)},
                                           {"samples", c.samples},
                                           {"decode", decode_to_json(c.decode)}});
  }
  auto order = nlohmann::json::array();
  for (const auto& f : r.families) order.push_back(f.label);
  return {{"kind", r.kind},
          {"seed", r.seed},
          {"config_hash", r.config_hash},
          {"checkpoint", r.checkpoint_id},
          {"payload_bits", r.payload_bits},
          {"family_order", order},
          {"families", families},
          {"overall", {{"bit_accuracy", r.overall.bit_accuracy}, {"capacity", r.overall.capacity}, {"n_cells", r.overall.cells}}}};
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.kind = j.at("kind").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.checkpoint_id = j.at("checkpoint").get<std::string>();
    r.payload_bits = j.at("payload_bits").get<int>();
    for (const auto& [label, fam] : j.at("families").items()) {
      for (const auto& c : fam.at("cells")) {
        CellResult cr;
        cr.index = c.at("index").get<std::size_t>();
        cr.label = c.at("label").get<std::string>();
        cr.family = label;
        cr.ops = ops_from_json(c.at("ops"));
        cr.samples = c.at("samples").get<std::int64_t>();
        cr.decode = decode_from_json(c.at("decode"));
        r.cells.push_back(std::move(cr));
      }
    }
    std::sort(r.cells.begin(), r.cells.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
    for (const auto& label : j.at("family_order")) {
      const auto& fam = j.at("families").at(label.get<std::string>());
      r.families.push_back({label.get<std::string>(), fam.at("bit_accuracy").get<double>(), fam.at("capacity").get<double>(),
                            fam.at("n_cells").get<std::int64_t>()});
    }
    const auto& o = j.at("overall");
    r.overall = {"Overall", o.at("bit_accuracy").get<double>(), o.at("capacity").get<double>(),
                 o.at("n_cells").get<std::int64_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
  return r;
}

std::vector<std::filesystem::path> export_report(const EvalReport& report, const std::filesystem::path& dir,
                                                 const std::string& stem, ReportFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IOError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  auto write = [&](const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IOError("cannot write " + path.string());
    f << text;
    if (!f) throw IOError("failed writing " + path.string());
    written.push_back(path);
  };
  if (format != ReportFormat::Json) write(dir / (stem + ".csv"), report_to_csv(report));
  if (format != ReportFormat::Csv) write(dir / (stem + ".json"), report_to_json(report).dump(2) + "\n");
  return written;
}

}  // namespace catwm
