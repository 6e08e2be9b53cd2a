#include "catwm/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "catwm/error.hpp"
#include "catwm/training.hpp"

namespace catwm {
namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 400;
constexpr int kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;

const cv::Scalar kInk(40, 40, 40);
const cv::Scalar kGrid(220, 220, 220);
const cv::Scalar kLine(180, 90, 30);

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

void text(cv::Mat& img, const std::string& s, cv::Point at, double scale = 0.4) {
  cv::putText(img, s, at, cv::FONT_HERSHEY_SIMPLEX, scale, kInk, 1, cv::LINE_AA);
}

void save(const cv::Mat& img, const std::filesystem::path& png) {
  std::error_code ec;
  if (png.has_parent_path()) std::filesystem::create_directories(png.parent_path(), ec);
  bool ok = false;
  try {
    ok = cv::imwrite(png.string(), img);
  } catch (const cv::Exception&) {
    ok = false;
  }
  if (!ok) throw IOError("cannot write " + png.string());
}

struct Axis {
  double lo, hi;
  double map(double v, int a, int b) const { return hi > lo ? a + (v - lo) / (hi - lo) * (b - a) : (a + b) / 2.0; }
};

Axis span(const std::vector<double>& v, bool include_zero) {
  double lo = include_zero ? 0.0 : INFINITY, hi = include_zero ? 0.0 : -INFINITY;
  for (double x : v)
    if (std::isfinite(x)) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  return {include_zero && lo >= 0 ? lo : lo - pad, hi + pad};
}

cv::Mat canvas(const std::string& title, const Axis& y) {
  cv::Mat img(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  text(img, title, {kLeft, 25}, 0.55);
  for (int i = 0; i <= 4; ++i) {
    const double v = y.lo + (y.hi - y.lo) * i / 4.0;
    const int py = static_cast<int>(std::lround(y.map(v, kHeight - kBottom, kTop)));
    cv::line(img, {kLeft, py}, {kWidth - kRight, py}, kGrid, 1);
    text(img, tick(v), {5, py + 4});
  }
  cv::rectangle(img, {kLeft, kTop}, {kWidth - kRight, kHeight - kBottom}, kInk, 1);
  return img;
}

}  // namespace

void plot_series(const std::filesystem::path& png, const std::string& title, const std::vector<double>& x,
                 const std::vector<double>& y) {
  if (x.size() != y.size()) throw LengthMismatch("plot series needs equal x and y lengths");
  const auto ya = span(y, false);
  const auto xa = span(x, false);
  auto img = canvas(title, ya);
  for (int i = 0; i <= 4; ++i) {
    const double v = xa.lo + (xa.hi - xa.lo) * i / 4.0;
    const int px = static_cast<int>(std::lround(xa.map(v, kLeft, kWidth - kRight)));
    text(img, tick(v), {px - 15, kHeight - kBottom + 18});
  }
  std::vector<cv::Point> pts;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) continue;
    pts.emplace_back(static_cast<int>(std::lround(xa.map(x[i], kLeft, kWidth - kRight))),
                     static_cast<int>(std::lround(ya.map(y[i], kHeight - kBottom, kTop))));
  }
  if (pts.size() > 1) cv::polylines(img, pts, false, kLine, 2, cv::LINE_AA);
  for (const auto& p : pts) cv::circle(img, p, 3, kLine, cv::FILLED, cv::LINE_AA);
  save(img, png);
}

void plot_bars(const std::filesystem::path& png, const std::string& title, const std::vector<std::string>& labels,
               const std::vector<double>& values) {
  if (labels.size() != values.size()) throw LengthMismatch("plot bars needs one label per value");
  const auto ya = span(values, true);
  auto img = canvas(title, ya);
  const int n = std::max<int>(1, static_cast<int>(values.size()));
  const double slot = static_cast<double>(kWidth - kLeft - kRight) / n;
  const int base = static_cast<int>(std::lround(ya.map(0.0, kHeight - kBottom, kTop)));
  for (int i = 0; i < static_cast<int>(values.size()); ++i) {
    const int x0 = kLeft + static_cast<int>(slot * i + slot * 0.15);
    const int x1 = kLeft + static_cast<int>(slot * (i + 1) - slot * 0.15);
    if (std::isfinite(values[static_cast<std::size_t>(i)])) {
      const int top = static_cast<int>(std::lround(ya.map(values[static_cast<std::size_t>(i)], kHeight - kBottom, kTop)));
      cv::rectangle(img, {x0, std::min(top, base)}, {x1, std::max(top, base)}, kLine, cv::FILLED);
      text(img, tick(values[static_cast<std::size_t>(i)]), {x0, std::min(top, base) - 4}, 0.35);
    }
    text(img, labels[static_cast<std::size_t>(i)], {x0, kHeight - kBottom + 18}, 0.35);
  }
  save(img, png);
}

std::vector<std::filesystem::path> plot_training_log(const std::filesystem::path& csv, const std::filesystem::path& out_dir) {
  const auto rows = read_log(csv);
  std::vector<double> step;
  for (const auto& r : rows) step.push_back(static_cast<double>(r.step));
  struct Metric {
    const char* name;
    double TrainLogRow::*field;
  };
  const Metric metrics[] = {{"lr", &TrainLogRow::lr},
                            {"alpha", &TrainLogRow::alpha},
                            {"L_msg", &TrainLogRow::msg_loss},
                            {"L_perc", &TrainLogRow::perc_loss},
                            {"entropy", &TrainLogRow::entropy},
                            {"val_bit_error", &TrainLogRow::val_bit_error}};
  std::vector<std::filesystem::path> written;
  for (const auto& m : metrics) {
    std::vector<double> y;
    for (const auto& r : rows) y.push_back(r.*(m.field));
    const auto png = out_dir / (std::string(m.name) + ".png");
    plot_series(png, std::string(m.name) + " vs step", step, y);
    written.push_back(png);
  }
  return written;
}

std::vector<std::filesystem::path> plot_report(const EvalReport& report, const std::filesystem::path& out_dir,
                                               const std::string& stem) {
  std::vector<std::string> labels;
  std::vector<double> acc, cap;
  for (const auto& f : report.families) {
    labels.push_back(f.label);
    acc.push_back(f.bit_accuracy);
    cap.push_back(f.capacity);
  }
  labels.push_back("Overall");
  acc.push_back(report.overall.bit_accuracy);
  cap.push_back(report.overall.capacity);
  const auto a = out_dir / (stem + "_bit_accuracy.png");
  const auto c = out_dir / (stem + "_capacity.png");
  plot_bars(a, report.kind + ": bit accuracy by family", labels, acc);
  plot_bars(c, report.kind + ": capacity (bits) by family", labels, cap);
  return {a, c};
}

}  // namespace catwm
