#include "cfpn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "cfpn/error.hpp"

namespace cfpn {
namespace {

void check_pair(const Tensor& saliency, const Tensor& mask, const char* op) {
  require_same_shape(saliency.shape(), mask.shape(), op);
}

// Largest k with threshold_at(k) <= s, or -1 if s < 0.
long bin_of(double s) {
  if (!(s >= 0.0)) return -1;
  long k = std::min<long>(static_cast<long>(s * 255.0), kNumThresholds - 1);
  while (k < static_cast<long>(kNumThresholds) - 1 && s >= threshold_at(static_cast<std::size_t>(k + 1))) ++k;
  while (k >= 0 && s < threshold_at(static_cast<std::size_t>(k))) --k;
  return k;
}

double precision_of(const Confusion& c) {
  const std::size_t predicted = c.tp + c.fp;
  return predicted == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(predicted);
}

double recall_of(const Confusion& c) {
  const std::size_t actual = c.tp + c.fn;
  return actual == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(actual);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double threshold_at(std::size_t k) { return static_cast<double>(k) / 255.0; }

Confusion& Confusion::operator+=(const Confusion& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

double mae(const Tensor& saliency, const Tensor& mask) {
  check_pair(saliency, mask, "mae");
  double s = 0.0;
  for (std::size_t j = 0; j < saliency.numel(); ++j) s += std::abs(saliency[j] - mask[j]);
  return s / static_cast<double>(saliency.numel());
}

std::vector<Confusion> confusion_sweep(const Tensor& saliency, const Tensor& mask) {
  check_pair(saliency, mask, "confusion_sweep");
  // Histogram of the highest threshold each pixel clears, then suffix sums.
  std::vector<std::size_t> pos_hist(kNumThresholds, 0), neg_hist(kNumThresholds, 0);
  std::size_t positives = 0, negatives = 0;
  for (std::size_t j = 0; j < saliency.numel(); ++j) {
    const bool fg = mask[j] >= 0.5;
    (fg ? positives : negatives) += 1;
    const long k = bin_of(saliency[j]);
    if (k >= 0) (fg ? pos_hist : neg_hist)[static_cast<std::size_t>(k)] += 1;
  }
  std::vector<Confusion> sweep(kNumThresholds);
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = kNumThresholds; k-- > 0;) {
    tp += pos_hist[k];
    fp += neg_hist[k];
    sweep[k] = Confusion{tp, fp, positives - tp, negatives - fp};
  }
  return sweep;
}

PrCurve pr_from_confusion(std::span<const Confusion> sweep) {
  PrCurve curve;
  for (std::size_t k = 0; k < sweep.size(); ++k) {
    curve.thresholds.push_back(threshold_at(k));
    curve.precision.push_back(precision_of(sweep[k]));
    curve.recall.push_back(recall_of(sweep[k]));
  }
  return curve;
}

PrCurve pr_curve(const Tensor& saliency, const Tensor& mask) {
  const auto sweep = confusion_sweep(saliency, mask);
  return pr_from_confusion(sweep);
}

double f_measure(double precision, double recall, double beta2) {
  const double denom = beta2 * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + beta2) * precision * recall / denom;
}

double max_f(const PrCurve& curve, double beta2) {
  if (!(beta2 > 0.0)) throw ConfigError("max_f: beta^2 must be positive");
  double best = 0.0;
  for (std::size_t k = 0; k < curve.precision.size(); ++k) {
    best = std::max(best, f_measure(curve.precision[k], curve.recall[k], beta2));
  }
  return best;
}

double max_f(const Tensor& saliency, const Tensor& mask, double beta2) {
  return max_f(pr_curve(saliency, mask), beta2);
}

Aggregation parse_aggregation(std::string_view text) {
  if (text == "per-image") return Aggregation::kPerImage;
  if (text == "dataset") return Aggregation::kDataset;
  throw ConfigError("unknown aggregation '" + std::string(text) + "' (expected per-image or dataset)");
}

const char* aggregation_name(Aggregation a) { return a == Aggregation::kPerImage ? "per-image" : "dataset"; }

EvalReport evaluate(std::span<const EvalItem> items, double beta2, Aggregation aggregation) {
  if (items.empty()) throw ConfigError("evaluate: no images");
  EvalReport report;
  report.beta2 = beta2;
  report.aggregation = aggregation;
  std::vector<Confusion> pooled(kNumThresholds);
  std::vector<double> mean_p(kNumThresholds, 0.0), mean_r(kNumThresholds, 0.0);
  double sum_f = 0.0, sum_mae = 0.0;
  for (const auto& item : items) {
    const auto sweep = confusion_sweep(item.saliency, item.mask);
    const PrCurve curve = pr_from_confusion(sweep);
    ImageScore score{item.name, max_f(curve, beta2), mae(item.saliency, item.mask)};
    sum_f += score.max_f;
    sum_mae += score.mae;
    for (std::size_t k = 0; k < kNumThresholds; ++k) {
      pooled[k] += sweep[k];
      mean_p[k] += curve.precision[k];
      mean_r[k] += curve.recall[k];
    }
    report.images.push_back(std::move(score));
  }
  const double n = static_cast<double>(items.size());
  report.mae = sum_mae / n;
  if (aggregation == Aggregation::kPerImage) {
    report.max_f = sum_f / n;
    for (std::size_t k = 0; k < kNumThresholds; ++k) {
      report.curve.thresholds.push_back(threshold_at(k));
      report.curve.precision.push_back(mean_p[k] / n);
      report.curve.recall.push_back(mean_r[k] / n);
    }
  } else {
    report.curve = pr_from_confusion(pooled);
    report.max_f = max_f(report.curve, beta2);
  }
  return report;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& s : report.images) images.push_back({{"name", s.name}, {"max_f", s.max_f}, {"mae", s.mae}});
  return {{"aggregation", aggregation_name(report.aggregation)},
          {"beta2", report.beta2},
          {"max_f", report.max_f},
          {"mae", report.mae},
          {"num_images", report.images.size()},
          {"images", images}};
}

std::string pr_csv(const PrCurve& curve) {
  std::string out = "threshold,precision,recall\n";
  for (std::size_t k = 0; k < curve.thresholds.size(); ++k) {
    out += fmt(curve.thresholds[k]) + "," + fmt(curve.precision[k]) + "," + fmt(curve.recall[k]) + "\n";
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open for writing: " + path.string());
  f << text;
  if (!f) throw ConfigError("failed writing: " + path.string());
}

}  // namespace cfpn
