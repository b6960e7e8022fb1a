#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cfpn/tensor.hpp"

namespace cfpn {

inline constexpr std::size_t kNumThresholds = 256;
inline constexpr double kDefaultFBeta2 = 0.3;

/// Threshold k of the sweep: k / 255.
double threshold_at(std::size_t k);

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  Confusion& operator+=(const Confusion& o);
};

/// Precision/recall at thresholds k/255, k = 0..255 (pixel predicted
/// salient iff S >= threshold). Empty prediction gives precision 1; empty
/// mask gives recall 1.
struct PrCurve {
  std::vector<double> thresholds;
  std::vector<double> precision;
  std::vector<double> recall;
};

/// Mean |S - Y| over all pixels.
double mae(const Tensor& saliency, const Tensor& mask);

/// Confusion counts at every threshold.
std::vector<Confusion> confusion_sweep(const Tensor& saliency, const Tensor& mask);
PrCurve pr_from_confusion(std::span<const Confusion> sweep);
PrCurve pr_curve(const Tensor& saliency, const Tensor& mask);

/// (1 + b2) P R / (b2 P + R), 0 when P = R = 0.
double f_measure(double precision, double recall, double beta2);
double max_f(const PrCurve& curve, double beta2 = kDefaultFBeta2);
double max_f(const Tensor& saliency, const Tensor& mask, double beta2 = kDefaultFBeta2);

enum class Aggregation {
  kPerImage,  // metrics per image, then averaged
  kDataset,   // confusion counts pooled over the dataset
};

Aggregation parse_aggregation(std::string_view text);
const char* aggregation_name(Aggregation a);

struct EvalItem {
  std::string name;
  Tensor saliency;
  Tensor mask;
};

struct ImageScore {
  std::string name;
  double max_f = 0.0;
  double mae = 0.0;
};

struct EvalReport {
  std::vector<ImageScore> images;
  double max_f = 0.0;
  double mae = 0.0;
  PrCurve curve;
  double beta2 = kDefaultFBeta2;
  Aggregation aggregation = Aggregation::kPerImage;
};

EvalReport evaluate(std::span<const EvalItem> items, double beta2 = kDefaultFBeta2,
                    Aggregation aggregation = Aggregation::kPerImage);

nlohmann::json to_json(const EvalReport& report);
/// "threshold,precision,recall" header plus 256 rows.
std::string pr_csv(const PrCurve& curve);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace cfpn
