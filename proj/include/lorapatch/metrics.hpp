#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lorapatch/model_zoo.hpp"
#include "lorapatch/tensor.hpp"

namespace lorapatch::metrics {

/// Mean over all elements of (a-b)^2 (mean-square convention).
double l2_distance(const Tensor& a, const Tensor& b);

/// Mean SSIM over channels and valid 11x11 Gaussian (sigma 1.5) windows,
/// computed on images rescaled to [0,1]. Throws if the image is smaller
/// than the window.
double ssim(const Tensor& a, const Tensor& b);

struct DsrConfig {
  double tau = 0.05;
};

/// Fraction of pairs whose per-image mean-square L2 exceeds tau.
double dsr(const std::vector<Tensor>& outputs, const std::vector<Tensor>& desired,
           const DsrConfig& cfg = {});
/// Same over pre-computed per-pair L2 values.
double dsr(const std::vector<double>& l2_values, const DsrConfig& cfg = {});

struct FidInfo {
  bool regularized = false;   // covariance needed the epsilon*I fallback
  bool small_sample = false;  // fewer than 2*dim images in a set
};

/// Frechet distance between encoder-feature Gaussians of the two sets.
double fid(const std::vector<Tensor>& set_a, const std::vector<Tensor>& set_b,
           zoo::FeatureEncoder& F, FidInfo* info = nullptr);

struct MetricRow {
  std::string defense;
  std::string bypass;
  std::string model;
  std::string scenario;  // standard | leakage | benign_impact | defensive
  double l2 = 0;
  double ssim = 0;
  double dsr = 0;
  std::optional<double> fid;
  int n_images = 0;
};

/// CSV text, 6 significant digits, deterministic bytes.
std::string report_csv(const std::vector<MetricRow>& rows);
/// Aligned Markdown table grouped by (defense, model); per-metric best
/// values (min l2/dsr/fid, max ssim) are bold.
std::string report_markdown(const std::vector<MetricRow>& rows);
/// Writes <stem>.csv and <stem>.md.
void write_report(const std::vector<MetricRow>& rows, const std::string& stem);

/// Tiles columns of images (e.g. input | protected | output) into one PNG.
/// Every column must have the same number of equally-sized images.
void save_contact_sheet(const std::vector<std::vector<Tensor>>& columns, const std::string& path);

}  // namespace lorapatch::metrics
