#include "lorapatch/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "lorapatch/dataio.hpp"
#include "lorapatch/errors.hpp"

namespace lorapatch::metrics {

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;

std::vector<double> gaussian_window() {
  std::vector<double> w(kWin * kWin);
  double sum = 0;
  for (int y = 0; y < kWin; ++y)
    for (int x = 0; x < kWin; ++x) {
      const double dy = y - kWin / 2, dx = x - kWin / 2;
      w[y * kWin + x] = std::exp(-(dy * dy + dx * dx) / (2 * kSigma * kSigma));
      sum += w[y * kWin + x];
    }
  for (auto& v : w) v /= sum;
  return w;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

double l2_distance(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("l2_distance: shape mismatch");
  return mean_sq_diff(a, b);
}

double ssim(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("ssim: shape mismatch");
  if (a.h < kWin || a.w < kWin)
    throw ShapeError("ssim: image smaller than the 11x11 window");
  static const std::vector<double> win = gaussian_window();
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;  // dynamic range 1 on [0,1]

  double total = 0;
  long count = 0;
  for (int i = 0; i < a.n; ++i)
    for (int c = 0; c < a.c; ++c)
      for (int y = 0; y + kWin <= a.h; ++y)
        for (int x = 0; x + kWin <= a.w; ++x) {
          double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
          for (int dy = 0; dy < kWin; ++dy)
            for (int dx = 0; dx < kWin; ++dx) {
              const double w = win[dy * kWin + dx];
              const double pa = (a.at(i, c, y + dy, x + dx) + 1.) / 2.;
              const double pb = (b.at(i, c, y + dy, x + dx) + 1.) / 2.;
              mx += w * pa;
              my += w * pb;
              xx += w * pa * pa;
              yy += w * pb * pb;
              xy += w * pa * pb;
            }
          const double vx = xx - mx * mx, vy = yy - my * my, cov = xy - mx * my;
          total += (2 * mx * my + c1) * (2 * cov + c2) /
                   ((mx * mx + my * my + c1) * (vx + vy + c2));
          ++count;
        }
  return total / static_cast<double>(count);
}

double dsr(const std::vector<double>& l2_values, const DsrConfig& cfg) {
  if (cfg.tau <= 0) throw ConfigError("dsr: tau must be positive");
  if (l2_values.empty()) throw ConfigError("dsr: empty input");
  long hits = std::count_if(l2_values.begin(), l2_values.end(),
                            [&](double v) { return v > cfg.tau; });
  return static_cast<double>(hits) / static_cast<double>(l2_values.size());
}

double dsr(const std::vector<Tensor>& outputs, const std::vector<Tensor>& desired,
           const DsrConfig& cfg) {
  if (outputs.size() != desired.size()) throw ConfigError("dsr: list length mismatch");
  std::vector<double> vals(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) vals[i] = l2_distance(outputs[i], desired[i]);
  return dsr(vals, cfg);
}

double fid(const std::vector<Tensor>& set_a, const std::vector<Tensor>& set_b,
           zoo::FeatureEncoder& F, FidInfo* info) {
  if (set_a.size() < 2 || set_b.size() < 2) throw ConfigError("fid: each set needs >= 2 images");
  const int d = F.dim;
  if (info) {
    info->small_sample = static_cast<int>(set_a.size()) < 2 * d ||
                         static_cast<int>(set_b.size()) < 2 * d;
    info->regularized = false;
  }

  auto stats = [&](const std::vector<Tensor>& set, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    const int n = static_cast<int>(set.size());
    Eigen::MatrixXd X(n, d);
    for (int i = 0; i < n; ++i) {
      Tensor f = F.forward(set[i]);
      for (int j = 0; j < d; ++j) X(i, j) = f.v[j];
    }
    mu = X.colwise().mean();
    Eigen::MatrixXd C = X.rowwise() - mu.transpose();
    cov = C.transpose() * C / std::max(1, n - 1);
  };

  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  stats(set_a, mu_a, cov_a);
  stats(set_b, mu_b, cov_b);

  auto regularize = [&](Eigen::MatrixXd& cov) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < 1e-10) {
      cov += 1e-6 * Eigen::MatrixXd::Identity(d, d);
      if (info) info->regularized = true;
    }
  };
  regularize(cov_a);
  regularize(cov_b);

  // sqrt(cov_a) via eigendecomposition, then tr((cov_a cov_b)^{1/2}) as
  // tr(M^{1/2}) with M = sqrt(cov_a) cov_b sqrt(cov_a), which is symmetric.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(cov_a);
  Eigen::VectorXd ev = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Eigen::MatrixXd sqrt_a = ea.eigenvectors() * ev.asDiagonal() * ea.eigenvectors().transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(sqrt_a * cov_b * sqrt_a);
  const double tr_sqrt = em.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double value =
      (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, value);
}

std::string report_csv(const std::vector<MetricRow>& rows) {
  if (rows.empty()) throw ConfigError("report: no rows");
  std::string out = "defense,bypass,model,scenario,l2,ssim,dsr,fid,n_images\n";
  for (const auto& r : rows) {
    out += r.defense + "," + r.bypass + "," + r.model + "," + r.scenario + "," + fmt6(r.l2) +
           "," + fmt6(r.ssim) + "," + fmt6(r.dsr) + "," + (r.fid ? fmt6(*r.fid) : "") + "," +
           std::to_string(r.n_images) + "\n";
  }
  return out;
}

std::string report_markdown(const std::vector<MetricRow>& rows) {
  if (rows.empty()) throw ConfigError("report: no rows");

  // Best values across all rows: lower is better except SSIM.
  double best_l2 = rows[0].l2, best_ssim = rows[0].ssim, best_dsr = rows[0].dsr;
  std::optional<double> best_fid;
  for (const auto& r : rows) {
    best_l2 = std::min(best_l2, r.l2);
    best_ssim = std::max(best_ssim, r.ssim);
    best_dsr = std::min(best_dsr, r.dsr);
    if (r.fid && (!best_fid || *r.fid < *best_fid)) best_fid = *r.fid;
  }
  auto cell = [](double v, bool best) {
    return best ? "**" + fmt6(v) + "**" : fmt6(v);
  };

  // Stable grouping: rows ordered by first appearance of (defense, model).
  std::vector<std::string> keys;
  std::vector<MetricRow> ordered;
  for (const auto& r : rows) {
    const std::string k = r.defense + "\x1f" + r.model;
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  for (const auto& k : keys)
    for (const auto& r : rows)
      if (r.defense + "\x1f" + r.model == k) ordered.push_back(r);

  std::vector<std::vector<std::string>> cells;
  cells.push_back({"defense", "bypass", "model", "scenario", "L2", "SSIM", "DSR", "FID", "n"});
  for (const auto& r : ordered)
    cells.push_back({r.defense, r.bypass, r.model, r.scenario, cell(r.l2, r.l2 == best_l2),
                     cell(r.ssim, r.ssim == best_ssim), cell(r.dsr, r.dsr == best_dsr),
                     r.fid ? cell(*r.fid, best_fid && *r.fid == *best_fid) : "-",
                     std::to_string(r.n_images)});

  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& row : cells)
    for (std::size_t j = 0; j < row.size(); ++j) width[j] = std::max(width[j], row[j].size());

  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    out += "|";
    for (std::size_t j = 0; j < cells[i].size(); ++j) {
      out += " " + cells[i][j] + std::string(width[j] - cells[i][j].size(), ' ') + " |";
    }
    out += "\n";
    if (i == 0) {
      out += "|";
      for (std::size_t j = 0; j < cells[0].size(); ++j)
        out += std::string(width[j] + 2, '-') + "|";
      out += "\n";
    }
  }
  return out;
}

void write_report(const std::vector<MetricRow>& rows, const std::string& stem) {
  std::ofstream csv(stem + ".csv");
  if (!csv) throw IoError("write_report: cannot write " + stem + ".csv");
  csv << report_csv(rows);
  std::ofstream md(stem + ".md");
  if (!md) throw IoError("write_report: cannot write " + stem + ".md");
  md << report_markdown(rows);
}

void save_contact_sheet(const std::vector<std::vector<Tensor>>& columns, const std::string& path) {
  if (columns.empty() || columns[0].empty()) throw ConfigError("contact sheet: no images");
  const int rows = static_cast<int>(columns[0].size());
  const int h = columns[0][0].h, w = columns[0][0].w;
  for (const auto& col : columns) {
    if (static_cast<int>(col.size()) != rows)
      throw ConfigError("contact sheet: ragged columns");
    for (const auto& img : col)
      if (img.h != h || img.w != w || img.c != 3 || img.n != 1)
        throw ShapeError("contact sheet: images must all be [1,3,H,W] of equal size");
  }
  const int pad = 2;
  const int cols = static_cast<int>(columns.size());
  Tensor sheet = Tensor::full(1, 3, rows * h + (rows + 1) * pad, cols * w + (cols + 1) * pad, 1.f);
  for (int r = 0; r < rows; ++r)
    for (int cidx = 0; cidx < cols; ++cidx) {
      const Tensor& img = columns[cidx][r];
      const int oy = pad + r * (h + pad), ox = pad + cidx * (w + pad);
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) sheet.at(0, c, oy + y, ox + x) = img.at(0, c, y, x);
    }
  dataio::save_image_png(sheet, path);
}

}  // namespace lorapatch::metrics
