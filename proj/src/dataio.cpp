#include "lorapatch/dataio.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "lorapatch/errors.hpp"
#include "lorapatch/sha256.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lorapatch::dataio {

namespace {

Tensor mat_to_tensor(const cv::Mat& bgr) {
  Tensor t(1, 3, bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y)
    for (int x = 0; x < bgr.cols; ++x) {
      const cv::Vec3b px = bgr.at<cv::Vec3b>(y, x);
      t.at(0, 0, y, x) = u8_to_unit(px[2]);  // R
      t.at(0, 1, y, x) = u8_to_unit(px[1]);  // G
      t.at(0, 2, y, x) = u8_to_unit(px[0]);  // B
    }
  return t;
}

cv::Mat tensor_to_mat(const Tensor& t, int item = 0) {
  cv::Mat bgr(t.h, t.w, CV_8UC3);
  for (int y = 0; y < t.h; ++y)
    for (int x = 0; x < t.w; ++x)
      bgr.at<cv::Vec3b>(y, x) =
          cv::Vec3b(static_cast<uchar>(unit_to_u8(t.at(item, 2, y, x))),
                    static_cast<uchar>(unit_to_u8(t.at(item, 1, y, x))),
                    static_cast<uchar>(unit_to_u8(t.at(item, 0, y, x))));
  return bgr;
}

cv::Mat resize_mat(const cv::Mat& m, int size) {
  if (m.rows == size && m.cols == size) return m;
  cv::Mat out;
  // Area averaging when shrinking keeps downscales alias-free; bilinear otherwise.
  const int interp = (size < m.rows || size < m.cols) ? cv::INTER_AREA : cv::INTER_LINEAR;
  cv::resize(m, out, cv::Size(size, size), 0, 0, interp);
  return out;
}

}  // namespace

Tensor Dataset::stack(int first, int count) const {
  if (first < 0 || count <= 0 || first + count > size())
    throw ConfigError("Dataset::stack: bad range");
  Tensor out(count, 3, height, width);
  for (int i = 0; i < count; ++i) out.set_item(i, items[first + i].image);
  return out;
}

Dataset load_folder(const std::string& dir, int size, int limit,
                    std::vector<std::string>* skipped) {
  if (size <= 0) throw ConfigError("load_folder: size must be positive");
  if (!fs::is_directory(dir)) throw IoError("load_folder: not a directory: " + dir);

  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp")
      names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());

  Dataset ds;
  ds.height = ds.width = size;
  for (const auto& name : names) {
    if (limit >= 0 && static_cast<int>(ds.items.size()) >= limit) break;
    cv::Mat m = cv::imread((fs::path(dir) / name).string(), cv::IMREAD_COLOR);
    if (m.empty()) {
      if (skipped) skipped->push_back(name);
      continue;
    }
    ds.items.push_back({fs::path(name).stem().string(), mat_to_tensor(resize_mat(m, size))});
  }
  if (ds.items.empty()) throw IoError("load_folder: no decodable images in " + dir);
  std::sort(ds.items.begin(), ds.items.end(),
            [](const Item& a, const Item& b) { return a.id < b.id; });
  return ds;
}

Dataset synth_faces(int n, int size, unsigned seed) {
  if (n < 1) throw ConfigError("synth_faces: n must be >= 1");
  if (size < 16) throw ConfigError("synth_faces: size must be >= 16");

  Dataset ds;
  ds.height = ds.width = size;
  ds.items.reserve(n);
  for (int i = 0; i < n; ++i) {
    std::seed_seq sq{seed, static_cast<unsigned>(i)};
    std::mt19937 rng(sq);
    auto uni = [&](double lo, double hi) {
      return std::uniform_real_distribution<double>(lo, hi)(rng);
    };
    auto color = [&](int rl, int rh, int gl, int gh, int bl, int bh) {
      return cv::Scalar(uni(bl, bh), uni(gl, gh), uni(rl, rh));  // BGR
    };

    cv::Mat img(size, size, CV_8UC3);
    // Smooth vertical gradient background.
    const cv::Scalar top = color(30, 180, 30, 180, 60, 220);
    const cv::Scalar bot = color(30, 180, 30, 180, 60, 220);
    for (int y = 0; y < size; ++y) {
      const double a = static_cast<double>(y) / (size - 1);
      const cv::Vec3b row(static_cast<uchar>(top[0] * (1 - a) + bot[0] * a),
                          static_cast<uchar>(top[1] * (1 - a) + bot[1] * a),
                          static_cast<uchar>(top[2] * (1 - a) + bot[2] * a));
      img.row(y).setTo(row);
    }

    const double cx = size * uni(0.44, 0.56);
    const double cy = size * uni(0.48, 0.6);
    const double rx = size * uni(0.24, 0.34);
    const double ry = size * uni(0.3, 0.4);
    const cv::Scalar skin = color(150, 240, 100, 200, 80, 170);
    // Hair cap.
    cv::ellipse(img, cv::Point2d(cx, cy - 0.55 * ry), cv::Size2d(rx * 1.05, ry * 0.65), 0, 180,
                360, color(10, 120, 10, 100, 10, 90), cv::FILLED, cv::LINE_AA);
    cv::ellipse(img, cv::Point2d(cx, cy), cv::Size2d(rx, ry), 0, 0, 360, skin, cv::FILLED,
                cv::LINE_AA);

    const double eye_dx = rx * uni(0.38, 0.5);
    const double eye_y = cy - ry * uni(0.1, 0.25);
    const double eye_r = rx * uni(0.12, 0.18);
    const cv::Scalar iris = color(20, 120, 30, 120, 40, 160);
    for (int s : {-1, 1}) {
      const cv::Point2d e(cx + s * eye_dx, eye_y);
      cv::ellipse(img, e, cv::Size2d(eye_r, eye_r * 0.6), 0, 0, 360,
                  cv::Scalar(245, 245, 245), cv::FILLED, cv::LINE_AA);
      cv::circle(img, e, eye_r * 0.45, iris, cv::FILLED, cv::LINE_AA);
      cv::circle(img, e, eye_r * 0.18, cv::Scalar(20, 20, 20), cv::FILLED, cv::LINE_AA);
    }
    // Nose.
    cv::line(img, cv::Point2d(cx, eye_y + ry * 0.12), cv::Point2d(cx, cy + ry * 0.22),
             skin * 0.75, std::max(1, size / 48), cv::LINE_AA);
    // Mouth.
    cv::ellipse(img, cv::Point2d(cx, cy + ry * uni(0.42, 0.55)),
                cv::Size2d(rx * uni(0.3, 0.5), ry * uni(0.06, 0.12)), 0, 0, 360,
                color(120, 220, 20, 90, 30, 90), cv::FILLED, cv::LINE_AA);

    cv::GaussianBlur(img, img, cv::Size(3, 3), 0.6);

    char id[32];
    std::snprintf(id, sizeof(id), "synth_%06d", i);
    ds.items.push_back({id, mat_to_tensor(img)});
  }
  return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, std::pair<double, double> fractions,
                                  unsigned seed) {
  if (std::fabs(fractions.first + fractions.second - 1.0) > 1e-9)
    throw ConfigError("split: fractions must sum to 1");
  std::vector<int> idx(ds.items.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);

  const int n_first = static_cast<int>(std::lround(fractions.first * ds.size()));
  Dataset a, b;
  a.height = b.height = ds.height;
  a.width = b.width = ds.width;
  for (int k = 0; k < ds.size(); ++k)
    (k < n_first ? a : b).items.push_back(ds.items[idx[k]]);
  auto by_id = [](const Item& x, const Item& y) { return x.id < y.id; };
  std::sort(a.items.begin(), a.items.end(), by_id);
  std::sort(b.items.begin(), b.items.end(), by_id);
  return {std::move(a), std::move(b)};
}

Tensor load_image(const std::string& path, int resize_to) {
  cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
  if (m.empty()) throw IoError("load_image: cannot decode " + path);
  if (resize_to > 0) m = resize_mat(m, resize_to);
  return mat_to_tensor(m);
}

void save_image_png(const Tensor& img, const std::string& path) {
  if (img.n != 1 || img.c != 3) throw ShapeError("save_image_png: want [1,3,H,W]");
  if (!cv::imwrite(path, tensor_to_mat(img)))
    throw IoError("save_image_png: cannot write " + path);
}

void write_dataset_manifest(const Dataset& ds, const std::string& dir,
                            const std::string& source_desc) {
  json items = json::array();
  for (const auto& it : ds.items) {
    items.push_back({{"id", it.id},
                     {"checksum", sha256_hex(it.image.v.data(),
                                             it.image.v.size() * sizeof(float))}});
  }
  json m{{"source", source_desc},
         {"count", ds.size()},
         {"height", ds.height},
         {"width", ds.width},
         {"items", items}};
  std::ofstream f(fs::path(dir) / "dataset_manifest.json");
  if (!f) throw IoError("cannot write dataset manifest in " + dir);
  f << m.dump(2) << "\n";
}

void save_dataset_png(const Dataset& ds, const std::string& dir, const std::string& source_desc) {
  fs::create_directories(dir);
  for (const auto& it : ds.items)
    save_image_png(it.image, (fs::path(dir) / (it.id + ".png")).string());
  write_dataset_manifest(ds, dir, source_desc);
}

}  // namespace lorapatch::dataio
