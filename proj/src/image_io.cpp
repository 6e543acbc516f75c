#include "anoseg/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <stdexcept>

namespace anoseg {

namespace {

cv::Mat read_or_throw(const std::string& path, int flags) {
  cv::Mat m = cv::imread(path, flags);
  if (m.empty()) throw std::runtime_error("cannot read image: " + path);
  return m;
}

void resize_if_needed(cv::Mat& m, std::optional<int64_t> size) {
  if (!size) return;
  int s = static_cast<int>(*size);
  if (m.rows == s && m.cols == s) return;
  int interp = (m.rows > s) ? cv::INTER_AREA : cv::INTER_LINEAR;
  cv::resize(m, m, cv::Size(s, s), 0, 0, interp);
}

}  // namespace

torch::Tensor load_image_rgb(const std::string& path, std::optional<int64_t> size) {
  cv::Mat bgr = read_or_throw(path, cv::IMREAD_COLOR);
  resize_if_needed(bgr, size);
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  rgb.convertTo(rgb, CV_32FC3, 1.0 / 255.0);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kFloat32).clone();
  return t.permute({2, 0, 1}).contiguous();
}

torch::Tensor load_mask(const std::string& path, std::optional<int64_t> size) {
  cv::Mat m = read_or_throw(path, cv::IMREAD_GRAYSCALE);
  resize_if_needed(m, size);
  auto t = torch::from_blob(m.data, {m.rows, m.cols}, torch::kUInt8).clone();
  return (t > 0).to(torch::kFloat32);
}

void save_image_png(const torch::Tensor& image, const std::string& path) {
  auto img = image.detach().cpu().to(torch::kFloat32).clamp(0, 1).contiguous();
  cv::Mat out;
  if (img.dim() == 3 && img.size(0) == 3) {
    auto hwc = img.permute({1, 2, 0}).contiguous();
    cv::Mat rgb(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_32FC3,
                hwc.data_ptr<float>());
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    bgr.convertTo(out, CV_8UC3, 255.0);
  } else if (img.dim() == 2) {
    cv::Mat g(static_cast<int>(img.size(0)), static_cast<int>(img.size(1)), CV_32FC1,
              img.data_ptr<float>());
    g.convertTo(out, CV_8UC1, 255.0);
  } else {
    throw std::runtime_error("save_image_png: expected CHW (3 channels) or HxW tensor");
  }
  if (!cv::imwrite(path, out)) throw std::runtime_error("cannot write image: " + path);
}

void save_map_png16(const torch::Tensor& map, const std::string& path) {
  if (map.dim() != 2) throw std::runtime_error("save_map_png16: expected HxW tensor");
  auto m = map.detach().cpu().to(torch::kFloat32).clamp(0, 1).contiguous();
  cv::Mat g(static_cast<int>(m.size(0)), static_cast<int>(m.size(1)), CV_32FC1,
            m.data_ptr<float>());
  cv::Mat out;
  g.convertTo(out, CV_16UC1, 65535.0);
  if (!cv::imwrite(path, out)) throw std::runtime_error("cannot write map: " + path);
}

torch::Tensor load_map_png16(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED | cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw std::runtime_error("cannot read map: " + path);
  if (m.type() != CV_16UC1) throw std::runtime_error("expected 16-bit grayscale PNG: " + path);
  auto t = torch::from_blob(m.data, {m.rows, m.cols}, torch::kInt16).clone();
  return (t.to(torch::kInt32) & 0xffff).to(torch::kFloat32) / 65535.0f;
}

}  // namespace anoseg
