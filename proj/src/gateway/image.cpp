#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "sciana/gateway.hpp"

namespace sciana {

std::pair<int, int> fit_dimensions(int width, int height, const PixelBounds& bounds) {
  if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidArgument, "image has no pixels");
  const double area = static_cast<double>(width) * height;
  double w = width;
  double h = height;
  if (area > static_cast<double>(bounds.max_pixels)) {
    const double s = std::sqrt(static_cast<double>(bounds.max_pixels) / area);
    w = std::max(1.0, std::floor(width * s));
    h = std::max(1.0, std::floor(height * s));
    while (w * h > static_cast<double>(bounds.max_pixels)) {
      if (w >= h) --w;
      else --h;
    }
  } else if (area < static_cast<double>(bounds.min_pixels)) {
    const double s = std::sqrt(static_cast<double>(bounds.min_pixels) / area);
    w = std::ceil(width * s);
    h = std::ceil(height * s);
    while (w * h < static_cast<double>(bounds.min_pixels)) {
      if (w <= h) ++w;
      else ++h;
    }
  }
  return {static_cast<int>(w), static_cast<int>(h)};
}

bool within_bounds(const ImagePayload& img, const PixelBounds& bounds) {
  const auto area = static_cast<std::int64_t>(img.width) * img.height;
  return area >= bounds.min_pixels && area <= bounds.max_pixels;
}

namespace {

ImagePayload encode(const cv::Mat& decoded, const PixelBounds& bounds) {
  const auto [w, h] = fit_dimensions(decoded.cols, decoded.rows, bounds);
  cv::Mat scaled = decoded;
  if (w != decoded.cols || h != decoded.rows) {
    const int interp = w < decoded.cols ? cv::INTER_AREA : cv::INTER_CUBIC;
    cv::resize(decoded, scaled, cv::Size(w, h), 0, 0, interp);
  }
  std::vector<uchar> png;
  if (!cv::imencode(".png", scaled, png)) throw Error(ErrorCode::Io, "PNG encoding failed");
  ImagePayload out;
  out.mime = "image/png";
  out.width = scaled.cols;
  out.height = scaled.rows;
  out.base64 = base64_encode(std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
  return out;
}

}  // namespace

ImagePayload load_image(const std::string& path, const PixelBounds& bounds) {
  cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
  if (img.empty()) throw Error(ErrorCode::Io, "cannot decode image " + path);
  return encode(img, bounds);
}

ImagePayload prepare_image(const std::string& encoded_bytes, const PixelBounds& bounds) {
  std::vector<uchar> buf(encoded_bytes.begin(), encoded_bytes.end());
  cv::Mat img = cv::imdecode(buf, cv::IMREAD_COLOR);
  if (img.empty()) throw Error(ErrorCode::Io, "cannot decode image bytes");
  return encode(img, bounds);
}

}  // namespace sciana
