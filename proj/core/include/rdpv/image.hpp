#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace rdpv {

// Single grayscale frame, intensities in [0,1], row-major doubles.
class Image {
 public:
  Image() = default;
  Image(int height, int width, double fill = 0.0)
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(height) * width, fill) {
    if (height <= 0 || width <= 0) {
      throw std::invalid_argument("Image: dimensions must be positive");
    }
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  double& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  double at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& pixels() { return data_; }
  const std::vector<double>& pixels() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

// Ordered grayscale frames plus the acquisition metadata needed to write them
// back out losslessly.
struct FrameSequence {
  std::vector<Image> frames;
  int source_bit_depth = 16;        // 8 or 16
  double frame_interval_s = 20.0;   // seconds between frames

  std::size_t size() const { return frames.size(); }
  bool empty() const { return frames.empty(); }

  void validate() const {
    for (const Image& f : frames) {
      if (!f.same_shape(frames.front())) {
        throw std::invalid_argument("FrameSequence: frames must share one shape");
      }
    }
  }
};

}  // namespace rdpv
