#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace morai {

/// Dense width x height x channels volume of doubles, channels innermost:
/// index(x, y, c) = (x * height + y) * channels + c.
class Volume {
 public:
  Volume() = default;
  Volume(int width, int height, int channels, double fill = 0.0)
      : width_(width), height_(height), channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(x) * height_ + y) * channels_ + c;
  }
  double& at(int x, int y, int c) { return data_[index(x, y, c)]; }
  double at(int x, int y, int c) const { return data_[index(x, y, c)]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }

  bool same_shape(const Volume& other) const {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

}  // namespace morai
