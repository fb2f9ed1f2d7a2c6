#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "dslic/error.hpp"

namespace dslic {

// Dense H x W x 3 grid of doubles, row-major, channel-interleaved.
// Proper images keep every channel in [0, 1]; the same container carries
// image-shaped gradients, which are unconstrained.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> data;  // height * width * 3

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, fill) {
    if (h < 0 || w < 0) throw InvalidArgument("Image: negative dimensions");
  }

  int pixels() const { return height * width; }

  double& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  double at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width;
  }

  bool in_unit_range(double slack = 0.0) const {
    return std::all_of(data.begin(), data.end(), [slack](double v) {
      return v >= -slack && v <= 1.0 + slack;
    });
  }
};

inline Image& clamp01_inplace(Image& img) {
  for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
  return img;
}

inline Image clamp01(Image img) {
  clamp01_inplace(img);
  return img;
}

// N x 5 feature rows [x, y, r, g, b]. Spatial coordinates are raw 0-based
// pixel indices (x = column, y = row); the color part copies the source
// image exactly. Row order matches row-major pixel order.
struct FeatureMatrix {
  int height = 0;
  int width = 0;
  std::vector<double> rows;  // N * 5

  int count() const { return height * width; }

  double* row(int i) { return rows.data() + static_cast<std::size_t>(i) * 5; }
  const double* row(int i) const {
    return rows.data() + static_cast<std::size_t>(i) * 5;
  }
};

inline FeatureMatrix to_features(const Image& img) {
  FeatureMatrix f;
  f.height = img.height;
  f.width = img.width;
  f.rows.resize(static_cast<std::size_t>(img.pixels()) * 5);
  std::size_t r = 0;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      f.rows[r + 0] = static_cast<double>(x);
      f.rows[r + 1] = static_cast<double>(y);
      f.rows[r + 2] = img.at(x, y, 0);
      f.rows[r + 3] = img.at(x, y, 1);
      f.rows[r + 4] = img.at(x, y, 2);
      r += 5;
    }
  }
  return f;
}

}  // namespace dslic
