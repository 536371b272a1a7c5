#include "simhand/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace simhand {

AugmentParams sample_augment(Rng& rng, const AugmentRanges& ranges) {
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  AugmentParams p;
  p.rotation = uniform(-ranges.rotation_max, ranges.rotation_max);
  p.scale = uniform(ranges.scale_min, ranges.scale_max);
  p.dx = uniform(-ranges.translate_max, ranges.translate_max);
  p.dy = uniform(-ranges.translate_max, ranges.translate_max);
  p.gain = uniform(ranges.gain_min, ranges.gain_max);
  p.offset = uniform(-ranges.offset_max, ranges.offset_max);
  return p;
}

Keypoint apply_affine(const AugmentParams& params, const Keypoint& p) {
  // Rotation about the crop center in y-down coordinates: at +pi/2 the point
  // (0.5+a, 0.5) lands on (0.5, 0.5+a).
  const double c = std::cos(params.rotation);
  const double s = std::sin(params.rotation);
  const double x = p.x - 0.5;
  const double y = p.y - 0.5;
  return {0.5 + params.scale * (c * x - s * y) + params.dx,
          0.5 + params.scale * (s * x + c * y) + params.dy};
}

AugmentedSample apply_augment(const SynthImage& image,
                              const std::array<Keypoint, kNumKeypoints>& keypoints,
                              const AugmentParams& params) {
  if (params.scale <= 0.0) throw std::invalid_argument("scale must be positive");
  const int size = image.size;
  AugmentedSample out;
  out.image.size = size;
  out.image.pixels.assign(image.pixels.size(), 0.0f);

  // Inverse mapping: for each output pixel center, sample the source at the
  // pre-image under the affine transform. Pixel (r,c) center is at crop
  // coordinates ((c+0.5)/size, (r+0.5)/size).
  const double c = std::cos(params.rotation);
  const double s = std::sin(params.rotation);
  const double inv_scale = 1.0 / params.scale;
  for (int r = 0; r < size; ++r) {
    for (int col = 0; col < size; ++col) {
      const double ox = (col + 0.5) / size - 0.5 - params.dx;
      const double oy = (r + 0.5) / size - 0.5 - params.dy;
      const double sx = inv_scale * (c * ox + s * oy) + 0.5;
      const double sy = inv_scale * (-s * ox + c * oy) + 0.5;
      // Bilinear sample with zero padding outside the crop.
      const double px = sx * size - 0.5;
      const double py = sy * size - 0.5;
      const int x0 = static_cast<int>(std::floor(px));
      const int y0 = static_cast<int>(std::floor(py));
      const double fx = px - x0;
      const double fy = py - y0;
      auto tap = [&](int yy, int xx) -> double {
        if (yy < 0 || yy >= size || xx < 0 || xx >= size) return 0.0;
        return image.pixels[static_cast<std::size_t>(yy) * size + xx];
      };
      const double v = (1 - fy) * ((1 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1)) +
                       fy * ((1 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1));
      const double lit = std::clamp(params.gain * v + params.offset, 0.0, 1.0);
      out.image.pixels[static_cast<std::size_t>(r) * size + col] = static_cast<float>(lit);
    }
  }

  for (int k = 0; k < kNumKeypoints; ++k) out.keypoints[k] = apply_affine(params, keypoints[k]);
  return out;
}

Eigen::MatrixXd inverse_align(const Eigen::MatrixXd& z,
                              const std::vector<AugmentParams>& params) {
  if (static_cast<std::size_t>(z.rows()) != params.size())
    throw std::invalid_argument("one transform per feature row required");
  if (z.cols() % 2 != 0)
    throw std::invalid_argument("feature dimension must be even");
  const Eigen::Index n = z.rows();
  const Eigen::Index pts = z.cols() / 2;
  Eigen::MatrixXd out(n, z.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const AugmentParams& p = params[i];
    if (p.scale <= 0.0) throw std::invalid_argument("scale must be positive");
    // (1/s) * R(-theta) applied to each (x, y) pair, then mean-centering to
    // cancel whatever translation the view picked up.
    const double c = std::cos(p.rotation) / p.scale;
    const double s = std::sin(p.rotation) / p.scale;
    double mx = 0.0, my = 0.0;
    for (Eigen::Index k = 0; k < pts; ++k) {
      const double x = z(i, 2 * k);
      const double y = z(i, 2 * k + 1);
      const double rx = c * x + s * y;
      const double ry = -s * x + c * y;
      out(i, 2 * k) = rx;
      out(i, 2 * k + 1) = ry;
      mx += rx;
      my += ry;
    }
    mx /= static_cast<double>(pts);
    my /= static_cast<double>(pts);
    for (Eigen::Index k = 0; k < pts; ++k) {
      out(i, 2 * k) -= mx;
      out(i, 2 * k + 1) -= my;
    }
  }
  return out;
}

Eigen::MatrixXd inverse_align_backward(const Eigen::MatrixXd& grad_out,
                                       const std::vector<AugmentParams>& params) {
  if (static_cast<std::size_t>(grad_out.rows()) != params.size())
    throw std::invalid_argument("one transform per feature row required");
  if (grad_out.cols() % 2 != 0)
    throw std::invalid_argument("feature dimension must be even");
  const Eigen::Index n = grad_out.rows();
  const Eigen::Index pts = grad_out.cols() / 2;
  Eigen::MatrixXd grad_in(n, grad_out.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const AugmentParams& p = params[i];
    const double c = std::cos(p.rotation) / p.scale;
    const double s = std::sin(p.rotation) / p.scale;
    // Centering is linear: g -> g - mean(g); the rotation transposes.
    double mx = 0.0, my = 0.0;
    for (Eigen::Index k = 0; k < pts; ++k) {
      mx += grad_out(i, 2 * k);
      my += grad_out(i, 2 * k + 1);
    }
    mx /= static_cast<double>(pts);
    my /= static_cast<double>(pts);
    for (Eigen::Index k = 0; k < pts; ++k) {
      const double gx = grad_out(i, 2 * k) - mx;
      const double gy = grad_out(i, 2 * k + 1) - my;
      grad_in(i, 2 * k) = c * gx - s * gy;
      grad_in(i, 2 * k + 1) = s * gx + c * gy;
    }
  }
  return grad_in;
}

}  // namespace simhand
