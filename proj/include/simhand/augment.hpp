#pragma once

#include <vector>

#include <Eigen/Dense>

#include "simhand/rng.hpp"
#include "simhand/synth.hpp"
#include "simhand/types.hpp"

namespace simhand {

// One sampled view transform. Geometry is scale+rotation about the crop
// center followed by translation; gain/offset touch pixels only.
struct AugmentParams {
  double rotation = 0.0;  // radians, y-down (positive turns +x toward +y)
  double scale = 1.0;
  double dx = 0.0;
  double dy = 0.0;
  double gain = 1.0;
  double offset = 0.0;
};

struct AugmentRanges {
  double rotation_max = 1.5707963267948966;  // +/- pi/2
  double scale_min = 0.8;
  double scale_max = 1.2;
  double translate_max = 0.1;
  double gain_min = 0.8;
  double gain_max = 1.2;
  double offset_max = 0.1;
};

AugmentParams sample_augment(Rng& rng, const AugmentRanges& ranges);

// Forward map of a point in [0,1]^2 crop coordinates.
Keypoint apply_affine(const AugmentParams& params, const Keypoint& p);

struct AugmentedSample {
  SynthImage image;
  std::array<Keypoint, kNumKeypoints> keypoints;
};

// Applies the same geometric transform to the image (inverse-mapped bilinear
// sampling, zero padding) and the keypoints, then gain/offset to pixels.
AugmentedSample apply_augment(const SynthImage& image,
                              const std::array<Keypoint, kNumKeypoints>& keypoints,
                              const AugmentParams& params);

// Undoes scale/rotation on a projected feature vector interpreted as P/2
// 2D points, then removes translation by mean-centering. Rows of `z` are
// feature vectors; `params` has one entry per row.
Eigen::MatrixXd inverse_align(const Eigen::MatrixXd& z,
                              const std::vector<AugmentParams>& params);

// Backward pass of inverse_align: maps d(loss)/d(output) to d(loss)/d(input).
Eigen::MatrixXd inverse_align_backward(const Eigen::MatrixXd& grad_out,
                                       const std::vector<AugmentParams>& params);

}  // namespace simhand
