#pragma once

#include <cstdint>
#include <vector>

#include "ssmradnet/sim.hpp"
#include "ssmradnet/tensor.hpp"

namespace ssmr {

// ---------------------------------------------------------------------------
// Differentiable losses (tape-composed, so their gradients are covered by the
// engine's finite-difference audit).
// ---------------------------------------------------------------------------

// Mean binary cross entropy; predictions clamped to [1e-7, 1 - 1e-7].
template <class S>
Tensor<S> loss_bce(const Tensor<S>& pred, const Tensor<S>& target) {
  detail::require_same_shape(pred, target, "loss_bce");
  auto p = clamp(pred, S(1e-7), S(1) - S(1e-7));
  auto pos = mul(target, log(p));
  auto neg = mul(affine(target, S(-1), S(1)), log(affine(p, S(-1), S(1))));
  return affine(mean(add(pos, neg)), S(-1), S(0));
}

// Soft Jaccard loss with epsilon = 1.
template <class S>
Tensor<S> loss_jaccard(const Tensor<S>& pred, const Tensor<S>& target) {
  detail::require_same_shape(pred, target, "loss_jaccard");
  auto inter = sum(mul(pred, target));
  auto denom = add(sub(add(sum(pred), sum(target)), inter), Tensor<S>::scalar(S(1)));
  return affine(div(add(inter, Tensor<S>::scalar(S(1))), denom), S(-1), S(1));
}

// Focal (gamma = 2, alpha = 0.25) on objectness over all cells plus
// smooth-L1 (beta = 1) on the offset channels averaged over positive cells.
// pred and target are H x W x 3 maps (objectness, d_range, d_azimuth).
template <class S>
Tensor<S> loss_detection(const Tensor<S>& pred, const Tensor<S>& target) {
  detail::require_same_shape(pred, target, "loss_detection");
  if (pred.rank() != 3 || pred.dim(2) != 3)
    throw DimensionError("loss_detection expects H x W x 3 maps, got " + shape_str(pred.shape()));
  const int hw = pred.dim(0) * pred.dim(1);
  const S alpha = S(0.25);

  auto pflat = reshape(pred, {hw, 3});
  auto tflat = reshape(target, {hw, 3});
  auto p = clamp(slice_cols(pflat, 0, 1), S(1e-7), S(1) - S(1e-7));
  auto tobj = slice_cols(tflat, 0, 1);

  auto one_minus_p = affine(p, S(-1), S(1));
  auto focal_pos = mul(tobj, mul(mul(one_minus_p, one_minus_p), log(p)));
  auto focal_neg = mul(affine(tobj, S(-1), S(1)), mul(mul(p, p), log(one_minus_p)));
  auto focal = affine(add(affine(focal_pos, alpha, S(0)), affine(focal_neg, S(1) - alpha, S(0))),
                      S(-1), S(0));
  auto focal_term = mean(focal);

  S npos = 0;
  for (int i = 0; i < hw; ++i) npos += target.data()[static_cast<std::size_t>(i) * 3];
  if (npos < S(1)) return focal_term;

  Tensor<S> pos_mask({hw, 2});
  for (int i = 0; i < hw; ++i) {
    const S m = target.data()[static_cast<std::size_t>(i) * 3];
    pos_mask.data()[static_cast<std::size_t>(i) * 2] = m;
    pos_mask.data()[static_cast<std::size_t>(i) * 2 + 1] = m;
  }
  auto diff = sub(slice_cols(pflat, 1, 2), slice_cols(tflat, 1, 2));
  auto reg = affine(sum(mul(huber(diff, S(1)), pos_mask)), S(1) / npos, S(0));
  return add(focal_term, reg);
}

// ---------------------------------------------------------------------------
// Mask metrics on binarized grids (foreground = nonzero).
// ---------------------------------------------------------------------------

double metric_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b);
double metric_dice(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b);
double metric_accuracy(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b);

// Symmetric mean nearest-neighbor distance between foreground sets. One empty
// mask yields the grid diagonal as a sentinel; both empty yields 0.
double metric_chamfer(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b,
                      int h, int w);

std::vector<std::uint8_t> binarize(const std::vector<float>& probs, float thresh = 0.5f);

// ---------------------------------------------------------------------------
// Detection scoring.
// ---------------------------------------------------------------------------

struct PeakDetection {
  int row = 0;
  int col = 0;
  double score = 0.0;
  double row_pos = 0.0;  // cell center + predicted offset
  double col_pos = 0.0;
};

struct GtPoint {
  double row_pos = 0.0;
  double col_pos = 0.0;
};

// Local maxima of the objectness channel above score_thresh over a 3x3
// neighborhood; plateau ties go to the first (smallest linear) index.
std::vector<PeakDetection> extract_peaks(const std::vector<float>& det, int h, int w,
                                         double score_thresh);

// Ground-truth centers recovered from a label map: objectness-1 cells whose
// stored offsets stay inside the cell.
std::vector<GtPoint> extract_gt_points(const Labels& labels);

struct DetectionScores {
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;
  double map = 1.0;
  double mar = 1.0;
  double range_error = 0.0;
  double azimuth_error = 0.0;
};

// Greedy matcher: predictions in descending score order claim the nearest
// unmatched ground-truth point within dist_thresh cells. mAP/mAR sweep the
// score threshold over {0.1 .. 0.9}.
DetectionScores metric_detection(const std::vector<float>& det, int h, int w,
                                 const std::vector<GtPoint>& gt, double score_thresh = 0.5,
                                 double dist_thresh = 2.0);

struct EvalReport {
  double miou = 0.0;
  double dice = 0.0;
  double pixel_accuracy = 0.0;
  double chamfer = 0.0;
  DetectionScores detection;
};

}  // namespace ssmr
