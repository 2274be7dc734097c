#include "ssmradnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ssmr {

namespace {

void require_same_size(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  if (a.size() != b.size())
    throw DimensionError("mask size mismatch: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
}

}  // namespace

double metric_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  require_same_size(a, b);
  std::int64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool av = a[i] != 0, bv = b[i] != 0;
    inter += av && bv;
    uni += av || bv;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double metric_dice(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  require_same_size(a, b);
  std::int64_t inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool av = a[i] != 0, bv = b[i] != 0;
    inter += av && bv;
    na += av;
    nb += bv;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

double metric_accuracy(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  require_same_size(a, b);
  if (a.empty()) return 1.0;
  std::int64_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += (a[i] != 0) == (b[i] != 0);
  return static_cast<double>(same) / static_cast<double>(a.size());
}

namespace {

// Felzenszwalb-Huttenlocher exact squared Euclidean distance transform.
void edt_1d(const std::vector<double>& f, std::vector<double>& d) {
  const int n = static_cast<int>(f.size());
  std::vector<int> v(static_cast<std::size_t>(n));
  std::vector<double> z(static_cast<std::size_t>(n) + 1);
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s;
    while (true) {
      const int p = v[static_cast<std::size_t>(k)];
      s = ((f[static_cast<std::size_t>(q)] + q * q) - (f[static_cast<std::size_t>(p)] + p * p)) /
          (2.0 * q - 2.0 * p);
      if (s > z[static_cast<std::size_t>(k)]) break;
      --k;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(k) + 1] < q) ++k;
    const int p = v[static_cast<std::size_t>(k)];
    d[static_cast<std::size_t>(q)] = (q - p) * static_cast<double>(q - p) + f[static_cast<std::size_t>(p)];
  }
}

// Exact squared distances to the nearest foreground cell of mask.
std::vector<double> squared_edt(const std::vector<std::uint8_t>& mask, int h, int w) {
  const double inf = 1e18;
  std::vector<double> d(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = mask[i] ? 0.0 : inf;

  std::vector<double> col(static_cast<std::size_t>(h)), out_col(static_cast<std::size_t>(h));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) col[static_cast<std::size_t>(y)] = d[static_cast<std::size_t>(y) * w + x];
    edt_1d(col, out_col);
    for (int y = 0; y < h; ++y) d[static_cast<std::size_t>(y) * w + x] = out_col[static_cast<std::size_t>(y)];
  }
  std::vector<double> row(static_cast<std::size_t>(w)), out_row(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) row[static_cast<std::size_t>(x)] = d[static_cast<std::size_t>(y) * w + x];
    edt_1d(row, out_row);
    for (int x = 0; x < w; ++x) d[static_cast<std::size_t>(y) * w + x] = out_row[static_cast<std::size_t>(x)];
  }
  return d;
}

double directed_mean_nn(const std::vector<std::uint8_t>& from, const std::vector<double>& edt_to) {
  double acc = 0.0;
  std::int64_t n = 0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (!from[i]) continue;
    acc += std::sqrt(edt_to[i]);
    ++n;
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

}  // namespace

double metric_chamfer(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b,
                      int h, int w) {
  require_same_size(a, b);
  const bool a_empty = std::all_of(a.begin(), a.end(), [](std::uint8_t v) { return v == 0; });
  const bool b_empty = std::all_of(b.begin(), b.end(), [](std::uint8_t v) { return v == 0; });
  if (a_empty && b_empty) return 0.0;
  if (a_empty || b_empty) return std::sqrt(static_cast<double>(h) * h + static_cast<double>(w) * w);
  auto edt_a = squared_edt(a, h, w);
  auto edt_b = squared_edt(b, h, w);
  return 0.5 * (directed_mean_nn(a, edt_b) + directed_mean_nn(b, edt_a));
}

std::vector<std::uint8_t> binarize(const std::vector<float>& probs, float thresh) {
  std::vector<std::uint8_t> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] >= thresh ? 1 : 0;
  return out;
}

std::vector<PeakDetection> extract_peaks(const std::vector<float>& det, int h, int w,
                                         double score_thresh) {
  std::vector<PeakDetection> peaks;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t base = (static_cast<std::size_t>(r) * w + c) * 3;
      const double score = det[base];
      if (score < score_thresh) continue;
      bool is_peak = true;
      for (int dr = -1; dr <= 1 && is_peak; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const int nr = r + dr, nc = c + dc;
          if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
          const double ns = det[(static_cast<std::size_t>(nr) * w + nc) * 3];
          const int idx = r * w + c, nidx = nr * w + nc;
          if (ns > score || (ns == score && nidx < idx)) {
            is_peak = false;
            break;
          }
        }
      }
      if (!is_peak) continue;
      PeakDetection p;
      p.row = r;
      p.col = c;
      p.score = score;
      p.row_pos = r + 0.5 + det[base + 1];
      p.col_pos = c + 0.5 + det[base + 2];
      peaks.push_back(p);
    }
  }
  return peaks;
}

std::vector<GtPoint> extract_gt_points(const Labels& labels) {
  std::vector<GtPoint> gt;
  for (int r = 0; r < labels.h; ++r) {
    for (int c = 0; c < labels.w; ++c) {
      const std::size_t base = (static_cast<std::size_t>(r) * labels.w + c) * 3;
      if (labels.det[base] < 0.5f) continue;
      const float dr = labels.det[base + 1], dc = labels.det[base + 2];
      // center cell iff the offset stays inside the cell: floor semantics [-0.5, 0.5)
      if (dr < -0.5f || dr >= 0.5f || dc < -0.5f || dc >= 0.5f) continue;
      gt.push_back({r + 0.5 + dr, c + 0.5 + dc});
    }
  }
  return gt;
}

namespace {

struct MatchResult {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  double range_err_sum = 0.0;
  double az_err_sum = 0.0;
};

MatchResult greedy_match(std::vector<PeakDetection> peaks, const std::vector<GtPoint>& gt,
                         double dist_thresh) {
  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const PeakDetection& a, const PeakDetection& b) { return a.score > b.score; });
  std::vector<bool> taken(gt.size(), false);
  MatchResult res;
  for (const PeakDetection& p : peaks) {
    int best = -1;
    double best_d = dist_thresh;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (taken[i]) continue;
      const double d = std::hypot(p.row_pos - gt[i].row_pos, p.col_pos - gt[i].col_pos);
      if (d <= best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    if (best >= 0) {
      taken[static_cast<std::size_t>(best)] = true;
      ++res.tp;
      res.range_err_sum += std::abs(p.row_pos - gt[static_cast<std::size_t>(best)].row_pos);
      res.az_err_sum += std::abs(p.col_pos - gt[static_cast<std::size_t>(best)].col_pos);
    } else {
      ++res.fp;
    }
  }
  res.fn = static_cast<int>(gt.size()) - res.tp;
  return res;
}

double precision_of(const MatchResult& m) {
  // No predictions at all: no false positives, precision 1 by convention.
  if (m.tp + m.fp == 0) return 1.0;
  return static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
}

double recall_of(const MatchResult& m) {
  if (m.tp + m.fn == 0) return 1.0;  // nothing to find
  return static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
}

}  // namespace

DetectionScores metric_detection(const std::vector<float>& det, int h, int w,
                                 const std::vector<GtPoint>& gt, double score_thresh,
                                 double dist_thresh) {
  DetectionScores out;
  const MatchResult base = greedy_match(extract_peaks(det, h, w, score_thresh), gt, dist_thresh);
  out.precision = precision_of(base);
  out.recall = recall_of(base);
  out.f1 = (out.precision + out.recall) > 0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  if (base.tp > 0) {
    out.range_error = base.range_err_sum / base.tp;
    out.azimuth_error = base.az_err_sum / base.tp;
  }

  double psum = 0.0, rsum = 0.0;
  int n = 0;
  for (int i = 1; i <= 9; ++i) {
    const double t = 0.1 * i;
    const MatchResult m = greedy_match(extract_peaks(det, h, w, t), gt, dist_thresh);
    psum += precision_of(m);
    rsum += recall_of(m);
    ++n;
  }
  out.map = psum / n;
  out.mar = rsum / n;
  return out;
}

}  // namespace ssmr
