#pragma once

#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "ssmradnet/config.hpp"
#include "ssmradnet/metrics.hpp"
#include "ssmradnet/model.hpp"

namespace ssmr {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 8;
  double lr = 1e-4;
  double weight_decay = 5e-6;
  bool seg_bce = true;
  bool seg_jaccard = true;
  bool det_focal = true;
  std::uint64_t seed = 0;
  int eval_every = 1;

  static TrainConfig from_run_config(const RunConfig& rc) {
    TrainConfig t;
    t.epochs = rc.get_int("train.epochs");
    t.batch_size = rc.get_int("train.batch_size");
    t.lr = rc.get_double("train.lr");
    t.weight_decay = rc.get_double("train.weight_decay");
    const std::string seg = rc.get("train.seg_loss");
    if (seg != "bce" && seg != "jaccard" && seg != "bce+jaccard" && seg != "none")
      throw ConfigError("train.seg_loss must be bce|jaccard|bce+jaccard|none");
    t.seg_bce = seg == "bce" || seg == "bce+jaccard";
    t.seg_jaccard = seg == "jaccard" || seg == "bce+jaccard";
    const std::string det = rc.get("train.det_loss");
    if (det != "focal_l1" && det != "none")
      throw ConfigError("train.det_loss must be focal_l1|none");
    t.det_focal = det == "focal_l1";
    t.seed = static_cast<std::uint64_t>(rc.get_int("train.seed"));
    t.eval_every = rc.get_int("train.eval_every");
    return t;
  }
};

// Label maps as constant tensors of the model's scalar type.
template <class S>
Tensor<S> seg_target_tensor(const Labels& lab) {
  Tensor<S> t({lab.h, lab.w});
  for (std::size_t i = 0; i < lab.seg.size(); ++i) t.data()[i] = static_cast<S>(lab.seg[i]);
  return t;
}

template <class S>
Tensor<S> det_target_tensor(const Labels& lab) {
  Tensor<S> t({lab.h, lab.w, 3});
  for (std::size_t i = 0; i < lab.det.size(); ++i) t.data()[i] = static_cast<S>(lab.det[i]);
  return t;
}

template <class S>
Tensor<S> frame_loss(const BevTensors<S>& out, const Labels& labels, const TrainConfig& tc) {
  Tensor<S> total = Tensor<S>::scalar(S(0));
  if (out.seg.defined() && (tc.seg_bce || tc.seg_jaccard)) {
    auto target = seg_target_tensor<S>(labels);
    if (tc.seg_bce) total = add(total, loss_bce(out.seg, target));
    if (tc.seg_jaccard) total = add(total, loss_jaccard(out.seg, target));
  }
  if (out.det.defined() && tc.det_focal)
    total = add(total, loss_detection(out.det, det_target_tensor<S>(labels)));
  return total;
}

template <class S>
EvalReport evaluate_frame(const Model<S>& model, const DatasetEntry& e) {
  const BevOutput<S> out = model.forward_maps(e.frame);
  EvalReport r;
  if (!out.seg.empty()) {
    std::vector<float> probs(out.seg.begin(), out.seg.end());
    const auto pred = binarize(probs);
    r.miou = metric_iou(pred, e.labels.seg);
    r.dice = metric_dice(pred, e.labels.seg);
    r.pixel_accuracy = metric_accuracy(pred, e.labels.seg);
    r.chamfer = metric_chamfer(pred, e.labels.seg, e.labels.h, e.labels.w);
  }
  if (!out.det.empty()) {
    std::vector<float> det(out.det.begin(), out.det.end());
    r.detection = metric_detection(det, e.labels.h, e.labels.w, extract_gt_points(e.labels));
  }
  return r;
}

// Dataset-level report: per-frame metrics averaged in frame order.
template <class S>
EvalReport evaluate(const Model<S>& model, const std::vector<DatasetEntry>& data, int threads = 1) {
  std::vector<EvalReport> per_frame(data.size());
  if (threads <= 1 || data.size() < 2) {
    for (std::size_t i = 0; i < data.size(); ++i) per_frame[i] = evaluate_frame(model, data[i]);
  } else {
    const int nt = std::min<int>(threads, static_cast<int>(data.size()));
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (int t = 0; t < nt; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < data.size(); i = next.fetch_add(1))
          per_frame[i] = evaluate_frame(model, data[i]);
      });
    for (auto& th : pool) th.join();
  }

  EvalReport agg;
  if (data.empty()) return agg;
  for (const auto& r : per_frame) {
    agg.miou += r.miou;
    agg.dice += r.dice;
    agg.pixel_accuracy += r.pixel_accuracy;
    agg.chamfer += r.chamfer;
    agg.detection.precision += r.detection.precision;
    agg.detection.recall += r.detection.recall;
    agg.detection.f1 += r.detection.f1;
    agg.detection.map += r.detection.map;
    agg.detection.mar += r.detection.mar;
    agg.detection.range_error += r.detection.range_error;
    agg.detection.azimuth_error += r.detection.azimuth_error;
  }
  const double n = static_cast<double>(data.size());
  agg.miou /= n;
  agg.dice /= n;
  agg.pixel_accuracy /= n;
  agg.chamfer /= n;
  agg.detection.precision /= n;
  agg.detection.recall /= n;
  agg.detection.f1 /= n;
  agg.detection.map /= n;
  agg.detection.mar /= n;
  agg.detection.range_error /= n;
  agg.detection.azimuth_error /= n;
  return agg;
}

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  bool evaluated = false;
  EvalReport val;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double best_miou = -1.0;
  int best_epoch = -1;
  bool aborted_nan = false;
};

// Deterministic single-thread training loop with gradient accumulation over
// each batch and best-by-val-mIoU checkpointing.
template <class S>
TrainResult train(Model<S>& model, const std::vector<DatasetEntry>& train_set,
                  const std::vector<DatasetEntry>& val_set, const TrainConfig& tc,
                  const std::string& checkpoint_path = "", const std::string& csv_path = "",
                  std::ostream* progress = nullptr) {
  if (train_set.empty()) throw ContractError("train: empty training set");
  for (const auto& e : train_set)
    if (e.labels.h != model.config().out_h() || e.labels.w != model.config().out_w())
      throw ConfigError("dataset label grid " + std::to_string(e.labels.h) + "x" +
                        std::to_string(e.labels.w) + " does not match model output grid " +
                        std::to_string(model.config().out_h()) + "x" +
                        std::to_string(model.config().out_w()));

  model.set_requires_grad();
  Adam<S> opt(model.parameter_tensors(), static_cast<S>(tc.lr), S(0.9), S(0.999), S(1e-8),
              static_cast<S>(tc.weight_decay));

  std::ofstream csv;
  if (!csv_path.empty()) {
    csv.open(csv_path);
    csv << "epoch,train_loss,val_miou,val_dice,val_chamfer,val_f1\n";
  }

  TrainResult result;
  Rng shuffle_rng(tc.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.uniform_int(static_cast<int>(i)))]);

    double epoch_loss = 0.0;
    std::size_t frames_done = 0;
    bool nan_hit = false;
    while (frames_done < order.size() && !nan_hit) {
      const std::size_t batch_end = std::min(frames_done + static_cast<std::size_t>(tc.batch_size),
                                             order.size());
      const S inv_batch = S(1) / static_cast<S>(batch_end - frames_done);
      opt.zero_grad();
      for (std::size_t i = frames_done; i < batch_end; ++i) {
        const DatasetEntry& e = train_set[order[i]];
        Tape<S> tape;
        {
          TapeScope<S> scope(tape);
          auto out = model.forward(e.frame);
          auto loss = frame_loss(out, e.labels, tc);
          const double lv = static_cast<double>(loss.item());
          if (!std::isfinite(lv)) {
            nan_hit = true;
            break;
          }
          epoch_loss += lv;
          auto scaled = affine(loss, inv_batch, S(0));
          backward(scaled, tape);
        }
      }
      if (!nan_hit) opt.step();
      frames_done = batch_end;
    }
    if (nan_hit) {
      result.aborted_nan = true;
      if (progress) *progress << "epoch " << epoch << ": loss diverged, aborting\n";
      break;
    }
    epoch_loss /= static_cast<double>(order.size());

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss;
    const bool do_eval = !val_set.empty() && tc.eval_every > 0 &&
                         (epoch % tc.eval_every == tc.eval_every - 1 || epoch == tc.epochs - 1);
    if (do_eval) {
      log.evaluated = true;
      log.val = evaluate(model, val_set, 1);
      if (log.val.miou > result.best_miou) {
        result.best_miou = log.val.miou;
        result.best_epoch = epoch;
        if (!checkpoint_path.empty()) save_checkpoint(model, checkpoint_path);
      }
    }
    if (csv.is_open()) {
      csv << log.epoch << "," << std::setprecision(10) << log.train_loss << ",";
      if (log.evaluated)
        csv << log.val.miou << "," << log.val.dice << "," << log.val.chamfer << ","
            << log.val.detection.f1;
      else
        csv << ",,,";
      csv << "\n";
      csv.flush();
    }
    if (progress) {
      *progress << "epoch " << epoch << " loss " << std::setprecision(6) << log.train_loss;
      if (log.evaluated)
        *progress << " val_miou " << log.val.miou << " val_dice " << log.val.dice;
      *progress << "\n";
      progress->flush();
    }
    result.log.push_back(log);
  }

  // With no validation set, still leave a usable checkpoint behind.
  if (!checkpoint_path.empty() && result.best_epoch < 0 && !result.aborted_nan)
    save_checkpoint(model, checkpoint_path);
  return result;
}

}  // namespace ssmr
