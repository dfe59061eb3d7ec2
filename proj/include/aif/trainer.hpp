#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aif/adam.hpp"
#include "aif/checkpoint.hpp"
#include "aif/config.hpp"
#include "aif/data.hpp"
#include "aif/filter_net.hpp"
#include "aif/segmentor.hpp"
#include "aif/variational.hpp"

// Orchestration: source pre-training, the two-step adaptation loop
// (filter step / model step / EMA), evaluation and the fixed-filter sweep
// support. All loops are single-threaded and deterministic for a fixed
// config; callers parallelize across independent runs.

namespace aif {

struct Model {
  Segmentor<float> seg;
  InformationFilter<float> filter;
  VariationalGaussian<float> q;
  AdaptConfig cfg;

  static Model init(const AdaptConfig& cfg);
  static Model from_checkpoint(const Checkpoint& ckpt);
  Checkpoint to_checkpoint() const;

  std::vector<Param<float>> encoder_params() const { return seg.encoder_parameters(); }
  std::vector<Param<float>> student_params() const { return seg.student_parameters(); }
  std::vector<Param<float>> teacher_params() const { return seg.teacher_parameters(); }
  std::vector<Param<float>> filter_params() const { return filter.parameters(); }
  std::vector<Param<float>> q_params() const { return q.parameters(); }
};

struct GroupHashes {
  std::uint64_t encoder = 0, student = 0, teacher = 0, q = 0, filter = 0;
};
GroupHashes hash_groups(const Model& m);

struct PretrainResult {
  Checkpoint checkpoint;
  double final_train_dsc = 0.0;
};

// Supervised pre-training (pixel cross-entropy + soft Dice) of encoder and
// student decoder; the teacher decoder receives a copy at the end. Per-epoch
// CSV log: epoch,loss,dsc,lr. With cfg.val_fraction > 0 a deterministic tail
// split drives best-epoch selection.
PretrainResult pretrain_source(const std::vector<Sample>& dataset, const AdaptConfig& cfg,
                               const std::filesystem::path& log_csv = {});

struct IterationLosses {
  double pl_filter = 0.0;  // L_PL seen by the filter step
  double mi = 0.0;         // L_MI (filter step)
  double pl_model = 0.0;   // L_PL seen by the model step
  double li = 0.0;         // L_Li (model step)
  double con = 0.0;        // L_Con (model step)
};

// One adaptation run, exposed step by step so tests can audit parameter
// routing between the two optimization steps and the EMA line.
class AdaptSession {
 public:
  AdaptSession(const Checkpoint& source, std::vector<Sample> target, const AdaptConfig& cfg);

  int iterations_per_epoch() const;
  void start_epoch(int epoch);          // reshuffles and sets the scheduled lr
  std::vector<int> next_batch();

  // Algorithm-1 lines for one batch:
  IterationLosses run_iteration(const std::vector<int>& batch);
  // pieces (each recomputes the teacher pass; teacher only changes at ema())
  IterationLosses step_filter(const std::vector<int>& batch);  // updates theta_f only
  IterationLosses step_model(const std::vector<int>& batch);   // updates theta_e, theta_s, theta_q
  void step_ema();                                             // teacher <- EMA(student)

  Model& model() { return model_; }
  const AdaptConfig& cfg() const { return cfg_; }
  Checkpoint checkpoint() const { return model_.to_checkpoint(); }

 private:
  struct TeacherOut {
    TensorF z_t;
    TensorF p_t;
  };
  TeacherOut teacher_forward(const std::vector<int>& batch) const;
  TensorF filtered_input(const TensorF& x) const;  // learned filter or fixed mask
  TensorF batch_images(const std::vector<int>& batch) const;

  IterationLosses do_step_filter(const std::vector<int>& batch, const TeacherOut& t);
  IterationLosses do_step_model(const std::vector<int>& batch, const TeacherOut& t);

  Model model_;
  std::vector<Sample> target_;
  AdaptConfig cfg_;
  Rng rng_;
  std::vector<int> order_;
  std::size_t cursor_ = 0;
  int epoch_ = 0;
  std::int64_t iteration_ = 0;
  Adam<float> opt_filter_;
  Adam<float> opt_model_;
};

// Full Algorithm-1 run; returns last-epoch parameters. Per-epoch CSV log:
// epoch,loss_pl,loss_mi,loss_li,loss_con,lr.
Checkpoint adapt(const std::vector<Sample>& target, const Checkpoint& source, const AdaptConfig& cfg,
                 const std::filesystem::path& log_csv = {});

struct EvalResult {
  std::vector<MetricsRow> rows;
  double mean_dsc = 0.0;
  double mean_iou = 0.0;
};

// Student-branch evaluation on f(x) (use_filter) or on x. Labels required.
EvalResult evaluate(const Checkpoint& ckpt, const std::vector<Sample>& dataset, bool use_filter);

// Mean Sobel gradient magnitude within a 2-pixel band around ground-truth
// foreground, measured on the image the student sees.
double mean_edge_gradient(const Checkpoint& ckpt, const std::vector<Sample>& dataset, bool use_filter);

// Grayscale export of a filter map for qualitative inspection.
void export_filter_map(const Checkpoint& ckpt, const Sample& sample, const std::filesystem::path& file);

}  // namespace aif
