#include "aif/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "aif/adam.hpp"
#include "aif/image_io.hpp"
#include "aif/losses.hpp"

namespace aif {

// ---------------------------------------------------------------------------
// model bundle
// ---------------------------------------------------------------------------

Model Model::init(const AdaptConfig& cfg) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  m.seg = Segmentor<float>::init(cfg.seed, cfg.in_channels, cfg.num_classes, cfg.seg_base_width);
  m.filter = InformationFilter<float>::init(cfg.seed, cfg.in_channels, cfg.filter_base_width);
  m.q = VariationalGaussian<float>::init(cfg.seed, m.seg.embed_dim(), cfg.q_hidden);
  return m;
}

namespace {

std::vector<Param<float>> all_params(const Model& m) {
  std::vector<Param<float>> out;
  for (auto& p : m.seg.parameters()) out.push_back(p);
  for (auto& p : m.filter.parameters()) out.push_back(p);
  for (auto& p : m.q.parameters()) out.push_back(p);
  return out;
}

}  // namespace

Model Model::from_checkpoint(const Checkpoint& ckpt) {
  Model m = init(ckpt.config);
  std::vector<std::string> missing, mismatched;
  for (auto& p : all_params(m)) {
    const Param<float>* src = ckpt.find(p.name);
    if (src == nullptr) {
      missing.push_back(p.name);
      continue;
    }
    if (src->value.shape() != p.value.shape()) {
      mismatched.push_back(p.name + " expected " + shape_str(p.value.shape()) + " got " +
                           shape_str(src->value.shape()));
      continue;
    }
    p.value.data() = src->value.data();
  }
  if (!missing.empty() || !mismatched.empty()) {
    std::ostringstream os;
    os << "checkpoint incompatible with configuration:";
    for (const auto& s : missing) os << "\n  missing tensor " << s;
    for (const auto& s : mismatched) os << "\n  shape mismatch " << s;
    throw std::runtime_error(os.str());
  }
  return m;
}

Checkpoint Model::to_checkpoint() const {
  Checkpoint c;
  c.config = cfg;
  for (auto& p : all_params(*this)) c.tensors.push_back({p.name, p.value.detach()});
  return c;
}

GroupHashes hash_groups(const Model& m) {
  GroupHashes h;
  h.encoder = hash_params(m.encoder_params());
  h.student = hash_params(m.student_params());
  h.teacher = hash_params(m.teacher_params());
  h.q = hash_params(m.q_params());
  h.filter = hash_params(m.filter_params());
  return h;
}

// ---------------------------------------------------------------------------
// shared helpers
// ---------------------------------------------------------------------------

namespace {

void require_uniform(const std::vector<Sample>& ds, const AdaptConfig& cfg, const char* who) {
  check(!ds.empty(), std::string(who) + ": dataset is empty");
  for (const auto& s : ds)
    check(s.channels == cfg.in_channels && s.height == cfg.image_size && s.width == cfg.image_size,
          std::string(who) + ": sample '" + s.id + "' is " + std::to_string(s.width) + "x" +
              std::to_string(s.height) + ", expected " + std::to_string(cfg.image_size) + "x" +
              std::to_string(cfg.image_size));
}

TensorF make_batch(const std::vector<Sample>& ds, const std::vector<int>& idx, int size, int channels) {
  TensorF x(Shape{static_cast<int>(idx.size()), channels, size, size}, 0.f);
  const std::size_t per = static_cast<std::size_t>(channels) * size * size;
  for (std::size_t b = 0; b < idx.size(); ++b)
    std::copy_n(ds[static_cast<std::size_t>(idx[b])].image.data(), per, x.data().data() + b * per);
  return x;
}

std::vector<int> batch_labels(const std::vector<Sample>& ds, const std::vector<int>& idx) {
  std::vector<int> labels;
  for (int i : idx) {
    const auto& m = ds[static_cast<std::size_t>(i)].mask;
    for (auto v : m) labels.push_back(static_cast<int>(v));
  }
  return labels;
}

void set_group_grad(const std::vector<Param<float>>& params, bool on) {
  for (auto p : params) p.value.set_requires_grad(on);
}

// argmax over the class dim of one sample's probability map
std::vector<std::uint8_t> argmax_mask(const TensorF& p, int sample) {
  const int c = p.dim(1), hw = p.dim(2) * p.dim(3);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(hw));
  for (int q = 0; q < hw; ++q) {
    int best = 0;
    float best_v = p.data()[(static_cast<std::size_t>(sample) * c) * hw + q];
    for (int ch = 1; ch < c; ++ch) {
      const float v = p.data()[(static_cast<std::size_t>(sample) * c + ch) * hw + q];
      if (v > best_v) {
        best_v = v;
        best = ch;
      }
    }
    out[static_cast<std::size_t>(q)] = static_cast<std::uint8_t>(best);
  }
  return out;
}

TensorF fixed_filtered(const TensorF& x, double threshold) {
  auto spec = dct2(x);
  auto mask = tile_mask(fixed_highpass_mask<float>(x.dim(2), x.dim(3), threshold), x.dim(0), x.dim(1));
  return idct2(apply_spectral_mask(spec, mask));
}

// evaluation-style forward over a whole dataset; returns per-sample masks
std::vector<std::vector<std::uint8_t>> predict_masks(const Model& model, const std::vector<Sample>& ds,
                                                     bool use_filter) {
  NoGradGuard ng;
  std::vector<std::vector<std::uint8_t>> preds(ds.size());
  const int eval_batch = 8;
  for (std::size_t at = 0; at < ds.size(); at += eval_batch) {
    std::vector<int> idx;
    for (std::size_t i = at; i < std::min(ds.size(), at + eval_batch); ++i) idx.push_back(static_cast<int>(i));
    TensorF x = make_batch(ds, idx, model.cfg.image_size, model.cfg.in_channels);
    if (use_filter)
      x = model.cfg.use_fixed_mask() ? fixed_filtered(x, model.cfg.fixed_mask_threshold) : model.filter.forward(x).filtered;
    auto out = model.seg.forward(x, Branch::student);
    for (std::size_t b = 0; b < idx.size(); ++b) preds[at + b] = argmax_mask(out.p, static_cast<int>(b));
  }
  return preds;
}

EvalResult eval_model(const Model& model, const std::vector<Sample>& ds, bool use_filter) {
  for (const auto& s : ds)
    check(s.has_mask(), "evaluate: sample '" + s.id + "' has no mask; evaluation needs a labeled dataset");
  require_uniform(ds, model.cfg, "evaluate");
  auto preds = predict_masks(model, ds, use_filter);
  EvalResult res;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    MetricsRow row;
    row.id = ds[i].id;
    // binary task: class 1; multi-class: macro mean over foreground classes
    double sd = 0, si = 0;
    const int fg_classes = model.cfg.num_classes - 1;
    for (int c = 1; c < model.cfg.num_classes; ++c) {
      sd += dsc(preds[i], ds[i].mask, c);
      si += iou(preds[i], ds[i].mask, c);
    }
    row.dsc = sd / fg_classes;
    row.iou = si / fg_classes;
    res.rows.push_back(row);
    res.mean_dsc += row.dsc;
    res.mean_iou += row.iou;
  }
  res.mean_dsc /= static_cast<double>(res.rows.size());
  res.mean_iou /= static_cast<double>(res.rows.size());
  return res;
}

}  // namespace

// ---------------------------------------------------------------------------
// source pre-training
// ---------------------------------------------------------------------------

PretrainResult pretrain_source(const std::vector<Sample>& dataset, const AdaptConfig& cfg,
                               const std::filesystem::path& log_csv) {
  cfg.validate();
  require_uniform(dataset, cfg, "pretrain");
  for (const auto& s : dataset)
    check(s.has_mask(), "pretrain: sample '" + s.id + "' has no mask; source pre-training needs labels");

  Model model = Model::init(cfg);

  // deterministic tail split for optional early stopping
  std::vector<int> train_idx, val_idx;
  int n_val = cfg.val_fraction > 0.0 ? static_cast<int>(std::lround(cfg.val_fraction * dataset.size())) : 0;
  if (cfg.val_fraction > 0.0) n_val = std::clamp<int>(n_val, 1, static_cast<int>(dataset.size()) - 1);
  for (int i = 0; i < static_cast<int>(dataset.size()) - n_val; ++i) train_idx.push_back(i);
  for (int i = static_cast<int>(dataset.size()) - n_val; i < static_cast<int>(dataset.size()); ++i)
    val_idx.push_back(i);

  std::vector<Param<float>> trainable;
  for (auto& p : model.seg.encoder_parameters()) trainable.push_back(p);
  for (auto& p : model.seg.student_parameters()) trainable.push_back(p);
  set_group_grad(trainable, true);
  Adam<float> opt(trainable, cfg.lr);

  std::ofstream log;
  if (!log_csv.empty()) {
    log.open(log_csv);
    check(log.good(), "pretrain: cannot open log '" + log_csv.string() + "'");
    log << "epoch,loss,dsc,lr\n";
  }

  Rng rng(Rng::derive(cfg.seed, 0x70726574ull));
  double best_val = -1.0;
  std::vector<std::vector<float>> best_snapshot;
  std::vector<Sample> val_set;
  for (int i : val_idx) val_set.push_back(dataset[static_cast<std::size_t>(i)]);

  double last_dsc = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_lr(lr_at_epoch(cfg.lr, epoch, cfg.epochs));
    auto order = train_idx;
    rng.shuffle(order);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<int> batch(order.begin() + static_cast<std::ptrdiff_t>(at),
                             order.begin() + static_cast<std::ptrdiff_t>(
                                                 std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size))));
      TensorF x = make_batch(dataset, batch, cfg.image_size, cfg.in_channels);
      auto labels = batch_labels(dataset, batch);
      auto out = model.seg.forward(x, Branch::student);
      auto loss = add(cross_entropy(out.p, labels), soft_dice_loss(out.p, labels));
      const double lv = loss.item();
      if (!std::isfinite(lv))
        throw std::runtime_error("pretrain: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(batches));
      opt.zero_grad();
      loss.backward();
      opt.step();
      loss_sum += lv;
      ++batches;
    }

    // per-epoch training DSC through the evaluation path
    std::vector<Sample> train_set;
    for (int i : train_idx) train_set.push_back(dataset[static_cast<std::size_t>(i)]);
    last_dsc = eval_model(model, train_set, false).mean_dsc;
    if (log.is_open()) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%d,%.9f,%.9f,%.9f\n", epoch, loss_sum / std::max(1, batches), last_dsc,
                    opt.lr());
      log << buf;
    }
    if (!val_idx.empty()) {
      const double vd = eval_model(model, val_set, false).mean_dsc;
      if (vd > best_val) {
        best_val = vd;
        best_snapshot.clear();
        for (auto& p : trainable) best_snapshot.push_back(p.value.data());
      }
    }
  }
  if (!best_snapshot.empty())
    for (std::size_t i = 0; i < trainable.size(); ++i) trainable[i].value.data() = best_snapshot[i];

  model.seg.copy_student_to_teacher();
  set_group_grad(trainable, false);
  if (cfg.epochs > 0 && !val_idx.empty()) {
    std::vector<Sample> train_set;
    for (int i : train_idx) train_set.push_back(dataset[static_cast<std::size_t>(i)]);
    last_dsc = eval_model(model, train_set, false).mean_dsc;
  }
  return {model.to_checkpoint(), last_dsc};
}

// ---------------------------------------------------------------------------
// adaptation session
// ---------------------------------------------------------------------------

namespace {

std::vector<Param<float>> model_group(const Model& m) {
  std::vector<Param<float>> g;
  for (auto& p : m.seg.encoder_parameters()) g.push_back(p);
  for (auto& p : m.seg.student_parameters()) g.push_back(p);
  for (auto& p : m.q.parameters()) g.push_back(p);
  return g;
}

}  // namespace

AdaptSession::AdaptSession(const Checkpoint& source, std::vector<Sample> target, const AdaptConfig& cfg)
    : model_([&] {
        Checkpoint src = source;
        src.config = cfg;  // adaptation hyperparameters win; shapes must still match
        return Model::from_checkpoint(src);
      }()),
      target_(std::move(target)),
      cfg_(cfg),
      rng_(Rng::derive(cfg.seed, 0x61646170ull)),
      opt_filter_(model_.filter_params(), cfg.lr),
      opt_model_(model_group(model_), cfg.lr) {
  cfg_.validate();
  require_uniform(target_, cfg_, "adapt");
  // theta_e, theta_s, theta_t all start from the source model
  model_.seg.copy_student_to_teacher();
  for (int i = 0; i < static_cast<int>(target_.size()); ++i) order_.push_back(i);
}

int AdaptSession::iterations_per_epoch() const {
  return static_cast<int>((target_.size() + static_cast<std::size_t>(cfg_.batch_size) - 1) /
                          static_cast<std::size_t>(cfg_.batch_size));
}

void AdaptSession::start_epoch(int epoch) {
  epoch_ = epoch;
  rng_.shuffle(order_);
  cursor_ = 0;
  const double lr = lr_at_epoch(cfg_.lr, epoch, std::max(1, cfg_.epochs));
  opt_filter_.set_lr(lr);
  opt_model_.set_lr(lr);
}

std::vector<int> AdaptSession::next_batch() {
  if (cursor_ >= order_.size()) cursor_ = 0;
  std::vector<int> batch;
  for (int b = 0; b < cfg_.batch_size && cursor_ < order_.size(); ++b) batch.push_back(order_[cursor_++]);
  return batch;
}

TensorF AdaptSession::batch_images(const std::vector<int>& batch) const {
  return make_batch(target_, batch, cfg_.image_size, cfg_.in_channels);
}

AdaptSession::TeacherOut AdaptSession::teacher_forward(const std::vector<int>& batch) const {
  TensorF x = batch_images(batch);
  auto out = model_.seg.forward(x, Branch::teacher);  // tape off inside
  return {out.z, out.p};
}

TensorF AdaptSession::filtered_input(const TensorF& x) const {
  if (cfg_.use_fixed_mask()) return fixed_filtered(x, cfg_.fixed_mask_threshold);
  return model_.filter.forward(x).filtered;
}

IterationLosses AdaptSession::do_step_filter(const std::vector<int>& batch, const TeacherOut& t) {
  IterationLosses out;
  if (cfg_.use_fixed_mask()) return out;  // no theta_f to optimize

  // freeze everything but theta_f for this graph
  set_group_grad(model_group(model_), false);
  model_.filter.set_requires_grad(true);

  TensorF x = batch_images(batch);
  auto x_f = model_.filter.forward(x).filtered;
  auto s = model_.seg.forward(x_f, Branch::student);
  auto pl = pseudo_label(t.p_t);
  auto l_pl = loss_pl(pl, s.p, cfg_.tau);
  out.pl_filter = l_pl.item();
  TensorF objective;
  if (cfg_.alpha1 != 0.0) {
    auto l_mi = loss_mi(model_.q, s.z, t.z_t);
    out.mi = l_mi.item();
    objective = filter_objective(l_pl, l_mi, cfg_.alpha1);
  } else {
    objective = l_pl;
  }
  if (!std::isfinite(objective.item()))
    throw std::runtime_error("adapt: non-finite filter objective at iteration " + std::to_string(iteration_) +
                             " (L_PL=" + std::to_string(out.pl_filter) + ", L_MI=" + std::to_string(out.mi) + ")");
  opt_filter_.zero_grad();
  objective.backward();
  opt_filter_.step();
  return out;
}

IterationLosses AdaptSession::do_step_model(const std::vector<int>& batch, const TeacherOut& t) {
  IterationLosses out;
  // freeze theta_f, train encoder + student + q
  model_.filter.set_requires_grad(false);
  set_group_grad(model_group(model_), true);

  TensorF x = batch_images(batch);
  TensorF x_f = filtered_input(x);  // constant w.r.t. this step's graph
  auto s = model_.seg.forward(x_f, Branch::student);
  auto pl = pseudo_label(t.p_t);
  auto l_pl = loss_pl(pl, s.p, cfg_.tau);
  out.pl_model = l_pl.item();

  TensorF objective = l_pl;
  if (cfg_.alpha2 != 0.0) {
    auto l_li = loss_likelihood(model_.q, s.z, t.z_t);
    out.li = l_li.item();
    objective = add(objective, scale(l_li, static_cast<float>(cfg_.alpha2)));
  }
  if (cfg_.alpha3 != 0.0) {
    auto l_con = loss_con(s.z, t.z_t, cfg_.raw_cosine_consistency);
    out.con = l_con.item();
    objective = add(objective, scale(l_con, static_cast<float>(cfg_.alpha3)));
  }
  if (!std::isfinite(objective.item()))
    throw std::runtime_error("adapt: non-finite model objective at iteration " + std::to_string(iteration_) +
                             " (L_PL=" + std::to_string(out.pl_model) + ", L_Li=" + std::to_string(out.li) +
                             ", L_Con=" + std::to_string(out.con) + ")");
  opt_model_.zero_grad();
  objective.backward();
  opt_model_.step();
  return out;
}

IterationLosses AdaptSession::step_filter(const std::vector<int>& batch) {
  return do_step_filter(batch, teacher_forward(batch));
}

IterationLosses AdaptSession::step_model(const std::vector<int>& batch) {
  return do_step_model(batch, teacher_forward(batch));
}

void AdaptSession::step_ema() {
  auto teacher = model_.teacher_params();
  ema_update(teacher, model_.student_params(), cfg_.eta);
}

IterationLosses AdaptSession::run_iteration(const std::vector<int>& batch) {
  // one teacher pass per iteration; both steps consume the same pseudo-labels
  const TeacherOut t = teacher_forward(batch);
  IterationLosses l1 = do_step_filter(batch, t);
  IterationLosses l2 = do_step_model(batch, t);
  step_ema();
  ++iteration_;
  IterationLosses out;
  out.pl_filter = l1.pl_filter;
  out.mi = l1.mi;
  out.pl_model = l2.pl_model;
  out.li = l2.li;
  out.con = l2.con;
  return out;
}

Checkpoint adapt(const std::vector<Sample>& target, const Checkpoint& source, const AdaptConfig& cfg,
                 const std::filesystem::path& log_csv) {
  AdaptSession session(source, target, cfg);
  std::ofstream log;
  if (!log_csv.empty()) {
    log.open(log_csv);
    check(log.good(), "adapt: cannot open log '" + log_csv.string() + "'");
    log << "epoch,loss_pl,loss_mi,loss_li,loss_con,lr\n";
  }
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    session.start_epoch(epoch);
    IterationLosses acc;
    const int iters = session.iterations_per_epoch();
    for (int i = 0; i < iters; ++i) {
      auto l = session.run_iteration(session.next_batch());
      acc.pl_model += l.pl_model;
      acc.mi += l.mi;
      acc.li += l.li;
      acc.con += l.con;
    }
    if (log.is_open()) {
      char buf[200];
      std::snprintf(buf, sizeof(buf), "%d,%.9f,%.9f,%.9f,%.9f,%.9f\n", epoch, acc.pl_model / iters, acc.mi / iters,
                    acc.li / iters, acc.con / iters, lr_at_epoch(cfg.lr, epoch, std::max(1, cfg.epochs)));
      log << buf;
    }
  }
  return session.checkpoint();
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

EvalResult evaluate(const Checkpoint& ckpt, const std::vector<Sample>& dataset, bool use_filter) {
  Model model = Model::from_checkpoint(ckpt);
  return eval_model(model, dataset, use_filter);
}

double mean_edge_gradient(const Checkpoint& ckpt, const std::vector<Sample>& dataset, bool use_filter) {
  Model model = Model::from_checkpoint(ckpt);
  for (const auto& s : dataset)
    check(s.has_mask(), "edge gradient: sample '" + s.id + "' has no mask");
  require_uniform(dataset, model.cfg, "edge gradient");
  NoGradGuard ng;
  const int size = model.cfg.image_size;
  double total = 0.0;
  std::int64_t count = 0;
  for (const auto& s : dataset) {
    TensorF x(Shape{1, model.cfg.in_channels, size, size}, std::vector<float>(s.image));
    if (use_filter)
      x = model.cfg.use_fixed_mask() ? fixed_filtered(x, model.cfg.fixed_mask_threshold)
                                     : model.filter.forward(x).filtered;
    // 2-px Chebyshev band around foreground
    std::vector<std::uint8_t> band(s.mask.size(), 0);
    for (int y = 0; y < size; ++y)
      for (int xx = 0; xx < size; ++xx) {
        if (s.mask[static_cast<std::size_t>(y) * size + xx] == 0) continue;
        for (int dy = -2; dy <= 2; ++dy)
          for (int dx = -2; dx <= 2; ++dx) {
            const int py = y + dy, px = xx + dx;
            if (py >= 0 && px >= 0 && py < size && px < size) band[static_cast<std::size_t>(py) * size + px] = 1;
          }
      }
    const float* img = x.data().data();  // first channel
    for (int y = 1; y + 1 < size; ++y)
      for (int xx = 1; xx + 1 < size; ++xx) {
        if (!band[static_cast<std::size_t>(y) * size + xx]) continue;
        auto at = [&](int yy, int xc) { return static_cast<double>(img[yy * size + xc]); };
        const double gx = (at(y - 1, xx + 1) + 2 * at(y, xx + 1) + at(y + 1, xx + 1)) -
                          (at(y - 1, xx - 1) + 2 * at(y, xx - 1) + at(y + 1, xx - 1));
        const double gy = (at(y + 1, xx - 1) + 2 * at(y + 1, xx) + at(y + 1, xx + 1)) -
                          (at(y - 1, xx - 1) + 2 * at(y - 1, xx) + at(y - 1, xx + 1));
        total += std::sqrt(gx * gx + gy * gy);
        ++count;
      }
  }
  return count > 0 ? total / static_cast<double>(count) : 0.0;
}

void export_filter_map(const Checkpoint& ckpt, const Sample& sample, const std::filesystem::path& file) {
  Model model = Model::from_checkpoint(ckpt);
  NoGradGuard ng;
  TensorF x(Shape{1, model.cfg.in_channels, sample.height, sample.width}, std::vector<float>(sample.image));
  FilterMap<float> map = model.cfg.use_fixed_mask()
                             ? tile_mask(fixed_highpass_mask<float>(sample.height, sample.width,
                                                                    model.cfg.fixed_mask_threshold),
                                         1, model.cfg.in_channels)
                             : model.filter.forward(x).map;
  Gray8 img;
  img.width = sample.width;
  img.height = sample.height;
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(map.mask.data()[i], 0.f, 1.f) * 255.f));
  write_gray8(file, img);
}

}  // namespace aif
