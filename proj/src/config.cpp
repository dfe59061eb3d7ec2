#include "aif/config.hpp"

#include "json.hpp"

#include "aif/common.hpp"

namespace aif {

using nlohmann::json;

void AdaptConfig::validate() const {
  check(tau >= 0.0 && tau <= 1.0, "config: tau must lie in [0,1]");
  check(eta >= 0.0 && eta <= 1.0, "config: eta must lie in [0,1]");
  check(lr >= 0.0, "config: lr must be >= 0");
  check(batch_size >= 1, "config: batch_size must be >= 1");
  check(epochs >= 0, "config: epochs must be >= 0");
  check(image_size >= 8 && image_size % 4 == 0, "config: image_size must be >= 8 and divisible by 4");
  check(num_classes >= 2, "config: num_classes must be >= 2");
  check(in_channels >= 1, "config: in_channels must be >= 1");
  check(seg_base_width >= 1 && filter_base_width >= 1, "config: widths must be >= 1");
  check(q_hidden >= 1, "config: q_hidden must be >= 1");
  check(val_fraction >= 0.0 && val_fraction < 1.0, "config: val_fraction must lie in [0,1)");
  check(fixed_mask_threshold < 0.0 || fixed_mask_threshold <= 1.0,
        "config: fixed_mask_threshold must be in [0,1] (or negative to disable)");
}

std::string AdaptConfig::to_json() const {
  json j;
  j["tau"] = tau;
  j["alpha1"] = alpha1;
  j["alpha2"] = alpha2;
  j["alpha3"] = alpha3;
  j["eta"] = eta;
  j["lr"] = lr;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["seed"] = seed;
  j["image_size"] = image_size;
  j["num_classes"] = num_classes;
  j["in_channels"] = in_channels;
  j["seg_base_width"] = seg_base_width;
  j["filter_base_width"] = filter_base_width;
  j["q_hidden"] = q_hidden;
  j["val_fraction"] = val_fraction;
  j["raw_cosine_consistency"] = raw_cosine_consistency;
  j["fixed_mask_threshold"] = fixed_mask_threshold;
  return j.dump(2);
}

AdaptConfig AdaptConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  AdaptConfig c;
  c.tau = j.value("tau", c.tau);
  c.alpha1 = j.value("alpha1", c.alpha1);
  c.alpha2 = j.value("alpha2", c.alpha2);
  c.alpha3 = j.value("alpha3", c.alpha3);
  c.eta = j.value("eta", c.eta);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.image_size = j.value("image_size", c.image_size);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.seg_base_width = j.value("seg_base_width", c.seg_base_width);
  c.filter_base_width = j.value("filter_base_width", c.filter_base_width);
  c.q_hidden = j.value("q_hidden", c.q_hidden);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  c.raw_cosine_consistency = j.value("raw_cosine_consistency", c.raw_cosine_consistency);
  c.fixed_mask_threshold = j.value("fixed_mask_threshold", c.fixed_mask_threshold);
  c.validate();
  return c;
}

double lr_at_epoch(double lr0, int epoch, int total_epochs) {
  check(total_epochs >= 1 && epoch >= 0 && epoch < total_epochs, "lr_at_epoch: epoch out of range");
  const int half = total_epochs / 2;
  if (epoch < half) return lr0;
  return lr0 * static_cast<double>(total_epochs - epoch) / static_cast<double>(total_epochs - half);
}

}  // namespace aif
