#pragma once

#include <cstdint>
#include <string>

// Hyperparameters for pre-training, adaptation and evaluation. Defaults
// follow the training recipe: Adam lr 0.001, batch 2, tau 0.8,
// alpha = (0.5, 1, 1), EMA eta 0.9995, learning rate constant for the first
// half of the epochs then linear to zero.

namespace aif {

struct AdaptConfig {
  double tau = 0.8;
  double alpha1 = 0.5;
  double alpha2 = 1.0;
  double alpha3 = 1.0;
  double eta = 0.9995;
  double lr = 0.001;
  int batch_size = 2;
  int epochs = 40;
  std::uint64_t seed = 0;
  int image_size = 64;
  int num_classes = 2;
  int in_channels = 1;
  int seg_base_width = 8;
  int filter_base_width = 2;
  int q_hidden = 1024;
  double val_fraction = 0.0;          // source pre-training early-stop split; 0 = off
  bool raw_cosine_consistency = false;  // printed Eq.-9 sign instead of the negated default
  double fixed_mask_threshold = -1.0;   // >= 0: replace the learned filter by a fixed high-pass

  bool use_fixed_mask() const { return fixed_mask_threshold >= 0.0; }
  int embed_dim() const { return 4 * seg_base_width; }

  void validate() const;
  std::string to_json() const;
  static AdaptConfig from_json(const std::string& text);
};

// lr0 for the first half of the epochs, then linearly down to 0 at the end
// of training (the last epoch still trains with lr0 / (epochs - epochs/2)).
double lr_at_epoch(double lr0, int epoch, int total_epochs);

}  // namespace aif
