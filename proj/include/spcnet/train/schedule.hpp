#pragma once

#include <vector>

#include "spcnet/common.hpp"

namespace spc {

/// Step schedule: base learning rate dropped by decay_factor at each
/// milestone epoch. Defaults follow the reference recipe: 1e-3 dropped by
/// 10x at epochs 120 and 150 over a 170-epoch run, batch size 48.
struct OptimizerSchedule {
  double base_lr = 1e-3;
  std::vector<int> milestones = {120, 150};
  double decay_factor = 0.1;
  int total_epochs = 170;
  int batch_size = 48;
  double rmsprop_alpha = 0.99;
  double rmsprop_eps = 1e-8;

  void validate() const {
    SPC_CHECK(base_lr > 0, "OptimizerSchedule: base_lr must be positive");
    SPC_CHECK(decay_factor > 0 && decay_factor < 1,
              "OptimizerSchedule: decay_factor must be in (0,1)");
    SPC_CHECK(total_epochs >= 0, "OptimizerSchedule: negative epoch count");
    SPC_CHECK(batch_size >= 1, "OptimizerSchedule: batch_size must be >= 1");
    for (size_t i = 0; i < milestones.size(); ++i) {
      SPC_CHECK(milestones[i] < total_epochs, "OptimizerSchedule: milestone ", milestones[i],
                " not below total_epochs ", total_epochs);
      if (i > 0)
        SPC_CHECK(milestones[i] > milestones[i - 1],
                  "OptimizerSchedule: milestones must be strictly increasing");
    }
  }
};

inline double lr_at_epoch(const OptimizerSchedule& sched, int epoch) {
  SPC_CHECK(epoch >= 0 && epoch < sched.total_epochs, "lr_at_epoch: epoch ", epoch,
            " outside [0, ", sched.total_epochs, ")");
  double lr = sched.base_lr;
  for (int m : sched.milestones)
    if (m <= epoch) lr *= sched.decay_factor;
  return lr;
}

}  // namespace spc
