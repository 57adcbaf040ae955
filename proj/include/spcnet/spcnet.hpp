#pragma once

// Umbrella header for the SPCNet pose-estimation toolkit.

#include "spcnet/codec.hpp"
#include "spcnet/config.hpp"
#include "spcnet/data/annotations.hpp"
#include "spcnet/data/augment.hpp"
#include "spcnet/data/image.hpp"
#include "spcnet/data/synthetic.hpp"
#include "spcnet/eval/metrics.hpp"
#include "spcnet/eval/overlay.hpp"
#include "spcnet/joints.hpp"
#include "spcnet/nn/spcnet.hpp"
#include "spcnet/train/checkpoint.hpp"
#include "spcnet/train/trainer.hpp"
