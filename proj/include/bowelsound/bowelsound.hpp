#pragma once

#include "bowelsound/cnn/architecture.hpp"
#include "bowelsound/cnn/layers.hpp"
#include "bowelsound/cnn/model.hpp"
#include "bowelsound/cnn/serialize.hpp"
#include "bowelsound/cnn/train.hpp"
#include "bowelsound/error.hpp"
#include "bowelsound/hsmm.hpp"
#include "bowelsound/labels.hpp"
#include "bowelsound/lopocv.hpp"
#include "bowelsound/metrics.hpp"
#include "bowelsound/mfcc.hpp"
#include "bowelsound/rng.hpp"
#include "bowelsound/sequence.hpp"
#include "bowelsound/signal_io.hpp"
#include "bowelsound/synth.hpp"
#include "bowelsound/text.hpp"
