#pragma once

// Everything at once. Prefer the individual headers in larger builds.

#include "vcod/errors.hpp"
#include "vcod/numerics.hpp"
#include "vcod/corrpyr.hpp"
#include "vcod/image_io.hpp"
#include "vcod/pseudolabel.hpp"
#include "vcod/metrics.hpp"
#include "vcod/losses.hpp"
#include "vcod/toynet/layers.hpp"
#include "vcod/toynet/synthetic.hpp"
#include "vcod/toynet/short_term.hpp"
#include "vcod/toynet/long_term.hpp"
#include "vcod/toynet/trainer.hpp"
#include "vcod/bench/config.hpp"
#include "vcod/bench/manifest.hpp"
#include "vcod/bench/pseudo.hpp"
#include "vcod/bench/eval.hpp"
#include "vcod/bench/report.hpp"
#include "vcod/bench/toydemo.hpp"
