#pragma once

#include "relm/arch.hpp"
#include "relm/bench.hpp"
#include "relm/bptt.hpp"
#include "relm/cost_model.hpp"
#include "relm/dataset.hpp"
#include "relm/errors.hpp"
#include "relm/format.hpp"
#include "relm/hgen.hpp"
#include "relm/lsq.hpp"
#include "relm/parallel.hpp"
#include "relm/probe.hpp"
#include "relm/synth.hpp"
#include "relm/tensor.hpp"
#include "relm/trainer.hpp"
