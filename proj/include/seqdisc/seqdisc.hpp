#pragma once

#include "beam.hpp"
#include "context.hpp"
#include "core.hpp"
#include "decode.hpp"
#include "error.hpp"
#include "frame_scores.hpp"
#include "io.hpp"
#include "lattice.hpp"
#include "lattice_free.hpp"
#include "lm.hpp"
#include "logmath.hpp"
#include "losses.hpp"
#include "scorer.hpp"
#include "synthetic.hpp"
#include "trainer.hpp"
