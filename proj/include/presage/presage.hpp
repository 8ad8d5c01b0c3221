#pragma once

// Umbrella header for the presage early-warning toolkit.

#include "presage/alphabet.hpp"
#include "presage/errors.hpp"
#include "presage/evaluation.hpp"
#include "presage/events.hpp"
#include "presage/higher_order.hpp"
#include "presage/ids_ingest.hpp"
#include "presage/io.hpp"
#include "presage/markov.hpp"
#include "presage/predictor.hpp"
#include "presage/rng.hpp"
#include "presage/semi_markov.hpp"
#include "presage/synth.hpp"
