#pragma once

#include "centroid_reg/binary_io.hpp"
#include "centroid_reg/config.hpp"
#include "centroid_reg/dataset.hpp"
#include "centroid_reg/errors.hpp"
#include "centroid_reg/experiment.hpp"
#include "centroid_reg/model.hpp"
#include "centroid_reg/numerics.hpp"
#include "centroid_reg/optimizer.hpp"
#include "centroid_reg/plot.hpp"
#include "centroid_reg/semantics.hpp"
#include "centroid_reg/synth.hpp"
#include "centroid_reg/trainer.hpp"
