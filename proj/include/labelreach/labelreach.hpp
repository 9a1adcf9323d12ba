#pragma once

#include "labelreach/error.hpp"
#include "labelreach/infer.hpp"
#include "labelreach/metrics.hpp"
#include "labelreach/models/classifier.hpp"
#include "labelreach/models/context.hpp"
#include "labelreach/models/forest.hpp"
#include "labelreach/models/gbt.hpp"
#include "labelreach/models/logreg.hpp"
#include "labelreach/models/model_io.hpp"
#include "labelreach/models/tile.hpp"
#include "labelreach/models/tree.hpp"
#include "labelreach/prep.hpp"
#include "labelreach/raster.hpp"
#include "labelreach/report.hpp"
#include "labelreach/run_config.hpp"
#include "labelreach/synth.hpp"
