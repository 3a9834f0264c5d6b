#pragma once

#include "drr/csv.hpp"
#include "drr/errors.hpp"
#include "drr/geometry.hpp"
#include "drr/parallel.hpp"
#include "drr/pipeline.hpp"
#include "drr/png_io.hpp"
#include "drr/provenance.hpp"
#include "drr/render.hpp"
#include "drr/siddon.hpp"
#include "drr/stats.hpp"
#include "drr/study.hpp"
#include "drr/vec.hpp"
#include "drr/volume.hpp"
#include "drr/volume_io.hpp"
