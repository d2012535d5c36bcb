#pragma once

#include "segfusion/error.hpp"
#include "segfusion/grid.hpp"
#include "segfusion/core.hpp"
#include "segfusion/geometry.hpp"
#include "segfusion/prediction.hpp"
#include "segfusion/labels.hpp"
#include "segfusion/segmentation.hpp"
#include "segfusion/mapping.hpp"
#include "segfusion/semfusion.hpp"
#include "segfusion/image_io.hpp"
#include "segfusion/formats.hpp"
#include "segfusion/config.hpp"
#include "segfusion/palette.hpp"
#include "segfusion/synthetic.hpp"
#include "segfusion/pipeline.hpp"
#include "segfusion/export.hpp"
#include "segfusion/benchmark.hpp"
