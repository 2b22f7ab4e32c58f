#pragma once

#include "ecgmi/augment.hpp"
#include "ecgmi/config.hpp"
#include "ecgmi/dataset.hpp"
#include "ecgmi/error.hpp"
#include "ecgmi/eval.hpp"
#include "ecgmi/filter.hpp"
#include "ecgmi/image.hpp"
#include "ecgmi/label.hpp"
#include "ecgmi/nn/checkpoint.hpp"
#include "ecgmi/nn/layers.hpp"
#include "ecgmi/nn/network.hpp"
#include "ecgmi/nn/tensor.hpp"
#include "ecgmi/nn/trainer.hpp"
#include "ecgmi/peaks.hpp"
#include "ecgmi/pipeline.hpp"
#include "ecgmi/qgsvm.hpp"
#include "ecgmi/raster.hpp"
#include "ecgmi/segment.hpp"
#include "ecgmi/synthetic.hpp"
#include "ecgmi/wfdb.hpp"
