#pragma once

#include "vicnn/adam.hpp"
#include "vicnn/checkpoint.hpp"
#include "vicnn/data.hpp"
#include "vicnn/error.hpp"
#include "vicnn/eval.hpp"
#include "vicnn/gradcheck.hpp"
#include "vicnn/hash.hpp"
#include "vicnn/image_io.hpp"
#include "vicnn/model.hpp"
#include "vicnn/ops.hpp"
#include "vicnn/pipeline.hpp"
#include "vicnn/report.hpp"
#include "vicnn/stimuli.hpp"
#include "vicnn/tensor.hpp"
#include "vicnn/trainer.hpp"
#include "vicnn/zoo.hpp"
