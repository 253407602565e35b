#pragma once

#include "fdia/error.hpp"
#include "fdia/grid/network.hpp"
#include "fdia/grid/case_io.hpp"
#include "fdia/powerflow/newton.hpp"
#include "fdia/powerflow/load_profile.hpp"
#include "fdia/estimation/wls.hpp"
#include "fdia/attack/attack.hpp"
#include "fdia/io/binary.hpp"
#include "fdia/dataset/window.hpp"
#include "fdia/dataset/normalizer.hpp"
#include "fdia/dataset/container.hpp"
#include "fdia/neural/lstm.hpp"
#include "fdia/neural/dae.hpp"
#include "fdia/neural/train.hpp"
#include "fdia/neural/model_io.hpp"
#include "fdia/pipeline/pipeline.hpp"
