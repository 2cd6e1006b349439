// Copyright Contributors to the splatsr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatsr/config.hpp"
#include "splatsr/dataset.hpp"
#include "splatsr/error.hpp"
#include "splatsr/geometry.hpp"
#include "splatsr/harness.hpp"
#include "splatsr/image.hpp"
#include "splatsr/image_ops.hpp"
#include "splatsr/objective.hpp"
#include "splatsr/png_io.hpp"
#include "splatsr/prior.hpp"
#include "splatsr/renderer.hpp"
#include "splatsr/scene.hpp"
#include "splatsr/scene_io.hpp"
#include "splatsr/trainer.hpp"
