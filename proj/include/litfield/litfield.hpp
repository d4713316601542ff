#pragma once

#include "litfield/error.hpp"
#include "litfield/image.hpp"
#include "litfield/geometry.hpp"
#include "litfield/capture.hpp"
#include "litfield/nearfield.hpp"
#include "litfield/icp.hpp"
#include "litfield/farfield.hpp"
#include "litfield/session.hpp"
#include "litfield/protocol.hpp"
#include "litfield/service.hpp"
#include "litfield/scene.hpp"
#include "litfield/metrics.hpp"
#include "litfield/dataset.hpp"
