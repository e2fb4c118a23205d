#pragma once

// Umbrella header for the fault-tolerant convolution engine.

#include "ftconv/checksums.hpp"
#include "ftconv/conv.hpp"
#include "ftconv/errors.hpp"
#include "ftconv/fault.hpp"
#include "ftconv/model.hpp"
#include "ftconv/replay.hpp"
#include "ftconv/report.hpp"
#include "ftconv/schemes.hpp"
#include "ftconv/serialize.hpp"
#include "ftconv/tensor.hpp"
#include "ftconv/workflow.hpp"
