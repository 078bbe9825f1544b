#pragma once

// Umbrella header: the flow model of neural networks. Plain nets decompose
// into continuous transport flows (rotation / stretch / rotation /
// translation / activation segments per layer); ResNets are Euler
// discretizations of the characteristic ODE; flows re-discretize back into
// explicit ResNet blocks.

#include "flownet/actflow.hpp"
#include "flownet/error.hpp"
#include "flownet/flowmodel.hpp"
#include "flownet/integrate.hpp"
#include "flownet/linalg.hpp"
#include "flownet/lindecomp.hpp"
#include "flownet/net_json.hpp"
#include "flownet/nettypes.hpp"
#include "flownet/rediscretize.hpp"
#include "flownet/timescale.hpp"
#include "flownet/velocity_field.hpp"
