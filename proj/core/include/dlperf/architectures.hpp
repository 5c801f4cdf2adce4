#pragma once

#include <string>
#include <vector>

#include "dlperf/graph.hpp"

namespace dlperf {

// Named topologies. Full-size nets (alexnet-2012, vgg-19, googlenet-2014)
// are built symbolically: specs and shapes only, parameters allocatable on
// demand via allocate_parameters. The mini nets are desk-scale trainable and
// accept square inputs of 32-64 px.
//
// alexnet-2012 fixes 3x227x227 input, vgg-19 and googlenet-2014 fix
// 3x224x224.
NetworkGraph build_architecture(const std::string& name, int class_count,
                                const std::vector<int64_t>& input_shape);

std::vector<std::string> architecture_names();

// Longest path through parameterized layers (the depth convention used for
// inception-style nets, where a reduce+conv pair counts as two).
int parameter_depth(const NetworkGraph& net);

// googlenet-2014 trains with two auxiliary classifier heads that are dropped
// at deployment. They are not part of the single-sink graph; their parameter
// cost is reported separately so both counts can be shown.
int64_t googlenet_aux_parameter_count(int class_count);

}  // namespace dlperf
