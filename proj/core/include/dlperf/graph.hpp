#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dlperf/kernels.hpp"
#include "dlperf/tensor.hpp"

namespace dlperf {

enum class LayerKind { conv, fc, relu, maxpool, avgpool, lrn, softmax, concat, flatten, dropout };

const char* to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& s);

// One node of the network DAG. `inputs` lists predecessor layer ids; a layer
// with no inputs is the graph source and receives the batch.
struct LayerSpec {
  std::string id;
  LayerKind kind = LayerKind::relu;
  std::vector<std::string> inputs;

  ConvParams conv;           // conv (in_channels resolved from the graph)
  int fc_out = 0;            // fc
  int window = 0;            // maxpool / avgpool
  int stride = 0;
  int pool_pad = 0;          // maxpool only
  LrnParams lrn;             // lrn
  double dropout_rate = 0.5; // dropout

  bool trainable() const { return kind == LayerKind::conv || kind == LayerKind::fc; }
};

struct LayerParams {
  Tensor weights;
  Tensor bias;
};

struct NetworkGraph {
  std::vector<LayerSpec> layers;  // topological order
  std::unordered_map<std::string, LayerParams> params;
  int class_count = 0;
  std::vector<int64_t> input_shape;  // per-sample {C, H, W}

  const LayerSpec* find(const std::string& id) const;
};

// Validation + symbolic shape inference. Checks the DAG invariants (ids
// unique and resolvable, topological order, single source and sink, concat
// agreement) and resolves conv in_channels. Throws GraphError naming the
// offending layer.
struct GraphInfo {
  // Per-sample output shape per layer ({C,H,W} or {D}).
  std::unordered_map<std::string, std::vector<int64_t>> shapes;
  std::string source;
  std::string sink;
  // conv in_channels resolved from predecessor shapes.
  std::unordered_map<std::string, int> conv_in_channels;
};
GraphInfo analyze(const NetworkGraph& net);
void validate(const NetworkGraph& net);

class GraphError : public std::runtime_error {
 public:
  explicit GraphError(const std::string& what) : std::runtime_error(what) {}
};

// Parameter shapes per trainable layer in topological order, derived
// symbolically (no allocation).
struct ParamShape {
  std::string id;
  std::vector<int64_t> weights;
  std::vector<int64_t> bias;
};
std::vector<ParamShape> parameter_shapes(const NetworkGraph& net);

int64_t param_count(const NetworkGraph& net);

// He-normal for conv, Xavier-uniform for fc, zero biases. Streams are keyed
// by (seed, layer id), so adding layers does not shift unrelated draws.
void allocate_parameters(NetworkGraph& net, uint64_t seed);

int count_layers(const NetworkGraph& net, std::span<const LayerKind> kinds);

struct ForwardOptions {
  bool training = false;
  uint64_t dropout_seed = 0;
  // Global sample ids per batch row; dropout masks are keyed by sample id, so
  // a sample's mask does not depend on how the batch is assembled. Defaults
  // to the row index.
  std::span<const int64_t> sample_ids = {};
};

struct ForwardResult {
  Tensor input;
  std::unordered_map<std::string, Tensor> outputs;
  std::unordered_map<std::string, std::vector<int64_t>> pool_argmax;
  std::unordered_map<std::string, Tensor> dropout_mask;
  std::string sink;

  const Tensor& output() const { return outputs.at(sink); }
};

ForwardResult forward(const NetworkGraph& net, const Tensor& batch,
                      const ForwardOptions& opts = {});

using GradMap = std::map<std::string, LayerParams>;

struct BackwardResult {
  GradMap grads;  // per trainable layer
  double loss = 0.0;
};

// Requires a softmax sink; the cross-entropy gradient is fused with the
// softmax (grad at its input is (probs - onehot) / N).
BackwardResult backward(const NetworkGraph& net, const ForwardResult& fwd,
                        std::span<const int> labels);

}  // namespace dlperf
