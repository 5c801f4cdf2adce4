#include "dlperf/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "dlperf/rng.hpp"

namespace dlperf {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::fc: return "fc";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::lrn: return "lrn";
    case LayerKind::softmax: return "softmax";
    case LayerKind::concat: return "concat";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dropout: return "dropout";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
  static const std::map<std::string, LayerKind> table = {
      {"conv", LayerKind::conv},       {"fc", LayerKind::fc},
      {"relu", LayerKind::relu},       {"maxpool", LayerKind::maxpool},
      {"avgpool", LayerKind::avgpool}, {"lrn", LayerKind::lrn},
      {"softmax", LayerKind::softmax}, {"concat", LayerKind::concat},
      {"flatten", LayerKind::flatten}, {"dropout", LayerKind::dropout}};
  auto it = table.find(s);
  if (it == table.end()) throw GraphError("unknown layer kind '" + s + "'");
  return it->second;
}

const LayerSpec* NetworkGraph::find(const std::string& id) const {
  for (const auto& l : layers) {
    if (l.id == id) return &l;
  }
  return nullptr;
}

namespace {

[[noreturn]] void fail(const std::string& layer, const std::string& msg) {
  throw GraphError("layer '" + layer + "': " + msg);
}

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

GraphInfo analyze(const NetworkGraph& net) {
  if (net.layers.empty()) throw GraphError("graph has no layers");
  if (net.input_shape.size() != 3) {
    throw GraphError("graph input_shape must be {C,H,W}, got " +
                     shape_to_string(net.input_shape));
  }
  if (net.class_count < 2) throw GraphError("graph class_count must be >= 2");

  GraphInfo info;
  std::set<std::string> seen;
  std::set<std::string> consumed;
  for (const auto& l : net.layers) {
    if (l.id.empty()) throw GraphError("layer with empty id");
    if (!seen.insert(l.id).second) fail(l.id, "duplicate id");
  }

  // Layers are stored topologically: inputs must precede their consumers.
  std::set<std::string> defined;
  int sources = 0;
  for (const auto& l : net.layers) {
    if (l.inputs.empty()) {
      ++sources;
      if (sources > 1) fail(l.id, "second source layer (only one layer may take the batch)");
      info.source = l.id;
    }
    for (const auto& in : l.inputs) {
      if (in == l.id) fail(l.id, "self input");
      if (!defined.count(in)) {
        fail(l.id, net.find(in) ? "input '" + in + "' appears after this layer (order not topological)"
                                : "unknown input '" + in + "'");
      }
      consumed.insert(in);
    }
    defined.insert(l.id);
  }
  if (sources == 0) throw GraphError("graph has no source layer");

  int sinks = 0;
  for (const auto& l : net.layers) {
    if (!consumed.count(l.id)) {
      ++sinks;
      info.sink = l.id;
    }
  }
  if (sinks != 1) throw GraphError("graph must have exactly one sink, found " +
                                   std::to_string(sinks));

  auto shape_of = [&](const LayerSpec& l, size_t i) -> const std::vector<int64_t>& {
    return l.inputs.empty() ? net.input_shape : info.shapes.at(l.inputs[i]);
  };

  for (const auto& l : net.layers) {
    if (l.kind != LayerKind::concat && l.inputs.size() > 1) {
      fail(l.id, "multiple inputs only allowed for concat");
    }
    std::vector<int64_t> out;
    const auto& in = shape_of(l, 0);
    switch (l.kind) {
      case LayerKind::conv: {
        if (in.size() != 3) fail(l.id, "conv input must be {C,H,W}, got " + shape_to_string(in));
        ConvParams p = l.conv;
        p.in_channels = static_cast<int>(in[0]);
        info.conv_in_channels[l.id] = p.in_channels;
        try {
          auto o = conv2d_output_shape({1, in[0], in[1], in[2]}, p);
          out = {o[1], o[2], o[3]};
        } catch (const ShapeError& e) {
          fail(l.id, e.what());
        }
        break;
      }
      case LayerKind::fc: {
        if (in.size() != 1) fail(l.id, "fc input must be flat, got " + shape_to_string(in) +
                                           " (insert a flatten layer)");
        if (l.fc_out < 1) fail(l.id, "fc out features must be >= 1");
        out = {l.fc_out};
        break;
      }
      case LayerKind::relu:
      case LayerKind::dropout:
        out = in;
        break;
      case LayerKind::lrn:
        if (in.size() != 3) fail(l.id, "lrn input must be {C,H,W}");
        out = in;
        break;
      case LayerKind::maxpool:
      case LayerKind::avgpool: {
        if (in.size() != 3) fail(l.id, "pool input must be {C,H,W}");
        const int pad = l.kind == LayerKind::maxpool ? l.pool_pad : 0;
        if (l.window < 1 || l.stride < 1) fail(l.id, "pool window/stride must be >= 1");
        if (l.window > in[1] + 2 * pad || l.window > in[2] + 2 * pad) {
          fail(l.id, "pool window " + std::to_string(l.window) + " larger than input " +
                         shape_to_string(in));
        }
        out = {in[0], (in[1] + 2 * pad - l.window) / l.stride + 1,
               (in[2] + 2 * pad - l.window) / l.stride + 1};
        if (out[1] < 1 || out[2] < 1) fail(l.id, "pool output not positive");
        break;
      }
      case LayerKind::softmax: {
        if (in.size() != 1) fail(l.id, "softmax input must be flat, got " + shape_to_string(in));
        out = in;
        break;
      }
      case LayerKind::concat: {
        if (l.inputs.size() < 2) fail(l.id, "concat needs at least two inputs");
        out = shape_of(l, 0);
        if (out.size() != 3) fail(l.id, "concat inputs must be {C,H,W}");
        for (size_t i = 1; i < l.inputs.size(); ++i) {
          const auto& s = shape_of(l, i);
          if (s.size() != 3 || s[1] != out[1] || s[2] != out[2]) {
            fail(l.id, "concat input '" + l.inputs[i] + "' shape " + shape_to_string(s) +
                           " does not match " + shape_to_string(out) + " except channels");
          }
          out[0] += s[0];
        }
        break;
      }
      case LayerKind::flatten: {
        if (in.size() != 3) fail(l.id, "flatten input must be {C,H,W}");
        out = {in[0] * in[1] * in[2]};
        break;
      }
    }
    info.shapes[l.id] = std::move(out);
  }

  const auto& sink_shape = info.shapes.at(info.sink);
  if (sink_shape.size() != 1 || sink_shape[0] != net.class_count) {
    throw GraphError("sink '" + info.sink + "' output " + shape_to_string(sink_shape) +
                     " does not match class_count " + std::to_string(net.class_count));
  }
  return info;
}

void validate(const NetworkGraph& net) { (void)analyze(net); }

std::vector<ParamShape> parameter_shapes(const NetworkGraph& net) {
  GraphInfo info = analyze(net);
  std::vector<ParamShape> out;
  for (const auto& l : net.layers) {
    if (l.kind == LayerKind::conv) {
      const int in_ch = info.conv_in_channels.at(l.id);
      out.push_back({l.id,
                     {l.conv.out_channels, in_ch, l.conv.kernel_h, l.conv.kernel_w},
                     {l.conv.out_channels}});
    } else if (l.kind == LayerKind::fc) {
      const auto& in = l.inputs.empty() ? net.input_shape : info.shapes.at(l.inputs[0]);
      out.push_back({l.id, {in[0], l.fc_out}, {l.fc_out}});
    }
  }
  return out;
}

int64_t param_count(const NetworkGraph& net) {
  int64_t total = 0;
  for (const auto& ps : parameter_shapes(net)) {
    total += shape_product(ps.weights) + shape_product(ps.bias);
  }
  return total;
}

void allocate_parameters(NetworkGraph& net, uint64_t seed) {
  net.params.clear();
  for (const auto& ps : parameter_shapes(net)) {
    Rng rng(seed_combine(seed, fnv1a(ps.id)));
    LayerParams lp;
    lp.weights = Tensor(ps.weights);
    lp.bias = Tensor(ps.bias);
    if (ps.weights.size() == 4) {
      // conv: He-normal over fan_in
      const double fan_in = static_cast<double>(ps.weights[1] * ps.weights[2] * ps.weights[3]);
      const double stddev = std::sqrt(2.0 / fan_in);
      for (auto& v : lp.weights.values()) v = rng.normal(0.0, stddev);
    } else {
      // fc: Xavier-uniform over fan_in + fan_out
      const double limit = std::sqrt(6.0 / static_cast<double>(ps.weights[0] + ps.weights[1]));
      for (auto& v : lp.weights.values()) v = rng.uniform(-limit, limit);
    }
    net.params.emplace(ps.id, std::move(lp));
  }
}

int count_layers(const NetworkGraph& net, std::span<const LayerKind> kinds) {
  int n = 0;
  for (const auto& l : net.layers) {
    for (LayerKind k : kinds) {
      if (l.kind == k) {
        ++n;
        break;
      }
    }
  }
  return n;
}

namespace {

const LayerParams& params_of(const NetworkGraph& net, const std::string& id) {
  auto it = net.params.find(id);
  if (it == net.params.end()) fail(id, "no parameters allocated");
  return it->second;
}

Tensor make_dropout_mask(const LayerSpec& l, const Tensor& in, const ForwardOptions& opts) {
  Tensor mask(in.shape());
  const int64_t n = in.dim(0);
  const int64_t per = in.size() / n;
  const double keep = 1.0 - l.dropout_rate;
  const double scale = 1.0 / keep;
  const uint64_t layer_tag = fnv1a(l.id);
  for (int64_t row = 0; row < n; ++row) {
    const int64_t sid = opts.sample_ids.empty() ? row
                                                : opts.sample_ids[static_cast<size_t>(row)];
    Rng rng(seed_combine(seed_combine(opts.dropout_seed, static_cast<uint64_t>(sid)), layer_tag));
    double* m = mask.data() + row * per;
    for (int64_t i = 0; i < per; ++i) m[i] = rng.uniform() < keep ? scale : 0.0;
  }
  return mask;
}

Tensor to_batch4(const Tensor& t, const std::vector<int64_t>& per_sample) {
  // View a batch tensor under a per-sample shape: {N} + per_sample.
  std::vector<int64_t> s;
  s.push_back(t.dim(0));
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  return Tensor(s, t.values());
}

}  // namespace

ForwardResult forward(const NetworkGraph& net, const Tensor& batch, const ForwardOptions& opts) {
  GraphInfo info = analyze(net);
  if (batch.rank() != 4 || std::vector<int64_t>(batch.shape().begin() + 1, batch.shape().end()) !=
                               net.input_shape) {
    throw GraphError("batch shape " + batch.shape_str() + " does not match input shape N x " +
                     shape_to_string(net.input_shape));
  }
  if (!opts.sample_ids.empty() &&
      static_cast<int64_t>(opts.sample_ids.size()) != batch.dim(0)) {
    throw GraphError("sample_ids length does not match batch size");
  }

  ForwardResult res;
  res.input = batch;
  res.sink = info.sink;
  const int64_t n = batch.dim(0);

  auto input_of = [&](const LayerSpec& l, size_t i) -> const Tensor& {
    return l.inputs.empty() ? res.input : res.outputs.at(l.inputs[i]);
  };

  for (const auto& l : net.layers) {
    const Tensor& in = input_of(l, 0);
    Tensor out;
    try {
      switch (l.kind) {
        case LayerKind::conv: {
          ConvParams p = l.conv;
          p.in_channels = info.conv_in_channels.at(l.id);
          const auto& lp = params_of(net, l.id);
          out = conv2d_forward(in, lp.weights, lp.bias, p);
          break;
        }
        case LayerKind::fc: {
          const auto& lp = params_of(net, l.id);
          out = fc_forward(in, lp.weights, lp.bias);
          break;
        }
        case LayerKind::relu:
          out = relu(in);
          break;
        case LayerKind::maxpool: {
          auto pr = maxpool2d_forward(in, l.window, l.stride, l.pool_pad);
          res.pool_argmax[l.id] = std::move(pr.argmax);
          out = std::move(pr.output);
          break;
        }
        case LayerKind::avgpool:
          out = avgpool2d_forward(in, l.window, l.stride);
          break;
        case LayerKind::lrn:
          out = lrn_forward(in, l.lrn);
          break;
        case LayerKind::softmax:
          out = softmax(in);
          break;
        case LayerKind::flatten: {
          out = Tensor({n, in.size() / n}, in.values());
          break;
        }
        case LayerKind::concat: {
          const auto& out_shape = info.shapes.at(l.id);
          out = Tensor({n, out_shape[0], out_shape[1], out_shape[2]});
          const int64_t plane = out_shape[1] * out_shape[2];
          int64_t ch_off = 0;
          for (const auto& src_id : l.inputs) {
            const Tensor& src = res.outputs.at(src_id);
            const int64_t c = src.dim(1);
            for (int64_t img = 0; img < n; ++img) {
              std::copy_n(src.data() + img * c * plane, c * plane,
                          out.data() + (img * out_shape[0] + ch_off) * plane);
            }
            ch_off += c;
          }
          break;
        }
        case LayerKind::dropout: {
          if (opts.training && l.dropout_rate > 0.0) {
            Tensor mask = make_dropout_mask(l, in, opts);
            out = Tensor(in.shape());
            for (int64_t i = 0; i < in.size(); ++i) out[i] = in[i] * mask[i];
            res.dropout_mask[l.id] = std::move(mask);
          } else {
            out = in;
          }
          break;
        }
      }
    } catch (const ShapeError& e) {
      fail(l.id, e.what());
    }
    res.outputs[l.id] = std::move(out);
  }
  return res;
}

BackwardResult backward(const NetworkGraph& net, const ForwardResult& fwd,
                        std::span<const int> labels) {
  const LayerSpec* sink = net.find(fwd.sink);
  if (!sink || sink->kind != LayerKind::softmax) {
    throw GraphError("backward requires a softmax sink");
  }
  const Tensor& probs = fwd.output();
  const int64_t n = probs.dim(0), c = probs.dim(1);
  if (static_cast<int64_t>(labels.size()) != n) {
    throw GraphError("labels length " + std::to_string(labels.size()) + " != batch size " +
                     std::to_string(n));
  }

  BackwardResult res;
  res.loss = cross_entropy(probs, labels);

  GraphInfo info = analyze(net);
  std::unordered_map<std::string, Tensor> out_grad;
  auto accumulate = [&](const std::string& id, Tensor&& g) {
    auto it = out_grad.find(id);
    if (it == out_grad.end()) {
      out_grad.emplace(id, std::move(g));
    } else {
      Tensor& dst = it->second;
      for (int64_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
    }
  };

  // Fused softmax + cross-entropy: gradient lands on the softmax input.
  {
    Tensor g({n, c});
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < c; ++j) {
        const double y = (j == labels[static_cast<size_t>(i)]) ? 1.0 : 0.0;
        g[i * c + j] = (probs[i * c + j] - y) / static_cast<double>(n);
      }
    }
    if (sink->inputs.empty()) return res;  // degenerate single-layer graph
    accumulate(sink->inputs[0], std::move(g));
  }

  auto input_of = [&](const LayerSpec& l, size_t i) -> const Tensor& {
    return l.inputs.empty() ? fwd.input : fwd.outputs.at(l.inputs[i]);
  };

  for (auto it = net.layers.rbegin(); it != net.layers.rend(); ++it) {
    const LayerSpec& l = *it;
    if (l.kind == LayerKind::softmax) continue;
    auto git = out_grad.find(l.id);
    if (git == out_grad.end()) continue;  // no gradient reached this layer
    const Tensor& g = git->second;
    const Tensor& in = input_of(l, 0);

    switch (l.kind) {
      case LayerKind::conv: {
        ConvParams p = l.conv;
        p.in_channels = info.conv_in_channels.at(l.id);
        auto cg = conv2d_backward(g, in, params_of(net, l.id).weights, p);
        res.grads[l.id] = {std::move(cg.weights), std::move(cg.bias)};
        if (!l.inputs.empty()) accumulate(l.inputs[0], std::move(cg.input));
        break;
      }
      case LayerKind::fc: {
        auto fg = fc_backward(g, in, params_of(net, l.id).weights);
        res.grads[l.id] = {std::move(fg.weights), std::move(fg.bias)};
        if (!l.inputs.empty()) accumulate(l.inputs[0], std::move(fg.input));
        break;
      }
      case LayerKind::relu:
        if (!l.inputs.empty()) accumulate(l.inputs[0], relu_backward(g, in));
        break;
      case LayerKind::maxpool:
        if (!l.inputs.empty()) {
          accumulate(l.inputs[0],
                     maxpool2d_backward(g, fwd.pool_argmax.at(l.id), in.shape()));
        }
        break;
      case LayerKind::avgpool:
        if (!l.inputs.empty()) {
          accumulate(l.inputs[0], avgpool2d_backward(g, in.shape(), l.window, l.stride));
        }
        break;
      case LayerKind::lrn:
        if (!l.inputs.empty()) accumulate(l.inputs[0], lrn_backward(g, in, l.lrn));
        break;
      case LayerKind::flatten:
        if (!l.inputs.empty()) accumulate(l.inputs[0], Tensor(in.shape(), g.values()));
        break;
      case LayerKind::dropout: {
        if (l.inputs.empty()) break;
        auto mit = fwd.dropout_mask.find(l.id);
        if (mit == fwd.dropout_mask.end()) {
          accumulate(l.inputs[0], Tensor(g));
        } else {
          Tensor gi(in.shape());
          const Tensor& mask = mit->second;
          for (int64_t i = 0; i < gi.size(); ++i) gi[i] = g[i] * mask[i];
          accumulate(l.inputs[0], std::move(gi));
        }
        break;
      }
      case LayerKind::concat: {
        const int64_t nb = g.dim(0);
        const int64_t plane = g.dim(2) * g.dim(3);
        const int64_t total_ch = g.dim(1);
        int64_t ch_off = 0;
        for (const auto& src_id : l.inputs) {
          const Tensor& src = fwd.outputs.at(src_id);
          const int64_t ch = src.dim(1);
          Tensor gi(src.shape());
          for (int64_t img = 0; img < nb; ++img) {
            std::copy_n(g.data() + (img * total_ch + ch_off) * plane, ch * plane,
                        gi.data() + img * ch * plane);
          }
          accumulate(src_id, std::move(gi));
          ch_off += ch;
        }
        break;
      }
      case LayerKind::softmax:
        break;
    }
  }
  return res;
}

}  // namespace dlperf
