#pragma once

#include "gae/common.hpp"

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace gae::nn {

// Feedforward net: tanh hidden layers, linear output layer.
// An empty hidden_sizes list gives an affine map.
struct MlpSpec {
  int input_dim = 1;
  std::vector<int> hidden_sizes;
  int output_dim = 1;

  void validate() const;
  int num_layers() const { return static_cast<int>(hidden_sizes.size()) + 1; }
  long param_count() const;

  bool operator==(const MlpSpec&) const = default;
};

// Where one layer's weights (row-major, out x in) and bias live in the flat vector.
struct LayerShape {
  int rows = 0;
  int cols = 0;
  long weight_offset = 0;
  long bias_offset = 0;
};

std::vector<LayerShape> layout(const MlpSpec& spec);

struct Layer {
  Mat weight;
  Vec bias;
};

std::vector<Layer> unpack(const MlpSpec& spec, const Vec& params);
Vec pack(const MlpSpec& spec, const std::vector<Layer>& layers);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per layer; the output layer is
// additionally multiplied by output_scale.
Vec init_params(const MlpSpec& spec, Rng& rng, double output_scale = 1.0);

// A network bound to one parameter vector, with the layers unpacked once.
class Mlp {
 public:
  Mlp(MlpSpec spec, const Vec& params);

  const MlpSpec& spec() const { return spec_; }
  long param_count() const { return spec_.param_count(); }

  Vec forward(const Vec& input) const;
  Vec grad_params(const Vec& input, const Vec& output_cotangent) const;

  // Per-layer activations; trace[0] is the input, trace.back() the output.
  std::vector<Vec> forward_trace(const Vec& input) const;
  // out += scale * J^T cotangent, for the linearization recorded in trace.
  void backward(const std::vector<Vec>& trace, const Vec& output_cotangent, Vec& out,
                double scale = 1.0) const;
  // J direction.
  Vec tangent(const std::vector<Vec>& trace, const Vec& direction) const;

 private:
  MlpSpec spec_;
  std::vector<LayerShape> shapes_;
  std::vector<Layer> layers_;
};

Vec forward(const MlpSpec& spec, const Vec& params, const Vec& input);

// Gradient of <cotangent, forward(params, input)> with respect to params.
Vec grad_params(const MlpSpec& spec, const Vec& params, const Vec& input, const Vec& output_cotangent);

// Linearization of forward() around (params, input) with respect to params.
class JacobianProducts {
 public:
  JacobianProducts(std::shared_ptr<const Mlp> net, const Vec& input);

  const Vec& output() const { return trace_.back(); }
  Vec jvp(const Vec& direction) const;
  Vec vjp(const Vec& cotangent) const;
  void vjp_accumulate(const Vec& cotangent, Vec& out, double scale = 1.0) const;

 private:
  std::shared_ptr<const Mlp> net_;
  std::vector<Vec> trace_;
};

JacobianProducts jacobian_vector_products(const MlpSpec& spec, const Vec& params, const Vec& input);

// Checkpoint text format:
//   kind <name>
//   dims <input_dim> <output_dim> hidden <h1> <h2> ...
//   count <N>
//   N lines, one value each, with 17 significant digits.
// `values` may be longer than spec.param_count() when the owner appends extra
// parameters (a Gaussian policy stores its log-std after the mean net).
struct Checkpoint {
  std::string kind;
  MlpSpec spec;
  Vec values;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace gae::nn
