#include "gae/nn.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace gae::nn {

namespace {

using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

int layer_input(const MlpSpec& spec, int l) {
  return l == 0 ? spec.input_dim : spec.hidden_sizes[static_cast<std::size_t>(l - 1)];
}

int layer_output(const MlpSpec& spec, int l) {
  return l + 1 == spec.num_layers() ? spec.output_dim : spec.hidden_sizes[static_cast<std::size_t>(l)];
}

}  // namespace

void MlpSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) throw DimensionError("MlpSpec: input and output dims must be >= 1");
  for (int h : hidden_sizes) {
    if (h < 1) throw DimensionError("MlpSpec: hidden sizes must be >= 1");
  }
}

long MlpSpec::param_count() const {
  long n = 0;
  for (int l = 0; l < num_layers(); ++l) {
    const long in = layer_input(*this, l);
    const long out = layer_output(*this, l);
    n += out * in + out;
  }
  return n;
}

std::vector<LayerShape> layout(const MlpSpec& spec) {
  spec.validate();
  std::vector<LayerShape> shapes;
  long offset = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    LayerShape s;
    s.rows = layer_output(spec, l);
    s.cols = layer_input(spec, l);
    s.weight_offset = offset;
    s.bias_offset = offset + static_cast<long>(s.rows) * s.cols;
    offset = s.bias_offset + s.rows;
    shapes.push_back(s);
  }
  return shapes;
}

std::vector<Layer> unpack(const MlpSpec& spec, const Vec& params) {
  require_dim(params.size(), spec.param_count(), "nn::unpack params");
  std::vector<Layer> layers;
  for (const auto& s : layout(spec)) {
    Layer layer;
    layer.weight = RowMajorMap(params.data() + s.weight_offset, s.rows, s.cols);
    layer.bias = params.segment(s.bias_offset, s.rows);
    layers.push_back(std::move(layer));
  }
  return layers;
}

Vec pack(const MlpSpec& spec, const std::vector<Layer>& layers) {
  const auto shapes = layout(spec);
  if (layers.size() != shapes.size()) throw DimensionError("nn::pack: layer count mismatch");
  Vec params(spec.param_count());
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto& s = shapes[l];
    require_dim(layers[l].weight.rows(), s.rows, "nn::pack weight rows");
    require_dim(layers[l].weight.cols(), s.cols, "nn::pack weight cols");
    require_dim(layers[l].bias.size(), s.rows, "nn::pack bias");
    RowMajorMutMap(params.data() + s.weight_offset, s.rows, s.cols) = layers[l].weight;
    params.segment(s.bias_offset, s.rows) = layers[l].bias;
  }
  return params;
}

Vec init_params(const MlpSpec& spec, Rng& rng, double output_scale) {
  const auto shapes = layout(spec);
  Vec params(spec.param_count());
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto& s = shapes[l];
    const double a = 1.0 / std::sqrt(static_cast<double>(s.cols));
    const double scale = l + 1 == shapes.size() ? output_scale : 1.0;
    std::uniform_real_distribution<double> dist(-a, a);
    for (long i = s.weight_offset; i < s.bias_offset + s.rows; ++i) params[i] = scale * dist(rng);
  }
  return params;
}

Mlp::Mlp(MlpSpec spec, const Vec& params)
    : spec_(std::move(spec)), shapes_(layout(spec_)), layers_(unpack(spec_, params)) {}

Vec Mlp::forward(const Vec& input) const {
  require_dim(input.size(), spec_.input_dim, "nn::forward input");
  Vec a = input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Vec z = layers_[l].weight * a + layers_[l].bias;
    a = l + 1 == layers_.size() ? std::move(z) : Vec(z.array().tanh());
  }
  return a;
}

std::vector<Vec> Mlp::forward_trace(const Vec& input) const {
  require_dim(input.size(), spec_.input_dim, "nn::forward input");
  std::vector<Vec> trace;
  trace.reserve(layers_.size() + 1);
  trace.push_back(input);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Vec z = layers_[l].weight * trace.back() + layers_[l].bias;
    trace.push_back(l + 1 == layers_.size() ? std::move(z) : Vec(z.array().tanh()));
  }
  return trace;
}

void Mlp::backward(const std::vector<Vec>& trace, const Vec& output_cotangent, Vec& out, double scale) const {
  require_dim(output_cotangent.size(), spec_.output_dim, "nn::backward cotangent");
  require_dim(out.size(), param_count(), "nn::backward output");
  Vec delta = scale * output_cotangent;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& s = shapes_[l];
    const Vec& a_in = trace[l];
    RowMajorMutMap(out.data() + s.weight_offset, s.rows, s.cols).noalias() += delta * a_in.transpose();
    out.segment(s.bias_offset, s.rows) += delta;
    if (l > 0) {
      Vec back = layers_[l].weight.transpose() * delta;
      delta = back.array() * (1.0 - a_in.array().square());
    }
  }
}

Vec Mlp::tangent(const std::vector<Vec>& trace, const Vec& direction) const {
  require_dim(direction.size(), param_count(), "nn::jvp direction");
  Vec t = Vec::Zero(spec_.input_dim);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& s = shapes_[l];
    Vec dz = RowMajorMap(direction.data() + s.weight_offset, s.rows, s.cols) * trace[l] +
             layers_[l].weight * t + direction.segment(s.bias_offset, s.rows);
    if (l + 1 == layers_.size()) {
      t = std::move(dz);
    } else {
      t = dz.array() * (1.0 - trace[l + 1].array().square());
    }
  }
  return t;
}

Vec Mlp::grad_params(const Vec& input, const Vec& output_cotangent) const {
  Vec g = Vec::Zero(param_count());
  backward(forward_trace(input), output_cotangent, g);
  return g;
}

Vec forward(const MlpSpec& spec, const Vec& params, const Vec& input) {
  return Mlp(spec, params).forward(input);
}

Vec grad_params(const MlpSpec& spec, const Vec& params, const Vec& input, const Vec& output_cotangent) {
  return Mlp(spec, params).grad_params(input, output_cotangent);
}

JacobianProducts::JacobianProducts(std::shared_ptr<const Mlp> net, const Vec& input)
    : net_(std::move(net)), trace_(net_->forward_trace(input)) {}

Vec JacobianProducts::jvp(const Vec& direction) const { return net_->tangent(trace_, direction); }

Vec JacobianProducts::vjp(const Vec& cotangent) const {
  Vec g = Vec::Zero(net_->param_count());
  net_->backward(trace_, cotangent, g);
  return g;
}

void JacobianProducts::vjp_accumulate(const Vec& cotangent, Vec& out, double scale) const {
  net_->backward(trace_, cotangent, out, scale);
}

JacobianProducts jacobian_vector_products(const MlpSpec& spec, const Vec& params, const Vec& input) {
  return JacobianProducts(std::make_shared<const Mlp>(spec, params), input);
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out << "kind " << ckpt.kind << "\n";
  out << "dims " << ckpt.spec.input_dim << " " << ckpt.spec.output_dim << " hidden";
  for (int h : ckpt.spec.hidden_sizes) out << " " << h;
  out << "\ncount " << ckpt.values.size() << "\n";
  out << std::setprecision(17);
  for (long i = 0; i < ckpt.values.size(); ++i) out << ckpt.values[i] << "\n";
}

Checkpoint read_checkpoint(std::istream& in) {
  auto fail = [](const std::string& why) { return std::runtime_error("checkpoint: " + why); };
  Checkpoint ckpt;
  std::string line, word;

  if (!std::getline(in, line)) throw fail("missing kind line");
  std::istringstream kind_line(line);
  if (!(kind_line >> word >> ckpt.kind) || word != "kind") throw fail("bad kind line");

  if (!std::getline(in, line)) throw fail("missing dims line");
  std::istringstream dims(line);
  if (!(dims >> word >> ckpt.spec.input_dim >> ckpt.spec.output_dim) || word != "dims") throw fail("bad dims line");
  if (!(dims >> word) || word != "hidden") throw fail("bad dims line");
  for (int h; dims >> h;) ckpt.spec.hidden_sizes.push_back(h);
  ckpt.spec.validate();

  long count = 0;
  if (!std::getline(in, line)) throw fail("missing count line");
  std::istringstream count_line(line);
  if (!(count_line >> word >> count) || word != "count" || count < 0) throw fail("bad count line");

  ckpt.values.resize(count);
  for (long i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw fail("truncated value list");
    std::size_t used = 0;
    try {
      ckpt.values[i] = std::stod(line, &used);
    } catch (const std::exception&) {
      throw fail("unparseable value on line " + std::to_string(i + 4));
    }
  }
  if (count < ckpt.spec.param_count()) throw fail("fewer values than the network needs");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace gae::nn
