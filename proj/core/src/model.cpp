#include "hypm/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace hypm {

void ConvNetConfig::validate() const {
  if (in_h < 4 || in_w < 4) throw std::invalid_argument("ConvNetConfig: input too small");
  if (conv1_channels == 0 || conv2_channels == 0 || embed_dim == 0)
    throw std::invalid_argument("ConvNetConfig: zero-sized layer");
  if (num_known_classes < 1) throw std::invalid_argument("ConvNetConfig: need >= 1 known class");
}

void SgdConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("SgdConfig: lr must be positive");
  if (!(decay_factor > 0.0 && decay_factor < 1.0))
    throw std::invalid_argument("SgdConfig: decay_factor must be in (0,1)");
  if (decay_at_step <= 0) throw std::invalid_argument("SgdConfig: decay_at_step must be positive");
  if (max_steps < 0) throw std::invalid_argument("SgdConfig: max_steps must be >= 0");
  if (max_steps > 0 && decay_at_step >= max_steps)
    throw std::invalid_argument("SgdConfig: decay_at_step must be < max_steps");
  if (batch_size == 0) throw std::invalid_argument("SgdConfig: batch_size must be positive");
}

double SgdConfig::lr_at(long step) const { return step >= decay_at_step ? lr * decay_factor : lr; }

namespace {

Tensor uniform_fan_in(std::vector<std::size_t> shape, std::size_t fan_in, RngStream& stream) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.data) v = (2.0 * stream.next_double() - 1.0) * bound;
  return t;
}

}  // namespace

ModelState ModelState::init(const ConvNetConfig& arch, RngStream& stream) {
  arch.validate();
  ModelState s;
  s.arch = arch;
  const std::size_t c1 = arch.conv1_channels, c2 = arch.conv2_channels;
  s.conv1_w = uniform_fan_in({c1, 3, 3, 3}, 3 * 3 * 3, stream);
  s.conv1_b = Tensor({c1});
  s.conv2_w = uniform_fan_in({c2, 3, 3, c1}, 3 * 3 * c1, stream);
  s.conv2_b = Tensor({c2});
  s.fc_w = uniform_fan_in({arch.embed_dim, c2}, c2, stream);
  s.fc_b = Tensor({arch.embed_dim});
  s.head_w = uniform_fan_in({arch.head_outputs(), arch.embed_dim}, arch.embed_dim, stream);
  s.head_b = Tensor({arch.head_outputs()});
  s.prompt = Tensor({arch.in_h, arch.in_w, 3}, 0.5);
  s.step = 0;
  return s;
}

std::vector<Tensor*> ModelState::parameters() {
  return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &fc_w, &fc_b, &head_w, &head_b, &prompt};
}

std::vector<const Tensor*> ModelState::parameters() const {
  return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &fc_w, &fc_b, &head_w, &head_b, &prompt};
}

std::size_t ModelState::num_params() const {
  std::size_t n = 0;
  for (const Tensor* t : parameters()) n += t->numel();
  return n;
}

ParamGrads zero_grads(const ModelState& state) {
  ParamGrads g;
  for (const Tensor* t : state.parameters()) g.emplace_back(t->shape);
  return g;
}

void accumulate(ParamGrads& into, const ParamGrads& from) {
  if (into.size() != from.size()) throw std::invalid_argument("accumulate: size mismatch");
  for (std::size_t i = 0; i < into.size(); ++i) {
    if (!into[i].same_shape(from[i])) throw std::invalid_argument("accumulate: shape mismatch");
    for (std::size_t j = 0; j < into[i].numel(); ++j) into[i].data[j] += from[i].data[j];
  }
}

ModelGraph ModelGraph::leaves(const ModelState& s) {
  ModelGraph g;
  g.conv1_w = ad::leaf(s.conv1_w);
  g.conv1_b = ad::leaf(s.conv1_b);
  g.conv2_w = ad::leaf(s.conv2_w);
  g.conv2_b = ad::leaf(s.conv2_b);
  g.fc_w = ad::leaf(s.fc_w);
  g.fc_b = ad::leaf(s.fc_b);
  g.head_w = ad::leaf(s.head_w);
  g.head_b = ad::leaf(s.head_b);
  g.prompt = ad::leaf(s.prompt);
  return g;
}

ad::Var ModelGraph::embeddings(const ad::Var& images) const {
  ad::Var h = ad::max_pool2(ad::relu(ad::conv2d(images, conv1_w, conv1_b)));
  h = ad::max_pool2(ad::relu(ad::conv2d(h, conv2_w, conv2_b)));
  return ad::linear(ad::global_avg_pool(h), fc_w, fc_b);
}

ad::Var ModelGraph::logits(const ad::Var& images) const {
  return ad::linear(embeddings(images), head_w, head_b);
}

ParamGrads ModelGraph::collect_grads(const ModelState& state) const {
  const ad::Var vars[] = {conv1_w, conv1_b, conv2_w, conv2_b, fc_w, fc_b, head_w, head_b, prompt};
  ParamGrads g = zero_grads(state);
  for (std::size_t i = 0; i < g.size(); ++i)
    if (vars[i]->has_grad()) g[i] = vars[i]->grad;
  return g;
}

Tensor backbone_forward(const ModelState& s, const Tensor& batch) {
  if (batch.rank() != 4 || batch.shape[1] != s.arch.in_h || batch.shape[2] != s.arch.in_w ||
      batch.shape[3] != 3)
    throw std::invalid_argument("backbone_forward: batch shape mismatch");
  Tensor a, b;
  ad::kernels::conv2d_forward(batch, s.conv1_w, s.conv1_b, a);
  ad::kernels::relu_forward(a, b);
  ad::kernels::max_pool2_forward(b, a, nullptr);
  ad::kernels::conv2d_forward(a, s.conv2_w, s.conv2_b, b);
  ad::kernels::relu_forward(b, a);
  ad::kernels::max_pool2_forward(a, b, nullptr);
  ad::kernels::global_avg_pool_forward(b, a);
  ad::kernels::linear_forward(a, s.fc_w, s.fc_b, b);
  return b;
}

Tensor head_forward(const ModelState& s, const Tensor& z) {
  if (z.rank() != 2 || z.shape[1] != s.arch.embed_dim)
    throw std::invalid_argument("head_forward: embedding dimension mismatch");
  Tensor out;
  ad::kernels::linear_forward(z, s.head_w, s.head_b, out);
  return out;
}

void apply_sgd(ModelState& state, const ParamGrads& grads, double lr) {
  auto params = state.parameters();
  if (grads.size() != params.size()) throw std::invalid_argument("apply_sgd: gradient count");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].same_shape(*params[i]))
      throw std::invalid_argument("apply_sgd: gradient shape mismatch");
    if (!grads[i].all_finite())
      throw std::runtime_error("apply_sgd: non-finite gradient, step aborted");
  }
  for (std::size_t i = 0; i < grads.size(); ++i)
    for (std::size_t j = 0; j < grads[i].numel(); ++j)
      params[i]->data[j] -= lr * grads[i].data[j];
  for (double& v : state.prompt.data) v = std::clamp(v, 0.0, 1.0);
}

void sgd_step(ModelState& state, const ParamGrads& grads, const SgdConfig& cfg) {
  apply_sgd(state, grads, cfg.lr_at(state.step));
  state.step += 1;
}

double grad_check(const ModelState& state, const Tensor& batch, const std::vector<int>& labels,
                  double h) {
  ModelGraph g = ModelGraph::leaves(state);
  ad::Var loss = ad::cross_entropy(g.logits(ad::constant(batch)), labels);
  ad::backward(loss);
  ParamGrads analytic = g.collect_grads(state);

  ModelState probe = state;
  auto params = probe.parameters();
  auto loss_value = [&]() {
    Tensor z = backbone_forward(probe, batch);
    Tensor logits = head_forward(probe, z);
    return ad::kernels::cross_entropy_value(logits, labels);
  };
  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& t = *params[pi];
    for (std::size_t j = 0; j < t.numel(); ++j) {
      const double orig = t.data[j];
      t.data[j] = orig + h;
      const double up = loss_value();
      t.data[j] = orig - h;
      const double down = loss_value();
      t.data[j] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double an = analytic[pi].data[j];
      const double rel = std::abs(fd - an) / std::max({1e-6, std::abs(fd), std::abs(an)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

// -------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[5] = {'H', 'Y', 'P', 'M', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
};

}  // namespace

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  auto params = state.parameters();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Tensor* t : params) {
    put_u32(out, static_cast<std::uint32_t>(t->rank()));
    for (std::size_t d : t->shape) put_u64(out, d);
    for (double v : t->data) put_f64(out, v);
  }
  put_u64(out, static_cast<std::uint64_t>(state.step));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kMagic) || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path.string());
  ByteReader r{buf, sizeof(kMagic)};
  const std::uint32_t count = r.u32();
  if (count != 9) throw std::runtime_error("load_checkpoint: unexpected tensor count");
  std::vector<Tensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t rank = r.u32();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.u64());
    Tensor t(shape);
    for (double& v : t.data) v = r.f64();
    tensors.push_back(std::move(t));
  }
  ModelState s;
  s.conv1_w = std::move(tensors[0]);
  s.conv1_b = std::move(tensors[1]);
  s.conv2_w = std::move(tensors[2]);
  s.conv2_b = std::move(tensors[3]);
  s.fc_w = std::move(tensors[4]);
  s.fc_b = std::move(tensors[5]);
  s.head_w = std::move(tensors[6]);
  s.head_b = std::move(tensors[7]);
  s.prompt = std::move(tensors[8]);
  s.step = static_cast<long>(r.u64());
  if (s.conv1_w.rank() != 4 || s.prompt.rank() != 3 || s.head_w.rank() != 2 ||
      s.head_w.shape[0] < 2)
    throw std::runtime_error("load_checkpoint: inconsistent tensor shapes");
  s.arch.conv1_channels = s.conv1_w.shape[0];
  s.arch.conv2_channels = s.conv2_w.shape[0];
  s.arch.embed_dim = s.fc_w.shape[0];
  s.arch.num_known_classes = s.head_w.shape[0] - 1;
  s.arch.in_h = s.prompt.shape[0];
  s.arch.in_w = s.prompt.shape[1];
  s.arch.validate();
  return s;
}

}  // namespace hypm
