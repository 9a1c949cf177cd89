#include "qrec/parameters.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "qrec/errors.hpp"
#include "qrec/text_io.hpp"

namespace qrec {

namespace {
constexpr const char* kCheckpointMagic = "QRECCKPT1";
}

ad::Tensor ParameterStore::add(const std::string& name, ad::Tensor tensor) {
  if (contains(name)) throw ConfigError("duplicate parameter name " + name);
  tensor.set_requires_grad(true);
  items_.emplace_back(name, tensor);
  return tensor;
}

ad::Tensor ParameterStore::add_glorot(const std::string& name, std::size_t rows, std::size_t cols, ad::Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  return add_uniform(name, {rows, cols}, limit, rng);
}

ad::Tensor ParameterStore::add_uniform(const std::string& name, ad::Shape shape, double limit, ad::Rng& rng) {
  std::uniform_real_distribution<double> u(-limit, limit);
  std::vector<double> values(ad::shape_size(shape));
  for (double& v : values) v = u(rng);
  return add(name, ad::Tensor::parameter(std::move(shape), std::move(values)));
}

ad::Tensor ParameterStore::add_zeros(const std::string& name, ad::Shape shape) {
  return add(name, ad::Tensor::zeros(std::move(shape), true));
}

const ad::Tensor& ParameterStore::get(const std::string& name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return t;
  }
  throw ConfigError("unknown parameter " + name);
}

bool ParameterStore::contains(const std::string& name) const {
  for (const auto& item : items_) {
    if (item.first == name) return true;
  }
  return false;
}

void ParameterStore::freeze(const std::string& name) {
  get(name);
  frozen_.insert(name);
}

std::vector<ad::Tensor> ParameterStore::trainable() const {
  std::vector<ad::Tensor> out;
  for (const auto& [name, t] : items_) {
    if (!frozen(name)) out.push_back(t);
  }
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& item : items_) item.second.zero_grad();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& item : items_) n += item.second.size();
  return n;
}

void ParameterStore::save(std::ostream& out) const {
  out << kCheckpointMagic << '\n' << items_.size() << '\n';
  for (const auto& [name, t] : items_) {
    out << name << ' ' << t.shape().size();
    for (std::size_t d : t.shape()) out << ' ' << d;
    out << '\n';
    bool first = true;
    for (double v : t.values()) {
      if (!first) out << ' ';
      out << text::format_double(v);
      first = false;
    }
    out << '\n';
  }
}

void ParameterStore::save(const std::string& path) const {
  std::ostringstream ss;
  save(ss);
  text::write_file(path, ss.str());
}

void ParameterStore::load(std::istream& in) {
  std::string magic;
  if (!(in >> magic) || magic != kCheckpointMagic) throw DataError("not a checkpoint (bad magic header)");
  std::size_t count = 0;
  if (!(in >> count) || count != items_.size()) throw DataError("checkpoint parameter count does not match model");
  for (std::size_t i = 0; i < count; ++i) {
    std::string name;
    std::size_t ndims = 0;
    if (!(in >> name >> ndims)) throw DataError("truncated checkpoint");
    ad::Shape shape(ndims);
    for (auto& d : shape) {
      if (!(in >> d)) throw DataError("truncated checkpoint");
    }
    ad::Tensor t = get(name);
    if (t.shape() != shape) {
      throw DataError("checkpoint shape for " + name + " is " + ad::shape_string(shape) + ", model expects " +
                      ad::shape_string(t.shape()));
    }
    std::string token;
    for (double& v : t.mutable_values()) {
      if (!(in >> token)) throw DataError("truncated checkpoint values for " + name);
      v = text::parse_double(token, name);
    }
  }
}

void ParameterStore::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path);
  load(in);
}

Adam::Adam(std::vector<ad::Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::int64_t step, const AdamOptions& o) {
  if (param.size() != m.size() || param.size() != v.size() || (!grad.empty() && grad.size() != param.size())) {
    throw StructuralError("adam_update: buffer sizes do not match");
  }
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double gi = grad.empty() ? 0.0 : grad[i];
    m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * gi;
    v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * gi * gi;
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    param[i] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
  }
}

void Adam::step() {
  ++step_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adam_update(params_[i].mutable_values(), params_[i].grad(), m_[i], v_[i], step_, options_);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double clip_grad_norm(const std::vector<ad::Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double gi : p.grad()) sq += gi * gi;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (const auto& p : params) {
      auto& grad = p.node()->grad;
      for (double& gi : grad) gi *= factor;
    }
  }
  return norm;
}

}  // namespace qrec
