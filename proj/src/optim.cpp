#include "xdrec/optim.hpp"

#include <cmath>

namespace xdrec {

void adam_step(std::vector<TensorRef> params, const Gradients& grads, AdamState& opt, double lr) {
  ++opt.step;
  const double t = static_cast<double>(opt.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (auto& p : params) {
    auto it = grads.find(p.name);
    if (it == grads.end()) continue;
    const Matrix& g = it->second;
    if (g.rows() != p.rows || g.cols() != p.cols) throw std::invalid_argument("adam: gradient shape mismatch for " + p.name);
    auto [m_it, fresh] = opt.first_moment.try_emplace(p.name, Matrix::Zero(p.rows, p.cols));
    auto [v_it, fresh_v] = opt.second_moment.try_emplace(p.name, Matrix::Zero(p.rows, p.cols));
    Matrix& m = m_it->second;
    Matrix& v = v_it->second;
    m = opt.beta1 * m + (1.0 - opt.beta1) * g;
    v = opt.beta2 * v + (1.0 - opt.beta2) * g.cwiseProduct(g);
    if (lr == 0.0) continue;
    auto value = p.map();
    value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + opt.eps);
  }
}

void adam_step(Model& model, const Gradients& grads, AdamState& opt, double lr) {
  adam_step(tensors(model), grads, opt, lr);
}

}  // namespace xdrec
