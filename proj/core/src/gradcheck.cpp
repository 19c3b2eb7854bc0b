// SPDX-License-Identifier: Apache-2.0
#include "unicontrol/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <unordered_map>

#include "kernels.hpp"

namespace uc {
namespace {

// Double-precision forward re-evaluation of a recorded tape. Leaf values are
// taken from `leaves` when present, otherwise promoted from the tensor's own
// float payload.
class ShadowEval {
 public:
  explicit ShadowEval(const Tape& tape) : tape_(tape) {}

  double run(const std::unordered_map<TensorImpl*, std::vector<double>>& leaves,
             TensorImpl* loss) {
    values_.clear();
    for (const auto& [k, v] : leaves) values_[k] = v;
    for (const TapeNode& n : tape_.nodes()) exec(n);
    const auto it = values_.find(loss);
    if (it == values_.end() || it->second.size() != 1) {
      throw std::runtime_error("gradcheck: loss is not produced by the recorded graph");
    }
    return it->second[0];
  }

 private:
  const std::vector<double>& fetch(const std::shared_ptr<TensorImpl>& t) {
    auto it = values_.find(t.get());
    if (it != values_.end()) return it->second;
    std::vector<double> v(t->data.begin(), t->data.end());
    return values_.emplace(t.get(), std::move(v)).first->second;
  }

  void exec(const TapeNode& n) {
    const auto& a = fetch(n.in[0]);
    std::vector<double> out(n.out->data.size(), 0.0);
    switch (n.kind) {
      case OpKind::Conv2d: {
        const auto& w = fetch(n.in[1]);
        const auto& b = fetch(n.in[2]);
        const auto& xs = n.in[0]->shape;
        const auto& ws = n.in[1]->shape;
        const auto g = kernels::conv_geom(xs[0], xs[1], xs[2], ws[0], ws[2], ws[3], n.i0, n.i1);
        kernels::conv2d_forward(a.data(), w.data(), b.data(), g, out.data());
        break;
      }
      case OpKind::Linear: {
        const auto& w = fetch(n.in[1]);
        const auto& b = fetch(n.in[2]);
        kernels::linear_forward(a.data(), w.data(), b.data(),
                                n.in[1]->shape[0], n.in[1]->shape[1], out.data());
        break;
      }
      case OpKind::SiLU:
        kernels::silu_forward(a.data(), a.size(), out.data());
        break;
      case OpKind::ChannelNorm: {
        const auto& gm = fetch(n.in[1]);
        const auto& bt = fetch(n.in[2]);
        const auto& xs = n.in[0]->shape;
        kernels::channel_norm_forward(a.data(), gm.data(), bt.data(), xs[0], xs[1] * xs[2], out.data());
        break;
      }
      case OpKind::Add: {
        const auto& b = fetch(n.in[1]);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
        break;
      }
      case OpKind::AddChan: {
        const auto& b = fetch(n.in[1]);
        const auto& xs = n.in[0]->shape;
        const std::size_t hw = static_cast<std::size_t>(xs[1]) * xs[2];
        for (int c = 0; c < xs[0]; ++c) {
          for (std::size_t i = 0; i < hw; ++i) out[c * hw + i] = a[c * hw + i] + b[static_cast<std::size_t>(c)];
        }
        break;
      }
      case OpKind::AddScalar: {
        const auto& b = fetch(n.in[1]);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[0];
        break;
      }
      case OpKind::Mul: {
        const auto& b = fetch(n.in[1]);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
        break;
      }
      case OpKind::MulChan: {
        const auto& b = fetch(n.in[1]);
        const auto& xs = n.in[0]->shape;
        const std::size_t hw = static_cast<std::size_t>(xs[1]) * xs[2];
        for (int c = 0; c < xs[0]; ++c) {
          for (std::size_t i = 0; i < hw; ++i) out[c * hw + i] = a[c * hw + i] * b[static_cast<std::size_t>(c)];
        }
        break;
      }
      case OpKind::MulScalar: {
        const auto& b = fetch(n.in[1]);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[0];
        break;
      }
      case OpKind::Upsample2x: {
        const auto& xs = n.in[0]->shape;
        kernels::upsample2x_forward(a.data(), xs[0], xs[1], xs[2], out.data());
        break;
      }
      case OpKind::AvgPool2x: {
        const auto& xs = n.in[0]->shape;
        kernels::avgpool2x_forward(a.data(), xs[0], xs[1], xs[2], out.data());
        break;
      }
      case OpKind::Mse: {
        const auto& b = fetch(n.in[1]);
        out[0] = kernels::mse_forward(a.data(), b.data(), a.size());
        break;
      }
    }
    values_[n.out.get()] = std::move(out);
  }

  const Tape& tape_;
  std::unordered_map<TensorImpl*, std::vector<double>> values_;
};

}  // namespace

std::string GradCheckReport::to_text() const {
  std::string s;
  char line[160];
  for (const auto& e : entries) {
    std::snprintf(line, sizeof(line), "%-32s  n=%lld  max_rel_err=%.3e\n",
                  e.name.c_str(), static_cast<long long>(e.checked), e.max_rel_err);
    s += line;
  }
  std::snprintf(line, sizeof(line), "worst=%.3e\n", worst);
  s += line;
  return s;
}

GradCheckReport gradcheck(const GraphBuilder& builder, std::uint64_t seed, double h) {
  Xoshiro256pp rng(seed);
  BuiltGraph built = builder(rng);
  if (!built.tape) throw std::invalid_argument("gradcheck: builder returned no tape");
  if (built.loss.numel() != 1) throw std::invalid_argument("gradcheck: builder loss must be scalar");

  for (auto& [name, p] : built.params) {
    if (p.requires_grad()) p.zero_grad();
  }
  backward(*built.tape, built.loss);

  ShadowEval shadow(*built.tape);
  std::unordered_map<TensorImpl*, std::vector<double>> leaves;

  GradCheckReport report;
  for (const auto& [name, p] : built.params) {
    if (!p.requires_grad()) continue;  // frozen: absent from the report
    GradCheckEntry entry{name, 0.0, p.numel()};
    auto& shadow_vals = leaves[p.impl()];
    shadow_vals.assign(p.values().begin(), p.values().end());
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      const double v0 = shadow_vals[static_cast<std::size_t>(i)];
      shadow_vals[static_cast<std::size_t>(i)] = v0 + h;
      const double fp = shadow.run(leaves, built.loss.impl());
      shadow_vals[static_cast<std::size_t>(i)] = v0 - h;
      const double fm = shadow.run(leaves, built.loss.impl());
      shadow_vals[static_cast<std::size_t>(i)] = v0;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = static_cast<double>(p.grad()[static_cast<std::size_t>(i)]);
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 0.1});
      const double rel = std::abs(numeric - analytic) / denom;
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    leaves.erase(p.impl());
    report.worst = std::max(report.worst, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace uc
