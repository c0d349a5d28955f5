#include "xlrec/autodiff.hpp"

#include <cmath>
#include <string>

#include "xlrec/errors.hpp"

namespace xlrec {

namespace {

// Stable per-row log-sum-exp minus the label logit, summed over rows.
double xent_forward(const Tensor& logits, const std::vector<int>& labels) {
  const std::size_t nr = logits.shape[0], nc = logits.shape[1];
  double total = 0.0;
  for (std::size_t r = 0; r < nr; ++r) {
    const double* row = logits.data.data() + r * nc;
    double m = row[0];
    for (std::size_t c = 1; c < nc; ++c) m = std::max(m, row[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < nc; ++c) sum += std::exp(row[c] - m);
    total += m + std::log(sum) - row[static_cast<std::size_t>(labels[r])];
  }
  return total;
}

}  // namespace

int Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

const Tensor& Graph::val(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.op == Op::kParam ? *n.external : n.value;
}

void Graph::check(Var v, const char* who) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw ContractError(std::string(who) + ": invalid graph handle");
}

const Tensor& Graph::value(Var v) const {
  check(v, "value");
  return val(v.id);
}

Var Graph::input(Tensor value) {
  Node n;
  n.op = Op::kInput;
  n.value = std::move(value);
  return {push(std::move(n))};
}

Var Graph::param(int slot, const Tensor& storage) {
  for (auto [s, id] : slot_nodes_)
    if (s == slot) return {id};
  Node n;
  n.op = Op::kParam;
  n.external = &storage;
  n.slot = slot;
  int id = push(std::move(n));
  slot_nodes_.emplace_back(slot, id);
  return {id};
}

Var Graph::lookup_rows(Var table, std::vector<int> row_ids) {
  check(table, "lookup_rows");
  const Tensor& t = val(table.id);
  if (t.shape.size() != 2)
    throw DimensionError("lookup_rows: table must be rank 2, got " + t.shape_str());
  if (row_ids.empty()) throw ContractError("lookup_rows: empty row list");
  const std::size_t nc = t.shape[1];
  Tensor out({row_ids.size(), nc});
  for (std::size_t i = 0; i < row_ids.size(); ++i) {
    int r = row_ids[i];
    if (r < 0 || static_cast<std::size_t>(r) >= t.shape[0])
      throw ContractError("lookup_rows: row " + std::to_string(r) +
                          " outside table " + t.shape_str());
    for (std::size_t c = 0; c < nc; ++c)
      out.data[i * nc + c] = t.data[static_cast<std::size_t>(r) * nc + c];
  }
  Node n;
  n.op = Op::kLookupRows;
  n.a = table.id;
  n.idx = std::move(row_ids);
  n.value = std::move(out);
  return {push(std::move(n))};
}

Var Graph::matmul(Var a, Var b) {
  check(a, "matmul");
  check(b, "matmul");
  Node n;
  n.op = Op::kMatMul;
  n.a = a.id;
  n.b = b.id;
  n.value = xlrec::matmul(val(a.id), val(b.id));
  return {push(std::move(n))};
}

Var Graph::transpose(Var a) {
  check(a, "transpose");
  Node n;
  n.op = Op::kTranspose;
  n.a = a.id;
  n.value = xlrec::transpose(val(a.id));
  return {push(std::move(n))};
}

Var Graph::add(Var a, Var b) {
  check(a, "add");
  check(b, "add");
  const Tensor& ta = val(a.id);
  const Tensor& tb = val(b.id);
  if (!ta.same_shape(tb))
    throw DimensionError("add: shape mismatch, " + ta.shape_str() + " + " +
                         tb.shape_str());
  Node n;
  n.op = Op::kAdd;
  n.a = a.id;
  n.b = b.id;
  n.value = ta;
  for (std::size_t i = 0; i < tb.data.size(); ++i) n.value.data[i] += tb.data[i];
  return {push(std::move(n))};
}

Var Graph::add_rowvec(Var a, Var v) {
  check(a, "add_rowvec");
  check(v, "add_rowvec");
  const Tensor& ta = val(a.id);
  const Tensor& tv = val(v.id);
  if (ta.shape.size() != 2 || tv.rows() != 1 || tv.cols() != ta.shape[1])
    throw DimensionError("add_rowvec: cannot broadcast " + tv.shape_str() +
                         " over " + ta.shape_str());
  Node n;
  n.op = Op::kAddRowVec;
  n.a = a.id;
  n.b = v.id;
  n.value = ta;
  const std::size_t nc = ta.shape[1];
  for (std::size_t r = 0; r < ta.shape[0]; ++r)
    for (std::size_t c = 0; c < nc; ++c) n.value.data[r * nc + c] += tv.data[c];
  return {push(std::move(n))};
}

Var Graph::mul_elem(Var a, Var b) {
  check(a, "mul_elem");
  check(b, "mul_elem");
  const Tensor& ta = val(a.id);
  const Tensor& tb = val(b.id);
  if (!ta.same_shape(tb))
    throw DimensionError("mul_elem: shape mismatch, " + ta.shape_str() + " * " +
                         tb.shape_str());
  Node n;
  n.op = Op::kMulElem;
  n.a = a.id;
  n.b = b.id;
  n.value = ta;
  for (std::size_t i = 0; i < tb.data.size(); ++i) n.value.data[i] *= tb.data[i];
  return {push(std::move(n))};
}

Var Graph::scale(Var a, double c) {
  check(a, "scale");
  Node n;
  n.op = Op::kScale;
  n.a = a.id;
  n.c = c;
  n.value = val(a.id);
  for (double& x : n.value.data) x *= c;
  return {push(std::move(n))};
}

Var Graph::tanh(Var a) {
  check(a, "tanh");
  Node n;
  n.op = Op::kTanh;
  n.a = a.id;
  n.value = val(a.id);
  for (double& x : n.value.data) x = std::tanh(x);
  return {push(std::move(n))};
}

Var Graph::softmax_rows(Var a) {
  check(a, "softmax_rows");
  Node n;
  n.op = Op::kSoftmaxRows;
  n.a = a.id;
  n.value = val(a.id);
  softmax_rows_inplace(n.value);
  return {push(std::move(n))};
}

Var Graph::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no parts");
  for (Var p : parts) check(p, "concat_rows");
  const std::size_t nc = val(parts[0].id).cols();
  std::size_t nr = 0;
  for (Var p : parts) {
    const Tensor& t = val(p.id);
    if (t.cols() != nc)
      throw DimensionError("concat_rows: column mismatch, " + t.shape_str());
    nr += t.rows();
  }
  Node n;
  n.op = Op::kConcatRows;
  n.value = Tensor({nr, nc});
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& t = val(p.id);
    std::copy(t.data.begin(), t.data.end(), n.value.data.begin() + off);
    off += t.data.size();
    n.parts.push_back(p.id);
  }
  return {push(std::move(n))};
}

Var Graph::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no parts");
  for (Var p : parts) check(p, "concat_cols");
  const std::size_t nr = val(parts[0].id).rows();
  std::size_t nc = 0;
  for (Var p : parts) {
    const Tensor& t = val(p.id);
    if (t.rows() != nr)
      throw DimensionError("concat_cols: row mismatch, " + t.shape_str());
    nc += t.cols();
  }
  Node n;
  n.op = Op::kConcatCols;
  n.value = Tensor({nr, nc});
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& t = val(p.id);
    const std::size_t pc = t.cols();
    for (std::size_t r = 0; r < nr; ++r)
      for (std::size_t c = 0; c < pc; ++c)
        n.value.data[r * nc + off + c] = t.data[r * pc + c];
    off += pc;
    n.parts.push_back(p.id);
  }
  return {push(std::move(n))};
}

Var Graph::softmax_xent_rows(Var logits, std::vector<int> labels) {
  check(logits, "softmax_xent_rows");
  const Tensor& t = val(logits.id);
  if (t.shape.size() != 2)
    throw DimensionError("softmax_xent_rows: logits must be rank 2");
  if (labels.size() != t.shape[0])
    throw ContractError("softmax_xent_rows: " + std::to_string(labels.size()) +
                        " labels for " + std::to_string(t.shape[0]) + " rows");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= t.shape[1])
      throw ContractError("softmax_xent_rows: label " + std::to_string(l) +
                          " outside " + std::to_string(t.shape[1]) + " classes");
  Node n;
  n.op = Op::kSoftmaxXent;
  n.a = logits.id;
  n.idx = std::move(labels);
  n.value = Tensor::scalar(xent_forward(t, n.idx));
  return {push(std::move(n))};
}

std::vector<Tensor> Graph::backward(
    Var loss, const std::vector<const Tensor*>& slot_params) const {
  std::vector<Tensor> out;
  out.reserve(slot_params.size());
  for (const Tensor* p : slot_params) out.push_back(Tensor::zeros_like(*p));
  backward_accumulate(loss, out);
  return out;
}

void Graph::backward_accumulate(Var loss, std::vector<Tensor>& slot_grads) const {
  check(loss, "backward");
  const Tensor& lv = val(loss.id);
  if (lv.numel() != 1)
    throw ContractError("backward: loss must be scalar, got " + lv.shape_str());

  std::vector<Tensor> g(nodes_.size());
  auto ref = [&](int id) -> Tensor& {
    if (g[static_cast<std::size_t>(id)].data.empty())
      g[static_cast<std::size_t>(id)] = Tensor(val(id).shape);
    return g[static_cast<std::size_t>(id)];
  };

  ref(loss.id).data[0] = 1.0;

  // Nodes inserted after the loss cannot influence it.
  for (int i = loss.id; i >= 0; --i) {
    const Tensor& gi = g[static_cast<std::size_t>(i)];
    if (gi.data.empty()) continue;
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    switch (n.op) {
      case Op::kInput:
      case Op::kParam:
        break;
      case Op::kLookupRows: {
        Tensor& gt = ref(n.a);
        const std::size_t nc = gt.shape[1];
        for (std::size_t r = 0; r < n.idx.size(); ++r) {
          double* dst = gt.data.data() +
                        static_cast<std::size_t>(n.idx[r]) * nc;
          const double* src = gi.data.data() + r * nc;
          for (std::size_t c = 0; c < nc; ++c) dst[c] += src[c];
        }
        break;
      }
      case Op::kMatMul:
        accumulate(ref(n.a), matmul_nt(gi, val(n.b)));
        accumulate(ref(n.b), matmul_tn(val(n.a), gi));
        break;
      case Op::kTranspose:
        accumulate(ref(n.a), xlrec::transpose(gi));
        break;
      case Op::kAdd:
        accumulate(ref(n.a), gi);
        accumulate(ref(n.b), gi);
        break;
      case Op::kAddRowVec: {
        accumulate(ref(n.a), gi);
        Tensor& gv = ref(n.b);
        const std::size_t nc = gi.shape[1];
        for (std::size_t r = 0; r < gi.shape[0]; ++r)
          for (std::size_t c = 0; c < nc; ++c)
            gv.data[c] += gi.data[r * nc + c];
        break;
      }
      case Op::kMulElem: {
        const Tensor& va = val(n.a);
        const Tensor& vb = val(n.b);
        Tensor& ga = ref(n.a);
        for (std::size_t k = 0; k < gi.data.size(); ++k)
          ga.data[k] += gi.data[k] * vb.data[k];
        Tensor& gb = ref(n.b);
        for (std::size_t k = 0; k < gi.data.size(); ++k)
          gb.data[k] += gi.data[k] * va.data[k];
        break;
      }
      case Op::kScale: {
        Tensor& ga = ref(n.a);
        for (std::size_t k = 0; k < gi.data.size(); ++k)
          ga.data[k] += n.c * gi.data[k];
        break;
      }
      case Op::kTanh: {
        Tensor& ga = ref(n.a);
        for (std::size_t k = 0; k < gi.data.size(); ++k)
          ga.data[k] += gi.data[k] * (1.0 - n.value.data[k] * n.value.data[k]);
        break;
      }
      case Op::kSoftmaxRows: {
        // dx = y * (dy - <y, dy>) per row.
        Tensor& ga = ref(n.a);
        const std::size_t nr = n.value.shape[0], nc = n.value.shape[1];
        for (std::size_t r = 0; r < nr; ++r) {
          const double* y = n.value.data.data() + r * nc;
          const double* dy = gi.data.data() + r * nc;
          double dot = 0.0;
          for (std::size_t c = 0; c < nc; ++c) dot += y[c] * dy[c];
          double* dst = ga.data.data() + r * nc;
          for (std::size_t c = 0; c < nc; ++c) dst[c] += y[c] * (dy[c] - dot);
        }
        break;
      }
      case Op::kConcatRows: {
        std::size_t off = 0;
        for (int pid : n.parts) {
          Tensor& gp = ref(pid);
          for (std::size_t k = 0; k < gp.data.size(); ++k)
            gp.data[k] += gi.data[off + k];
          off += gp.data.size();
        }
        break;
      }
      case Op::kConcatCols: {
        const std::size_t nc = n.value.shape[1], nr = n.value.shape[0];
        std::size_t off = 0;
        for (int pid : n.parts) {
          Tensor& gp = ref(pid);
          const std::size_t pc = val(pid).cols();
          for (std::size_t r = 0; r < nr; ++r)
            for (std::size_t c = 0; c < pc; ++c)
              gp.data[r * pc + c] += gi.data[r * nc + off + c];
          off += pc;
        }
        break;
      }
      case Op::kSoftmaxXent: {
        // dlogits = g * (softmax(logits) - onehot(label)) per row.
        const double gs = gi.data[0];
        Tensor probs = val(n.a);
        softmax_rows_inplace(probs);
        Tensor& ga = ref(n.a);
        const std::size_t nr = probs.shape[0], nc = probs.shape[1];
        for (std::size_t r = 0; r < nr; ++r) {
          double* dst = ga.data.data() + r * nc;
          const double* p = probs.data.data() + r * nc;
          for (std::size_t c = 0; c < nc; ++c) dst[c] += gs * p[c];
          dst[static_cast<std::size_t>(n.idx[r])] -= gs;
        }
        break;
      }
    }
  }

  for (auto [slot, id] : slot_nodes_) {
    const Tensor& gp = g[static_cast<std::size_t>(id)];
    if (gp.data.empty()) continue;
    if (slot < 0 || static_cast<std::size_t>(slot) >= slot_grads.size())
      throw ContractError("backward: gradient buffer has no slot " +
                          std::to_string(slot));
    accumulate(slot_grads[static_cast<std::size_t>(slot)], gp);
  }
}

}  // namespace xlrec
