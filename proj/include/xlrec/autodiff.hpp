#pragma once

#include <cstdint>
#include <vector>

#include "xlrec/tensor.hpp"

namespace xlrec {

// Handle into a Graph's node list.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape, built define-by-run and discarded after the step.
// Nodes are appended in forward order; backward() visits them in exact
// reverse insertion order, which makes both passes bit-reproducible.
//
// A Graph is single-threaded. Parameter leaves reference external storage
// (no copy); their gradients are reported per registration slot so the
// trainer can keep one flat buffer aligned with the model's tensor list.
class Graph {
 public:
  // Constant leaf (inputs, masks). The value is moved in.
  Var input(Tensor value);

  // Trainable leaf bound to external storage. Registering the same slot
  // twice returns the original node. The storage must outlive the graph.
  Var param(int slot, const Tensor& storage);

  // rows(table)[i] = table[row_ids[i], :]
  Var lookup_rows(Var table, std::vector<int> row_ids);

  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add(Var a, Var b);            // same shape
  Var add_rowvec(Var a, Var v);     // v broadcast over rows of a
  Var mul_elem(Var a, Var b);       // same shape
  Var scale(Var a, double c);
  Var tanh(Var a);
  Var softmax_rows(Var a);
  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);

  // Sum over rows of softmax cross-entropy against integer labels.
  // Scalar output; callers divide by the row count for a mean.
  Var softmax_xent_rows(Var logits, std::vector<int> labels);

  const Tensor& value(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }

  // d(loss)/d(param) for every slot in [0, slot_params.size()).
  // Parameters the loss does not depend on come back as zero tensors.
  // The loss must be scalar-valued.
  std::vector<Tensor> backward(Var loss,
                               const std::vector<const Tensor*>& slot_params) const;

  // Same walk, accumulating into an existing buffer (grads[slot] += ...).
  // Buffer entries must already have the parameter's shape.
  void backward_accumulate(Var loss, std::vector<Tensor>& slot_grads) const;

 private:
  enum class Op : std::uint8_t {
    kInput,
    kParam,
    kLookupRows,
    kMatMul,
    kTranspose,
    kAdd,
    kAddRowVec,
    kMulElem,
    kScale,
    kTanh,
    kSoftmaxRows,
    kConcatRows,
    kConcatCols,
    kSoftmaxXent,
  };

  struct Node {
    Op op;
    int a = -1, b = -1;
    std::vector<int> parts;   // concat inputs
    std::vector<int> idx;     // lookup row ids / xent labels
    double c = 0.0;           // scale factor
    Tensor value;             // forward result; empty for kParam
    const Tensor* external = nullptr;
    int slot = -1;
  };

  int push(Node n);
  const Tensor& val(int id) const;
  void check(Var v, const char* who) const;

  std::vector<Node> nodes_;
  std::vector<std::pair<int, int>> slot_nodes_;  // (slot, node id)
};

}  // namespace xlrec
