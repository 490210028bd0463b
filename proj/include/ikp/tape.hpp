#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ikp/common.hpp"

namespace ikp::ad {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using NodeId = int32_t;

// Named parameter arrays, column-major to match Eigen. cols == 1 for vectors.
struct ParamArray {
  std::string name;
  int rows = 0;
  int cols = 1;
  std::vector<double> data;
};

class ParamStore {
 public:
  int add(const std::string& name, int rows, int cols = 1);
  int find(const std::string& name) const;  // -1 if absent
  int count() const { return static_cast<int>(arrays_.size()); }
  ParamArray& array(int id) { return arrays_[id]; }
  const ParamArray& array(int id) const { return arrays_[id]; }
  Eigen::Map<MatrixXd> mat(int id);
  Eigen::Map<const MatrixXd> mat(int id) const;
  Eigen::Map<VectorXd> vec(int id);
  Eigen::Map<const VectorXd> vec(int id) const;
  int64_t total_size() const;

 private:
  std::vector<ParamArray> arrays_;
};

// Gradient (or moment) buffers shaped like a ParamStore.
class GradStore {
 public:
  GradStore() = default;
  explicit GradStore(const ParamStore& params);
  void zero();
  void add_scaled(const GradStore& other, double s);
  bool all_finite() const;
  std::vector<double>& slot(int id) { return data_[id]; }
  const std::vector<double>& slot(int id) const { return data_[id]; }
  int count() const { return static_cast<int>(data_.size()); }

 private:
  std::vector<std::vector<double>> data_;
};

enum class Op : uint8_t {
  kInput,    // owned leaf
  kParam,    // leaf viewing ParamStore data
  kSlice,    // contiguous view of another node
  kConcat,   // concatenation of several nodes
  kAffine,   // W*x + b (b optional)
  kTanh,
  kAdd,
  kSub,
  kMul,      // elementwise
  kScale,    // aux * x
  kSin,
  kCos,
  kSum,      // sum of elements -> scalar
  kDot,      // <a, b> -> scalar
  kInfoNce,  // energies (positive first) -> scalar loss
};

struct Node {
  Op op;
  NodeId a = -1, b = -1, c = -1;  // inputs (c: affine bias)
  int n = 0;                      // element count
  int rows = 0;                   // matrix rows (kParam only; 0 for vectors)
  int val = -1;                   // offset into owned value arena (-1 if view)
  int adj = -1;                   // offset into adjoint arena
  const double* ext = nullptr;    // external data (kParam)
  int slice_start = 0;            // kSlice
  int extra = -1, extra_n = 0;    // kConcat: range in extra_inputs_
  int pslot = -1;                 // ParamStore id for kParam
  double aux = 0.0;               // kScale factor
};

// Reverse-mode tape over vector values. Forward values are computed eagerly
// as nodes are created; backward() fills adjoints. Single-threaded per
// instance; independent tapes may run on separate threads.
class Tape {
 public:
  explicit Tape(const ParamStore* params = nullptr) : params_(params) {}

  // Drops all nodes but keeps arena capacity.
  void reset();
  void reset(const ParamStore* params) {
    params_ = params;
    reset();
  }

  // --- leaves ---
  NodeId input(const double* v, int n);
  NodeId input(const VectorXd& v) { return input(v.data(), static_cast<int>(v.size())); }
  NodeId input(std::initializer_list<double> v);
  NodeId scalar_input(double v) { return input(&v, 1); }
  NodeId param(int param_id);

  // --- ops ---
  NodeId slice(NodeId v, int start, int len);
  NodeId concat(const std::vector<NodeId>& parts);
  NodeId affine(NodeId w, NodeId x, NodeId b = -1);
  NodeId tanh(NodeId x);
  NodeId add(NodeId x, NodeId y);
  NodeId sub(NodeId x, NodeId y);
  NodeId mul(NodeId x, NodeId y);
  NodeId scale(NodeId x, double s);
  NodeId sin(NodeId x);
  NodeId cos(NodeId x);
  NodeId sum(NodeId x);
  NodeId dot(NodeId x, NodeId y);
  NodeId infonce(NodeId energies);

  // --- values ---
  int size(NodeId id) const { return nodes_[id].n; }
  const double* data(NodeId id) const;
  double value_scalar(NodeId id) const;
  VectorXd value(NodeId id) const;

  // --- backward ---
  void backward(NodeId root, double seed = 1.0);
  bool has_backward() const { return ran_backward_; }
  VectorXd adjoint(NodeId id) const;
  double adjoint_scalar(NodeId id) const;
  // Adds each kParam node's adjoint (times scale) into the matching slot.
  void export_param_grads(GradStore& grads, double scale = 1.0) const;

  int node_count() const { return static_cast<int>(nodes_.size()); }

 private:
  NodeId push(Node nd, bool owns_value);
  double* owned(NodeId id);
  double* adj_ptr(NodeId id) { return adjoints_.data() + nodes_[id].adj; }
  const double* adj_ptr(NodeId id) const { return adjoints_.data() + nodes_[id].adj; }
  void check_vec(NodeId id, const char* who) const;

  const ParamStore* params_ = nullptr;
  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> adjoints_;
  std::vector<NodeId> extra_inputs_;
  std::vector<NodeId> param_nodes_;  // memoized leaf per param slot
  int adj_size_ = 0;
  bool ran_backward_ = false;
};

}  // namespace ikp::ad
