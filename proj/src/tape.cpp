#include "ikp/tape.hpp"

#include <algorithm>
#include <cmath>

namespace ikp::ad {

// ---------------- ParamStore ----------------

int ParamStore::add(const std::string& name, int rows, int cols) {
  if (rows < 1 || cols < 1) throw ConfigError("param '" + name + "': bad shape");
  if (find(name) >= 0) throw ConfigError("param '" + name + "' already exists");
  ParamArray a;
  a.name = name;
  a.rows = rows;
  a.cols = cols;
  a.data.assign(static_cast<size_t>(rows) * cols, 0.0);
  arrays_.push_back(std::move(a));
  return static_cast<int>(arrays_.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
  for (int i = 0; i < count(); ++i)
    if (arrays_[i].name == name) return i;
  return -1;
}

Eigen::Map<MatrixXd> ParamStore::mat(int id) {
  ParamArray& a = arrays_[id];
  return Eigen::Map<MatrixXd>(a.data.data(), a.rows, a.cols);
}

Eigen::Map<const MatrixXd> ParamStore::mat(int id) const {
  const ParamArray& a = arrays_[id];
  return Eigen::Map<const MatrixXd>(a.data.data(), a.rows, a.cols);
}

Eigen::Map<VectorXd> ParamStore::vec(int id) {
  ParamArray& a = arrays_[id];
  return Eigen::Map<VectorXd>(a.data.data(), static_cast<int>(a.data.size()));
}

Eigen::Map<const VectorXd> ParamStore::vec(int id) const {
  const ParamArray& a = arrays_[id];
  return Eigen::Map<const VectorXd>(a.data.data(), static_cast<int>(a.data.size()));
}

int64_t ParamStore::total_size() const {
  int64_t t = 0;
  for (const auto& a : arrays_) t += static_cast<int64_t>(a.data.size());
  return t;
}

// ---------------- GradStore ----------------

GradStore::GradStore(const ParamStore& params) {
  data_.resize(params.count());
  for (int i = 0; i < params.count(); ++i)
    data_[i].assign(params.array(i).data.size(), 0.0);
}

void GradStore::zero() {
  for (auto& v : data_) std::fill(v.begin(), v.end(), 0.0);
}

void GradStore::add_scaled(const GradStore& other, double s) {
  for (size_t i = 0; i < data_.size(); ++i) {
    const auto& src = other.data_[i];
    auto& dst = data_[i];
    for (size_t k = 0; k < dst.size(); ++k) dst[k] += s * src[k];
  }
}

bool GradStore::all_finite() const {
  for (const auto& v : data_)
    for (double x : v)
      if (!std::isfinite(x)) return false;
  return true;
}

// ---------------- Tape ----------------

void Tape::reset() {
  nodes_.clear();
  values_.clear();
  extra_inputs_.clear();
  param_nodes_.clear();
  adj_size_ = 0;
  ran_backward_ = false;
}

NodeId Tape::push(Node nd, bool owns_value) {
  nd.adj = adj_size_;
  adj_size_ += nd.n;
  if (owns_value) {
    nd.val = static_cast<int>(values_.size());
    values_.resize(values_.size() + nd.n);
  }
  nodes_.push_back(nd);
  ran_backward_ = false;
  return static_cast<NodeId>(nodes_.size()) - 1;
}

double* Tape::owned(NodeId id) { return values_.data() + nodes_[id].val; }

const double* Tape::data(NodeId id) const {
  const Node& nd = nodes_[id];
  if (nd.op == Op::kParam) return nd.ext;
  if (nd.op == Op::kSlice) return data(nd.a) + nd.slice_start;
  return values_.data() + nd.val;
}

double Tape::value_scalar(NodeId id) const {
  if (size(id) != 1) throw ConfigError("value_scalar on non-scalar node");
  return data(id)[0];
}

VectorXd Tape::value(NodeId id) const {
  return Eigen::Map<const VectorXd>(data(id), size(id));
}

void Tape::check_vec(NodeId id, const char* who) const {
  if (id < 0 || id >= node_count()) throw ConfigError(std::string(who) + ": bad node id");
  if (nodes_[id].rows > 0) throw ConfigError(std::string(who) + ": expected vector node");
}

NodeId Tape::input(const double* v, int n) {
  if (n < 1) throw ConfigError("input: empty vector");
  Node nd;
  nd.op = Op::kInput;
  nd.n = n;
  NodeId id = push(nd, true);
  std::copy(v, v + n, owned(id));
  return id;
}

NodeId Tape::input(std::initializer_list<double> v) {
  return input(v.begin() == v.end() ? nullptr : &*v.begin(), static_cast<int>(v.size()));
}

NodeId Tape::param(int param_id) {
  if (!params_) throw ConfigError("param: tape has no ParamStore");
  if (param_id >= 0 && param_id < static_cast<int>(param_nodes_.size()) &&
      param_nodes_[param_id] >= 0)
    return param_nodes_[param_id];  // one leaf per slot, adjoints accumulate
  const ParamArray& a = params_->array(param_id);
  Node nd;
  nd.op = Op::kParam;
  nd.n = static_cast<int>(a.data.size());
  nd.rows = a.cols > 1 ? a.rows : 0;
  nd.ext = a.data.data();
  nd.pslot = param_id;
  const NodeId id = push(nd, false);
  if (param_id >= static_cast<int>(param_nodes_.size()))
    param_nodes_.resize(param_id + 1, -1);
  param_nodes_[param_id] = id;
  return id;
}

NodeId Tape::slice(NodeId v, int start, int len) {
  if (start < 0 || len < 1 || start + len > size(v)) throw ConfigError("slice: out of range");
  Node nd;
  nd.op = Op::kSlice;
  nd.a = v;
  nd.n = len;
  nd.slice_start = start;
  return push(nd, false);
}

NodeId Tape::concat(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw ConfigError("concat: no parts");
  Node nd;
  nd.op = Op::kConcat;
  nd.extra = static_cast<int>(extra_inputs_.size());
  nd.extra_n = static_cast<int>(parts.size());
  int total = 0;
  for (NodeId p : parts) {
    check_vec(p, "concat");
    total += size(p);
  }
  extra_inputs_.insert(extra_inputs_.end(), parts.begin(), parts.end());
  nd.n = total;
  NodeId id = push(nd, true);
  double* out = owned(id);
  for (NodeId p : parts) {
    const double* src = data(p);
    out = std::copy(src, src + size(p), out);
  }
  return id;
}

NodeId Tape::affine(NodeId w, NodeId x, NodeId b) {
  const Node& wn = nodes_[w];
  if (wn.rows <= 0) throw ConfigError("affine: W must be a matrix param");
  const int rows = wn.rows, cols = wn.n / wn.rows;
  check_vec(x, "affine");
  if (size(x) != cols) throw ConfigError("affine: dimension mismatch");
  if (b >= 0 && size(b) != rows) throw ConfigError("affine: bias dimension mismatch");
  Node nd;
  nd.op = Op::kAffine;
  nd.a = w;
  nd.b = x;
  nd.c = b;
  nd.n = rows;
  NodeId id = push(nd, true);
  Eigen::Map<const MatrixXd> W(data(w), rows, cols);
  Eigen::Map<const VectorXd> X(data(x), cols);
  Eigen::Map<VectorXd> Y(owned(id), rows);
  Y.noalias() = W * X;
  if (b >= 0) Y += Eigen::Map<const VectorXd>(data(b), rows);
  return id;
}

NodeId Tape::tanh(NodeId x) {
  check_vec(x, "tanh");
  Node nd;
  nd.op = Op::kTanh;
  nd.a = x;
  nd.n = size(x);
  NodeId id = push(nd, true);
  const double* src = data(x);
  double* out = owned(id);
  for (int i = 0; i < nd.n; ++i) out[i] = std::tanh(src[i]);
  return id;
}

NodeId Tape::add(NodeId x, NodeId y) {
  check_vec(x, "add");
  check_vec(y, "add");
  if (size(x) != size(y)) throw ConfigError("add: dimension mismatch");
  Node nd;
  nd.op = Op::kAdd;
  nd.a = x;
  nd.b = y;
  nd.n = size(x);
  NodeId id = push(nd, true);
  const double* xa = data(x);
  const double* ya = data(y);
  double* out = owned(id);
  for (int i = 0; i < nd.n; ++i) out[i] = xa[i] + ya[i];
  return id;
}

NodeId Tape::sub(NodeId x, NodeId y) {
  check_vec(x, "sub");
  check_vec(y, "sub");
  if (size(x) != size(y)) throw ConfigError("sub: dimension mismatch");
  Node nd;
  nd.op = Op::kSub;
  nd.a = x;
  nd.b = y;
  nd.n = size(x);
  NodeId id = push(nd, true);
  const double* xa = data(x);
  const double* ya = data(y);
  double* out = owned(id);
  for (int i = 0; i < nd.n; ++i) out[i] = xa[i] - ya[i];
  return id;
}

NodeId Tape::mul(NodeId x, NodeId y) {
  check_vec(x, "mul");
  check_vec(y, "mul");
  if (size(x) != size(y)) throw ConfigError("mul: dimension mismatch");
  Node nd;
  nd.op = Op::kMul;
  nd.a = x;
  nd.b = y;
  nd.n = size(x);
  NodeId id = push(nd, true);
  const double* xa = data(x);
  const double* ya = data(y);
  double* out = owned(id);
  for (int i = 0; i < nd.n; ++i) out[i] = xa[i] * ya[i];
  return id;
}

NodeId Tape::scale(NodeId x, double s) {
  check_vec(x, "scale");
  Node nd;
  nd.op = Op::kScale;
  nd.a = x;
  nd.n = size(x);
  nd.aux = s;
  NodeId id = push(nd, true);
  const double* xa = data(x);
  double* out = owned(id);
  for (int i = 0; i < nd.n; ++i) out[i] = s * xa[i];
  return id;
}

NodeId Tape::sin(NodeId x) {
  check_vec(x, "sin");
  Node nd;
  nd.op = Op::kSin;
  nd.a = x;
  nd.n = size(x);
  NodeId id = push(nd, true);
  const double* xa = data(x);
  double* out = owned(id);
  for (int i = 0; i < nd.n; ++i) out[i] = std::sin(xa[i]);
  return id;
}

NodeId Tape::cos(NodeId x) {
  check_vec(x, "cos");
  Node nd;
  nd.op = Op::kCos;
  nd.a = x;
  nd.n = size(x);
  NodeId id = push(nd, true);
  const double* xa = data(x);
  double* out = owned(id);
  for (int i = 0; i < nd.n; ++i) out[i] = std::cos(xa[i]);
  return id;
}

NodeId Tape::sum(NodeId x) {
  check_vec(x, "sum");
  Node nd;
  nd.op = Op::kSum;
  nd.a = x;
  nd.n = 1;
  NodeId id = push(nd, true);
  const double* xa = data(x);
  double acc = 0.0;
  for (int i = 0; i < size(x); ++i) acc += xa[i];
  owned(id)[0] = acc;
  return id;
}

NodeId Tape::dot(NodeId x, NodeId y) {
  check_vec(x, "dot");
  check_vec(y, "dot");
  if (size(x) != size(y)) throw ConfigError("dot: dimension mismatch");
  Node nd;
  nd.op = Op::kDot;
  nd.a = x;
  nd.b = y;
  nd.n = 1;
  NodeId id = push(nd, true);
  const double* xa = data(x);
  const double* ya = data(y);
  double acc = 0.0;
  for (int i = 0; i < size(x); ++i) acc += xa[i] * ya[i];
  owned(id)[0] = acc;
  return id;
}

NodeId Tape::infonce(NodeId energies) {
  check_vec(energies, "infonce");
  const int k = size(energies);
  if (k < 2) throw ConfigError("infonce: need positive plus at least one negative");
  Node nd;
  nd.op = Op::kInfoNce;
  nd.a = energies;
  nd.n = 1;
  NodeId id = push(nd, true);
  const double* e = data(energies);
  double m = -e[0];
  for (int i = 1; i < k; ++i) m = std::max(m, -e[i]);
  if (!std::isfinite(m)) throw TrainingError("infonce: non-finite energy");
  double s = 0.0;
  for (int i = 0; i < k; ++i) s += std::exp(-e[i] - m);
  owned(id)[0] = e[0] + m + std::log(s);
  return id;
}

void Tape::backward(NodeId root, double seed) {
  if (nodes_.empty() || root < 0 || root >= node_count())
    throw StateError("backward: no recorded forward pass for this root");
  if (size(root) != 1) throw ConfigError("backward: root must be scalar");
  adjoints_.assign(static_cast<size_t>(adj_size_), 0.0);
  adj_ptr(root)[0] = seed;

  for (NodeId id = root; id >= 0; --id) {
    const Node& nd = nodes_[id];
    const double* g = adj_ptr(id);
    switch (nd.op) {
      case Op::kInput:
      case Op::kParam:
        break;
      case Op::kSlice: {
        double* ga = adj_ptr(nd.a) + nd.slice_start;
        for (int i = 0; i < nd.n; ++i) ga[i] += g[i];
        break;
      }
      case Op::kConcat: {
        int off = 0;
        for (int p = 0; p < nd.extra_n; ++p) {
          NodeId part = extra_inputs_[nd.extra + p];
          double* ga = adj_ptr(part);
          const int pn = size(part);
          for (int i = 0; i < pn; ++i) ga[i] += g[off + i];
          off += pn;
        }
        break;
      }
      case Op::kAffine: {
        const Node& wn = nodes_[nd.a];
        const int rows = nd.n, cols = wn.n / wn.rows;
        Eigen::Map<const MatrixXd> W(data(nd.a), rows, cols);
        Eigen::Map<const VectorXd> X(data(nd.b), cols);
        Eigen::Map<const VectorXd> G(g, rows);
        Eigen::Map<MatrixXd> GW(adj_ptr(nd.a), rows, cols);
        Eigen::Map<VectorXd> GX(adj_ptr(nd.b), cols);
        GW.noalias() += G * X.transpose();
        GX.noalias() += W.transpose() * G;
        if (nd.c >= 0) {
          double* gb = adj_ptr(nd.c);
          for (int i = 0; i < rows; ++i) gb[i] += g[i];
        }
        break;
      }
      case Op::kTanh: {
        const double* y = data(id);
        double* ga = adj_ptr(nd.a);
        for (int i = 0; i < nd.n; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case Op::kAdd: {
        double* ga = adj_ptr(nd.a);
        double* gb = adj_ptr(nd.b);
        for (int i = 0; i < nd.n; ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::kSub: {
        double* ga = adj_ptr(nd.a);
        double* gb = adj_ptr(nd.b);
        for (int i = 0; i < nd.n; ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
        break;
      }
      case Op::kMul: {
        const double* xa = data(nd.a);
        const double* ya = data(nd.b);
        double* ga = adj_ptr(nd.a);
        double* gb = adj_ptr(nd.b);
        for (int i = 0; i < nd.n; ++i) {
          ga[i] += g[i] * ya[i];
          gb[i] += g[i] * xa[i];
        }
        break;
      }
      case Op::kScale: {
        double* ga = adj_ptr(nd.a);
        for (int i = 0; i < nd.n; ++i) ga[i] += g[i] * nd.aux;
        break;
      }
      case Op::kSin: {
        const double* xa = data(nd.a);
        double* ga = adj_ptr(nd.a);
        for (int i = 0; i < nd.n; ++i) ga[i] += g[i] * std::cos(xa[i]);
        break;
      }
      case Op::kCos: {
        const double* xa = data(nd.a);
        double* ga = adj_ptr(nd.a);
        for (int i = 0; i < nd.n; ++i) ga[i] -= g[i] * std::sin(xa[i]);
        break;
      }
      case Op::kSum: {
        double* ga = adj_ptr(nd.a);
        const int an = size(nd.a);
        for (int i = 0; i < an; ++i) ga[i] += g[0];
        break;
      }
      case Op::kDot: {
        const double* xa = data(nd.a);
        const double* ya = data(nd.b);
        double* ga = adj_ptr(nd.a);
        double* gb = adj_ptr(nd.b);
        const int an = size(nd.a);
        for (int i = 0; i < an; ++i) {
          ga[i] += g[0] * ya[i];
          gb[i] += g[0] * xa[i];
        }
        break;
      }
      case Op::kInfoNce: {
        const double* e = data(nd.a);
        double* ge = adj_ptr(nd.a);
        const int k = size(nd.a);
        double m = -e[0];
        for (int i = 1; i < k; ++i) m = std::max(m, -e[i]);
        double s = 0.0;
        for (int i = 0; i < k; ++i) s += std::exp(-e[i] - m);
        // dL/dE_i = 1{i==0} - softmax(-E)_i
        for (int i = 0; i < k; ++i) {
          const double p = std::exp(-e[i] - m) / s;
          ge[i] += g[0] * ((i == 0 ? 1.0 : 0.0) - p);
        }
        break;
      }
    }
  }
  ran_backward_ = true;
}

VectorXd Tape::adjoint(NodeId id) const {
  if (!ran_backward_) throw StateError("adjoint: backward has not run");
  return Eigen::Map<const VectorXd>(adj_ptr(id), size(id));
}

double Tape::adjoint_scalar(NodeId id) const {
  if (!ran_backward_) throw StateError("adjoint: backward has not run");
  if (size(id) != 1) throw ConfigError("adjoint_scalar on non-scalar node");
  return adj_ptr(id)[0];
}

void Tape::export_param_grads(GradStore& grads, double scale) const {
  if (!ran_backward_) throw StateError("export_param_grads: backward has not run");
  for (NodeId id = 0; id < node_count(); ++id) {
    const Node& nd = nodes_[id];
    if (nd.op != Op::kParam) continue;
    auto& slot = grads.slot(nd.pslot);
    const double* g = adj_ptr(id);
    for (int i = 0; i < nd.n; ++i) slot[i] += scale * g[i];
  }
}

}  // namespace ikp::ad
