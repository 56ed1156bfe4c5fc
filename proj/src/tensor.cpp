#include "sentgraph/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace sentgraph::nn {

namespace {

constexpr double kPi = 3.14159265358979323846;

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) {  // log(1 + e^z) without overflow
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace

double Rng::normal() {
  double u1 = uniform(), u2 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

Mat xavier_init(int rows, int cols, Rng& rng) {
  return normal_init(rows, cols, std::sqrt(2.0 / (rows + cols)), rng);
}

Mat normal_init(int rows, int cols, double stddev, Rng& rng) {
  Mat m(rows, cols);
  for (double& x : m.data) x = stddev * rng.normal();
  return m;
}

void Tape::check_finite(const Mat& m, const char* where) {
  for (double x : m.data) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string("non-finite value in ") + where);
    }
  }
}

int Tape::push(Node node, const char* op_name) {
  check_finite(node.value, op_name);
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::input(Mat value) {
  Node n;
  n.op = Op::Input;
  n.value = std::move(value);
  return push(std::move(n), "input");
}

int Tape::param(Mat* value, Mat* grad) {
  if (value->rows != grad->rows || value->cols != grad->cols) {
    throw std::invalid_argument("param: value/grad shape mismatch");
  }
  Node n;
  n.op = Op::Param;
  n.value = *value;
  n.ext_value = value;
  n.ext_grad = grad;
  return push(std::move(n), "param");
}

int Tape::matmul(int a, int b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  if (A.cols != B.rows) throw std::invalid_argument("matmul: inner dims differ");
  Node n;
  n.op = Op::MatMul;
  n.inputs = {a, b};
  n.value = Mat(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i) {
    for (int k = 0; k < A.cols; ++k) {
      double aik = A.at(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < B.cols; ++j) n.value.at(i, j) += aik * B.at(k, j);
    }
  }
  return push(std::move(n), "matmul");
}

int Tape::transpose(int a) {
  const Mat& A = val(a);
  Node n;
  n.op = Op::Transpose;
  n.inputs = {a};
  n.value = Mat(A.cols, A.rows);
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < A.cols; ++j) n.value.at(j, i) = A.at(i, j);
  return push(std::move(n), "transpose");
}

int Tape::add(int a, int b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  if (A.rows != B.rows || A.cols != B.cols) throw std::invalid_argument("add: shape mismatch");
  Node n;
  n.op = Op::Add;
  n.inputs = {a, b};
  n.value = A;
  for (int i = 0; i < A.size(); ++i) n.value.data[i] += B.data[i];
  return push(std::move(n), "add");
}

int Tape::sub(int a, int b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  if (A.rows != B.rows || A.cols != B.cols) throw std::invalid_argument("sub: shape mismatch");
  Node n;
  n.op = Op::Sub;
  n.inputs = {a, b};
  n.value = A;
  for (int i = 0; i < A.size(); ++i) n.value.data[i] -= B.data[i];
  return push(std::move(n), "sub");
}

int Tape::mul(int a, int b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  if (A.rows != B.rows || A.cols != B.cols) throw std::invalid_argument("mul: shape mismatch");
  Node n;
  n.op = Op::Mul;
  n.inputs = {a, b};
  n.value = A;
  for (int i = 0; i < A.size(); ++i) n.value.data[i] *= B.data[i];
  return push(std::move(n), "mul");
}

int Tape::affine(int a, double k, double b) {
  Node n;
  n.op = Op::Affine;
  n.inputs = {a};
  n.aux_a = k;
  n.aux_b = b;
  n.value = val(a);
  for (double& x : n.value.data) x = k * x + b;
  return push(std::move(n), "affine");
}

int Tape::add_row_broadcast(int a, int row) {
  const Mat& A = val(a);
  const Mat& R = val(row);
  if (R.rows != 1 || R.cols != A.cols) throw std::invalid_argument("add_row_broadcast: bad row shape");
  Node n;
  n.op = Op::AddRow;
  n.inputs = {a, row};
  n.value = A;
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < A.cols; ++j) n.value.at(i, j) += R.at(0, j);
  return push(std::move(n), "add_row_broadcast");
}

int Tape::add_scalar_broadcast(int a, int one) {
  const Mat& A = val(a);
  const Mat& S = val(one);
  if (S.rows != 1 || S.cols != 1) throw std::invalid_argument("add_scalar_broadcast: not 1x1");
  Node n;
  n.op = Op::AddScalar;
  n.inputs = {a, one};
  n.value = A;
  for (double& x : n.value.data) x += S.data[0];
  return push(std::move(n), "add_scalar_broadcast");
}

int Tape::sigmoid(int a) {
  Node n;
  n.op = Op::Sigmoid;
  n.inputs = {a};
  n.value = val(a);
  for (double& x : n.value.data) x = stable_sigmoid(x);
  return push(std::move(n), "sigmoid");
}

int Tape::tanh_op(int a) {
  Node n;
  n.op = Op::Tanh;
  n.inputs = {a};
  n.value = val(a);
  for (double& x : n.value.data) x = std::tanh(x);
  return push(std::move(n), "tanh");
}

int Tape::gelu(int a) {
  Node n;
  n.op = Op::Gelu;
  n.inputs = {a};
  n.value = val(a);
  const double c = std::sqrt(2.0 / kPi);
  for (double& x : n.value.data) {
    double u = c * (x + 0.044715 * x * x * x);
    x = 0.5 * x * (1.0 + std::tanh(u));
  }
  return push(std::move(n), "gelu");
}

int Tape::row_softmax(int a) {
  const Mat& A = val(a);
  Node n;
  n.op = Op::Softmax;
  n.inputs = {a};
  n.value = A;
  for (int i = 0; i < A.rows; ++i) {
    double mx = -1e300;
    for (int j = 0; j < A.cols; ++j) mx = std::max(mx, A.at(i, j));
    double z = 0.0;
    for (int j = 0; j < A.cols; ++j) {
      double e = std::exp(A.at(i, j) - mx);
      n.value.at(i, j) = e;
      z += e;
    }
    for (int j = 0; j < A.cols; ++j) n.value.at(i, j) /= z;
  }
  return push(std::move(n), "row_softmax");
}

int Tape::row_log_softmax(int a) {
  const Mat& A = val(a);
  Node n;
  n.op = Op::LogSoftmax;
  n.inputs = {a};
  n.value = A;
  for (int i = 0; i < A.rows; ++i) {
    double mx = -1e300;
    for (int j = 0; j < A.cols; ++j) mx = std::max(mx, A.at(i, j));
    double z = 0.0;
    for (int j = 0; j < A.cols; ++j) z += std::exp(A.at(i, j) - mx);
    double lz = mx + std::log(z);
    for (int j = 0; j < A.cols; ++j) n.value.at(i, j) = A.at(i, j) - lz;
  }
  return push(std::move(n), "row_log_softmax");
}

int Tape::layer_norm(int a, int gain, int bias, double eps) {
  const Mat& A = val(a);
  const Mat& G = val(gain);
  const Mat& B = val(bias);
  if (G.rows != 1 || G.cols != A.cols || B.rows != 1 || B.cols != A.cols) {
    throw std::invalid_argument("layer_norm: gain/bias must be 1×cols");
  }
  Node n;
  n.op = Op::LayerNorm;
  n.inputs = {a, gain, bias};
  n.aux_a = eps;
  n.value = Mat(A.rows, A.cols);
  n.aux_mat = Mat(A.rows, A.cols + 1);  // cached x̂ plus per-row 1/std
  for (int i = 0; i < A.rows; ++i) {
    double mean = 0.0;
    for (int j = 0; j < A.cols; ++j) mean += A.at(i, j);
    mean /= A.cols;
    double var = 0.0;
    for (int j = 0; j < A.cols; ++j) {
      double d = A.at(i, j) - mean;
      var += d * d;
    }
    var /= A.cols;
    double istd = 1.0 / std::sqrt(var + eps);
    n.aux_mat.at(i, A.cols) = istd;
    for (int j = 0; j < A.cols; ++j) {
      double xh = (A.at(i, j) - mean) * istd;
      n.aux_mat.at(i, j) = xh;
      n.value.at(i, j) = G.at(0, j) * xh + B.at(0, j);
    }
  }
  return push(std::move(n), "layer_norm");
}

int Tape::lookup(int table, std::vector<int> ids) {
  const Mat& T = val(table);
  for (int id : ids) {
    if (id < 0 || id >= T.rows) throw std::invalid_argument("lookup: row id out of range");
  }
  Node n;
  n.op = Op::Lookup;
  n.inputs = {table};
  n.value = Mat(static_cast<int>(ids.size()), T.cols);
  for (size_t i = 0; i < ids.size(); ++i)
    for (int j = 0; j < T.cols; ++j) n.value.at(static_cast<int>(i), j) = T.at(ids[i], j);
  n.aux_ints = std::move(ids);
  return push(std::move(n), "lookup");
}

int Tape::select_rows(int a, std::vector<int> ids) {
  return lookup(a, std::move(ids));  // same semantics
}

int Tape::slice_cols(int a, int start, int len) {
  const Mat& A = val(a);
  if (start < 0 || len <= 0 || start + len > A.cols) {
    throw std::invalid_argument("slice_cols: range out of bounds");
  }
  Node n;
  n.op = Op::SliceCols;
  n.inputs = {a};
  n.aux_ints = {start, len};
  n.value = Mat(A.rows, len);
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < len; ++j) n.value.at(i, j) = A.at(i, start + j);
  return push(std::move(n), "slice_cols");
}

int Tape::concat_cols(const std::vector<int>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  int rows = val(parts[0]).rows, cols = 0;
  for (int p : parts) {
    if (val(p).rows != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += val(p).cols;
  }
  Node n;
  n.op = Op::ConcatCols;
  n.inputs = parts;
  n.value = Mat(rows, cols);
  int off = 0;
  for (int p : parts) {
    const Mat& P = val(p);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < P.cols; ++j) n.value.at(i, off + j) = P.at(i, j);
    off += P.cols;
  }
  return push(std::move(n), "concat_cols");
}

int Tape::concat_rows(const std::vector<int>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  int cols = val(parts[0]).cols, rows = 0;
  for (int p : parts) {
    if (val(p).cols != cols) throw std::invalid_argument("concat_rows: col mismatch");
    rows += val(p).rows;
  }
  Node n;
  n.op = Op::ConcatRows;
  n.inputs = parts;
  n.value = Mat(rows, cols);
  int off = 0;
  for (int p : parts) {
    const Mat& P = val(p);
    for (int i = 0; i < P.rows; ++i)
      for (int j = 0; j < cols; ++j) n.value.at(off + i, j) = P.at(i, j);
    off += P.rows;
  }
  return push(std::move(n), "concat_rows");
}

int Tape::reshape(int a, int rows, int cols) {
  const Mat& A = val(a);
  if (rows * cols != A.size()) throw std::invalid_argument("reshape: size mismatch");
  Node n;
  n.op = Op::Reshape;
  n.inputs = {a};
  n.value = Mat(rows, cols);
  n.value.data = A.data;
  return push(std::move(n), "reshape");
}

int Tape::gather(int a, std::vector<std::pair<int, int>> cells) {
  const Mat& A = val(a);
  Node n;
  n.op = Op::Gather;
  n.inputs = {a};
  n.value = Mat(static_cast<int>(cells.size()), 1);
  for (size_t i = 0; i < cells.size(); ++i) {
    auto [r, c] = cells[i];
    if (r < 0 || r >= A.rows || c < 0 || c >= A.cols) {
      throw std::invalid_argument("gather: cell out of range");
    }
    n.value.at(static_cast<int>(i), 0) = A.at(r, c);
  }
  n.aux_cells = std::move(cells);
  return push(std::move(n), "gather");
}

int Tape::sum_all(int a) {
  Node n;
  n.op = Op::SumAll;
  n.inputs = {a};
  n.value = Mat(1, 1);
  for (double x : val(a).data) n.value.data[0] += x;
  return push(std::move(n), "sum_all");
}

int Tape::mean_all(int a) {
  if (val(a).size() == 0) throw std::invalid_argument("mean_all: empty input");
  Node n;
  n.op = Op::MeanAll;
  n.inputs = {a};
  n.value = Mat(1, 1);
  for (double x : val(a).data) n.value.data[0] += x;
  n.value.data[0] /= val(a).size();
  return push(std::move(n), "mean_all");
}

int Tape::bce_with_logits(int logits, Mat targets, double gamma) {
  const Mat& X = val(logits);
  if (targets.rows != X.rows || targets.cols != X.cols) {
    throw std::invalid_argument("bce_with_logits: target shape mismatch");
  }
  for (double y : targets.data) {
    if (y != 0.0 && y != 1.0) throw std::invalid_argument("bce_with_logits: targets must be 0/1");
  }
  Node n;
  n.op = Op::BceLogits;
  n.inputs = {logits};
  n.aux_a = gamma;
  n.value = Mat(X.rows, X.cols);
  for (int i = 0; i < X.size(); ++i) {
    double xt = (2.0 * targets.data[i] - 1.0) * X.data[i];
    double s = stable_sigmoid(-xt);  // 1 - p_t
    double sp = softplus(-xt);       // -log p_t
    n.value.data[i] = gamma > 0.0 ? std::pow(s, gamma) * sp : sp;
  }
  n.aux_mat = std::move(targets);
  return push(std::move(n), "bce_with_logits");
}

int Tape::cross_entropy(int logits, std::vector<int> targets, double gamma) {
  const Mat& X = val(logits);
  if (static_cast<int>(targets.size()) != X.rows) {
    throw std::invalid_argument("cross_entropy: one target per row required");
  }
  for (int t : targets) {
    if (t < 0 || t >= X.cols) throw std::invalid_argument("cross_entropy: class id out of range");
  }
  Node n;
  n.op = Op::CrossEntropy;
  n.inputs = {logits};
  n.aux_a = gamma;
  n.value = Mat(X.rows, 1);
  n.aux_mat = Mat(X.rows, X.cols);  // cached softmax rows
  for (int i = 0; i < X.rows; ++i) {
    double mx = -1e300;
    for (int j = 0; j < X.cols; ++j) mx = std::max(mx, X.at(i, j));
    double z = 0.0;
    for (int j = 0; j < X.cols; ++j) z += std::exp(X.at(i, j) - mx);
    double lz = mx + std::log(z);
    for (int j = 0; j < X.cols; ++j) n.aux_mat.at(i, j) = std::exp(X.at(i, j) - lz);
    double lp = X.at(i, targets[i]) - lz;
    double p = std::exp(lp);
    n.value.at(i, 0) = gamma > 0.0 ? std::pow(1.0 - p, gamma) * (-lp) : -lp;
  }
  n.aux_ints = std::move(targets);
  return push(std::move(n), "cross_entropy");
}

int Tape::dropout(int a, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0, 1)");
  if (p == 0.0) return a;
  const Mat& A = val(a);
  Node n;
  n.op = Op::Dropout;
  n.inputs = {a};
  n.aux_mat = Mat(A.rows, A.cols);
  double keep = 1.0 - p;
  for (double& m : n.aux_mat.data) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
  n.value = A;
  for (int i = 0; i < A.size(); ++i) n.value.data[i] *= n.aux_mat.data[i];
  return push(std::move(n), "dropout");
}

double Tape::item(int id) const {
  const Mat& m = nodes_[id].value;
  if (m.rows != 1 || m.cols != 1) throw std::invalid_argument("item: node is not 1×1");
  return m.data[0];
}

void Tape::backward(int root, double seed) {
  if (root < 0 || root >= static_cast<int>(nodes_.size())) {
    throw std::invalid_argument("backward: bad root");
  }
  if (nodes_[root].value.rows != 1 || nodes_[root].value.cols != 1) {
    throw std::invalid_argument("backward: root must be scalar");
  }
  for (Node& n : nodes_) n.grad = Mat(n.value.rows, n.value.cols);
  nodes_[root].grad.data[0] = seed;

  for (int id = root; id >= 0; --id) {
    Node& n = nodes_[id];
    const Mat& G = n.grad;
    bool all_zero = true;
    for (double g : G.data) {
      if (g != 0.0) { all_zero = false; break; }
    }
    if (all_zero) continue;
    check_finite(G, "gradient");

    switch (n.op) {
      case Op::Input:
        break;
      case Op::Param:
        for (int i = 0; i < G.size(); ++i) n.ext_grad->data[i] += G.data[i];
        break;
      case Op::MatMul: {
        const Mat& A = val(n.inputs[0]);
        const Mat& B = val(n.inputs[1]);
        Mat& dA = nodes_[n.inputs[0]].grad;
        Mat& dB = nodes_[n.inputs[1]].grad;
        for (int i = 0; i < A.rows; ++i)
          for (int j = 0; j < B.cols; ++j) {
            double g = G.at(i, j);
            if (g == 0.0) continue;
            for (int k = 0; k < A.cols; ++k) {
              dA.at(i, k) += g * B.at(k, j);
              dB.at(k, j) += g * A.at(i, k);
            }
          }
        break;
      }
      case Op::Transpose: {
        Mat& dA = nodes_[n.inputs[0]].grad;
        for (int i = 0; i < G.rows; ++i)
          for (int j = 0; j < G.cols; ++j) dA.at(j, i) += G.at(i, j);
        break;
      }
      case Op::Add: {
        Mat& dA = nodes_[n.inputs[0]].grad;
        Mat& dB = nodes_[n.inputs[1]].grad;
        for (int i = 0; i < G.size(); ++i) {
          dA.data[i] += G.data[i];
          dB.data[i] += G.data[i];
        }
        break;
      }
      case Op::Sub: {
        Mat& dA = nodes_[n.inputs[0]].grad;
        Mat& dB = nodes_[n.inputs[1]].grad;
        for (int i = 0; i < G.size(); ++i) {
          dA.data[i] += G.data[i];
          dB.data[i] -= G.data[i];
        }
        break;
      }
      case Op::Mul: {
        const Mat& A = val(n.inputs[0]);
        const Mat& B = val(n.inputs[1]);
        Mat& dA = nodes_[n.inputs[0]].grad;
        Mat& dB = nodes_[n.inputs[1]].grad;
        for (int i = 0; i < G.size(); ++i) {
          dA.data[i] += G.data[i] * B.data[i];
          dB.data[i] += G.data[i] * A.data[i];
        }
        break;
      }
      case Op::Affine: {
        Mat& dA = nodes_[n.inputs[0]].grad;
        for (int i = 0; i < G.size(); ++i) dA.data[i] += n.aux_a * G.data[i];
        break;
      }
      case Op::AddRow: {
        Mat& dA = nodes_[n.inputs[0]].grad;
        Mat& dR = nodes_[n.inputs[1]].grad;
        for (int i = 0; i < G.rows; ++i)
          for (int j = 0; j < G.cols; ++j) {
            dA.at(i, j) += G.at(i, j);
            dR.at(0, j) += G.at(i, j);
          }
        break;
      }
      case Op::AddScalar: {
        Mat& dA = nodes_[n.inputs[0]].grad;
        Mat& dS = nodes_[n.inputs[1]].grad;
        for (int i = 0; i < G.size(); ++i) {
          dA.data[i] += G.data[i];
          dS.data[0] += G.data[i];
        }
        break;
      }
      case Op::Sigmoid: {
        Mat& dA = nodes_[n.inputs[0]].grad;
        for (int i = 0; i < G.size(); ++i) {
          double y = n.value.data[i];
          dA.data[i] += G.data[i] * y * (1.0 - y);
        }
        break;
      }
      case Op::Tanh: {
        Mat& dA = nodes_[n.inputs[0]].grad;
        for (int i = 0; i < G.size(); ++i) {
          double y = n.value.data[i];
          dA.data[i] += G.data[i] * (1.0 - y * y);
        }
        break;
      }
      case Op::Gelu: {
        const Mat& A = val(n.inputs[0]);
        Mat& dA = nodes_[n.inputs[0]].grad;
        const double c = std::sqrt(2.0 / kPi);
        for (int i = 0; i < G.size(); ++i) {
          double x = A.data[i];
          double u = c * (x + 0.044715 * x * x * x);
          double t = std::tanh(u);
          double du = c * (1.0 + 3.0 * 0.044715 * x * x);
          double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
          dA.data[i] += G.data[i] * d;
        }
        break;
      }
      case Op::Softmax: {
        Mat& dA = nodes_[n.inputs[0]].grad;
        for (int i = 0; i < G.rows; ++i) {
          double dot = 0.0;
          for (int j = 0; j < G.cols; ++j) dot += G.at(i, j) * n.value.at(i, j);
          for (int j = 0; j < G.cols; ++j)
            dA.at(i, j) += n.value.at(i, j) * (G.at(i, j) - dot);
        }
        break;
      }
      case Op::LogSoftmax: {
        Mat& dA = nodes_[n.inputs[0]].grad;
        for (int i = 0; i < G.rows; ++i) {
          double gsum = 0.0;
          for (int j = 0; j < G.cols; ++j) gsum += G.at(i, j);
          for (int j = 0; j < G.cols; ++j)
            dA.at(i, j) += G.at(i, j) - std::exp(n.value.at(i, j)) * gsum;
        }
        break;
      }
      case Op::LayerNorm: {
        const Mat& Gn = val(n.inputs[1]);
        Mat& dA = nodes_[n.inputs[0]].grad;
        Mat& dG = nodes_[n.inputs[1]].grad;
        Mat& dB = nodes_[n.inputs[2]].grad;
        int d = n.value.cols;
        for (int i = 0; i < n.value.rows; ++i) {
          double istd = n.aux_mat.at(i, d);
          double mean_dxh = 0.0, mean_dxh_xh = 0.0;
          for (int j = 0; j < d; ++j) {
            double dxh = G.at(i, j) * Gn.at(0, j);
            double xh = n.aux_mat.at(i, j);
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh;
            dG.at(0, j) += G.at(i, j) * xh;
            dB.at(0, j) += G.at(i, j);
          }
          mean_dxh /= d;
          mean_dxh_xh /= d;
          for (int j = 0; j < d; ++j) {
            double dxh = G.at(i, j) * Gn.at(0, j);
            double xh = n.aux_mat.at(i, j);
            dA.at(i, j) += istd * (dxh - mean_dxh - xh * mean_dxh_xh);
          }
        }
        break;
      }
      case Op::Lookup: {
        Mat& dT = nodes_[n.inputs[0]].grad;
        for (size_t i = 0; i < n.aux_ints.size(); ++i)
          for (int j = 0; j < G.cols; ++j)
            dT.at(n.aux_ints[i], j) += G.at(static_cast<int>(i), j);
        break;
      }
      case Op::SliceCols: {
        Mat& dA = nodes_[n.inputs[0]].grad;
        int start = n.aux_ints[0];
        for (int i = 0; i < G.rows; ++i)
          for (int j = 0; j < G.cols; ++j) dA.at(i, start + j) += G.at(i, j);
        break;
      }
      case Op::ConcatCols: {
        int off = 0;
        for (int p : n.inputs) {
          Mat& dP = nodes_[p].grad;
          for (int i = 0; i < G.rows; ++i)
            for (int j = 0; j < dP.cols; ++j) dP.at(i, j) += G.at(i, off + j);
          off += dP.cols;
        }
        break;
      }
      case Op::ConcatRows: {
        int off = 0;
        for (int p : n.inputs) {
          Mat& dP = nodes_[p].grad;
          for (int i = 0; i < dP.rows; ++i)
            for (int j = 0; j < G.cols; ++j) dP.at(i, j) += G.at(off + i, j);
          off += dP.rows;
        }
        break;
      }
      case Op::Reshape: {
        Mat& dA = nodes_[n.inputs[0]].grad;
        for (int i = 0; i < G.size(); ++i) dA.data[i] += G.data[i];
        break;
      }
      case Op::Gather: {
        Mat& dA = nodes_[n.inputs[0]].grad;
        for (size_t i = 0; i < n.aux_cells.size(); ++i)
          dA.at(n.aux_cells[i].first, n.aux_cells[i].second) += G.at(static_cast<int>(i), 0);
        break;
      }
      case Op::SumAll: {
        Mat& dA = nodes_[n.inputs[0]].grad;
        for (double& g : dA.data) g += G.data[0];
        break;
      }
      case Op::MeanAll: {
        Mat& dA = nodes_[n.inputs[0]].grad;
        double g = G.data[0] / dA.size();
        for (double& x : dA.data) x += g;
        break;
      }
      case Op::BceLogits: {
        const Mat& X = val(n.inputs[0]);
        Mat& dA = nodes_[n.inputs[0]].grad;
        double gamma = n.aux_a;
        for (int i = 0; i < G.size(); ++i) {
          double sign = 2.0 * n.aux_mat.data[i] - 1.0;
          double xt = sign * X.data[i];
          double s = stable_sigmoid(-xt);
          double d;
          if (gamma > 0.0) {
            double sp = softplus(-xt);
            d = -std::pow(s, gamma) * (gamma * (1.0 - s) * sp + s) * sign;
          } else {
            d = -s * sign;
          }
          dA.data[i] += G.data[i] * d;
        }
        break;
      }
      case Op::CrossEntropy: {
        const Mat& X = val(n.inputs[0]);
        Mat& dA = nodes_[n.inputs[0]].grad;
        double gamma = n.aux_a;
        for (int i = 0; i < X.rows; ++i) {
          double g = G.at(i, 0);
          if (g == 0.0) continue;
          int c = n.aux_ints[i];
          double p = n.aux_mat.at(i, c);
          double lp = std::log(std::max(p, 1e-300));
          double factor;
          if (gamma > 0.0) {
            double focal_d = p < 1.0 ? gamma * std::pow(1.0 - p, gamma - 1.0) * p * lp : 0.0;
            factor = focal_d - std::pow(1.0 - p, gamma);
          } else {
            factor = -1.0;
          }
          for (int j = 0; j < X.cols; ++j) {
            double delta = j == c ? 1.0 : 0.0;
            dA.at(i, j) += g * (delta - n.aux_mat.at(i, j)) * factor;
          }
        }
        break;
      }
      case Op::Dropout: {
        Mat& dA = nodes_[n.inputs[0]].grad;
        for (int i = 0; i < G.size(); ++i) dA.data[i] += G.data[i] * n.aux_mat.data[i];
        break;
      }
    }
  }
}

}  // namespace sentgraph::nn
