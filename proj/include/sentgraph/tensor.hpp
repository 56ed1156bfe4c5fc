#ifndef SENTGRAPH_TENSOR_HPP
#define SENTGRAPH_TENSOR_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// Small dense-matrix autodiff tape. Everything is double precision and
// row-major; shapes are validated on every op and any NaN/Inf appearing in a
// value or gradient is a hard error (NumericError). Built for clarity and
// determinism rather than speed: the model sizes this project trains are tiny.
namespace sentgraph::nn {

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

struct Mat {
  int rows = 0, cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  int size() const { return rows * cols; }
};

// Deterministic RNG used for init, dropout masks and shuffling. splitmix64
// core; normal() is Box–Muller on two uniforms (cosine branch only).
struct Rng {
  uint64_t state;
  explicit Rng(uint64_t seed) : state(seed) {}
  uint64_t next() {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double uniform() {  // [0, 1)
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }
  double normal();
  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(next() % static_cast<uint64_t>(hi - lo + 1));
  }
};

Mat xavier_init(int rows, int cols, Rng& rng);
Mat normal_init(int rows, int cols, double stddev, Rng& rng);

class Tape {
 public:
  // Leaves.
  int input(Mat value);
  int param(Mat* value, Mat* grad);  // gradient accumulates into *grad

  // Linear algebra.
  int matmul(int a, int b);
  int transpose(int a);
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);  // elementwise
  int affine(int a, double k, double b);  // k*a + b elementwise
  int add_row_broadcast(int a, int row);     // a[n×d] + row[1×d]
  int add_scalar_broadcast(int a, int one);  // a + one[1×1]

  // Nonlinearities.
  int sigmoid(int a);
  int tanh_op(int a);
  int gelu(int a);
  int row_softmax(int a);
  int row_log_softmax(int a);
  int layer_norm(int a, int gain, int bias, double eps = 1e-5);

  // Structure.
  int lookup(int table, std::vector<int> ids);
  int select_rows(int a, std::vector<int> ids);
  int slice_cols(int a, int start, int len);
  int concat_cols(const std::vector<int>& parts);
  int concat_rows(const std::vector<int>& parts);
  int reshape(int a, int rows, int cols);
  int gather(int a, std::vector<std::pair<int, int>> cells);  // [P×1]

  // Reductions and losses.
  int sum_all(int a);   // [1×1]
  int mean_all(int a);  // [1×1]
  // Elementwise binary cross-entropy on logits; gamma > 0 adds the focal
  // modulation (1-p_t)^gamma. Targets must be 0/1 and match the logit shape.
  int bce_with_logits(int logits, Mat targets, double gamma);
  // Per-row cross-entropy from logits against integer class ids, with
  // optional focal modulation. Returns [n×1] losses.
  int cross_entropy(int logits, std::vector<int> targets, double gamma);

  // Inverted dropout with keep-scale 1/(1-p). p = 0 is the identity. The mask
  // is drawn from `rng` at build time, so replaying the same seeds replays
  // the same masks.
  int dropout(int a, double p, Rng& rng);

  const Mat& value(int id) const { return nodes_[id].value; }
  const Mat& grad(int id) const { return nodes_[id].grad; }
  double item(int id) const;
  size_t size() const { return nodes_.size(); }

  // Reverse pass from a scalar root. Seeds with `seed`, accumulates into
  // every reachable node and finally into registered parameter grads.
  void backward(int root, double seed = 1.0);

 private:
  enum class Op {
    Input, Param, MatMul, Transpose, Add, Sub, Mul, Affine, AddRow, AddScalar,
    Sigmoid, Tanh, Gelu, Softmax, LogSoftmax, LayerNorm, Lookup, SliceCols,
    ConcatCols, ConcatRows, Reshape, Gather, SumAll, MeanAll, BceLogits,
    CrossEntropy, Dropout
  };

  struct Node {
    Op op;
    Mat value;
    Mat grad;
    std::vector<int> inputs;
    std::vector<int> aux_ints;
    std::vector<std::pair<int, int>> aux_cells;
    Mat aux_mat;          // targets / dropout mask
    double aux_a = 0.0;   // gamma / scale / eps
    double aux_b = 0.0;
    Mat* ext_value = nullptr;
    Mat* ext_grad = nullptr;
  };

  std::vector<Node> nodes_;

  int push(Node node, const char* op_name);
  const Mat& val(int id) const { return nodes_[id].value; }
  static void check_finite(const Mat& m, const char* where);
};

}  // namespace sentgraph::nn

#endif  // SENTGRAPH_TENSOR_HPP
