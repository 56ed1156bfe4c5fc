#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "sentgraph/tensor.hpp"

using namespace sentgraph::nn;

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

struct ParamRef {
  Mat* value;
  Mat* grad;
};

// Central-difference check of every entry of every parameter against the
// tape's analytic gradient. `build` must construct the loss from scratch on
// each call (it sees current parameter values).
void check_grads(const std::vector<ParamRef>& params,
                 const std::function<int(Tape&)>& build, double tol = 1e-6) {
  for (const ParamRef& p : params) *p.grad = Mat(p.value->rows, p.value->cols);
  Tape tape;
  int root = build(tape);
  tape.backward(root);

  const double eps = 1e-5;
  for (const ParamRef& p : params) {
    for (int i = 0; i < p.value->size(); ++i) {
      double saved = p.value->data[i];
      p.value->data[i] = saved + eps;
      Tape tp;
      double up = tp.item(build(tp));
      p.value->data[i] = saved - eps;
      Tape tm;
      double dn = tm.item(build(tm));
      p.value->data[i] = saved;
      double numeric = (up - dn) / (2.0 * eps);
      INFO("param entry ", i, " analytic=", p.grad->data[i], " numeric=", numeric);
      CHECK(rel_err(p.grad->data[i], numeric) < tol);
    }
  }
}

Mat weights(int rows, int cols, uint64_t seed) {
  Rng rng(seed);
  Mat w(rows, cols);
  for (double& x : w.data) x = rng.uniform() * 2.0 - 1.0;
  return w;
}

}  // namespace

TEST_CASE("matmul, transpose, add, sub, mul, affine gradients") {
  Rng rng(1);
  Mat A = normal_init(3, 4, 1.0, rng), dA;
  Mat B = normal_init(4, 2, 1.0, rng), dB;
  Mat C = normal_init(3, 2, 1.0, rng), dC;
  Mat W = weights(3, 2, 7);
  check_grads({{&A, &dA}, {&B, &dB}, {&C, &dC}}, [&](Tape& t) {
    int a = t.param(&A, &dA), b = t.param(&B, &dB), c = t.param(&C, &dC);
    int prod = t.matmul(a, b);
    int mixed = t.mul(t.sub(t.add(prod, c), t.affine(c, 0.5, 0.1)), t.input(W));
    int back = t.matmul(t.transpose(mixed), t.input(weights(3, 3, 8)));
    return t.sum_all(back);
  });
}

TEST_CASE("parameter reused twice accumulates both paths") {
  Rng rng(2);
  Mat A = normal_init(3, 3, 1.0, rng), dA;
  check_grads({{&A, &dA}}, [&](Tape& t) {
    int a = t.param(&A, &dA);
    int sq = t.matmul(a, a);  // same node on both sides
    int s = t.sigmoid(sq);
    return t.sum_all(t.mul(s, s));  // and reuse of an interior node
  });
}

TEST_CASE("broadcast adds") {
  Rng rng(3);
  Mat A = normal_init(4, 3, 1.0, rng), dA;
  Mat R = normal_init(1, 3, 1.0, rng), dR;
  Mat S = normal_init(1, 1, 1.0, rng), dS;
  Mat W = weights(4, 3, 9);
  check_grads({{&A, &dA}, {&R, &dR}, {&S, &dS}}, [&](Tape& t) {
    int x = t.add_scalar_broadcast(
        t.add_row_broadcast(t.param(&A, &dA), t.param(&R, &dR)), t.param(&S, &dS));
    return t.sum_all(t.mul(t.tanh_op(x), t.input(W)));
  });
}

TEST_CASE("sigmoid, tanh, gelu gradients") {
  Rng rng(4);
  Mat A = normal_init(2, 5, 2.0, rng), dA;
  Mat W = weights(2, 5, 10);
  check_grads({{&A, &dA}}, [&](Tape& t) {
    int a = t.param(&A, &dA);
    int mix = t.add(t.add(t.sigmoid(a), t.tanh_op(a)), t.gelu(a));
    return t.sum_all(t.mul(mix, t.input(W)));
  });
}

TEST_CASE("softmax and log_softmax") {
  Rng rng(5);
  Mat A = normal_init(3, 4, 2.0, rng), dA;
  Mat W = weights(3, 4, 11);

  Tape t;
  int sm = t.row_softmax(t.input(A));
  int lsm = t.row_log_softmax(t.input(A));
  for (int i = 0; i < 3; ++i) {
    double s = 0.0;
    for (int j = 0; j < 4; ++j) {
      s += t.value(sm).at(i, j);
      CHECK(rel_err(std::log(t.value(sm).at(i, j)), t.value(lsm).at(i, j)) < 1e-9);
    }
    CHECK(rel_err(s, 1.0) < 1e-12);
  }

  check_grads({{&A, &dA}}, [&](Tape& tt) {
    return tt.sum_all(tt.mul(tt.row_softmax(tt.param(&A, &dA)), tt.input(W)));
  });
  check_grads({{&A, &dA}}, [&](Tape& tt) {
    return tt.sum_all(tt.mul(tt.row_log_softmax(tt.param(&A, &dA)), tt.input(W)));
  });
}

TEST_CASE("layer_norm normalizes rows and has correct gradients") {
  Rng rng(6);
  Mat A = normal_init(3, 6, 3.0, rng), dA;
  Mat G(1, 6, 1.0), dG;
  Mat B(1, 6, 0.0), dB;

  Tape t;
  int y = t.layer_norm(t.input(A), t.input(G), t.input(B));
  for (int i = 0; i < 3; ++i) {
    double mean = 0.0, var = 0.0;
    for (int j = 0; j < 6; ++j) mean += t.value(y).at(i, j);
    mean /= 6;
    for (int j = 0; j < 6; ++j) {
      double d = t.value(y).at(i, j) - mean;
      var += d * d;
    }
    var /= 6;
    CHECK(std::abs(mean) < 1e-12);
    CHECK(rel_err(var, 1.0) < 1e-4);  // eps shifts variance slightly below 1
  }

  Rng rng2(7);
  Mat G2 = normal_init(1, 6, 1.0, rng2), dG2;
  Mat B2 = normal_init(1, 6, 1.0, rng2), dB2;
  Mat W = weights(3, 6, 12);
  check_grads({{&A, &dA}, {&G2, &dG2}, {&B2, &dB2}}, [&](Tape& tt) {
    int ln = tt.layer_norm(tt.param(&A, &dA), tt.param(&G2, &dG2), tt.param(&B2, &dB2));
    return tt.sum_all(tt.mul(ln, tt.input(W)));
  });
}

TEST_CASE("lookup accumulates over repeated ids") {
  Rng rng(8);
  Mat T = normal_init(5, 3, 1.0, rng), dT;
  Mat W = weights(4, 3, 13);
  check_grads({{&T, &dT}}, [&](Tape& t) {
    int e = t.lookup(t.param(&T, &dT), {2, 0, 2, 4});
    return t.sum_all(t.mul(t.tanh_op(e), t.input(W)));
  });
  Tape t;
  CHECK_THROWS_AS(t.lookup(t.input(T), {5}), std::invalid_argument);
}

TEST_CASE("slices, concats, reshape, gather") {
  Rng rng(9);
  Mat A = normal_init(3, 6, 1.0, rng), dA;
  Mat B = normal_init(2, 4, 1.0, rng), dB;
  check_grads({{&A, &dA}}, [&](Tape& t) {
    int a = t.param(&A, &dA);
    int left = t.slice_cols(a, 0, 2);
    int right = t.slice_cols(a, 2, 4);
    int joined = t.concat_cols({right, left});  // swapped halves
    int wide = t.reshape(joined, 2, 9);
    int g = t.gather(wide, {{0, 0}, {1, 8}, {0, 4}});
    return t.sum_all(t.mul(g, t.input(weights(3, 1, 14))));
  });
  check_grads({{&B, &dB}}, [&](Tape& t) {
    int b = t.param(&B, &dB);
    int stacked = t.concat_rows({b, t.affine(b, -1.0, 0.0)});
    return t.mean_all(t.mul(stacked, t.input(weights(4, 4, 15))));
  });
}

TEST_CASE("bce_with_logits values and gradients") {
  // Moderate logits agree with the naive formula.
  Mat X(1, 3);
  X.data = {0.3, -1.2, 2.0};
  Mat Y(1, 3);
  Y.data = {1.0, 0.0, 1.0};
  Tape t;
  int loss = t.bce_with_logits(t.input(X), Y, 0.0);
  for (int i = 0; i < 3; ++i) {
    double p = 1.0 / (1.0 + std::exp(-X.data[i]));
    double naive = -(Y.data[i] * std::log(p) + (1.0 - Y.data[i]) * std::log(1.0 - p));
    CHECK(rel_err(t.value(loss).data[i], naive) < 1e-12);
  }

  // Extreme logits stay finite and linear.
  Mat Xe(1, 2);
  Xe.data = {500.0, -800.0};
  Mat Ye(1, 2);
  Ye.data = {0.0, 1.0};
  Tape te;
  int le = te.bce_with_logits(te.input(Xe), Ye, 0.0);
  CHECK(te.value(le).data[0] == doctest::Approx(500.0));
  CHECK(te.value(le).data[1] == doctest::Approx(800.0));

  // Focal modulation shrinks easy examples.
  Mat Xf(1, 1);
  Xf.data = {3.0};
  Mat Yf(1, 1);
  Yf.data = {1.0};
  Tape tf;
  double plain = tf.value(tf.bce_with_logits(tf.input(Xf), Yf, 0.0)).data[0];
  double focal = tf.value(tf.bce_with_logits(tf.input(Xf), Yf, 2.0)).data[0];
  CHECK(focal < plain * 0.01);

  Rng rng(10);
  Mat L = normal_init(3, 4, 2.0, rng), dL;
  Mat T(3, 4);
  for (int i = 0; i < T.size(); ++i) T.data[i] = (i * 7 % 3 == 0) ? 1.0 : 0.0;
  for (double gamma : {0.0, 2.0}) {
    check_grads({{&L, &dL}}, [&](Tape& tt) {
      return tt.sum_all(tt.bce_with_logits(tt.param(&L, &dL), T, gamma));
    });
  }
}

TEST_CASE("cross_entropy values and gradients") {
  Mat X(2, 3);
  X.data = {1.0, 2.0, 0.5, -3.0, 0.0, 4.0};
  Tape t;
  int ce = t.cross_entropy(t.input(X), {1, 0}, 0.0);
  // Row 0: -log softmax_1; row 1: -log softmax_0.
  double z0 = std::exp(1.0) + std::exp(2.0) + std::exp(0.5);
  double z1 = std::exp(-3.0) + std::exp(0.0) + std::exp(4.0);
  CHECK(rel_err(t.value(ce).at(0, 0), -std::log(std::exp(2.0) / z0)) < 1e-12);
  CHECK(rel_err(t.value(ce).at(1, 0), -std::log(std::exp(-3.0) / z1)) < 1e-12);

  // Stays finite far out in the tails.
  Mat Xe(1, 2);
  Xe.data = {700.0, -700.0};
  Tape te;
  int celoss = te.cross_entropy(te.input(Xe), {1}, 0.0);
  CHECK(te.value(celoss).at(0, 0) == doctest::Approx(1400.0));

  Rng rng(11);
  Mat L = normal_init(4, 5, 2.0, rng), dL;
  std::vector<int> targets = {3, 0, 4, 2};
  for (double gamma : {0.0, 2.0}) {
    check_grads({{&L, &dL}}, [&](Tape& tt) {
      return tt.sum_all(tt.cross_entropy(tt.param(&L, &dL), targets, gamma));
    });
  }
}

TEST_CASE("dropout is deterministic, inverted, and differentiable") {
  Rng rng(12);
  Mat A = normal_init(6, 6, 1.0, rng), dA;

  Tape t1, t2;
  Rng m1(99), m2(99);
  int d1 = t1.dropout(t1.input(A), 0.5, m1);
  int d2 = t2.dropout(t2.input(A), 0.5, m2);
  CHECK(t1.value(d1).data == t2.value(d2).data);
  bool saw_zero = false, saw_scaled = false;
  for (int i = 0; i < A.size(); ++i) {
    double v = t1.value(d1).data[i];
    if (v == 0.0) saw_zero = true;
    else {
      CHECK(rel_err(v, A.data[i] * 2.0) < 1e-12);
      saw_scaled = true;
    }
  }
  CHECK(saw_zero);
  CHECK(saw_scaled);

  Tape t3;
  int same = t3.dropout(t3.input(A), 0.0, m1);
  CHECK(t3.value(same).data == A.data);  // p=0 is the identity

  check_grads({{&A, &dA}}, [&](Tape& tt) {
    Rng mask_rng(4242);  // reseeded per build so masks agree across evals
    int d = tt.dropout(tt.param(&A, &dA), 0.3, mask_rng);
    return tt.sum_all(tt.mul(d, tt.input(weights(6, 6, 16))));
  });
}

TEST_CASE("non-finite values are hard errors") {
  Mat bad(1, 2);
  bad.data = {1.0, std::numeric_limits<double>::infinity()};
  Tape t;
  CHECK_THROWS_AS(t.input(bad), NumericError);

  Mat huge(1, 1, 1e200);
  Tape t2;
  int h = t2.input(huge);
  CHECK_THROWS_AS(t2.matmul(h, h), NumericError);  // overflows to inf
}

TEST_CASE("shape validation") {
  Tape t;
  int a = t.input(Mat(2, 3, 1.0));
  int b = t.input(Mat(2, 3, 1.0));
  CHECK_THROWS_AS(t.matmul(a, b), std::invalid_argument);
  CHECK_THROWS_AS(t.add(a, t.input(Mat(3, 2, 1.0))), std::invalid_argument);
  CHECK_THROWS_AS(t.reshape(a, 4, 2), std::invalid_argument);
  CHECK_THROWS_AS(t.slice_cols(a, 2, 5), std::invalid_argument);
  CHECK_THROWS_AS(t.gather(a, {{2, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(t.backward(a), std::invalid_argument);  // non-scalar root
  CHECK_THROWS_AS(t.item(a), std::invalid_argument);
  Mat y(2, 3, 0.5);
  CHECK_THROWS_AS(t.bce_with_logits(a, y, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(t.cross_entropy(a, {0, 1, 2}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(t.cross_entropy(a, {0, 9}, 0.0), std::invalid_argument);
}

TEST_CASE("rng normal draws look standard and are reproducible") {
  Rng a(777), b(777);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double x = a.normal();
    CHECK(x == b.normal());
    sum += x;
    sq += x * x;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);

  Rng c(5);
  Mat w = xavier_init(30, 50, c);
  CHECK(w.rows == 30);
  CHECK(w.cols == 50);
  double s2 = 0.0;
  for (double x : w.data) s2 += x * x;
  CHECK(rel_err(s2 / w.size(), 2.0 / 80.0) < 0.15);
}
