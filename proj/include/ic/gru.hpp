#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ic {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Gate parameters of one GRU cell. Biases are stored as hidden x 1 matrices
/// so every tensor can be visited uniformly.
struct GruParams {
  Matrix wz, wr, wn;  // hidden x input
  Matrix uz, ur, un;  // hidden x hidden
  Matrix bz, br, bn;  // hidden x 1

  static GruParams zeros(Index input_dim, Index hidden_dim);
  Index input_dim() const { return wz.cols(); }
  Index hidden_dim() const { return wz.rows(); }

  friend bool operator==(const GruParams& a, const GruParams& b);
};

/// Activations kept from a batched forward step for backpropagation.
struct GruStepCache {
  Matrix x, h_prev, z, r, n;
};

/// z = sigmoid(Wz x + Uz h + bz)
/// r = sigmoid(Wr x + Ur h + br)
/// n = tanh(Wn x + Un (r * h) + bn)
/// h' = (1 - z) * n + z * h
Vector gru_cell_forward(const GruParams& p, const Vector& x, const Vector& h);

/// Same recurrence applied column-wise to a batch (input x batch, hidden x batch).
Matrix gru_step(const GruParams& p, const Matrix& x, const Matrix& h, GruStepCache* cache = nullptr);

/// Backpropagates d_h through one cached step. Accumulates parameter
/// gradients into `grads`, writes the input gradient to `d_x` when non-null,
/// and returns the gradient with respect to the previous hidden state.
Matrix gru_step_backward(const GruParams& p, const GruStepCache& cache, const Matrix& d_h,
                         GruParams& grads, Matrix* d_x);

}  // namespace ic
