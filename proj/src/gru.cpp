#include "ic/gru.hpp"

namespace ic {

namespace {

Matrix sigmoid(const Matrix& a) { return (1.0 + (-a.array()).exp()).inverse().matrix(); }

void check_step_shapes(const GruParams& p, const Matrix& x, const Matrix& h) {
  if (x.rows() != p.input_dim() || h.rows() != p.hidden_dim() || x.cols() != h.cols())
    throw ShapeError("gru: input " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) + ", hidden " +
                     std::to_string(h.rows()) + "x" + std::to_string(h.cols()) + " do not fit cell " +
                     std::to_string(p.hidden_dim()) + "x" + std::to_string(p.input_dim()));
}

}  // namespace

GruParams GruParams::zeros(Index input_dim, Index hidden_dim) {
  GruParams p;
  for (Matrix* w : {&p.wz, &p.wr, &p.wn}) w->setZero(hidden_dim, input_dim);
  for (Matrix* u : {&p.uz, &p.ur, &p.un}) u->setZero(hidden_dim, hidden_dim);
  for (Matrix* b : {&p.bz, &p.br, &p.bn}) b->setZero(hidden_dim, 1);
  return p;
}

bool operator==(const GruParams& a, const GruParams& b) {
  auto same = [](const Matrix& x, const Matrix& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
  };
  return same(a.wz, b.wz) && same(a.wr, b.wr) && same(a.wn, b.wn) && same(a.uz, b.uz) && same(a.ur, b.ur) &&
         same(a.un, b.un) && same(a.bz, b.bz) && same(a.br, b.br) && same(a.bn, b.bn);
}

Vector gru_cell_forward(const GruParams& p, const Vector& x, const Vector& h) {
  return gru_step(p, x, h);
}

Matrix gru_step(const GruParams& p, const Matrix& x, const Matrix& h, GruStepCache* cache) {
  check_step_shapes(p, x, h);
  Matrix z = sigmoid((p.wz * x + p.uz * h).colwise() + p.bz.col(0));
  Matrix r = sigmoid((p.wr * x + p.ur * h).colwise() + p.br.col(0));
  Matrix rh = r.cwiseProduct(h);
  Matrix n = ((p.wn * x + p.un * rh).colwise() + p.bn.col(0)).array().tanh().matrix();
  Matrix out = n + z.cwiseProduct(h - n);
  if (cache) {
    cache->x = x;
    cache->h_prev = h;
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->n = std::move(n);
  }
  return out;
}

Matrix gru_step_backward(const GruParams& p, const GruStepCache& c, const Matrix& d_h, GruParams& g, Matrix* d_x) {
  const Matrix& h = c.h_prev;
  Matrix d_z = d_h.cwiseProduct(h - c.n);
  Matrix d_n = d_h.cwiseProduct((1.0 - c.z.array()).matrix());
  Matrix d_hprev = d_h.cwiseProduct(c.z);

  Matrix da_n = d_n.cwiseProduct((1.0 - c.n.array().square()).matrix());
  Matrix rh = c.r.cwiseProduct(h);
  g.wn.noalias() += da_n * c.x.transpose();
  g.un.noalias() += da_n * rh.transpose();
  g.bn += da_n.rowwise().sum();
  Matrix d_rh = p.un.transpose() * da_n;
  Matrix d_r = d_rh.cwiseProduct(h);
  d_hprev += d_rh.cwiseProduct(c.r);

  Matrix da_r = d_r.cwiseProduct(c.r.cwiseProduct((1.0 - c.r.array()).matrix()));
  g.wr.noalias() += da_r * c.x.transpose();
  g.ur.noalias() += da_r * h.transpose();
  g.br += da_r.rowwise().sum();
  d_hprev.noalias() += p.ur.transpose() * da_r;

  Matrix da_z = d_z.cwiseProduct(c.z.cwiseProduct((1.0 - c.z.array()).matrix()));
  g.wz.noalias() += da_z * c.x.transpose();
  g.uz.noalias() += da_z * h.transpose();
  g.bz += da_z.rowwise().sum();
  d_hprev.noalias() += p.uz.transpose() * da_z;

  if (d_x) *d_x = p.wz.transpose() * da_z + p.wr.transpose() * da_r + p.wn.transpose() * da_n;
  return d_hprev;
}

}  // namespace ic
