#include "rpace/geometry.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace rpace {

namespace {

using Eigen::Matrix3d;
using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

using RowMat3 = Eigen::Matrix<double, 3, 3, Eigen::RowMajor>;

Matrix3d unflatten(const VectorXd& v) {
  return Eigen::Map<const RowMat3>(v.data());
}

VectorXd flatten(const Matrix3d& m) {
  VectorXd v(9);
  Eigen::Map<RowMat3>(v.data()) = m;
  return v;
}

Matrix3d cross_matrix(const Vector3d& w) {
  Matrix3d m;
  m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return m;
}

Vector3d cross_vee(const Matrix3d& s) {
  return Vector3d(s(2, 1), s(0, 2), s(1, 0));
}

// Rotation angle in [0, pi]; atan2 keeps full precision at both ends.
double rotation_angle(const Matrix3d& rot) {
  const double c = 0.5 * (rot.trace() - 1.0);
  const Vector3d w = 0.5 * cross_vee(rot - rot.transpose());
  return std::atan2(w.norm(), c);
}

// theta / sin(theta) with a series branch against cancellation.
double inv_sinc(double theta) {
  if (theta < 1e-6) {
    const double t2 = theta * theta;
    return 1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0;
  }
  return theta / std::sin(theta);
}

}  // namespace

std::string ManifoldKind::name() const {
  switch (family) {
    case ManifoldFamily::Sphere:
      return "s" + std::to_string(ambient_dim - 1);
    case ManifoldFamily::Rotation:
      return "so3";
    case ManifoldFamily::Euclidean:
      return "e" + std::to_string(ambient_dim);
  }
  return "?";
}

void Manifold::check_dim(const VectorXd& x, const char* what) const {
  if (x.size() != ambient_dim()) {
    throw InvalidInputError("geometry", std::string(what) + " has dimension " +
                                            std::to_string(x.size()) + ", expected " +
                                            std::to_string(ambient_dim()) + " on " +
                                            kind().name());
  }
}

double Manifold::weighted_sqdist_sum(const MatrixXd& points, const VectorXd& coeff,
                                     const VectorXd& y) const {
  double total = 0.0;
  for (int k = 0; k < points.cols(); ++k) {
    const double d = dist(points.col(k), y);
    total += coeff[k] * d * d;
  }
  return total;
}

void Manifold::frechet_gradient(const MatrixXd& points, const VectorXd& coeff,
                                const VectorXd& y, VectorXd& out) const {
  out.setZero();
  for (int k = 0; k < points.cols(); ++k) {
    add_scaled_log(y, points.col(k), -2.0 * coeff[k], out);
  }
}

// ---------------------------------------------------------------------------
// Sphere
// ---------------------------------------------------------------------------

double Sphere::dist(const VectorXd& p, const VectorXd& q) const {
  check_dim(p, "point");
  check_dim(q, "point");
  const double c = std::clamp(p.dot(q), -1.0, 1.0);
  return std::acos(c);
}

VectorXd Sphere::exp(const VectorXd& p, const VectorXd& v) const {
  check_dim(p, "point");
  check_dim(v, "tangent");
  const double theta = v.norm();
  if (theta < 1e-14) return p;
  VectorXd q = std::cos(theta) * p + (std::sin(theta) / theta) * v;
  q.normalize();
  return q;
}

VectorXd Sphere::log(const VectorXd& p, const VectorXd& q) const {
  check_dim(p, "point");
  check_dim(q, "point");
  const double c = std::clamp(p.dot(q), -1.0, 1.0);
  const double theta = std::acos(c);
  if (theta < 1e-14) return VectorXd::Zero(ambient_dim());
  if (theta > M_PI - 1e-9) {
    throw CutLocusError("geometry", "log map at an antipodal pair (angle " +
                                        std::to_string(theta) + ")");
  }
  return (q - c * p) * inv_sinc(theta);
}

VectorXd Sphere::project(const VectorXd& ambient) const {
  check_dim(ambient, "vector");
  const double n = ambient.norm();
  if (n < 1e-12) {
    throw DegenerateError("geometry", "cannot project a zero vector onto the sphere");
  }
  return ambient / n;
}

VectorXd Sphere::project_tangent(const VectorXd& p, const VectorXd& v) const {
  return v - p.dot(v) * p;
}

void Sphere::add_scaled_log(const VectorXd& p, const VectorXd& q, double weight,
                            VectorXd& out) const {
  const double c = std::clamp(p.dot(q), -1.0, 1.0);
  const double theta = std::acos(c);
  if (theta < 1e-14) return;
  if (theta > M_PI - 1e-9) {
    throw CutLocusError("geometry", "log map at an antipodal pair (angle " +
                                        std::to_string(theta) + ")");
  }
  out.noalias() += (weight * inv_sinc(theta)) * (q - c * p);
}

double Sphere::weighted_sqdist_sum(const MatrixXd& points, const VectorXd& coeff,
                                   const VectorXd& y) const {
  const Eigen::ArrayXd theta =
      (points.transpose() * y).array().min(1.0).max(-1.0).acos();
  return (coeff.array() * theta.square()).sum();
}

void Sphere::frechet_gradient(const MatrixXd& points, const VectorXd& coeff,
                              const VectorXd& y, VectorXd& out) const {
  const Eigen::ArrayXd dots = (points.transpose() * y).array().min(1.0).max(-1.0);
  const Eigen::ArrayXd theta = dots.acos();
  if ((theta > M_PI - 1e-9).any()) {
    throw CutLocusError("geometry", "log map at an antipodal pair in a batched gradient");
  }
  // theta/sin(theta), series below 1e-6 against cancellation.
  Eigen::ArrayXd ratio(theta.size());
  for (int k = 0; k < theta.size(); ++k) ratio[k] = inv_sinc(theta[k]);
  const Eigen::ArrayXd w = coeff.array() * ratio;
  // sum_k c_k ratio_k (q_k - dot_k y), scaled by -2.
  out.noalias() = points * (-2.0 * w).matrix();
  out.noalias() += (2.0 * (w * dots).sum()) * y;
}

MatrixXd Sphere::tangent_basis(const VectorXd& p) const {
  check_dim(p, "point");
  const int dim = ambient_dim();
  int drop = 0;
  for (int j = 1; j < dim; ++j) {
    if (std::abs(p[j]) > std::abs(p[drop])) drop = j;
  }
  MatrixXd basis(dim, dim - 1);
  int col = 0;
  for (int j = 0; j < dim; ++j) {
    if (j == drop) continue;
    VectorXd u = VectorXd::Unit(dim, j);
    u -= p.dot(u) * p;
    for (int k = 0; k < col; ++k) u -= basis.col(k).dot(u) * basis.col(k);
    basis.col(col++) = u.normalized();
  }
  return basis;
}

void Sphere::check_point(const VectorXd& p, double tol) const {
  check_dim(p, "point");
  if (std::abs(p.norm() - 1.0) > tol) {
    throw InvalidInputError("geometry",
                            "sphere point has norm " + std::to_string(p.norm()));
  }
}

void Sphere::check_tangent(const VectorXd& p, const VectorXd& v, double tol) const {
  check_point(p, std::max(tol, 1e-9));
  check_dim(v, "tangent");
  const double inner = std::abs(p.dot(v));
  if (inner > tol * std::max(1.0, v.norm())) {
    throw InvalidInputError("geometry", "tangent vector has normal component " +
                                            std::to_string(inner));
  }
}

// ---------------------------------------------------------------------------
// So3
// ---------------------------------------------------------------------------

double So3::dist(const VectorXd& p, const VectorXd& q) const {
  check_dim(p, "point");
  check_dim(q, "point");
  const Matrix3d rel = unflatten(p).transpose() * unflatten(q);
  return scale_ * std::sqrt(2.0) * rotation_angle(rel);
}

VectorXd So3::exp(const VectorXd& p, const VectorXd& v) const {
  check_dim(p, "point");
  check_dim(v, "tangent");
  const Matrix3d pm = unflatten(p);
  Matrix3d body = pm.transpose() * (unflatten(v) / scale_);
  body = 0.5 * (body - body.transpose().eval());
  return flatten(pm * rotation_exp(body));
}

VectorXd So3::log(const VectorXd& p, const VectorXd& q) const {
  check_dim(p, "point");
  check_dim(q, "point");
  const Matrix3d pm = unflatten(p);
  const Vector3d omega = rotation_log(pm.transpose() * unflatten(q));
  return scale_ * flatten(pm * cross_matrix(omega));
}

VectorXd So3::project(const VectorXd& ambient) const {
  check_dim(ambient, "vector");
  const Matrix3d m = unflatten(ambient);
  Eigen::JacobiSVD<Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(2) <= 1e-12 * std::max(sv(0), 1e-300)) {
    throw DegenerateError("geometry", "cannot project a singular matrix onto SO(3)");
  }
  const double sign = (svd.matrixU() * svd.matrixV().transpose()).determinant();
  Matrix3d d = Matrix3d::Identity();
  d(2, 2) = sign < 0 ? -1.0 : 1.0;
  return flatten(svd.matrixU() * d * svd.matrixV().transpose());
}

VectorXd So3::project_tangent(const VectorXd& p, const VectorXd& v) const {
  const Matrix3d pm = unflatten(p);
  const Matrix3d a = pm.transpose() * unflatten(v);
  return flatten(pm * (0.5 * (a - a.transpose().eval())));
}

void So3::add_scaled_log(const VectorXd& p, const VectorXd& q, double weight,
                         VectorXd& out) const {
  const Matrix3d pm = unflatten(p);
  const Vector3d omega = rotation_log(pm.transpose() * unflatten(q));
  Eigen::Map<RowMat3> mapped(out.data());
  mapped.noalias() += (weight * scale_) * (pm * cross_matrix(omega));
}

double So3::weighted_sqdist_sum(const MatrixXd& points, const VectorXd& coeff,
                                const VectorXd& y) const {
  const Matrix3d ym = unflatten(y);
  const double factor = 2.0 * scale_ * scale_;
  double total = 0.0;
  for (int k = 0; k < points.cols(); ++k) {
    const Eigen::Map<const RowMat3> qm(points.col(k).data());
    const double theta = rotation_angle(ym.transpose() * qm);
    total += factor * coeff[k] * theta * theta;
  }
  return total;
}

void So3::frechet_gradient(const MatrixXd& points, const VectorXd& coeff,
                           const VectorXd& y, VectorXd& out) const {
  const Matrix3d ym = unflatten(y);
  Matrix3d body = Matrix3d::Zero();
  for (int k = 0; k < points.cols(); ++k) {
    const Eigen::Map<const RowMat3> qm(points.col(k).data());
    body += (-2.0 * coeff[k]) * cross_matrix(rotation_log(ym.transpose() * qm));
  }
  Eigen::Map<RowMat3> mapped(out.data());
  mapped.noalias() = scale_ * (ym * body);
}

MatrixXd So3::tangent_basis(const VectorXd& p) const {
  check_dim(p, "point");
  const Matrix3d pm = unflatten(p);
  MatrixXd basis(9, 3);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (int k = 0; k < 3; ++k) {
    basis.col(k) = flatten(pm * (skew_lower(Vector3d::Unit(k)) * inv_sqrt2));
  }
  return basis;
}

void So3::check_point(const VectorXd& p, double tol) const {
  check_dim(p, "point");
  const Matrix3d r = unflatten(p);
  const double ortho = (r.transpose() * r - Matrix3d::Identity()).norm();
  if (ortho > tol || r.determinant() <= 0.0) {
    throw InvalidInputError("geometry", "not a rotation matrix (|R'R-I|=" +
                                            std::to_string(ortho) + ", det=" +
                                            std::to_string(r.determinant()) + ")");
  }
}

void So3::check_tangent(const VectorXd& p, const VectorXd& v, double tol) const {
  check_point(p, std::max(tol, 1e-9));
  check_dim(v, "tangent");
  const Matrix3d a = unflatten(p).transpose() * unflatten(v);
  const double sym = (a + a.transpose()).norm();
  if (sym > tol * std::max(1.0, a.norm())) {
    throw InvalidInputError("geometry", "tangent matrix has symmetric part " +
                                            std::to_string(sym));
  }
}

// ---------------------------------------------------------------------------
// Euclidean
// ---------------------------------------------------------------------------

double Euclidean::dist(const VectorXd& p, const VectorXd& q) const {
  check_dim(p, "point");
  check_dim(q, "point");
  return (p - q).norm();
}

VectorXd Euclidean::exp(const VectorXd& p, const VectorXd& v) const { return p + v; }

VectorXd Euclidean::log(const VectorXd& p, const VectorXd& q) const { return q - p; }

VectorXd Euclidean::project(const VectorXd& ambient) const { return ambient; }

VectorXd Euclidean::project_tangent(const VectorXd&, const VectorXd& v) const {
  return v;
}

void Euclidean::add_scaled_log(const VectorXd& p, const VectorXd& q, double weight,
                               VectorXd& out) const {
  out.noalias() += weight * (q - p);
}

double Euclidean::weighted_sqdist_sum(const MatrixXd& points, const VectorXd& coeff,
                                      const VectorXd& y) const {
  const double cross = y.dot(points * coeff);
  const double sq = (points.colwise().squaredNorm() * coeff.asDiagonal()).sum();
  return sq - 2.0 * cross + coeff.sum() * y.squaredNorm();
}

void Euclidean::frechet_gradient(const MatrixXd& points, const VectorXd& coeff,
                                 const VectorXd& y, VectorXd& out) const {
  out.noalias() = -2.0 * (points * coeff);
  out.noalias() += (2.0 * coeff.sum()) * y;
}

MatrixXd Euclidean::tangent_basis(const VectorXd&) const {
  return MatrixXd::Identity(ambient_dim(), ambient_dim());
}

void Euclidean::check_point(const VectorXd& p, double) const { check_dim(p, "point"); }

void Euclidean::check_tangent(const VectorXd& p, const VectorXd& v, double) const {
  check_dim(p, "point");
  check_dim(v, "tangent");
}

// ---------------------------------------------------------------------------
// Free functions
// ---------------------------------------------------------------------------

std::shared_ptr<const Manifold> make_manifold(const ManifoldKind& kind,
                                              double so3_metric_scale) {
  switch (kind.family) {
    case ManifoldFamily::Sphere:
      return std::make_shared<Sphere>(kind.ambient_dim - 1);
    case ManifoldFamily::Rotation:
      return std::make_shared<So3>(so3_metric_scale);
    case ManifoldFamily::Euclidean:
      return std::make_shared<Euclidean>(kind.ambient_dim);
  }
  throw InvalidInputError("geometry", "unknown manifold kind");
}

Eigen::MatrixXd rotation_between(const VectorXd& p, const VectorXd& q) {
  if (p.size() != q.size()) {
    throw InvalidInputError("geometry", "rotation_between: dimension mismatch");
  }
  const int dim = static_cast<int>(p.size());
  const double c = std::clamp(p.dot(q), -1.0, 1.0);
  const double theta = std::acos(c);
  if (theta > M_PI - 1e-9) {
    throw CutLocusError("geometry", "rotation_between: antipodal pair");
  }
  VectorXd w = q - c * p;
  const double wn = w.norm();
  if (wn < 1e-14) return MatrixXd::Identity(dim, dim);
  w /= wn;
  // Rotation by theta in span{p, w}, identity on its orthogonal complement.
  MatrixXd rot = MatrixXd::Identity(dim, dim);
  rot += std::sin(theta) * (w * p.transpose() - p * w.transpose());
  rot += (c - 1.0) * (p * p.transpose() + w * w.transpose());
  return rot;
}

Matrix3d skew_lower(const Vector3d& v) {
  Matrix3d m;
  m << 0.0, -v(0), -v(1), v(0), 0.0, -v(2), v(1), v(2), 0.0;
  return m;
}

Matrix3d rotation_exp(const Vector3d& omega) {
  const double t2 = omega.squaredNorm();
  const double theta = std::sqrt(t2);
  double a, b;
  if (theta < 1e-4) {
    a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
    b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / t2;
  }
  const Matrix3d w = cross_matrix(omega);
  return Matrix3d::Identity() + a * w + b * (w * w);
}

Matrix3d rotation_exp(const Matrix3d& skew) { return rotation_exp(cross_vee(skew)); }

Vector3d rotation_log(const Matrix3d& rot) {
  const double c = 0.5 * (rot.trace() - 1.0);
  const Vector3d w = 0.5 * cross_vee(rot - rot.transpose());
  const double s = w.norm();
  const double theta = std::atan2(s, c);
  if (theta < 1e-7) return w * inv_sinc(theta);
  if (theta > M_PI - 1e-9) {
    throw CutLocusError("geometry", "rotation log at angle " + std::to_string(theta) +
                                        ", cut locus of SO(3)");
  }
  if (theta > M_PI - 1e-4) {
    // Near pi the antisymmetric part degrades; recover the axis from the
    // dominant column of R + I and keep only the sign from w.
    const Matrix3d b = rot + Matrix3d::Identity();
    int j = 0;
    for (int k = 1; k < 3; ++k) {
      if (b(k, k) > b(j, j)) j = k;
    }
    Vector3d axis = b.col(j).normalized();
    if (axis.dot(w) < 0.0) axis = -axis;
    return theta * axis;
  }
  return w * (theta / s);
}

}  // namespace rpace
