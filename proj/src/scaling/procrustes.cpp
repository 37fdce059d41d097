#include <cmath>

#include "ideoscale/scaling.hpp"

namespace ideo {

ProcrustesResult procrustes_align(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, bool allow_reflection) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionMismatch("procrustes_align: inputs are " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()));
  // Maximize tr(R^T A^T B): R = U V^T from the SVD of A^T B.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a.transpose() * b, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::MatrixXd u = svd.matrixU();
  Eigen::MatrixXd v = svd.matrixV();
  if (!allow_reflection && (u * v.transpose()).determinant() < 0) u.col(u.cols() - 1) *= -1.0;

  ProcrustesResult out;
  out.rotation = u * v.transpose();
  out.aligned = a * out.rotation;
  out.disparity = (out.aligned - b).squaredNorm();
  return out;
}

std::vector<double> normalize_to_partisan_anchors(const std::vector<double>& scores, double strong_dem_mean,
                                                  double strong_rep_mean) {
  if (!(strong_dem_mean != strong_rep_mean) || !std::isfinite(strong_dem_mean) || !std::isfinite(strong_rep_mean))
    throw DegenerateAnchors("partisan anchors must be distinct finite values");
  const double mid = 0.5 * (strong_dem_mean + strong_rep_mean);
  const double half = 0.5 * (strong_rep_mean - strong_dem_mean);
  std::vector<double> out;
  out.reserve(scores.size());
  for (double s : scores) out.push_back((s - mid) / half);
  return out;
}

}  // namespace ideo
