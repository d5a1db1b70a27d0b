// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <Eigen/Dense>

#include "errors.hpp"

namespace drbfr {

double psnr(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "psnr");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

// Summed-area table with a zero guard row/column, (h+1) x (w+1).
class IntegralImage {
 public:
  IntegralImage(int h, int w) : w_(w + 1), sums_(static_cast<std::size_t>(h + 1) * (w + 1), 0.0) {}
  double& at(int y, int x) { return sums_[static_cast<std::size_t>(y) * w_ + x]; }
  double box(int y, int x, int size) const {
    const auto v = [this](int yy, int xx) { return sums_[static_cast<std::size_t>(yy) * w_ + xx]; };
    return v(y + size, x + size) - v(y, x + size) - v(y + size, x) + v(y, x);
  }

 private:
  int w_;
  std::vector<double> sums_;
};

}  // namespace

double ssim(const ImageTensor& a, const ImageTensor& b, int window) {
  require_same_shape(a, b, "ssim");
  if (window < 1 || window % 2 == 0) throw ArgumentError("ssim: window must be odd and positive");
  if (window > a.height() || window > a.width()) throw ArgumentError("ssim: window larger than image");
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const int h = a.height();
  const int w = a.width();
  const double n = static_cast<double>(window) * window;
  double total = 0.0;
  long count = 0;
  for (int c = 0; c < 3; ++c) {
    IntegralImage sa(h, w), sb(h, w), saa(h, w), sbb(h, w), sab(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double va = a.at(y, x, c);
        const double vb = b.at(y, x, c);
        sa.at(y + 1, x + 1) = va + sa.at(y, x + 1) + sa.at(y + 1, x) - sa.at(y, x);
        sb.at(y + 1, x + 1) = vb + sb.at(y, x + 1) + sb.at(y + 1, x) - sb.at(y, x);
        saa.at(y + 1, x + 1) = va * va + saa.at(y, x + 1) + saa.at(y + 1, x) - saa.at(y, x);
        sbb.at(y + 1, x + 1) = vb * vb + sbb.at(y, x + 1) + sbb.at(y + 1, x) - sbb.at(y, x);
        sab.at(y + 1, x + 1) = va * vb + sab.at(y, x + 1) + sab.at(y + 1, x) - sab.at(y, x);
      }
    for (int y = 0; y + window <= h; ++y)
      for (int x = 0; x + window <= w; ++x) {
        const double mu_a = sa.box(y, x, window) / n;
        const double mu_b = sb.box(y, x, window) / n;
        const double var_a = saa.box(y, x, window) / n - mu_a * mu_a;
        const double var_b = sbb.box(y, x, window) / n - mu_b * mu_b;
        const double cov = sab.box(y, x, window) / n - mu_a * mu_b;
        total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                 ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        ++count;
      }
  }
  return total / static_cast<double>(count);
}

std::vector<double> flatten(const DRFeature& f) { return {f.values.begin(), f.values.end()}; }

double dr_cosine(const DRFeature& a, const DRFeature& b) {
  if (a.d != b.d || a.l != b.l || a.size() != b.size()) throw ArgumentError("dr_cosine: shape mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a.values[i]) * b.values[i];
    na += static_cast<double>(a.values[i]) * a.values[i];
    nb += static_cast<double>(b.values[i]) * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) throw ArgumentError("dr_cosine: zero-norm feature");
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

double silhouette_score(std::span<const std::vector<double>> points, std::span<const int> labels) {
  const std::size_t n = points.size();
  if (labels.size() != n) throw ArgumentError("silhouette: label count mismatch");
  std::map<int, int> cluster_index;
  for (int l : labels) cluster_index.emplace(l, 0);
  if (cluster_index.size() < 2) throw ArgumentError("silhouette: need at least two classes");
  int next = 0;
  for (auto& [label, idx] : cluster_index) idx = next++;
  const int k = next;
  std::vector<int> cluster(n), cluster_size(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    cluster[i] = cluster_index[labels[i]];
    ++cluster_size[cluster[i]];
    if (points[i].size() != points[0].size()) throw ArgumentError("silhouette: ragged features");
  }

  double total = 0.0;
  std::vector<double> sums(k);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double d2 = 0.0;
      for (std::size_t t = 0; t < points[i].size(); ++t) {
        const double diff = points[i][t] - points[j][t];
        d2 += diff * diff;
      }
      sums[cluster[j]] += std::sqrt(d2);
    }
    const int own = cluster[i];
    if (cluster_size[own] < 2) continue;  // singleton: s = 0
    const double a = sums[own] / (cluster_size[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c)
      if (c != own && cluster_size[c] > 0) b = std::min(b, sums[c] / cluster_size[c]);
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

std::vector<std::array<double, 2>> pca_2d(std::span<const std::vector<double>> points) {
  if (points.empty()) return {};
  const auto n = static_cast<Eigen::Index>(points.size());
  const auto dim = static_cast<Eigen::Index>(points[0].size());
  Eigen::MatrixXd x(n, dim);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) x(i, j) = points[i][j];
  x.rowwise() -= x.colwise().mean();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(x.transpose() * x);
  const Eigen::MatrixXd& vecs = solver.eigenvectors();  // ascending eigenvalues
  std::vector<std::array<double, 2>> out(points.size(), {0.0, 0.0});
  for (int comp = 0; comp < 2 && comp < dim; ++comp) {
    Eigen::VectorXd axis = vecs.col(dim - 1 - comp);
    // Fix the sign so the export is reproducible.
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis(arg) < 0) axis = -axis;
    const Eigen::VectorXd proj = x * axis;
    for (Eigen::Index i = 0; i < n; ++i) out[i][comp] = proj(i);
  }
  return out;
}

SeparabilityReport dr_separability(std::span<const DRFeature> features,
                                   const std::vector<std::pair<std::string, std::vector<int>>>& labelings,
                                   bool embed) {
  std::vector<std::vector<double>> points;
  points.reserve(features.size());
  for (const auto& f : features) points.push_back(flatten(f));
  SeparabilityReport report;
  for (const auto& [name, labels] : labelings) {
    std::map<int, int> counts;
    for (int l : labels) ++counts[l];
    if (counts.size() < 2) throw ArgumentError("dr_separability: labeling '" + name + "' has a single class");
    for (const auto& [label, count] : counts)
      if (count < 2) throw ArgumentError("dr_separability: labeling '" + name + "' has a singleton class");
    report.silhouette.emplace_back(name, silhouette_score(points, labels));
  }
  if (embed) report.embedding_2d = pca_2d(points);
  return report;
}

}  // namespace drbfr
